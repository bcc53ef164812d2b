#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mmf::text {

// Minimal UTF-8 handling for word tokenization. Covers ASCII, Latin-1,
// Latin Extended-A, Greek and Cyrillic case folding; other scripts pass
// through unchanged (still tokenized, just not case-folded).

namespace detail {

inline char32_t decode(std::string_view s, std::size_t& i) {
    auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) -> char32_t {
        if (i + k >= s.size()) return 0xFFFFFFFF;
        auto b = static_cast<unsigned char>(s[i + k]);
        return (b & 0xC0) == 0x80 ? (b & 0x3F) : 0xFFFFFFFF;
    };
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    char32_t cp = 0xFFFD;
    std::size_t len = 1;
    if ((b0 & 0xE0) == 0xC0) {
        char32_t c1 = cont(1);
        if (c1 != 0xFFFFFFFF) cp = ((b0 & 0x1F) << 6) | c1, len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
        char32_t c1 = cont(1), c2 = cont(2);
        if (c1 != 0xFFFFFFFF && c2 != 0xFFFFFFFF) cp = ((b0 & 0x0F) << 12) | (c1 << 6) | c2, len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
        char32_t c1 = cont(1), c2 = cont(2), c3 = cont(3);
        if (c1 != 0xFFFFFFFF && c2 != 0xFFFFFFFF && c3 != 0xFFFFFFFF)
            cp = ((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3, len = 4;
    }
    i += len;
    return cp;
}

inline void encode(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

} // namespace detail

inline bool is_word_char(char32_t cp) {
    if (cp < 0x80) return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    if (cp == 0xFFFD) return false;
    if (cp <= 0xBF) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;   // Latin-1 punctuation/symbols
    if (cp == 0xD7 || cp == 0xF7) return false;                       // multiplication/division signs
    if (cp >= 0x2000 && cp <= 0x2BFF) return false;                   // punctuation, symbols, arrows
    if (cp >= 0x3000 && cp <= 0x303F) return false;                   // CJK punctuation
    if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
    if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
    if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;                 // emoji
    if (cp >= 0x0300 && cp <= 0x036F) return true;                    // combining marks stay inside words
    if (cp == 0x2116) return false;                                   // numero sign
    return true;
}

inline char32_t to_lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    if (cp == 0x178) return 0xFF;
    if (cp >= 0x100 && cp <= 0x17F && cp != 0x130 && cp != 0x131 && cp != 0x138 && cp != 0x149 && cp != 0x17F) {
        // Latin Extended-A alternates upper/lower, with a parity shift after 0x138
        bool shifted = (cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E);
        bool upper = shifted ? (cp % 2 == 1) : (cp % 2 == 0);
        return upper ? cp + 1 : cp;
    }
    if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
    return cp;
}

inline std::string lowercase(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) detail::encode(to_lower(detail::decode(s, i)), out);
    return out;
}

// Lowercased maximal runs of word characters, keeping tokens with at least
// `min_length` code points.
inline std::vector<std::string> tokenize(std::string_view s, std::size_t min_length = 2) {
    std::vector<std::string> tokens;
    std::string cur;
    std::size_t cur_len = 0;
    auto flush = [&] {
        if (cur_len >= min_length) tokens.push_back(cur);
        cur.clear();
        cur_len = 0;
    };
    for (std::size_t i = 0; i < s.size();) {
        char32_t cp = detail::decode(s, i);
        if (is_word_char(cp)) {
            detail::encode(to_lower(cp), cur);
            ++cur_len;
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

} // namespace mmf::text
