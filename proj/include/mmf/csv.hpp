#pragma once

#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "mmf/error.hpp"

namespace mmf::csv {

// RFC 4180 record reader: quoted fields may contain commas, doubled quotes
// and line breaks. Tracks the physical line where each record starts.
class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::optional<std::vector<std::string>> next() {
        std::string line;
        while (true) {
            if (!std::getline(in_, line)) return std::nullopt;
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) break;
        }
        record_line_ = line_no_;
        std::vector<std::string> fields;
        std::string cur;
        bool quoted = false;
        std::size_t i = 0;
        while (true) {
            if (i == line.size()) {
                if (!quoted) break;
                std::string more;
                if (!std::getline(in_, more)) throw ParseError("unterminated quoted field", record_line_);
                ++line_no_;
                if (!more.empty() && more.back() == '\r') more.pop_back();
                cur.push_back('\n');
                line = std::move(more);
                i = 0;
                continue;
            }
            char c = line[i++];
            if (quoted) {
                if (c == '"') {
                    if (i < line.size() && line[i] == '"') {
                        cur.push_back('"');
                        ++i;
                    } else {
                        quoted = false;
                    }
                } else {
                    cur.push_back(c);
                }
            } else if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                fields.push_back(std::move(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        fields.push_back(std::move(cur));
        return fields;
    }

    std::size_t line() const noexcept { return record_line_; }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
    std::size_t record_line_ = 0;
};

inline std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace mmf::csv
