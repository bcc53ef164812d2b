#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmf/calendar.hpp"
#include "mmf/csv.hpp"
#include "mmf/error.hpp"
#include "mmf/marketdata.hpp"
#include "mmf/text.hpp"

namespace mmf {

inline constexpr std::string_view kNoTitle = "no title";

struct NewsArticle {
    std::string id;
    Timestamp published_at;
    std::string source;
    std::string title{kNoTitle};
    std::string body;
    std::vector<std::string> tags;
};

// Article id with its publication time; the unit of news alignment and
// duplicate filtering.
struct TimedId {
    std::string id;
    Timestamp at;
};

inline std::vector<TimedId> timed_ids(std::span<const NewsArticle> articles) {
    std::vector<TimedId> out;
    out.reserve(articles.size());
    for (const auto& a : articles) out.push_back({a.id, a.published_at});
    return out;
}

// The listed ids, in the given order, with their publication times.
inline std::vector<TimedId> timed_ids(std::span<const NewsArticle> articles, std::span<const std::string> ids) {
    std::unordered_map<std::string_view, const NewsArticle*> by_id;
    for (const auto& a : articles) by_id.emplace(a.id, &a);
    std::vector<TimedId> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error("unknown article id '" + id + "'");
        out.push_back({id, it->second->published_at});
    }
    return out;
}

struct NewsCorpus {
    std::vector<NewsArticle> articles;
    std::vector<std::string> warnings;

    const NewsArticle* find(std::string_view id) const {
        for (const auto& a : articles)
            if (a.id == id) return &a;
        return nullptr;
    }
};

struct CompanyRecord {
    std::string ticker;
    std::string name;
    std::string description;
};

struct KeywordSet {
    std::string ticker;
    std::vector<std::string> keywords;

    // Appends lowercase keywords that are not already present.
    void add(std::string_view kw) {
        auto lower = text::lowercase(kw);
        auto trimmed = std::string(detail::trim(lower));
        if (trimmed.empty()) return;
        if (std::find(keywords.begin(), keywords.end(), trimmed) == keywords.end()) keywords.push_back(trimmed);
    }
};

// One JSON object per line:
//   {"id": ..., "published_at": "2024-03-01T09:30", "source": ..., "title": ..., "body": ..., "tags": [...]}
// A repeated id is dropped with a warning; missing title becomes "no title".
inline NewsCorpus parse_news(std::istream& in) {
    NewsCorpus corpus;
    std::unordered_set<std::string> seen;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        auto row = detail::trim(raw);
        if (row.empty()) continue;
        NewsArticle a;
        try {
            auto j = nlohmann::json::parse(row);
            if (!j.is_object()) throw ParseError("record is not an object", line);
            const auto& id = j.at("id");
            a.id = id.is_string() ? id.get<std::string>() : id.dump();
            if (!j.contains("published_at") || j["published_at"].is_null())
                throw ParseError("missing date", line);
            a.published_at = parse_timestamp(j["published_at"].get<std::string>());
            a.source = j.value("source", std::string{});
            if (j.contains("title") && j["title"].is_string() && !detail::trim(j["title"].get<std::string>()).empty())
                a.title = j["title"].get<std::string>();
            a.body = j.at("body").get<std::string>();
            if (j.contains("tags") && !j["tags"].is_null()) {
                const auto& t = j["tags"];
                if (t.is_string()) {
                    a.tags.push_back(t.get<std::string>());
                } else {
                    for (const auto& x : t) a.tags.push_back(x.get<std::string>());
                }
            }
        } catch (const ParseError&) {
            throw;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed record: ") + e.what(), line);
        } catch (const Error& e) {
            throw ParseError(e.what(), line);
        }
        if (detail::trim(a.body).empty()) throw ParseError("empty body for article '" + a.id + "'", line);
        if (!seen.insert(a.id).second) {
            corpus.warnings.push_back("line " + std::to_string(line) + ": duplicate article id '" + a.id + "' skipped");
            continue;
        }
        corpus.articles.push_back(std::move(a));
    }
    return corpus;
}

inline NewsCorpus load_news(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open " + file.string());
    return parse_news(in);
}

inline void write_news(std::ostream& out, std::span<const NewsArticle> articles) {
    for (const auto& a : articles) {
        nlohmann::json j{{"id", a.id},       {"published_at", format_timestamp(a.published_at)},
                         {"source", a.source}, {"title", a.title},
                         {"body", a.body},   {"tags", a.tags}};
        out << j.dump() << '\n';
    }
}

// CSV `ticker,name,description` with header.
inline std::vector<CompanyRecord> parse_registry(std::istream& in) {
    csv::Reader reader(in);
    std::vector<CompanyRecord> out;
    std::unordered_set<std::string> seen;
    bool header = true;
    while (auto rec = reader.next()) {
        if (header) {
            header = false;
            if (rec->size() == 3 && (*rec)[0] == "ticker") continue;
        }
        if (rec->size() != 3) throw ParseError("expected 3 columns ticker,name,description", reader.line());
        CompanyRecord c{(*rec)[0], (*rec)[1], (*rec)[2]};
        if (c.ticker.empty()) throw ParseError("empty ticker", reader.line());
        if (detail::trim(c.description).empty())
            throw ParseError("empty description for '" + c.ticker + "'", reader.line());
        if (!seen.insert(c.ticker).second) throw ParseError("duplicate ticker '" + c.ticker + "'", reader.line());
        out.push_back(std::move(c));
    }
    return out;
}

// `ticker,keyword` pairs, one per line; optional header. Result keyed by ticker.
inline std::map<std::string, std::vector<std::string>> parse_keyword_supplement(std::istream& in) {
    csv::Reader reader(in);
    std::map<std::string, std::vector<std::string>> out;
    bool header = true;
    while (auto rec = reader.next()) {
        if (header) {
            header = false;
            if (rec->size() == 2 && (*rec)[0] == "ticker" && (*rec)[1] == "keyword") continue;
        }
        if (rec->size() != 2) throw ParseError("expected ticker,keyword", reader.line());
        out[(*rec)[0]].push_back((*rec)[1]);
    }
    return out;
}

// Smoothed inverse document frequency: ln((1 + N) / (1 + df)) + 1.
inline double smoothed_idf(std::size_t n_docs, std::size_t doc_freq) {
    return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(doc_freq))) + 1.0;
}

struct ScoredToken {
    std::string token;
    double score;
};

// Full tf-idf ranking of each description against the registry corpus.
// Score = raw count * smoothed idf; ties break lexicographically.
inline std::vector<std::vector<ScoredToken>> tfidf_scores(std::span<const CompanyRecord> registry) {
    if (registry.empty()) throw Error("tfidf: empty registry");
    std::vector<std::map<std::string, std::size_t>> tf(registry.size());
    std::unordered_map<std::string, std::size_t> df;
    for (std::size_t i = 0; i < registry.size(); ++i) {
        if (detail::trim(registry[i].description).empty())
            throw Error("tfidf: empty description for '" + registry[i].ticker + "'");
        for (auto& tok : text::tokenize(registry[i].description)) ++tf[i][tok];
        for (const auto& [tok, _] : tf[i]) ++df[tok];
    }
    std::vector<std::vector<ScoredToken>> out(registry.size());
    for (std::size_t i = 0; i < registry.size(); ++i) {
        for (const auto& [tok, count] : tf[i])
            out[i].push_back({tok, static_cast<double>(count) * smoothed_idf(registry.size(), df[tok])});
        std::sort(out[i].begin(), out[i].end(), [](const ScoredToken& a, const ScoredToken& b) {
            return a.score != b.score ? a.score > b.score : a.token < b.token;
        });
    }
    return out;
}

inline std::vector<KeywordSet> tfidf_keywords(std::span<const CompanyRecord> registry, std::size_t k = 30) {
    if (k < 1) throw Error("tfidf: k must be at least 1");
    auto scored = tfidf_scores(registry);
    std::vector<KeywordSet> out;
    out.reserve(registry.size());
    for (std::size_t i = 0; i < registry.size(); ++i) {
        KeywordSet ks{registry[i].ticker, {}};
        for (std::size_t j = 0; j < std::min(k, scored[i].size()); ++j) ks.keywords.push_back(scored[i][j].token);
        out.push_back(std::move(ks));
    }
    return out;
}

inline void merge_supplement(std::vector<KeywordSet>& sets,
                             const std::map<std::string, std::vector<std::string>>& supplement) {
    for (auto& ks : sets) {
        auto it = supplement.find(ks.ticker);
        if (it == supplement.end()) continue;
        for (const auto& kw : it->second) ks.add(kw);
    }
}

enum MatchField : unsigned { MatchTitle = 1, MatchBody = 2, MatchTags = 4, MatchAll = 7 };

// Tokenized view of a corpus, built once and reused across tickers.
class TokenIndex {
public:
    explicit TokenIndex(std::span<const NewsArticle> articles) : articles_(articles) {
        docs_.reserve(articles.size());
        for (const auto& a : articles) {
            Doc d;
            d.fields[0] = a.title == kNoTitle ? std::vector<std::string>{} : text::tokenize(a.title);
            d.fields[1] = text::tokenize(a.body);
            for (const auto& t : a.tags)
                for (auto& tok : text::tokenize(t)) d.fields[2].push_back(std::move(tok));
            for (int f = 0; f < 3; ++f) d.sets[f].insert(d.fields[f].begin(), d.fields[f].end());
            docs_.push_back(std::move(d));
        }
    }

    std::span<const NewsArticle> articles() const noexcept { return articles_; }

    // Keyword is tokenized; multi-token keywords match as a contiguous phrase.
    bool matches(std::size_t doc, const std::vector<std::string>& phrase, unsigned fields) const {
        const auto& d = docs_[doc];
        for (int f = 0; f < 3; ++f) {
            if (!(fields & (1u << f))) continue;
            if (phrase.size() == 1) {
                if (d.sets[f].count(phrase[0])) return true;
                continue;
            }
            if (!d.sets[f].count(phrase[0])) continue;
            const auto& toks = d.fields[f];
            if (std::search(toks.begin(), toks.end(), phrase.begin(), phrase.end()) != toks.end()) return true;
        }
        return false;
    }

private:
    struct Doc {
        std::vector<std::string> fields[3];
        std::unordered_set<std::string> sets[3];
    };
    std::span<const NewsArticle> articles_;
    std::vector<Doc> docs_;
};

// Ids of articles containing any keyword, ordered by publication time
// (corpus order among equal timestamps).
inline std::vector<std::string> match_articles(const TokenIndex& index, const KeywordSet& keywords,
                                               unsigned fields = MatchAll) {
    if (keywords.keywords.empty()) throw Error("match_articles: empty keyword set for '" + keywords.ticker + "'");
    std::vector<std::vector<std::string>> phrases;
    for (const auto& kw : keywords.keywords) {
        auto toks = text::tokenize(kw, 1);
        if (!toks.empty()) phrases.push_back(std::move(toks));
    }
    auto articles = index.articles();
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < articles.size(); ++i) {
        for (const auto& p : phrases) {
            if (index.matches(i, p, fields)) {
                hits.push_back(i);
                break;
            }
        }
    }
    std::stable_sort(hits.begin(), hits.end(), [&](std::size_t a, std::size_t b) {
        return articles[a].published_at < articles[b].published_at;
    });
    std::vector<std::string> ids;
    ids.reserve(hits.size());
    for (auto i : hits) ids.push_back(articles[i].id);
    return ids;
}

inline std::vector<std::string> match_articles(std::span<const NewsArticle> corpus, const KeywordSet& keywords,
                                               unsigned fields = MatchAll) {
    return match_articles(TokenIndex(corpus), keywords, fields);
}

struct SourceCount {
    std::string source;
    double count = 0;
};

inline std::map<std::string, SeriesStats> length_stats(std::span<const SourceCount> counts) {
    std::map<std::string, std::vector<double>> groups;
    for (const auto& c : counts) {
        if (c.count < 0) throw Error("length_stats: negative token count");
        groups[c.source].push_back(c.count);
    }
    std::map<std::string, SeriesStats> out;
    for (const auto& [src, vals] : groups) {
        if (vals.empty()) throw Error("length_stats: empty group '" + src + "'");
        out[src] = describe(vals);
    }
    return out;
}

// Word-token counts per article (title excluded when absent), using the
// same tokenizer as keyword matching with single-character tokens kept.
inline std::vector<SourceCount> word_token_counts(std::span<const NewsArticle> articles) {
    std::vector<SourceCount> out;
    out.reserve(articles.size());
    for (const auto& a : articles) {
        std::size_t n = text::tokenize(a.body, 1).size();
        if (a.title != kNoTitle) n += text::tokenize(a.title, 1).size();
        out.push_back({a.source, static_cast<double>(n)});
    }
    return out;
}

// Reads a `source,tokens` count table (header optional).
inline std::vector<SourceCount> parse_token_counts(std::istream& in) {
    csv::Reader reader(in);
    std::vector<SourceCount> out;
    bool header = true;
    while (auto rec = reader.next()) {
        if (header) {
            header = false;
            if (rec->size() == 2 && (*rec)[0] == "source") continue;
        }
        if (rec->size() != 2) throw ParseError("expected source,tokens", reader.line());
        out.push_back({(*rec)[0], detail::parse_price((*rec)[1], reader.line())});
    }
    return out;
}

} // namespace mmf
