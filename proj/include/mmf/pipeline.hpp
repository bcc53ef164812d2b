#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmf/dedup.hpp"
#include "mmf/embedding.hpp"
#include "mmf/error.hpp"
#include "mmf/eval.hpp"
#include "mmf/marketdata.hpp"
#include "mmf/newscorpus.hpp"

namespace mmf {

// A configuration problem attributable to one named field.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error("config field '" + field + "': " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

struct PipelinePaths {
    std::filesystem::path candles;             // directory of per-ticker files, or one file
    std::filesystem::path news;                // JSON-lines corpus
    std::filesystem::path registry;            // ticker,name,description CSV
    std::filesystem::path keyword_supplement;  // optional ticker,keyword CSV
    std::filesystem::path embeddings;          // EMB1 file
    std::filesystem::path dedup_model;         // optional DDP1 classifier
};

struct PipelineConfig {
    PipelinePaths paths;
    BacktestConfig backtest;
    std::size_t keyword_k = 30;
    unsigned match_fields = MatchAll;
    std::chrono::hours dedup_window = kDefaultDedupWindow;
};

inline unsigned parse_match_fields(std::string_view s) {
    unsigned out = 0;
    for (auto part : detail::split(s, ',')) {
        auto f = detail::trim(part);
        if (f == "title") out |= MatchTitle;
        else if (f == "body") out |= MatchBody;
        else if (f == "tags") out |= MatchTags;
        else if (f == "all") out |= MatchAll;
        else throw Error("unknown match field '" + std::string(f) + "' (expected title, body, tags or all)");
    }
    if (out == 0) throw Error("no match fields given");
    return out;
}

inline void require_path(const std::filesystem::path& p, const char* field, const char* why) {
    if (p.empty()) throw ConfigError(field, std::string("required ") + why);
    if (!std::filesystem::exists(p)) throw ConfigError(field, "path does not exist: " + p.string());
}

inline void check_optional_path(const std::filesystem::path& p, const char* field) {
    if (!p.empty() && !std::filesystem::exists(p)) throw ConfigError(field, "path does not exist: " + p.string());
}

// Checks what a row-building run (features, train, backtest) needs.
inline void validate_for_rows(const PipelineConfig& cfg) {
    require_path(cfg.paths.candles, "candles", "for every pipeline run");
    const auto& b = cfg.backtest;
    if (b.modality == Modality::Dual) {
        require_path(cfg.paths.embeddings, "embeddings", "when modality is dual");
        require_path(cfg.paths.news, "news", "when modality is dual");
        require_path(cfg.paths.registry, "registry", "when modality is dual");
    }
    check_optional_path(cfg.paths.keyword_supplement, "keyword-supplement");
    check_optional_path(cfg.paths.dedup_model, "dedup-model");
    if (!(b.train_end < b.test_start)) throw ConfigError("test-start", "must be after train-end");
    if (b.alignment.window_days < 1) throw ConfigError("window", "must be at least 1");
    if (cfg.keyword_k < 1) throw ConfigError("k", "must be at least 1");
    b.model.lstm.train.validate();
}

inline std::vector<CandleSeries> load_candle_input(const std::filesystem::path& p) {
    if (std::filesystem::is_directory(p)) return load_candles_dir(p);
    return {load_candles(p)};
}

inline std::vector<CompanyRecord> load_registry(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot open " + p.string());
    return parse_registry(in);
}

// TF-IDF keywords per registry row, extended by the optional supplement.
inline std::vector<KeywordSet> load_keyword_sets(const PipelinePaths& paths, std::size_t k) {
    auto sets = tfidf_keywords(load_registry(paths.registry), k);
    if (!paths.keyword_supplement.empty()) {
        std::ifstream in(paths.keyword_supplement);
        if (!in) throw Error("cannot open " + paths.keyword_supplement.string());
        merge_supplement(sets, parse_keyword_supplement(in));
    }
    return sets;
}

struct PreparedData {
    std::vector<TickerData> tickers;
    std::optional<EmbeddingProvider> provider;  // set for dual modality
    std::vector<std::string> warnings;
    std::map<std::string, std::size_t> matched, retained;  // per-ticker article counts
};

// Loads candles and, for dual modality, the corpus, keyword sets and
// embeddings; each ticker receives the articles matching its keywords,
// filtered for duplicates when a classifier is configured.
inline PreparedData prepare_data(const PipelineConfig& cfg) {
    validate_for_rows(cfg);
    PreparedData out;
    auto candles = load_candle_input(cfg.paths.candles);
    if (cfg.backtest.modality == Modality::Single) {
        for (auto& c : candles) out.tickers.push_back({std::move(c), {}});
        return out;
    }
    auto corpus = load_news(cfg.paths.news);
    out.warnings = corpus.warnings;
    out.provider = load_embedding_file(cfg.paths.embeddings);
    std::optional<PairClassifier> clf;
    if (!cfg.paths.dedup_model.empty()) {
        clf = load_classifier(cfg.paths.dedup_model);
        if (clf->embedding_dim() != out.provider->dim())
            throw ConfigError("dedup-model", "classifier expects " + std::to_string(clf->embedding_dim()) +
                                                 "-dim embeddings, file has " + std::to_string(out.provider->dim()));
    }
    auto sets = load_keyword_sets(cfg.paths, cfg.keyword_k);
    std::map<std::string, const KeywordSet*> by_ticker;
    for (const auto& s : sets) by_ticker[s.ticker] = &s;
    TokenIndex index(corpus.articles);
    for (auto& c : candles) {
        TickerData td{std::move(c), {}};
        const auto& ticker = td.candles.ticker();
        auto it = by_ticker.find(ticker);
        if (it == by_ticker.end()) {
            out.warnings.push_back("no registry entry for " + ticker + "; its news vectors will be zero");
        } else {
            td.news = timed_ids(corpus.articles, match_articles(index, *it->second, cfg.match_fields));
            out.matched[ticker] = td.news.size();
            if (clf) {
                auto kept = filter_duplicates(td.news, *out.provider, *clf, cfg.dedup_window);
                td.news = timed_ids(corpus.articles, kept);
            }
            out.retained[ticker] = td.news.size();
        }
        out.tickers.push_back(std::move(td));
    }
    return out;
}

} // namespace mmf
