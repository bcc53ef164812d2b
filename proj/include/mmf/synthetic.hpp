#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <string>
#include <unordered_set>
#include <vector>

#include "mmf/calendar.hpp"
#include "mmf/dedup.hpp"
#include "mmf/marketdata.hpp"
#include "mmf/newscorpus.hpp"
#include "mmf/random.hpp"

// Deterministic synthetic fixtures: pseudo-word text, planted duplicate
// corpora, and candle series whose returns are partly driven by a signal
// carried only in news text.
namespace mmf::synthetic {

inline std::vector<std::string> make_vocabulary(std::size_t n, std::uint64_t seed) {
    static const char* const onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "kr", "pl"};
    static const char* const vowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
    Rng rng(seed);
    std::vector<std::string> vocab;
    std::unordered_set<std::string> seen;
    while (vocab.size() < n) {
        std::string w;
        for (std::size_t s = 0, k = 2 + rng.index(3); s < k; ++s) {
            w += onsets[rng.index(std::size(onsets))];
            w += vowels[rng.index(std::size(vowels))];
        }
        if (seen.insert(w).second) vocab.push_back(std::move(w));
    }
    return vocab;
}

inline std::string random_text(Rng& rng, const std::vector<std::string>& vocab, std::size_t n_words) {
    std::string s;
    for (std::size_t i = 0; i < n_words; ++i) {
        if (i) s.push_back(' ');
        s += vocab[rng.index(vocab.size())];
    }
    return s;
}

inline std::vector<NewsArticle> random_articles(std::size_t n, const std::vector<std::string>& vocab, Timestamp start,
                                                std::chrono::minutes spacing, std::uint64_t seed,
                                                const std::string& id_prefix = "a") {
    Rng rng(seed);
    std::vector<NewsArticle> out;
    for (std::size_t i = 0; i < n; ++i) {
        NewsArticle a;
        a.id = id_prefix + std::to_string(i);
        a.published_at = start + spacing * static_cast<long>(i);
        a.source = "Synthetic";
        a.title = random_text(rng, vocab, 6);
        a.body = random_text(rng, vocab, 40 + rng.index(41));
        out.push_back(std::move(a));
    }
    return out;
}

struct PlantedDedupCorpus {
    std::vector<NewsArticle> articles;  // chronological
    std::vector<std::string> original_ids;
};

// `n_originals` unrelated articles spread `spacing` apart, each followed a
// few hours later by one synthetic paraphrase.
inline PlantedDedupCorpus planted_dedup_corpus(std::size_t n_originals, const std::vector<std::string>& vocab,
                                               std::uint64_t seed, double dropout = 0.1,
                                               std::chrono::minutes spacing = std::chrono::hours{12}) {
    Rng rng(seed);
    auto start = Timestamp{make_date(2024, 1, 1)} + std::chrono::hours{9};
    auto originals = random_articles(n_originals, vocab, start, spacing, derive_seed(seed, 7), "orig");
    PlantedDedupCorpus c;
    for (std::size_t i = 0; i < originals.size(); ++i) {
        auto p = paraphrase(originals[i], 1 + rng.index(2), dropout, rng);
        p.published_at = originals[i].published_at + std::chrono::minutes{30 + static_cast<long>(rng.index(300))};
        c.original_ids.push_back(originals[i].id);
        c.articles.push_back(originals[i]);
        c.articles.push_back(std::move(p));
    }
    std::stable_sort(c.articles.begin(), c.articles.end(),
                     [](const NewsArticle& a, const NewsArticle& b) { return a.published_at < b.published_at; });
    return c;
}

struct PlantedSignalConfig {
    std::size_t tickers = 2;
    std::size_t sessions = 600;
    double ar_coef = 0.5;            // AR(1) coefficient on the previous close return
    double ar_weight = 0.5;          // weight of the AR term in the next return
    double signal_weight = 0.5;      // weight of the news signal
    double signal_step = 0.02;       // spacing between signal levels
    int signal_levels = 2;           // levels are -L..L times signal_step
    double noise_std = 0.002;
    double news_probability = 0.9;   // chance a session has news at all
    std::size_t max_articles = 3;
    std::uint64_t seed = 1;
    Date start = make_date(2022, 7, 7);
};

struct PlantedSignalDataset {
    std::vector<CandleSeries> candles;
    std::vector<NewsArticle> articles;        // chronological
    std::vector<CompanyRecord> registry;
    std::vector<std::vector<double>> signal;  // per ticker, per session (index 0 unused)
};

inline std::vector<Date> weekdays(Date start, std::size_t n) {
    std::vector<Date> out;
    for (Date d = start; out.size() < n; d += std::chrono::days{1}) {
        std::chrono::weekday wd{d};
        if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) out.push_back(d);
    }
    return out;
}

// Close returns follow
//   r[d] = ar_weight * ar_coef * r[d-1] + signal_weight * s[d] + noise,
// where s[d] is only observable through the words of news published between
// the previous session's open and session d's open.
inline PlantedSignalDataset planted_signal_dataset(const PlantedSignalConfig& cfg) {
    PlantedSignalDataset ds;
    auto vocab = make_vocabulary(400, derive_seed(cfg.seed, 100));
    const std::size_t n_levels = 2 * static_cast<std::size_t>(cfg.signal_levels) + 1;
    // each level owns a disjoint word pool
    std::vector<std::vector<std::string>> level_words(n_levels);
    for (std::size_t l = 0; l < n_levels; ++l)
        for (std::size_t k = 0; k < 8; ++k) level_words[l].push_back(vocab[l * 8 + k]);
    std::vector<std::string> filler(vocab.begin() + static_cast<long>(n_levels * 8), vocab.end());
    auto dates = weekdays(cfg.start, cfg.sessions);
    const auto open_time = std::chrono::hours{10};

    for (std::size_t t = 0; t < cfg.tickers; ++t) {
        Rng rng(derive_seed(cfg.seed, 200 + t));
        std::string ticker = "SYN" + std::string(1, static_cast<char>('A' + t));
        std::string keyword = "tick" + std::string(1, static_cast<char>('a' + t)) + "corp";
        ds.registry.push_back({ticker, ticker + " Holdings", keyword + " operates plants and sells products " +
                                                                 vocab[vocab.size() - 1 - t]});
        std::vector<Candle> bars;
        std::vector<double> sig(cfg.sessions, 0.0);
        double prev_close = 100.0 * (1.0 + static_cast<double>(t));
        double prev_ret = 0.0;
        bars.push_back({dates[0], prev_close, prev_close * 1.005, prev_close * 0.995, prev_close});
        for (std::size_t d = 1; d < cfg.sessions; ++d) {
            int level = 0;
            std::size_t n_articles = 0;
            if (rng.uniform() < cfg.news_probability) {
                level = static_cast<int>(rng.index(n_levels)) - cfg.signal_levels;
                n_articles = 1 + rng.index(cfg.max_articles);
            }
            sig[d] = cfg.signal_step * level;
            for (std::size_t k = 0; k < n_articles; ++k) {
                NewsArticle a;
                a.id = ticker + "-" + std::to_string(d) + "-" + std::to_string(k);
                // between the previous open and this session's open
                Timestamp lo = Timestamp{dates[d - 1]} + open_time;
                Timestamp hi = Timestamp{dates[d]} + open_time;
                auto span_min = std::chrono::duration_cast<std::chrono::minutes>(hi - lo).count();
                a.published_at = lo + std::chrono::minutes{static_cast<long>(rng.index(static_cast<std::size_t>(span_min)))};
                a.source = "Synthetic";
                a.title = keyword + " update";
                const auto& words = level_words[static_cast<std::size_t>(level + cfg.signal_levels)];
                std::string body = keyword;
                for (int w = 0; w < 12; ++w) body += " " + words[rng.index(words.size())];
                for (int w = 0; w < 12; ++w) body += " " + filler[rng.index(filler.size())];
                a.body = std::move(body);
                ds.articles.push_back(std::move(a));
            }
            double r = cfg.ar_weight * cfg.ar_coef * prev_ret + cfg.signal_weight * sig[d] + cfg.noise_std * rng.normal();
            r = std::max(r, -0.5);
            double close = prev_close * (1.0 + r);
            double open = prev_close * (1.0 + 0.002 * rng.normal());
            double high = std::max(open, close) * (1.0 + 0.003 * std::abs(rng.normal()));
            double low = std::min(open, close) * (1.0 - 0.003 * std::abs(rng.normal()));
            bars.push_back({dates[d], open, high, low, close});
            prev_close = close;
            prev_ret = r;
        }
        ds.candles.emplace_back(ticker, std::move(bars));
        ds.signal.push_back(std::move(sig));
    }
    std::stable_sort(ds.articles.begin(), ds.articles.end(),
                     [](const NewsArticle& a, const NewsArticle& b) { return a.published_at < b.published_at; });
    return ds;
}

} // namespace mmf::synthetic
