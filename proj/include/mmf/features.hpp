#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmf/binary_io.hpp"
#include "mmf/calendar.hpp"
#include "mmf/embedding.hpp"
#include "mmf/error.hpp"
#include "mmf/marketdata.hpp"

namespace mmf {

enum class Modality { Single, Dual };

inline const char* to_string(Modality m) { return m == Modality::Single ? "single" : "dual"; }

inline Modality parse_modality(std::string_view s) {
    if (s == "single") return Modality::Single;
    if (s == "dual") return Modality::Dual;
    throw Error("unknown modality '" + std::string(s) + "' (expected single|dual)");
}

struct AlignmentConfig {
    std::chrono::minutes market_open{10 * 60};  // exchange-local
    std::size_t window_days = 5;
};

// One example: price returns for the `window_days` sessions before the
// target date (field-major: closes, opens, highs, lows), an optional news
// vector, and the target-date close return.
struct FeatureRow {
    std::string ticker;
    Date target_date;
    std::vector<double> x_price;
    std::optional<Vector> x_news;
    double y = 0;

    std::size_t width() const noexcept { return x_price.size() + (x_news ? x_news->size() : 0); }

    // [x_price || x_news]
    Vector features() const {
        Vector x = x_price;
        if (x_news) x.insert(x.end(), x_news->begin(), x_news->end());
        return x;
    }
};

using NewsMap = std::map<Date, std::vector<std::string>>;

// Assigns each article to the first session whose open follows it: target d
// (with previous session p) receives articles stamped in [open(p), open(d)),
// which includes anything published over weekends and holidays between them.
// Articles before the first open or at/after the last open are dropped.
// Every target date from the second session on gets an entry, possibly empty.
inline NewsMap align_news(std::span<const Date> calendar, std::span<const TimedId> articles,
                          const AlignmentConfig& cfg = {}) {
    if (!std::is_sorted(calendar.begin(), calendar.end())) throw Error("align_news: calendar not sorted");
    std::vector<Timestamp> opens;
    opens.reserve(calendar.size());
    for (auto d : calendar) opens.push_back(Timestamp{d} + cfg.market_open);
    NewsMap out;
    for (std::size_t i = 1; i < calendar.size(); ++i) out[calendar[i]];
    std::vector<std::size_t> order(articles.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return articles[a].at < articles[b].at; });
    for (auto i : order) {
        auto k = static_cast<std::size_t>(std::upper_bound(opens.begin(), opens.end(), articles[i].at) - opens.begin());
        if (k == 0 || k == opens.size()) continue;
        out[calendar[k]].push_back(articles[i].id);
    }
    return out;
}

struct PriceReturns {
    std::string ticker;
    std::vector<Date> dates;
    std::vector<double> close, open, high, low;

    std::size_t size() const noexcept { return dates.size(); }
};

inline PriceReturns price_returns(const CandleSeries& s) {
    PriceReturns r;
    r.ticker = s.ticker();
    auto c = compute_returns(s, PriceField::Close);
    r.dates = c.dates;
    r.close = std::move(c.values);
    r.open = compute_returns(s, PriceField::Open).values;
    r.high = compute_returns(s, PriceField::High).values;
    r.low = compute_returns(s, PriceField::Low).values;
    return r;
}

struct RowOptions {
    Modality modality = Modality::Single;
    AggregationMode aggregation = AggregationMode::Mean;
    bool l2_normalize = false;
    AlignmentConfig alignment{};
};

// Rows for targets window..n-1 of the return series; n returns give
// n - window rows.
inline std::vector<FeatureRow> build_rows(const PriceReturns& returns, const NewsMap* news,
                                          const EmbeddingProvider* provider, const RowOptions& opt) {
    const std::size_t w = opt.alignment.window_days;
    if (w < 1) throw Error("build_rows: window must be at least 1");
    const std::size_t n = returns.size();
    if (n < w + 1)
        throw Error("build_rows: insufficient history for '" + returns.ticker + "' (" + std::to_string(n) +
                    " returns, need " + std::to_string(w + 1) + ")");
    const bool dual = opt.modality == Modality::Dual;
    if (dual && (provider == nullptr || provider->dim() == 0))
        throw Error("build_rows: dual modality requires an embedding provider");
    const std::vector<double>* fields[] = {&returns.close, &returns.open, &returns.high, &returns.low};
    for (const auto* f : fields)
        if (f->size() != n) throw Error("build_rows: return series lengths differ");

    std::vector<FeatureRow> rows;
    rows.reserve(n - w);
    for (std::size_t j = w; j < n; ++j) {
        FeatureRow row;
        row.ticker = returns.ticker;
        row.target_date = returns.dates[j];
        row.x_price.reserve(4 * w);
        for (const auto* f : fields)
            for (std::size_t k = j - w; k < j; ++k) row.x_price.push_back((*f)[k]);
        row.y = returns.close[j];
        if (!std::isfinite(row.y)) throw Error("build_rows: non-finite target");
        if (dual) {
            std::vector<std::span<const double>> vecs;
            if (news) {
                auto it = news->find(row.target_date);
                if (it != news->end()) {
                    for (const auto& id : it->second) {
                        auto v = provider->lookup(id);
                        if (v.empty()) throw Error("build_rows: missing embedding for article '" + id + "'");
                        vecs.insert(vecs.end(), v.begin(), v.end());
                    }
                }
            }
            row.x_news = vecs.empty() ? zero_vector(provider->dim())
                                      : aggregate(vecs, opt.aggregation, opt.l2_normalize);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

struct SplitRows {
    std::vector<FeatureRow> train;
    std::vector<FeatureRow> test;
};

// train: target <= train_end; test: target >= test_start; anything strictly
// between the two bounds is discarded (embargo gap).
inline SplitRows split_by_date(std::span<const FeatureRow> rows, Date train_end, Date test_start) {
    if (!(train_end < test_start)) throw Error("split_by_date: train end must precede test start");
    SplitRows s;
    for (const auto& r : rows) {
        if (r.target_date <= train_end) s.train.push_back(r);
        else if (r.target_date >= test_start) s.test.push_back(r);
    }
    if (s.train.empty()) throw Error("split_by_date: empty train partition");
    if (s.test.empty()) throw Error("split_by_date: empty test partition");
    return s;
}

inline const Date kDefaultTrainEnd = make_date(2024, 3, 27);
inline const Date kDefaultTestStart = make_date(2024, 3, 28);

// FTR1 layout, little-endian: "FTR1" | u64 row count | per row:
//   u16 ticker length, bytes | i32 target date (days since 1970-01-01)
//   | 20 x f64 price returns | u32 news dim (0 = none) | dim x f32 | f64 y
inline constexpr std::size_t kSerializedPriceWidth = 20;

inline void write_feature_file(std::ostream& out, std::span<const FeatureRow> rows) {
    io::ByteWriter w;
    w.magic("FTR1");
    w.put<std::uint64_t>(rows.size());
    for (const auto& r : rows) {
        if (r.x_price.size() != kSerializedPriceWidth)
            throw Error("FTR1 stores exactly 20 price features (window of 5 sessions)");
        w.str16(r.ticker);
        w.put<std::int32_t>(static_cast<std::int32_t>(r.target_date.time_since_epoch().count()));
        for (double x : r.x_price) w.put<double>(x);
        w.put<std::uint32_t>(r.x_news ? static_cast<std::uint32_t>(r.x_news->size()) : 0u);
        if (r.x_news)
            for (double x : *r.x_news) w.put<float>(static_cast<float>(x));
        w.put<double>(r.y);
    }
    w.write_to(out);
}

inline std::vector<FeatureRow> read_feature_file(std::istream& in) {
    auto bytes = io::slurp(in);
    io::ByteReader r(bytes);
    r.expect_magic("FTR1", "FTR1 feature");
    auto count = r.get<std::uint64_t>();
    std::vector<FeatureRow> rows;
    for (std::uint64_t i = 0; i < count; ++i) {
        FeatureRow row;
        row.ticker = r.str16();
        row.target_date = Date{std::chrono::days{r.get<std::int32_t>()}};
        row.x_price.resize(kSerializedPriceWidth);
        for (auto& x : row.x_price) x = r.get<double>();
        auto dim = r.get<std::uint32_t>();
        if (dim > 0) {
            row.x_news = Vector(dim);
            for (auto& x : *row.x_news) x = r.get<float>();
        }
        row.y = r.get<double>();
        rows.push_back(std::move(row));
    }
    if (r.remaining() != 0) throw Error("FTR1: trailing bytes");
    return rows;
}

inline void save_feature_file(const std::filesystem::path& path, std::span<const FeatureRow> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    write_feature_file(out, rows);
}

inline std::vector<FeatureRow> load_feature_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return read_feature_file(in);
}

} // namespace mmf
