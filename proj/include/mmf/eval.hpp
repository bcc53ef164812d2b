#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmf/calendar.hpp"
#include "mmf/embedding.hpp"
#include "mmf/error.hpp"
#include "mmf/features.hpp"
#include "mmf/marketdata.hpp"
#include "mmf/models.hpp"
#include "mmf/random.hpp"

namespace mmf {

// ---------------------------------------------------------------- metrics

namespace detail {

inline void check_lengths(std::size_t a, std::size_t b, const char* what, std::size_t min_len = 1) {
    if (a != b) throw Error(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                            std::to_string(b) + ")");
    if (a < min_len) throw Error(std::string(what) + ": need at least " + std::to_string(min_len) + " values");
}

} // namespace detail

// Share of positions whose sign class agrees; values <= 0 count as "down".
inline double direction_accuracy(std::span<const double> predicted, std::span<const double> actual) {
    detail::check_lengths(predicted.size(), actual.size(), "direction_accuracy");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) hits += (predicted[i] > 0) == (actual[i] > 0);
    return static_cast<double>(hits) / static_cast<double>(actual.size());
}

// Mean absolute percentage error, in percent.
inline double mape(std::span<const double> predicted, std::span<const double> actual) {
    detail::check_lengths(predicted.size(), actual.size(), "mape");
    double s = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (actual[i] == 0) throw Error("mape: actual value is zero at position " + std::to_string(i));
        s += std::abs(predicted[i] - actual[i]) / std::abs(actual[i]);
    }
    return 100.0 * s / static_cast<double>(actual.size());
}

inline double mae(std::span<const double> predicted, std::span<const double> actual) {
    detail::check_lengths(predicted.size(), actual.size(), "mae");
    double s = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) s += std::abs(predicted[i] - actual[i]);
    return s / static_cast<double>(actual.size());
}

// 1 - SSres/SStot; NaN when the actual series is constant.
inline double r2(std::span<const double> predicted, std::span<const double> actual) {
    detail::check_lengths(predicted.size(), actual.size(), "r2", 2);
    double mean = 0;
    for (double a : actual) mean += a;
    mean /= static_cast<double>(actual.size());
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        ss_res += (predicted[i] - actual[i]) * (predicted[i] - actual[i]);
        ss_tot += (actual[i] - mean) * (actual[i] - mean);
    }
    if (ss_tot == 0) return std::numeric_limits<double>::quiet_NaN();
    return 1.0 - ss_res / ss_tot;
}

// Price for each day from the previous actual close and a return.
inline std::vector<double> pointwise_prices(std::span<const double> previous_close, std::span<const double> returns) {
    detail::check_lengths(previous_close.size(), returns.size(), "pointwise_prices", 0);
    std::vector<double> out(returns.size());
    for (std::size_t i = 0; i < returns.size(); ++i) out[i] = (returns[i] + 1.0) * previous_close[i];
    return out;
}

// accuracy and r2 are computed on returns, mape on prices rebuilt from the
// previous actual close, mae on returns.
struct MetricSet {
    double accuracy = 0;
    double mape = 0;
    double mae = 0;
    double r2 = 0;
    bool r2_defined = true;
};

struct EvalSeries {
    std::vector<double> previous_close;
    std::vector<double> actual_return;
    std::vector<double> predicted_return;
};

inline MetricSet evaluate(const EvalSeries& s) {
    MetricSet m;
    m.accuracy = direction_accuracy(s.predicted_return, s.actual_return);
    m.mape = mape(pointwise_prices(s.previous_close, s.predicted_return),
                  pointwise_prices(s.previous_close, s.actual_return));
    m.mae = mae(s.predicted_return, s.actual_return);
    m.r2 = s.actual_return.size() >= 2 ? r2(s.predicted_return, s.actual_return)
                                       : std::numeric_limits<double>::quiet_NaN();
    m.r2_defined = std::isfinite(m.r2);
    return m;
}

// Unweighted mean; r2 averages the tickers where it is defined.
inline MetricSet average(std::span<const MetricSet> sets) {
    MetricSet avg;
    if (sets.empty()) {
        avg.r2 = std::numeric_limits<double>::quiet_NaN();
        avg.r2_defined = false;
        return avg;
    }
    double r2_sum = 0;
    std::size_t r2_n = 0;
    for (const auto& s : sets) {
        avg.accuracy += s.accuracy;
        avg.mape += s.mape;
        avg.mae += s.mae;
        if (s.r2_defined) {
            r2_sum += s.r2;
            ++r2_n;
        }
    }
    const double n = static_cast<double>(sets.size());
    avg.accuracy /= n;
    avg.mape /= n;
    avg.mae /= n;
    avg.r2_defined = r2_n > 0;
    avg.r2 = avg.r2_defined ? r2_sum / static_cast<double>(r2_n) : std::numeric_limits<double>::quiet_NaN();
    return avg;
}

// ---------------------------------------------------------------- backtest

struct TickerData {
    CandleSeries candles;
    std::vector<TimedId> news;  // matched (and optionally deduplicated) articles
};

struct BacktestConfig {
    ModelConfig model{};
    Modality modality = Modality::Single;
    AggregationMode aggregation = AggregationMode::Mean;
    bool l2_normalize = false;
    AlignmentConfig alignment{};
    Date train_end = kDefaultTrainEnd;
    Date test_start = kDefaultTestStart;
    std::uint64_t seed = 42;
    std::size_t jobs = 1;
};

struct TickerResult {
    std::string ticker;
    bool ok = false;
    std::string error;
    std::size_t train_rows = 0, test_rows = 0;
    std::uint64_t seed = 0;
    MetricSet metrics;
    LossCurves curves;
};

struct BacktestReport {
    BacktestConfig config;
    std::string embedder;  // embedding model id, empty for single modality
    std::vector<TickerResult> tickers;  // in ticker order
    MetricSet mean;
    LossCurves curves;  // per-epoch mean over successful tickers

    std::size_t successes() const {
        return static_cast<std::size_t>(std::count_if(tickers.begin(), tickers.end(), [](const auto& t) { return t.ok; }));
    }
};

// Seed for one ticker's model, independent of which other tickers run.
inline std::uint64_t ticker_seed(std::uint64_t seed, std::string_view ticker, ModelKind kind) {
    return derive_seed(derive_seed(seed, fnv1a64(ticker)), static_cast<std::uint64_t>(kind));
}

// Feature rows for one ticker; news is aligned only for dual modality.
inline std::vector<FeatureRow> ticker_rows(const TickerData& data, const EmbeddingProvider* provider,
                                           const BacktestConfig& cfg) {
    const bool dual = cfg.modality == Modality::Dual;
    NewsMap news;
    if (dual) news = align_news(data.candles.dates(), data.news, cfg.alignment);
    RowOptions opt{cfg.modality, cfg.aggregation, cfg.l2_normalize, cfg.alignment};
    return build_rows(price_returns(data.candles), dual ? &news : nullptr, provider, opt);
}

// Builds rows, splits by date, trains on the train partition and scores
// the test partition for one ticker.
inline TickerResult backtest_ticker(const TickerData& data, const EmbeddingProvider* provider,
                                    const BacktestConfig& cfg) {
    TickerResult res;
    res.ticker = data.candles.ticker();
    res.seed = ticker_seed(cfg.seed, res.ticker, cfg.model.kind);
    auto rows = ticker_rows(data, provider, cfg);
    auto split = split_by_date(rows, cfg.train_end, cfg.test_start);
    res.train_rows = split.train.size();
    res.test_rows = split.test.size();

    ModelConfig mc = cfg.model;
    mc.set_seed(res.seed);
    auto fit = fit_model(mc, split.train, split.test);
    res.curves = std::move(fit.curves);

    std::map<Date, double> close_before;
    for (std::size_t i = 1; i < data.candles.size(); ++i) close_before[data.candles[i].date] = data.candles[i - 1].close;
    EvalSeries es;
    for (const auto& r : split.test) {
        es.previous_close.push_back(close_before.at(r.target_date));
        es.actual_return.push_back(r.y);
        es.predicted_return.push_back(predict(fit.model, r));
    }
    res.metrics = evaluate(es);
    res.ok = true;
    return res;
}

inline LossCurves mean_curves(std::span<const TickerResult> results) {
    LossCurves out;
    auto mean_of = [&](auto member) {
        std::vector<double> m;
        std::size_t len = std::numeric_limits<std::size_t>::max();
        std::size_t used = 0;
        for (const auto& r : results)
            if (r.ok) {
                len = std::min(len, (r.curves.*member).size());
                ++used;
            }
        if (used == 0) return m;
        m.assign(len, 0.0);
        for (const auto& r : results)
            if (r.ok)
                for (std::size_t e = 0; e < len; ++e) m[e] += (r.curves.*member)[e];
        for (auto& v : m) v /= static_cast<double>(used);
        return m;
    };
    out.train = mean_of(&LossCurves::train);
    out.heldout = mean_of(&LossCurves::heldout);
    return out;
}

// Runs every ticker (on up to cfg.jobs threads) and assembles the report in
// ticker order. A failing ticker is recorded and the rest still reported.
inline BacktestReport run_backtest(std::span<const TickerData> data, const EmbeddingProvider* provider,
                                   const BacktestConfig& cfg) {
    if (data.empty()) throw Error("backtest: no tickers");
    if (cfg.modality == Modality::Dual && provider == nullptr)
        throw Error("backtest: dual modality requires an embedding source");
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data[a].candles.ticker() < data[b].candles.ticker(); });

    std::vector<TickerResult> results(data.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < order.size();) {
            const auto& d = data[order[k]];
            try {
                results[k] = backtest_ticker(d, provider, cfg);
            } catch (const std::exception& e) {
                results[k] = TickerResult{};
                results[k].ticker = d.candles.ticker();
                results[k].seed = ticker_seed(cfg.seed, d.candles.ticker(), cfg.model.kind);
                results[k].error = e.what();
            }
        }
    };
    const std::size_t jobs = std::clamp<std::size_t>(cfg.jobs, 1, data.size());
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    BacktestReport rep;
    rep.config = cfg;
    if (cfg.modality == Modality::Dual) rep.embedder = provider->model_id();
    rep.tickers = std::move(results);
    std::vector<MetricSet> ok;
    for (const auto& t : rep.tickers)
        if (t.ok) ok.push_back(t.metrics);
    rep.mean = average(ok);
    rep.curves = mean_curves(rep.tickers);
    return rep;
}

// ---------------------------------------------------------------- output

namespace detail {

inline nlohmann::ordered_json metrics_json(const MetricSet& m) {
    nlohmann::ordered_json j;
    j["accuracy"] = m.accuracy;
    j["mape"] = m.mape;
    j["mae"] = m.mae;
    j["r2"] = m.r2_defined ? nlohmann::ordered_json(m.r2) : nlohmann::ordered_json(nullptr);
    j["r2_defined"] = m.r2_defined;
    return j;
}

inline MetricSet metrics_from_json(const nlohmann::json& j) {
    MetricSet m;
    m.accuracy = j.at("accuracy").get<double>();
    m.mape = j.at("mape").get<double>();
    m.mae = j.at("mae").get<double>();
    m.r2_defined = j.at("r2_defined").get<bool>();
    m.r2 = m.r2_defined ? j.at("r2").get<double>() : std::numeric_limits<double>::quiet_NaN();
    return m;
}

inline std::string seed_hex(std::uint64_t s) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(s));
    return buf;
}

} // namespace detail

inline nlohmann::ordered_json config_json(const BacktestConfig& c) {
    nlohmann::ordered_json j;
    j["model"] = to_string(c.model.kind);
    j["modality"] = to_string(c.modality);
    j["aggregation"] = to_string(c.aggregation);
    j["l2_normalize"] = c.l2_normalize;
    j["train_end"] = format_date(c.train_end);
    j["test_start"] = format_date(c.test_start);
    j["seed"] = c.seed;
    j["market_open"] = format_time_of_day(c.alignment.market_open);
    j["window_days"] = c.alignment.window_days;
    const auto& l = c.model.lstm;
    j["lstm"] = {{"hidden", l.hidden},
                 {"news_at", to_string(l.news_at)},
                 {"standardize", l.standardize},
                 {"epochs", l.train.epochs},
                 {"batch_size", l.train.batch_size},
                 {"learning_rate", l.train.learning_rate},
                 {"clip_norm", l.train.clip_norm},
                 {"optimizer", "adam(beta1=0.9, beta2=0.999, eps=1e-8)"}};
    j["knn_k"] = c.model.knn_k;
    j["tree"] = {{"max_depth", c.model.tree.max_depth}, {"min_leaf", c.model.tree.min_leaf}};
    j["forest"] = {{"n_trees", c.model.forest.n_trees},
                   {"max_depth", c.model.forest.tree.max_depth},
                   {"min_leaf", c.model.forest.tree.min_leaf},
                   {"feature_fraction", c.model.forest.tree.feature_fraction}};
    j["gbt"] = {{"rounds", c.model.gbt.rounds},
                {"shrinkage", c.model.gbt.shrinkage},
                {"max_depth", c.model.gbt.tree.max_depth}};
    j["ols_ridge"] = c.model.ols_ridge;
    return j;
}

inline nlohmann::ordered_json report_json(const BacktestReport& r) {
    nlohmann::ordered_json j;
    j["config"] = config_json(r.config);
    j["embedder"] = r.embedder;
    auto& tickers = j["tickers"] = nlohmann::ordered_json::array();
    for (const auto& t : r.tickers) {
        nlohmann::ordered_json tj;
        tj["ticker"] = t.ticker;
        tj["ok"] = t.ok;
        tj["seed"] = detail::seed_hex(t.seed);
        if (t.ok) {
            tj["train_rows"] = t.train_rows;
            tj["test_rows"] = t.test_rows;
            tj["metrics"] = detail::metrics_json(t.metrics);
        } else {
            tj["error"] = t.error;
        }
        tickers.push_back(std::move(tj));
    }
    j["mean"] = detail::metrics_json(r.mean);
    j["loss_curves"] = {{"train", r.curves.train}, {"test", r.curves.heldout}};
    return j;
}

inline void write_report_json(std::ostream& out, const BacktestReport& r) { out << report_json(r).dump(2) << '\n'; }

// Summary view of a saved report: enough to render tables and compare runs.
struct ReportSummary {
    std::string model, modality, aggregation, embedder;
    std::vector<std::pair<std::string, MetricSet>> tickers;  // successful tickers only
    std::vector<std::pair<std::string, std::string>> failures;
    MetricSet mean;
};

inline ReportSummary summarize(const BacktestReport& r) {
    ReportSummary s;
    s.model = to_string(r.config.model.kind);
    s.modality = to_string(r.config.modality);
    s.aggregation = to_string(r.config.aggregation);
    s.embedder = r.embedder;
    for (const auto& t : r.tickers) {
        if (t.ok) s.tickers.emplace_back(t.ticker, t.metrics);
        else s.failures.emplace_back(t.ticker, t.error);
    }
    s.mean = r.mean;
    return s;
}

inline ReportSummary parse_report_json(std::istream& in) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
        ReportSummary s;
        const auto& c = j.at("config");
        s.model = c.at("model").get<std::string>();
        s.modality = c.at("modality").get<std::string>();
        s.aggregation = c.at("aggregation").get<std::string>();
        s.embedder = j.at("embedder").get<std::string>();
        for (const auto& t : j.at("tickers")) {
            auto name = t.at("ticker").get<std::string>();
            if (t.at("ok").get<bool>()) s.tickers.emplace_back(name, detail::metrics_from_json(t.at("metrics")));
            else s.failures.emplace_back(name, t.at("error").get<std::string>());
        }
        s.mean = detail::metrics_from_json(j.at("mean"));
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed report: ") + e.what());
    }
}

namespace detail {

inline std::string fixed(double v, int decimals) {
    if (!std::isfinite(v)) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline void table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> w;
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (w.size() <= c) w.push_back(0);
            w[c] = std::max(w[c], r[c].size());
        }
    for (const auto& r : rows) {
        std::string line;
        for (std::size_t c = 0; c < r.size(); ++c) {
            std::string cell = r[c];
            // first column left-aligned, numbers right-aligned
            if (c == 0) cell += std::string(w[c] - cell.size(), ' ');
            else cell = std::string(w[c] - cell.size(), ' ') + cell;
            line += (c ? "  " : "") + cell;
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << '\n';
    }
}

inline std::vector<std::string> metric_cells(const std::string& label, const MetricSet& m) {
    return {label, fixed(100.0 * m.accuracy, 3), fixed(m.mape, 3), fixed(m.mae, 6),
            m.r2_defined ? fixed(m.r2, 4) : "n/a"};
}

} // namespace detail

// Per-ticker table followed by the mean row. Accuracy is shown in percent.
inline void write_report_text(std::ostream& out, const ReportSummary& s) {
    out << "model " << s.model << ", modality " << s.modality;
    if (s.modality == "dual") out << " (" << s.aggregation << ", " << s.embedder << ")";
    out << "\n\n";
    std::vector<std::vector<std::string>> rows{{"ticker", "accuracy%", "mape%", "mae", "r2"}};
    for (const auto& [t, m] : s.tickers) rows.push_back(detail::metric_cells(t, m));
    rows.push_back(detail::metric_cells("mean", s.mean));
    detail::table(out, rows);
    for (const auto& [t, e] : s.failures) out << "failed " << t << ": " << e << '\n';
}

// One row per run, ascending by mean MAPE.
inline void write_comparison_text(std::ostream& out, std::vector<ReportSummary> runs) {
    std::stable_sort(runs.begin(), runs.end(),
                     [](const ReportSummary& a, const ReportSummary& b) { return a.mean.mape < b.mean.mape; });
    std::vector<std::vector<std::string>> rows{{"run", "accuracy%", "mape%", "mae", "r2"}};
    for (const auto& r : runs) {
        std::string label = r.model + "/" + r.modality;
        if (r.modality == "dual") label += "/" + r.aggregation;
        rows.push_back(detail::metric_cells(label, r.mean));
    }
    detail::table(out, rows);
}

// CSV epoch,model,split,mse with the train and test curves interleaved by
// epoch (1-based).
inline void write_loss_curves(std::ostream& out, const BacktestReport& r) {
    out << "epoch,model,split,mse\n";
    const char* model = to_string(r.config.model.kind);
    const std::size_t n = std::max(r.curves.train.size(), r.curves.heldout.size());
    char buf[64];
    for (std::size_t e = 0; e < n; ++e) {
        if (e < r.curves.train.size()) {
            std::snprintf(buf, sizeof buf, "%.17g", r.curves.train[e]);
            out << e + 1 << ',' << model << ",train," << buf << '\n';
        }
        if (e < r.curves.heldout.size()) {
            std::snprintf(buf, sizeof buf, "%.17g", r.curves.heldout[e]);
            out << e + 1 << ',' << model << ",test," << buf << '\n';
        }
    }
}

inline void export_loss_curves(const BacktestReport& r, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    write_loss_curves(out, r);
    if (!out) throw Error("write failed: " + path.string());
}

} // namespace mmf
