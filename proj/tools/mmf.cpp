// mmf: command-line driver for the forecasting pipeline.
//
//   mmf ingest | keywords | dedup {train|apply} | embed-fallback | features
//       | train | predict | backtest | report   [options]
//
// Options may come from a TOML-style file (--config); flags override it.
// Every run writes the resolved configuration to <out>/<command>.config.toml.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mmf/dedup.hpp"
#include "mmf/eval.hpp"
#include "mmf/features.hpp"
#include "mmf/models.hpp"
#include "mmf/newscorpus.hpp"
#include "mmf/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mmf;

namespace {

// Raw option values as parsed; converted into library configs after parsing.
struct Options {
    std::string candles, news, registry, keyword_supplement, embeddings, dedup_model, features, token_counts;
    std::string out = "out";
    std::size_t jobs = 1;
    std::uint64_t seed = 42;
    std::string modality = "single", aggregation = "mean", model = "lstm";
    bool l2_normalize = false;
    std::string train_end = format_date(kDefaultTrainEnd), test_start = format_date(kDefaultTestStart);
    std::string market_open = "10:00";
    std::size_t window = 5;
    std::size_t k = 30;
    std::string match_fields = "title,body,tags";
    long dedup_window_hours = 72;
    std::size_t embed_dim = 768;
    // models
    std::size_t hidden = 64, epochs = 30, batch_size = 32;
    std::string news_at = "last";
    bool standardize = true;
    double lr = 1e-3, clip_norm = 1.0;
    std::size_t knn_k = 5, tree_depth = 8, tree_min_leaf = 5;
    std::size_t rf_trees = 100, rf_depth = 8, rf_min_leaf = 5;
    double rf_feature_fraction = 1.0 / 3.0;
    std::size_t gbt_rounds = 100, gbt_depth = 3;
    double gbt_shrinkage = 0.1, ols_ridge = OlsModel::kRidge;
    // dedup training
    std::string dedup_mode, pairs;
    std::size_t dedup_epochs = 30, dedup_hidden1 = 256, dedup_hidden2 = 64, paraphrase_variants = 3;
    double dedup_threshold = 0.5, paraphrase_dropout = 0.1;
    // predict / report
    std::string models_dir;
    std::vector<std::string> reports;
};

template <class F>
auto as_field(const char* field, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(field, e.what());
    }
}

PipelineConfig pipeline_config(const Options& o) {
    PipelineConfig c;
    c.paths = {o.candles, o.news, o.registry, o.keyword_supplement, o.embeddings, o.dedup_model};
    auto& b = c.backtest;
    b.modality = as_field("modality", [&] { return parse_modality(o.modality); });
    b.aggregation = as_field("agg", [&] { return parse_aggregation(o.aggregation); });
    b.l2_normalize = o.l2_normalize;
    b.alignment.market_open = as_field("market-open", [&] { return parse_time_of_day(o.market_open); });
    b.alignment.window_days = o.window;
    b.train_end = as_field("train-end", [&] { return parse_date(o.train_end); });
    b.test_start = as_field("test-start", [&] { return parse_date(o.test_start); });
    b.seed = o.seed;
    b.jobs = o.jobs;
    auto& m = b.model;
    m.kind = as_field("model", [&] { return parse_model_kind(o.model); });
    m.lstm.hidden = o.hidden;
    m.lstm.news_at = as_field("news-at", [&] { return parse_news_placement(o.news_at); });
    m.lstm.standardize = o.standardize;
    m.lstm.train.epochs = o.epochs;
    m.lstm.train.batch_size = o.batch_size;
    m.lstm.train.learning_rate = o.lr;
    m.lstm.train.clip_norm = o.clip_norm;
    m.knn_k = o.knn_k;
    m.tree = {o.tree_depth, o.tree_min_leaf, 1.0};
    m.forest.n_trees = o.rf_trees;
    m.forest.tree = {o.rf_depth, o.rf_min_leaf, o.rf_feature_fraction};
    m.gbt.rounds = o.gbt_rounds;
    m.gbt.shrinkage = o.gbt_shrinkage;
    m.gbt.tree.max_depth = o.gbt_depth;
    m.ols_ridge = o.ols_ridge;
    c.keyword_k = o.k;
    c.match_fields = as_field("match-fields", [&] { return parse_match_fields(o.match_fields); });
    c.dedup_window = std::chrono::hours{o.dedup_window_hours};
    if (o.hidden < 1) throw ConfigError("hidden", "must be at least 1");
    if (o.knn_k < 1) throw ConfigError("knn-k", "must be at least 1");
    if (o.rf_trees < 1) throw ConfigError("rf-trees", "must be at least 1");
    if (!(o.rf_feature_fraction > 0 && o.rf_feature_fraction <= 1))
        throw ConfigError("rf-feature-fraction", "must be in (0, 1]");
    if (!(o.gbt_shrinkage > 0 && o.gbt_shrinkage <= 1)) throw ConfigError("gbt-shrinkage", "must be in (0, 1]");
    if (o.jobs < 1) throw ConfigError("jobs", "must be at least 1");
    return c;
}

fs::path out_dir(const Options& o) {
    fs::path p(o.out);
    fs::create_directories(p);
    return p;
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(p, mode | std::ios::trunc);
    if (!f) throw Error("cannot write " + p.string());
    return f;
}

void write_text(const fs::path& p, const std::string& s) {
    auto f = open_out(p, std::ios::binary);
    f << s;
}

std::string ticker_of(const FeatureRow& r) { return r.ticker; }

// ---------------------------------------------------------------- commands

int cmd_ingest(const Options& o) {
    require_path(o.candles, "candles", "for ingest");
    nlohmann::ordered_json j;
    auto& tj = j["tickers"] = nlohmann::ordered_json::array();
    for (const auto& s : load_candle_input(o.candles)) {
        auto r = compute_returns(s, PriceField::Close);
        auto st = describe(r.values);
        std::cout << s.ticker() << ": " << s.size() << " sessions " << format_date(s[0].date) << " .. "
                  << format_date(s[s.size() - 1].date) << ", close return mean " << st.mean << " std " << st.std
                  << '\n';
        tj.push_back({{"ticker", s.ticker()},
                      {"sessions", s.size()},
                      {"first", format_date(s[0].date)},
                      {"last", format_date(s[s.size() - 1].date)},
                      {"close_return", {{"mean", st.mean}, {"std", st.std}, {"min", st.min}, {"max", st.max}}}});
    }
    auto stats_json = [](const std::map<std::string, SeriesStats>& m) {
        nlohmann::ordered_json out = nlohmann::ordered_json::object();
        for (const auto& [src, s] : m)
            out[src] = {{"count", s.count}, {"mean", s.mean}, {"std", s.std}, {"min", s.min},
                        {"q25", s.q25},     {"q50", s.q50},   {"q75", s.q75}, {"max", s.max}};
        return out;
    };
    if (!o.news.empty()) {
        require_path(o.news, "news", "");
        auto corpus = load_news(o.news);
        for (const auto& w : corpus.warnings) spdlog::warn("{}", w);
        std::cout << corpus.articles.size() << " articles, " << corpus.warnings.size() << " warnings\n";
        j["articles"] = corpus.articles.size();
        j["news_warnings"] = corpus.warnings;
        j["word_lengths"] = stats_json(length_stats(word_token_counts(corpus.articles)));
    }
    if (!o.token_counts.empty()) {
        require_path(o.token_counts, "token-counts", "");
        std::ifstream in(o.token_counts);
        j["token_lengths"] = stats_json(length_stats(parse_token_counts(in)));
    }
    if (!o.registry.empty()) {
        require_path(o.registry, "registry", "");
        j["registry_rows"] = load_registry(o.registry).size();
    }
    write_text(out_dir(o) / "ingest.json", j.dump(2) + "\n");
    return 0;
}

int cmd_keywords(const Options& o) {
    require_path(o.registry, "registry", "for keywords");
    check_optional_path(o.keyword_supplement, "keyword-supplement");
    if (o.k < 1) throw ConfigError("k", "must be at least 1");
    auto sets = load_keyword_sets({o.candles, o.news, o.registry, o.keyword_supplement, {}, {}}, o.k);
    auto f = open_out(out_dir(o) / "keywords.csv", std::ios::binary);
    f << "ticker,keyword\n";
    for (const auto& s : sets) {
        std::cout << s.ticker << ':';
        for (const auto& kw : s.keywords) {
            std::cout << ' ' << kw;
            f << csv::quote(s.ticker) << ',' << csv::quote(kw) << '\n';
        }
        std::cout << '\n';
    }
    spdlog::info("{} keyword sets written", sets.size());
    return 0;
}

int cmd_embed_fallback(const Options& o) {
    require_path(o.news, "news", "for embed-fallback");
    if (o.embed_dim < 1) throw ConfigError("embed-dim", "must be at least 1");
    auto corpus = load_news(o.news);
    auto provider = hash_embed_corpus(corpus.articles, o.embed_dim);
    auto path = out_dir(o) / "embeddings.emb";
    save_embedding_file(path, provider);
    std::cout << provider.size() << " vectors (" << provider.model_id() << ") -> " << path.string() << '\n';
    return 0;
}

int cmd_dedup(const Options& o) {
    require_path(o.news, "news", "for dedup");
    auto corpus = load_news(o.news);
    auto out = out_dir(o);
    if (o.dedup_mode == "train") {
        DedupTrainConfig tc;
        tc.hidden1 = o.dedup_hidden1;
        tc.hidden2 = o.dedup_hidden2;
        tc.epochs = o.dedup_epochs;
        tc.threshold = o.dedup_threshold;
        tc.seed = derive_seed(o.seed, fnv1a64("dedup"));
        std::vector<LabeledPair> pairs;
        EmbeddingProvider provider;
        if (!o.pairs.empty()) {
            require_path(o.pairs, "pairs", "");
            std::ifstream in(o.pairs);
            pairs = parse_labeled_pairs(in);
            provider = o.embeddings.empty() ? hash_embed_bodies(corpus.articles, o.embed_dim)
                                            : load_embedding_file(o.embeddings);
        } else {
            // no labels: rewrite each article and learn to pair originals with their rewrites
            auto syn = make_synthetic_pairs(corpus.articles, {o.paraphrase_variants, o.paraphrase_dropout},
                                            derive_seed(o.seed, fnv1a64("paraphrase")));
            pairs = syn.pairs;
            std::vector<NewsArticle> all = corpus.articles;
            all.insert(all.end(), syn.paraphrases.begin(), syn.paraphrases.end());
            provider = hash_embed_bodies(all, o.embed_dim);
            spdlog::info("generated {} synthetic pairs", pairs.size());
        }
        auto res = train_pair_classifier(pairs, provider, tc);
        save_classifier(out / "dedup.ddp", res.classifier);
        auto f = open_out(out / "dedup_loss.csv", std::ios::binary);
        f << "epoch,bce\n";
        for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) f << e + 1 << ',' << res.epoch_loss[e] << '\n';
        std::cout << "trained on " << pairs.size() << " pairs, train accuracy " << res.train_accuracy << '\n';
        return 0;
    }
    require_path(o.dedup_model, "dedup-model", "for dedup apply");
    auto clf = load_classifier(o.dedup_model);
    auto provider = o.embeddings.empty() ? hash_embed_bodies(corpus.articles, clf.embedding_dim())
                                         : load_embedding_file(o.embeddings);
    if (provider.dim() != clf.embedding_dim())
        throw ConfigError("embeddings", "dimension " + std::to_string(provider.dim()) + " does not match classifier (" +
                                            std::to_string(clf.embedding_dim()) + ")");
    auto items = timed_ids(corpus.articles);
    std::stable_sort(items.begin(), items.end(), [](const TimedId& a, const TimedId& b) { return a.at < b.at; });
    auto kept = filter_duplicates(items, provider, clf, std::chrono::hours{o.dedup_window_hours});
    std::set<std::string> keep(kept.begin(), kept.end());
    std::vector<NewsArticle> retained;
    for (const auto& a : corpus.articles)
        if (keep.count(a.id)) retained.push_back(a);
    auto f = open_out(out / "news.dedup.jsonl", std::ios::binary);
    write_news(f, retained);
    std::cout << "retained " << retained.size() << " of " << corpus.articles.size() << " articles\n";
    return 0;
}

// Rows per ticker, from a feature file when given, else built from data.
std::map<std::string, std::vector<FeatureRow>> rows_by_ticker(const Options& o, const PipelineConfig& cfg) {
    std::map<std::string, std::vector<FeatureRow>> out;
    if (!o.features.empty()) {
        require_path(o.features, "features", "");
        for (auto& r : load_feature_file(o.features)) out[ticker_of(r)].push_back(std::move(r));
        return out;
    }
    auto data = prepare_data(cfg);
    for (const auto& w : data.warnings) spdlog::warn("{}", w);
    for (const auto& t : data.tickers) {
        const EmbeddingProvider* p = data.provider ? &*data.provider : nullptr;
        try {
            out[t.candles.ticker()] = ticker_rows(t, p, cfg.backtest);
        } catch (const std::exception& e) {
            spdlog::error("{}: {}", t.candles.ticker(), e.what());
        }
    }
    return out;
}

int cmd_features(const Options& o, const PipelineConfig& cfg) {
    auto data = prepare_data(cfg);
    for (const auto& w : data.warnings) spdlog::warn("{}", w);
    std::vector<FeatureRow> all;
    int failures = 0;
    for (const auto& t : data.tickers) {
        const EmbeddingProvider* p = data.provider ? &*data.provider : nullptr;
        try {
            auto rows = ticker_rows(t, p, cfg.backtest);
            std::cout << t.candles.ticker() << ": " << rows.size() << " rows";
            if (data.matched.count(t.candles.ticker()))
                std::cout << ", " << data.matched[t.candles.ticker()] << " matched articles, "
                          << data.retained[t.candles.ticker()] << " retained";
            std::cout << '\n';
            all.insert(all.end(), rows.begin(), rows.end());
        } catch (const std::exception& e) {
            spdlog::error("{}: {}", t.candles.ticker(), e.what());
            ++failures;
        }
    }
    save_feature_file(out_dir(o) / "features.ftr", all);
    return failures == 0 ? 0 : 1;
}

std::string model_file_name(const std::string& ticker, ModelKind kind) {
    return ticker + "." + to_string(kind) + ".bin";
}

int cmd_train(const Options& o, const PipelineConfig& cfg) {
    auto by_ticker = rows_by_ticker(o, cfg);
    auto dir = out_dir(o) / "models";
    fs::create_directories(dir);
    const auto& bt = cfg.backtest;
    BacktestReport curves_only;
    curves_only.config = bt;
    int failures = 0;
    for (const auto& [ticker, rows] : by_ticker) {
        TickerResult tr;
        tr.ticker = ticker;
        try {
            auto split = split_by_date(rows, bt.train_end, bt.test_start);
            ModelConfig mc = bt.model;
            mc.set_seed(ticker_seed(bt.seed, ticker, mc.kind));
            auto fit = fit_model(mc, split.train, split.test);
            save_model(dir / model_file_name(ticker, mc.kind), fit.model);
            tr.ok = true;
            tr.curves = std::move(fit.curves);
            std::cout << ticker << ": trained on " << split.train.size() << " rows\n";
        } catch (const std::exception& e) {
            spdlog::error("{}: {}", ticker, e.what());
            ++failures;
        }
        curves_only.tickers.push_back(std::move(tr));
    }
    curves_only.curves = mean_curves(curves_only.tickers);
    export_loss_curves(curves_only, out_dir(o) / "loss_curves.csv");
    return failures == 0 ? 0 : 1;
}

int cmd_predict(const Options& o, const PipelineConfig& cfg) {
    auto by_ticker = rows_by_ticker(o, cfg);
    fs::path dir = o.models_dir.empty() ? out_dir(o) / "models" : fs::path(o.models_dir);
    require_path(dir, "models", "for predict");
    auto f = open_out(out_dir(o) / "predictions.csv", std::ios::binary);
    f << "ticker,date,actual_return,predicted_return\n";
    const auto kind = cfg.backtest.model.kind;
    int failures = 0;
    char buf[64];
    for (const auto& [ticker, rows] : by_ticker) {
        auto path = dir / model_file_name(ticker, kind);
        if (!fs::exists(path)) {
            spdlog::error("{}: no model file {}", ticker, path.string());
            ++failures;
            continue;
        }
        auto model = load_model(path);
        std::size_t n = 0;
        for (const auto& r : rows) {
            if (r.target_date < cfg.backtest.test_start) continue;
            f << ticker << ',' << format_date(r.target_date);
            std::snprintf(buf, sizeof buf, ",%.17g", r.y);
            f << buf;
            std::snprintf(buf, sizeof buf, ",%.17g", predict(model, r));
            f << buf << '\n';
            ++n;
        }
        std::cout << ticker << ": " << n << " predictions\n";
    }
    return failures == 0 ? 0 : 1;
}

int cmd_backtest(const Options& o, const PipelineConfig& cfg) {
    auto data = prepare_data(cfg);
    for (const auto& w : data.warnings) spdlog::warn("{}", w);
    for (const auto& [t, n] : data.matched) spdlog::info("{}: {} matched articles, {} retained", t, n, data.retained[t]);
    auto report = run_backtest(data.tickers, data.provider ? &*data.provider : nullptr, cfg.backtest);
    auto out = out_dir(o);
    {
        auto f = open_out(out / "report.json", std::ios::binary);
        write_report_json(f, report);
    }
    std::ostringstream text;
    write_report_text(text, summarize(report));
    write_text(out / "report.txt", text.str());
    export_loss_curves(report, out / "loss_curves.csv");
    std::cout << text.str();
    return report.successes() == report.tickers.size() ? 0 : 1;
}

int cmd_report(const Options& o) {
    std::vector<std::string> files = o.reports;
    if (files.empty()) files.push_back((fs::path(o.out) / "report.json").string());
    std::vector<ReportSummary> runs;
    std::ostringstream text;
    for (const auto& file : files) {
        std::ifstream in(file);
        if (!in) throw Error("cannot open " + file);
        runs.push_back(parse_report_json(in));
        text << file << ": ";
        write_report_text(text, runs.back());
        text << '\n';
    }
    if (runs.size() > 1) write_comparison_text(text, runs);
    write_text(out_dir(o) / "comparison.txt", text.str());
    std::cout << text.str();
    return 0;
}

// Global keys plus those of the subcommand that ran; other subcommands'
// defaults would otherwise be replayed onto them.
std::string resolved_config(const CLI::App& app, const std::string& sub) {
    std::istringstream in(app.config_to_str(true, false));
    std::string out, line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        auto dot = line.find('.');
        bool scoped = dot != std::string::npos && dot < eq;
        if (!scoped || line.compare(0, sub.size() + 1, sub + ".") == 0) out += line + '\n';
    }
    return out;
}

void setup_logging() {
    auto logger = spdlog::stderr_color_st("mmf");
    logger->set_pattern("%^%l%$: %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("MMF_LOG")) {
        auto lvl = spdlog::level::from_str(env);
        // from_str maps unknown names to "off"
        if (lvl == spdlog::level::off && std::string(env) != "off")
            spdlog::warn("MMF_LOG: unknown level '{}', keeping info", env);
        else
            spdlog::set_level(lvl);
    }
}

} // namespace

int main(int argc, char** argv) {
    setup_logging();
    Options o;
    CLI::App app{"Multimodal price forecasting pipeline"};
    app.fallthrough();
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML-style configuration file; flags override its values");

    auto path = [&](const char* name, std::string& target, const char* desc) {
        app.add_option(name, target, desc)->group("Data");
    };
    path("--candles", o.candles, "Candle directory (one file per ticker) or single file");
    path("--news", o.news, "News corpus (JSON lines)");
    path("--registry", o.registry, "Company registry CSV (ticker,name,description)");
    path("--keyword-supplement", o.keyword_supplement, "Extra keywords CSV (ticker,keyword)");
    path("--embeddings", o.embeddings, "Embedding file (EMB1)");
    path("--dedup-model", o.dedup_model, "Duplicate classifier (DDP1); filters matched news when set");
    path("--features", o.features, "Feature file (FTR1) for train/predict instead of raw data");
    path("--token-counts", o.token_counts, "Per-article token counts CSV (source,tokens) for ingest");
    app.add_option("--out", o.out, "Output directory")->capture_default_str();

    app.add_option("--jobs", o.jobs, "Worker threads for per-ticker work")->capture_default_str();
    app.add_option("--seed", o.seed, "Top-level seed")->capture_default_str();
    app.add_option("--modality", o.modality, "single or dual")
        ->check(CLI::IsMember({"single", "dual"}))
        ->capture_default_str();
    app.add_option("--agg", o.aggregation, "News aggregation: sum or mean")
        ->check(CLI::IsMember({"sum", "mean"}))
        ->capture_default_str();
    app.add_option("--l2-normalize", o.l2_normalize, "L2-normalise aggregated news vectors")->capture_default_str();
    app.add_option("--model", o.model, "lstm, ols, knn, dt, rf or gbt")
        ->check(CLI::IsMember({"lstm", "ols", "knn", "dt", "rf", "gbt"}))
        ->capture_default_str();
    app.add_option("--train-end", o.train_end, "Last target date in the train partition")->capture_default_str();
    app.add_option("--test-start", o.test_start, "First target date in the test partition")->capture_default_str();
    app.add_option("--market-open", o.market_open, "Session open time HH:MM")->capture_default_str();
    app.add_option("--window", o.window, "Sessions per feature window")->capture_default_str();

    auto news = [&](auto* opt) { return opt->group("News")->capture_default_str(); };
    news(app.add_option("--k", o.k, "Keywords per company"));
    news(app.add_option("--match-fields", o.match_fields, "Fields searched for keywords: title,body,tags"));
    news(app.add_option("--dedup-window-hours", o.dedup_window_hours, "Duplicate comparison window"));
    news(app.add_option("--embed-dim", o.embed_dim, "Dimension of hashed fallback embeddings"));

    auto mdl = [&](auto* opt) { return opt->group("Model")->capture_default_str(); };
    // doubles are echoed at full precision so a dumped config replays exactly
    auto exact = [](CLI::Option* opt, double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        opt->default_str(buf);
    };
    mdl(app.add_option("--hidden", o.hidden, "LSTM hidden units"));
    mdl(app.add_option("--news-at", o.news_at, "LSTM news input: last or all steps"));
    mdl(app.add_option("--standardize", o.standardize, "Standardise LSTM inputs and target"));
    mdl(app.add_option("--epochs", o.epochs, "LSTM epochs"));
    mdl(app.add_option("--batch-size", o.batch_size, "LSTM batch size"));
    exact(mdl(app.add_option("--lr", o.lr, "LSTM learning rate")), o.lr);
    exact(mdl(app.add_option("--clip-norm", o.clip_norm, "Gradient clipping norm (0 disables)")), o.clip_norm);
    mdl(app.add_option("--knn-k", o.knn_k, "Neighbours for knn"));
    mdl(app.add_option("--tree-depth", o.tree_depth, "Decision tree max depth"));
    mdl(app.add_option("--tree-min-leaf", o.tree_min_leaf, "Decision tree min leaf size"));
    mdl(app.add_option("--rf-trees", o.rf_trees, "Random forest size"));
    mdl(app.add_option("--rf-depth", o.rf_depth, "Random forest tree depth"));
    mdl(app.add_option("--rf-min-leaf", o.rf_min_leaf, "Random forest min leaf size"));
    exact(mdl(app.add_option("--rf-feature-fraction", o.rf_feature_fraction, "Features tried per split")), o.rf_feature_fraction);
    mdl(app.add_option("--gbt-rounds", o.gbt_rounds, "Boosting rounds"));
    exact(mdl(app.add_option("--gbt-shrinkage", o.gbt_shrinkage, "Boosting shrinkage")), o.gbt_shrinkage);
    mdl(app.add_option("--gbt-depth", o.gbt_depth, "Boosting tree depth"));
    exact(mdl(app.add_option("--ols-ridge", o.ols_ridge, "Ridge added to the OLS normal equations")), o.ols_ridge);

    auto* ingest = app.add_subcommand("ingest", "Validate and summarise input data");
    auto* keywords = app.add_subcommand("keywords", "Extract TF-IDF keywords per company");
    auto* dedup = app.add_subcommand("dedup", "Train or apply the duplicate-news filter");
    dedup->add_option("mode", o.dedup_mode, "train or apply")->required()->check(CLI::IsMember({"train", "apply"}));
    dedup->add_option("--pairs", o.pairs, "Labelled pairs CSV (id_a,id_b,label); synthetic rewrites if absent");
    dedup->add_option("--dedup-epochs", o.dedup_epochs, "Training epochs")->capture_default_str();
    dedup->add_option("--dedup-hidden1", o.dedup_hidden1, "First hidden layer width")->capture_default_str();
    dedup->add_option("--dedup-hidden2", o.dedup_hidden2, "Second hidden layer width")->capture_default_str();
    exact(dedup->add_option("--dedup-threshold", o.dedup_threshold, "Duplicate probability threshold"), o.dedup_threshold);
    dedup->add_option("--paraphrase-variants", o.paraphrase_variants, "Rewrites per article")->capture_default_str();
    exact(dedup->add_option("--paraphrase-dropout", o.paraphrase_dropout, "Token dropout in rewrites"), o.paraphrase_dropout);
    auto* embed = app.add_subcommand("embed-fallback", "Write hashed bag-of-words embeddings for a corpus");
    auto* features = app.add_subcommand("features", "Build and serialise feature rows");
    auto* train = app.add_subcommand("train", "Train one model per ticker");
    auto* predict_cmd = app.add_subcommand("predict", "Predict test-partition returns with saved models");
    predict_cmd->add_option("--models", o.models_dir, "Directory of saved models (default <out>/models)");
    auto* backtest = app.add_subcommand("backtest", "Train, predict and score every ticker");
    auto* report = app.add_subcommand("report", "Render and compare backtest reports");
    report->add_option("reports", o.reports, "report.json files (default <out>/report.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        auto cfg = pipeline_config(o);
        write_text(out_dir(o) / (name + ".config.toml"), resolved_config(app, name));
        spdlog::debug("resolved configuration written to {}", (fs::path(o.out) / (name + ".config.toml")).string());
        if (sub == ingest) return cmd_ingest(o);
        if (sub == keywords) return cmd_keywords(o);
        if (sub == dedup) return cmd_dedup(o);
        if (sub == embed) return cmd_embed_fallback(o);
        if (sub == features) return cmd_features(o, cfg);
        if (sub == train) return cmd_train(o, cfg);
        if (sub == predict_cmd) return cmd_predict(o, cfg);
        if (sub == backtest) return cmd_backtest(o, cfg);
        if (sub == report) return cmd_report(o);
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 1;
}
