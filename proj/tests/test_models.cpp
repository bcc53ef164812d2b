#include <catch_amalgamated.hpp>

#include <sstream>

#include "gradcheck.hpp"
#include "mmf/models.hpp"
#include "oracles.hpp"

using namespace mmf;

namespace {

FeatureRow random_row(Rng& rng, std::size_t news_dim, double scale = 0.01) {
    FeatureRow r;
    r.ticker = "T";
    r.target_date = make_date(2024, 1, 1);
    r.x_price.resize(20);
    for (auto& v : r.x_price) v = scale * rng.normal();
    if (news_dim > 0) {
        r.x_news = Vector(news_dim);
        for (auto& v : *r.x_news) v = rng.normal();
    }
    r.y = scale * rng.normal();
    return r;
}

std::vector<FeatureRow> random_rows(std::size_t n, std::size_t news_dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<FeatureRow> rows;
    for (std::size_t i = 0; i < n; ++i) rows.push_back(random_row(rng, news_dim));
    return rows;
}

// Rows whose close returns follow r[t] = phi * r[t-1] + noise.
std::vector<FeatureRow> ar1_rows(std::size_t n, double phi, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> r{0.0};
    for (std::size_t t = 1; t < n + 5; ++t) r.push_back(phi * r.back() + 0.01 * rng.normal());
    std::vector<FeatureRow> rows;
    for (std::size_t t = 5; t < r.size(); ++t) {
        FeatureRow row;
        row.x_price.assign(20, 0.0);
        for (std::size_t k = 0; k < 5; ++k) row.x_price[k] = r[t - 5 + k];
        for (std::size_t k = 5; k < 20; ++k) row.x_price[k] = 0.005 * rng.normal();
        row.y = r[t];
        rows.push_back(std::move(row));
    }
    return rows;
}

LstmModel random_lstm(std::size_t hidden, std::size_t news_dim, NewsPlacement at, std::uint64_t seed) {
    LstmShape shape;
    shape.hidden = hidden;
    shape.news_dim = news_dim;
    shape.news_at = at;
    LstmModel m(shape);
    Rng rng(seed);
    for (auto& p : m.params()) p = rng.uniform(-0.8, 0.8);
    Standardizer s = Standardizer::identity(4);
    for (std::size_t f = 0; f < 4; ++f) {
        s.field_mean[f] = 0.001 * rng.normal();
        s.field_scale[f] = 0.01 + 0.01 * rng.uniform();
    }
    s.y_mean = 0.001;
    s.y_scale = 0.02;
    m.set_scaler(s);
    return m;
}

std::string bytes_of(const Model& m) {
    std::ostringstream out;
    write_model(out, m);
    return out.str();
}

} // namespace

TEST_CASE("zero-parameter LSTM predicts zero") {
    LstmModel m(LstmShape{});
    Rng rng(1);
    for (int i = 0; i < 5; ++i) CHECK(m.predict(random_row(rng, 0).features()) == 0.0);
    CHECK_THROWS_WITH(m.predict(std::vector<double>(19)), Catch::Matchers::ContainsSubstring("feature width"));
}

TEST_CASE("LSTM initialisation") {
    LstmModel a(LstmShape{}), b(LstmShape{});
    a.initialize(7);
    b.initialize(7);
    CHECK(std::ranges::equal(a.params(), b.params()));
    Rng rng(2);
    auto x = random_row(rng, 0).features();
    CHECK(a.predict(x) == b.predict(x));
    const double bound = 1.0 / 8.0;
    for (std::size_t j = 0; j < 64; ++j) CHECK(a.b(LstmModel::ForgetGate, j) == 1.0);
    for (std::size_t j = 0; j < 64; ++j) CHECK(std::abs(a.b(LstmModel::InputGate, j)) <= bound);
    for (double p : a.params().subspan(0, a.b_offset())) CHECK(std::abs(p) <= bound);
}

TEST_CASE("LSTM forward matches the gate-by-gate oracle") {
    Rng rng(3);
    for (auto at : {NewsPlacement::Last, NewsPlacement::All}) {
        for (int trial = 0; trial < 10; ++trial) {
            std::size_t news = trial % 2 == 0 ? 0 : 6;
            auto m = random_lstm(3 + static_cast<std::size_t>(trial), news, at, 100 + static_cast<std::uint64_t>(trial));
            auto x = random_row(rng, news).features();
            REQUIRE(std::abs(m.predict(x) - oracle::lstm_forward(m, x)) <= 1e-12);
        }
    }
}

TEST_CASE("LSTM BPTT gradient matches finite differences") {
    for (auto at : {NewsPlacement::Last, NewsPlacement::All}) {
        for (std::size_t news : {std::size_t{0}, std::size_t{3}}) {
            auto m = random_lstm(4, news, at, 11 + news);
            auto rows = random_rows(3, news, 12 + news);
            std::vector<double> analytic(m.params().size(), 0.0);
            m.loss_and_gradient(rows, analytic);
            auto numeric = testing::numeric_gradient(m.params(), [&] { return m.loss(rows); });
            INFO("news " << news << " at " << to_string(at));
            // check each parameter block separately
            std::size_t bounds[] = {m.w_offset(), m.u_offset(), m.b_offset(), m.v_offset(), m.c_offset(),
                                    m.params().size()};
            for (std::size_t k = 0; k + 1 < std::size(bounds); ++k) {
                std::span<const double> a(analytic.data() + bounds[k], bounds[k + 1] - bounds[k]);
                std::span<const double> n(numeric.data() + bounds[k], bounds[k + 1] - bounds[k]);
                CHECK(testing::max_relative_error(a, n) < 1e-4);
            }
        }
    }
}

TEST_CASE("news placement") {
    // with news on the last step only, earlier-step news columns get no gradient
    auto m = random_lstm(3, 2, NewsPlacement::Last, 5);
    auto rows = random_rows(2, 2, 6);
    std::vector<double> g(m.params().size(), 0.0);
    m.loss_and_gradient(rows, g);
    double news_grad = 0;
    for (std::size_t r = 0; r < 12; ++r)
        for (std::size_t c = 4; c < 6; ++c) news_grad += std::abs(g[r * 6 + c]);
    CHECK(news_grad > 0);
    CHECK(parse_news_placement("all") == NewsPlacement::All);
    CHECK_THROWS(parse_news_placement("first"));
}

TEST_CASE("train_lstm fits a constant zero target") {
    auto rows = random_rows(640, 0, 8);
    for (auto& r : rows) r.y = 0.0;
    LstmConfig cfg;
    auto res = train_lstm(rows, {}, cfg);
    REQUIRE(res.curves.train.size() == 30);
    CHECK(res.curves.heldout.empty());
    CHECK(res.curves.train.back() <= 1e-6);
}

TEST_CASE("train_lstm learns an AR(1) signal") {
    auto rows = ar1_rows(400, 0.9, 9);
    std::vector<FeatureRow> train(rows.begin(), rows.begin() + 300), test(rows.begin() + 300, rows.end());
    LstmConfig cfg;
    cfg.hidden = 16;
    auto res = train_lstm(train, test, cfg);
    REQUIRE(res.curves.train.size() == 30);
    REQUIRE(res.curves.heldout.size() == 30);
    INFO("initial " << res.initial_train_mse << " final " << res.curves.train.back());
    CHECK(res.curves.train.back() <= 0.5 * res.initial_train_mse);

    auto again = train_lstm(train, test, cfg);
    CHECK(std::ranges::equal(res.model.params(), again.model.params()));
    CHECK(res.curves.heldout == again.curves.heldout);
}

TEST_CASE("train_lstm errors") {
    LstmConfig cfg;
    CHECK_THROWS(train_lstm({}, {}, cfg));
    auto rows = random_rows(10, 0, 1);
    rows[3].x_price[2] = std::nan("");
    cfg.standardize = false;
    CHECK_THROWS_WITH(train_lstm(rows, {}, cfg), Catch::Matchers::ContainsSubstring("epoch 1 batch 1"));
    auto mixed = random_rows(4, 0, 2);
    mixed.push_back(random_rows(1, 3, 3)[0]);
    CHECK_THROWS_WITH(train_lstm(mixed, {}, LstmConfig{}), Catch::Matchers::ContainsSubstring("non-uniform"));
    LstmConfig zero_epochs;
    zero_epochs.train.epochs = 0;
    CHECK_THROWS(train_lstm(random_rows(4, 0, 2), {}, zero_epochs));
}

TEST_CASE("OLS recovers an exact linear relation") {
    Rng rng(4);
    auto x = oracle::random_matrix(50, 20, rng);
    std::vector<double> y(50);
    for (std::size_t i = 0; i < 50; ++i) y[i] = 2 * x(i, 0) + 1;
    auto m = OlsModel::fit(x, y);
    CHECK(std::abs(m.coefficients()[0] - 2) <= 1e-8);
    for (std::size_t j = 1; j < 20; ++j) CHECK(std::abs(m.coefficients()[j]) <= 1e-8);
    CHECK(std::abs(m.intercept() - 1) <= 1e-8);
}

TEST_CASE("OLS agrees with the normal-equations oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = oracle::random_matrix(60, 8, rng);
        std::vector<double> y(60);
        for (auto& v : y) v = rng.normal();
        auto m = OlsModel::fit(x, y);
        auto ref = oracle::ols_normal_equations(x, y);
        for (std::size_t j = 0; j < 8; ++j) REQUIRE(std::abs(m.coefficients()[j] - ref[j]) <= 1e-8);
        REQUIRE(std::abs(m.intercept() - ref[8]) <= 1e-8);
    }
}

TEST_CASE("KNN") {
    Rng rng(6);
    auto x = oracle::random_matrix(30, 4, rng);
    std::vector<double> y(30);
    for (auto& v : y) v = rng.normal();
    auto one = KnnModel::fit(x, y, 1);
    for (std::size_t i = 0; i < 30; ++i) CHECK(one.predict(x.row(i)) == y[i]);
    auto all = KnnModel::fit(x, y, 30);
    std::vector<double> q{5, 5, 5, 5};
    double mean = oracle::knn_predict(x, y, 30, q);
    CHECK(all.predict(q) == Catch::Approx(std::accumulate(y.begin(), y.end(), 0.0) / 30).epsilon(1e-12));
    CHECK(all.predict(q) == mean);

    // equidistant points: lower index wins
    Matrix tie(3, 1);
    tie(0, 0) = 1;
    tie(1, 0) = -1;
    tie(2, 0) = 1;
    std::vector<double> ty{10, 20, 30};
    auto k1 = KnnModel::fit(tie, ty, 1);
    CHECK(k1.predict(std::vector<double>{0}) == 10);
    CHECK(KnnModel::fit(tie, ty, 2).neighbors(std::vector<double>{0}) == std::vector<std::size_t>{0, 1});
    CHECK_THROWS(KnnModel::fit(tie, ty, 0));
}

TEST_CASE("KNN matches brute-force scan") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 1 + rng.index(200);
        auto x = oracle::random_matrix(n, 3, rng);
        // quantise so distance ties actually occur
        for (auto& v : x.data) v = std::round(v * 2) / 2;
        std::vector<double> y(n);
        for (auto& v : y) v = rng.normal();
        auto m = KnnModel::fit(x, y, 5);
        for (int q = 0; q < 10; ++q) {
            std::vector<double> p{std::round(rng.normal() * 2) / 2, std::round(rng.normal() * 2) / 2, 0.5};
            REQUIRE(m.predict(p) == oracle::knn_predict(x, y, 5, p));
        }
    }
}

TEST_CASE("decision tree matches exhaustive split oracle") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = oracle::random_matrix(20, 3, rng);
        std::vector<double> y(20);
        for (auto& v : y) v = rng.normal();
        TreeConfig cfg{static_cast<std::size_t>(1 + trial % 4), static_cast<std::size_t>(1 + trial % 3), 1.0};
        auto t = TreeModel::fit(x, y, cfg);
        for (std::size_t i = 0; i < 20; ++i) REQUIRE(t.predict(x.row(i)) == oracle::tree_predict(x, y, cfg, x.row(i)));
        for (int q = 0; q < 20; ++q) {
            std::vector<double> p{rng.normal(), rng.normal(), rng.normal()};
            REQUIRE(t.predict(p) == oracle::tree_predict(x, y, cfg, p));
        }
    }
}

TEST_CASE("tree on identical features is a constant predictor") {
    Matrix x(10, 2);
    for (auto& v : x.data) v = 3.0;
    std::vector<double> y{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    auto t = TreeModel::fit(x, y, TreeConfig{8, 1, 1.0});
    CHECK(t.nodes().size() == 1);
    CHECK(t.predict(std::vector<double>{0, 0}) == 5.5);
}

TEST_CASE("random forest") {
    Rng rng(9);
    auto x = oracle::random_matrix(80, 6, rng);
    std::vector<double> y(80);
    for (std::size_t i = 0; i < 80; ++i) y[i] = x(i, 0) - x(i, 2) + 0.1 * rng.normal();
    ForestConfig one;
    one.n_trees = 1;
    auto f1 = ForestModel::fit(x, y, one);
    for (std::size_t i = 0; i < 10; ++i) CHECK(f1.predict(x.row(i)) == f1.trees()[0].predict(x.row(i)));

    ForestConfig cfg;
    cfg.n_trees = 15;
    auto f = ForestModel::fit(x, y, cfg);
    for (std::size_t i = 0; i < 10; ++i) {
        double s = 0;
        for (const auto& t : f.trees()) s += t.predict(x.row(i));
        CHECK(f.predict(x.row(i)) == s / 15.0);
    }
    // trees differ because of bootstrap and feature sampling
    CHECK(f.trees()[0].nodes().size() + f.trees()[1].nodes().size() > 2);
    CHECK(bytes_of(f) == bytes_of(ForestModel::fit(x, y, cfg)));
    cfg.seed = 43;
    CHECK(bytes_of(f) != bytes_of(ForestModel::fit(x, y, cfg)));
}

TEST_CASE("gradient boosting") {
    Rng rng(10);
    auto x = oracle::random_matrix(100, 5, rng);
    std::vector<double> y(100);
    for (std::size_t i = 0; i < 100; ++i) y[i] = std::sin(x(i, 0)) + x(i, 1) * x(i, 2) + 0.1 * rng.normal();
    GbtConfig none;
    none.rounds = 0;
    auto g0 = GbtModel::fit(x, y, none);
    double mean = std::accumulate(y.begin(), y.end(), 0.0) / 100.0;
    CHECK(g0.predict(x.row(3)) == mean);

    auto g = GbtModel::fit(x, y);
    REQUIRE(g.train_mse().size() == 101);
    for (std::size_t k = 1; k < g.train_mse().size(); ++k) REQUIRE(g.train_mse()[k] <= g.train_mse()[k - 1]);
    CHECK(g.train_mse().back() < 0.5 * g.train_mse().front());
    GbtConfig bad;
    bad.shrinkage = 0;
    CHECK_THROWS(GbtModel::fit(x, y, bad));
}

TEST_CASE("fit_model, persistence and determinism for every variant") {
    auto rows = random_rows(60, 3, 11);
    std::vector<FeatureRow> train(rows.begin(), rows.begin() + 50), test(rows.begin() + 50, rows.end());
    for (auto kind : {ModelKind::Lstm, ModelKind::Ols, ModelKind::Knn, ModelKind::Tree, ModelKind::Forest,
                      ModelKind::Gbt}) {
        INFO(to_string(kind));
        ModelConfig cfg;
        cfg.kind = kind;
        cfg.lstm.hidden = 6;
        cfg.lstm.train.epochs = 3;
        cfg.forest.n_trees = 5;
        cfg.gbt.rounds = 10;
        auto a = fit_model(cfg, train, test);
        auto b = fit_model(cfg, train, test);
        CHECK(kind_of(a.model) == kind);
        CHECK(input_dim(a.model) == 23);
        CHECK(bytes_of(a.model) == bytes_of(b.model));
        CHECK(a.curves.train.size() == (kind == ModelKind::Lstm ? 3u : 0u));

        std::stringstream buf(bytes_of(a.model));
        auto back = read_model(buf);
        CHECK(kind_of(back) == kind);
        for (const auto& r : test) CHECK(predict(back, r) == predict(a.model, r));
        CHECK(bytes_of(back) == bytes_of(a.model));

        auto truncated = bytes_of(a.model);
        truncated.pop_back();
        std::stringstream tb(truncated);
        CHECK_THROWS(read_model(tb));
        CHECK_THROWS(predict(a.model, std::vector<double>(22)));
    }
    std::stringstream junk("NOPE1234");
    CHECK_THROWS_WITH(read_model(junk), Catch::Matchers::ContainsSubstring("unknown magic"));
    CHECK(parse_model_kind("gbt") == ModelKind::Gbt);
    CHECK_THROWS(parse_model_kind("xgb"));
}
