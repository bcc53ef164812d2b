#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mmf/binary_io.hpp"
#include "mmf/error.hpp"
#include "mmf/features.hpp"
#include "mmf/random.hpp"

namespace mmf {

// Dense row-major design matrix.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
};

struct Dataset {
    Matrix x;
    std::vector<double> y;
};

inline Dataset to_dataset(std::span<const FeatureRow> rows) {
    if (rows.empty()) throw Error("no feature rows");
    const std::size_t p = rows.front().width();
    Dataset d{Matrix(rows.size(), p), std::vector<double>(rows.size())};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].width() != p) throw Error("feature rows have non-uniform widths");
        auto f = rows[i].features();
        std::copy(f.begin(), f.end(), d.x.data.begin() + static_cast<long>(i * p));
        d.y[i] = rows[i].y;
    }
    return d;
}

namespace detail {

inline void check_fit_input(const Matrix& x, std::span<const double> y) {
    if (x.rows == 0) throw Error("cannot fit on an empty dataset");
    if (y.size() != x.rows) throw Error("target length does not match the design matrix");
    if (x.cols == 0) throw Error("design matrix has no columns");
}

inline void check_width(std::size_t got, std::size_t want, const char* model) {
    if (got != want)
        throw Error(std::string(model) + ": feature width " + std::to_string(got) + ", expected " +
                    std::to_string(want));
}

inline void write_header(io::ByteWriter& w, const char* magic, std::uint16_t version) {
    w.magic(magic);
    w.put<std::uint16_t>(version);
}

inline void read_header(io::ByteReader& r, const char* magic, std::uint16_t version, const char* what) {
    r.expect_magic(magic, what);
    if (auto v = r.get<std::uint16_t>(); v != version)
        throw Error(std::string(what) + ": unsupported version " + std::to_string(v));
}

} // namespace detail

// ---------------------------------------------------------------- OLS

// Least squares with an intercept, solved from the normal equations with a
// small ridge on the slope coefficients.
class OlsModel {
public:
    static constexpr double kRidge = 1e-8;
    static constexpr const char* kMagic = "OLS1";
    static constexpr std::uint16_t kVersion = 1;

    static OlsModel fit(const Matrix& x, std::span<const double> y, double ridge = kRidge) {
        detail::check_fit_input(x, y);
        const auto n = static_cast<Eigen::Index>(x.rows);
        const auto p = static_cast<Eigen::Index>(x.cols);
        Eigen::MatrixXd a(n, p + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < p; ++j) a(i, j) = x(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            a(i, p) = 1.0;
        }
        Eigen::Map<const Eigen::VectorXd> b(y.data(), n);
        Eigen::MatrixXd gram = a.transpose() * a;
        for (Eigen::Index j = 0; j < p; ++j) gram(j, j) += ridge;
        Eigen::VectorXd sol = gram.ldlt().solve(a.transpose() * b);
        if (!sol.allFinite()) throw Error("OLS: normal equations are singular");
        OlsModel m;
        m.coef_.assign(sol.data(), sol.data() + p);
        m.intercept_ = sol(p);
        return m;
    }

    std::size_t input_dim() const noexcept { return coef_.size(); }
    const std::vector<double>& coefficients() const noexcept { return coef_; }
    double intercept() const noexcept { return intercept_; }

    double predict(std::span<const double> x) const {
        detail::check_width(x.size(), coef_.size(), "OLS");
        double s = intercept_;
        for (std::size_t j = 0; j < coef_.size(); ++j) s += coef_[j] * x[j];
        return s;
    }

    void save(io::ByteWriter& w) const {
        detail::write_header(w, kMagic, kVersion);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(coef_.size()));
        w.put<double>(intercept_);
        for (double c : coef_) w.put<double>(c);
    }

    static OlsModel read(io::ByteReader& r) {
        detail::read_header(r, kMagic, kVersion, "OLS model");
        OlsModel m;
        m.coef_.resize(r.get<std::uint32_t>());
        m.intercept_ = r.get<double>();
        for (auto& c : m.coef_) c = r.get<double>();
        return m;
    }

private:
    std::vector<double> coef_;
    double intercept_ = 0;
};

// ---------------------------------------------------------------- KNN

// Uniform-weight k-nearest-neighbour regression under Euclidean distance;
// equal distances are resolved in favour of the lower training index.
class KnnModel {
public:
    static constexpr const char* kMagic = "KNN1";
    static constexpr std::uint16_t kVersion = 1;

    static KnnModel fit(const Matrix& x, std::span<const double> y, std::size_t k = 5) {
        detail::check_fit_input(x, y);
        if (k < 1) throw Error("KNN: k must be at least 1");
        KnnModel m;
        m.x_ = x;
        m.y_.assign(y.begin(), y.end());
        m.k_ = k;
        return m;
    }

    std::size_t input_dim() const noexcept { return x_.cols; }
    std::size_t k() const noexcept { return k_; }

    // Training indices of the neighbours of x, nearest first.
    std::vector<std::size_t> neighbors(std::span<const double> x) const {
        detail::check_width(x.size(), x_.cols, "KNN");
        std::vector<std::pair<double, std::size_t>> d(x_.rows);
        for (std::size_t i = 0; i < x_.rows; ++i) {
            auto r = x_.row(i);
            double s = 0;
            for (std::size_t j = 0; j < x_.cols; ++j) {
                double e = r[j] - x[j];
                s += e * e;
            }
            d[i] = {s, i};
        }
        const std::size_t k = std::min(k_, d.size());
        std::partial_sort(d.begin(), d.begin() + static_cast<long>(k), d.end());
        std::vector<std::size_t> out(k);
        for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
        return out;
    }

    double predict(std::span<const double> x) const {
        auto nb = neighbors(x);
        double s = 0;
        for (auto i : nb) s += y_[i];
        return s / static_cast<double>(nb.size());
    }

    void save(io::ByteWriter& w) const {
        detail::write_header(w, kMagic, kVersion);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(k_));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(x_.cols));
        w.put<std::uint64_t>(x_.rows);
        for (double v : x_.data) w.put<double>(v);
        for (double v : y_) w.put<double>(v);
    }

    static KnnModel read(io::ByteReader& r) {
        detail::read_header(r, kMagic, kVersion, "KNN model");
        KnnModel m;
        m.k_ = r.get<std::uint32_t>();
        const std::size_t cols = r.get<std::uint32_t>();
        const std::size_t rows = r.get<std::uint64_t>();
        if (rows > r.remaining() / 8) throw Error("KNN model: truncated stream");
        m.x_ = Matrix(rows, cols);
        for (auto& v : m.x_.data) v = r.get<double>();
        m.y_.resize(rows);
        for (auto& v : m.y_) v = r.get<double>();
        return m;
    }

private:
    Matrix x_;
    std::vector<double> y_;
    std::size_t k_ = 5;
};

// ---------------------------------------------------------------- trees

struct TreeConfig {
    std::size_t max_depth = 8;
    std::size_t min_leaf = 5;
    double feature_fraction = 1.0;  // share of features examined at each split
};

struct TreeNode {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0;       // x[feature] <= threshold goes left
    std::uint32_t left = 0, right = 0;
    double value = 0;           // mean target of the training rows reaching the node
};

// CART regression tree grown greedily by variance reduction. Candidate
// thresholds are midpoints between consecutive distinct values; among equal
// gains the lower feature index, then the lower threshold, wins.
class TreeModel {
public:
    static constexpr const char* kMagic = "TREE";
    static constexpr std::uint16_t kVersion = 1;

    static TreeModel fit(const Matrix& x, std::span<const double> y, const TreeConfig& cfg = {},
                         std::uint64_t seed = 0) {
        detail::check_fit_input(x, y);
        std::vector<std::size_t> idx(x.rows);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        return fit_sample(x, y, idx, cfg, seed);
    }

    // Fits on the multiset of row indices `sample` (bootstrap draws may
    // repeat rows).
    static TreeModel fit_sample(const Matrix& x, std::span<const double> y, std::vector<std::size_t> sample,
                                const TreeConfig& cfg, std::uint64_t seed) {
        detail::check_fit_input(x, y);
        if (sample.empty()) throw Error("tree: empty sample");
        if (cfg.min_leaf < 1) throw Error("tree: min leaf must be at least 1");
        if (!(cfg.feature_fraction > 0 && cfg.feature_fraction <= 1))
            throw Error("tree: feature fraction must be in (0, 1]");
        std::sort(sample.begin(), sample.end());
        TreeModel t;
        t.n_features_ = x.cols;
        Builder b{x, y, cfg, Rng(seed), t.nodes_};
        b.grow(sample, 0);
        return t;
    }

    std::size_t input_dim() const noexcept { return n_features_; }
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

    double predict(std::span<const double> x) const {
        detail::check_width(x.size(), n_features_, "tree");
        std::size_t i = 0;
        while (nodes_[i].feature >= 0)
            i = x[static_cast<std::size_t>(nodes_[i].feature)] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
        return nodes_[i].value;
    }

    void save(io::ByteWriter& w) const {
        detail::write_header(w, kMagic, kVersion);
        write_body(w);
    }

    static TreeModel read(io::ByteReader& r) {
        detail::read_header(r, kMagic, kVersion, "tree model");
        return read_body(r);
    }

    void write_body(io::ByteWriter& w) const {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(n_features_));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(nodes_.size()));
        for (const auto& n : nodes_) {
            w.put<std::int32_t>(n.feature);
            w.put<double>(n.threshold);
            w.put<std::uint32_t>(n.left);
            w.put<std::uint32_t>(n.right);
            w.put<double>(n.value);
        }
    }

    static TreeModel read_body(io::ByteReader& r) {
        TreeModel t;
        t.n_features_ = r.get<std::uint32_t>();
        const std::size_t count = r.get<std::uint32_t>();
        if (count == 0) throw Error("tree model: no nodes");
        for (std::size_t i = 0; i < count; ++i) {
            TreeNode n;
            n.feature = r.get<std::int32_t>();
            n.threshold = r.get<double>();
            n.left = r.get<std::uint32_t>();
            n.right = r.get<std::uint32_t>();
            n.value = r.get<double>();
            if (n.feature >= 0 && (static_cast<std::size_t>(n.feature) >= t.n_features_ || n.left <= i ||
                                   n.right <= i || n.left >= count || n.right >= count))
                throw Error("tree model: corrupt node " + std::to_string(i));
            t.nodes_.push_back(n);
        }
        return t;
    }

private:
    struct Builder {
        const Matrix& x;
        std::span<const double> y;
        const TreeConfig& cfg;
        Rng rng;
        std::vector<TreeNode>& nodes;

        // `idx` is sorted ascending so node means sum rows in index order.
        std::uint32_t grow(const std::vector<std::size_t>& idx, std::size_t depth) {
            const auto id = static_cast<std::uint32_t>(nodes.size());
            nodes.emplace_back();
            double sum = 0;
            for (auto i : idx) sum += y[i];
            const double n = static_cast<double>(idx.size());
            nodes[id].value = sum / n;
            if (depth >= cfg.max_depth || idx.size() < 2 * cfg.min_leaf) return id;
            bool constant = true;
            for (auto i : idx) constant = constant && y[i] == y[idx.front()];
            if (constant) return id;

            const double parent = sum * sum / n;
            // Gains closer than `tol` count as ties, so partitions that are
            // identical up to summation order resolve to the earlier candidate.
            double sq = 0;
            for (auto i : idx) sq += y[i] * y[i];
            const double tol = 1e-12 * sq;
            double best_gain = tol;
            std::int32_t best_feature = -1;
            double best_threshold = 0;
            std::vector<std::size_t> order;
            for (auto f : candidate_features()) {
                order = idx;
                std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    double xa = x(a, f), xb = x(b, f);
                    return xa < xb || (xa == xb && a < b);
                });
                double left = 0;
                for (std::size_t k = 0; k + 1 < order.size(); ++k) {
                    left += y[order[k]];
                    const std::size_t nl = k + 1, nr = order.size() - nl;
                    const double lo = x(order[k], f), hi = x(order[k + 1], f);
                    if (lo == hi || nl < cfg.min_leaf || nr < cfg.min_leaf) continue;
                    const double right = sum - left;
                    const double gain = left * left / static_cast<double>(nl) +
                                        right * right / static_cast<double>(nr) - parent;
                    if (gain > best_gain + (best_feature < 0 ? 0.0 : tol)) {
                        best_gain = gain;
                        best_feature = static_cast<std::int32_t>(f);
                        double mid = lo + (hi - lo) / 2;
                        best_threshold = mid < hi ? mid : lo;
                    }
                }
            }
            if (best_feature < 0) return id;

            std::vector<std::size_t> li, ri;
            for (auto i : idx)
                (x(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? li : ri).push_back(i);
            nodes[id].feature = best_feature;
            nodes[id].threshold = best_threshold;
            const auto l = grow(li, depth + 1);
            const auto r = grow(ri, depth + 1);
            nodes[id].left = l;
            nodes[id].right = r;
            return id;
        }

        // All features, or a seeded subset (ascending) when subsampling.
        std::vector<std::size_t> candidate_features() {
            std::vector<std::size_t> all(x.cols);
            std::iota(all.begin(), all.end(), std::size_t{0});
            if (cfg.feature_fraction >= 1.0) return all;
            auto m = static_cast<std::size_t>(std::lround(cfg.feature_fraction * static_cast<double>(x.cols)));
            m = std::clamp<std::size_t>(m, 1, x.cols);
            for (std::size_t i = 0; i < m; ++i) std::swap(all[i], all[i + rng.index(x.cols - i)]);
            all.resize(m);
            std::sort(all.begin(), all.end());
            return all;
        }
    };

    std::vector<TreeNode> nodes_;
    std::size_t n_features_ = 0;
};

// ---------------------------------------------------------------- forest

struct ForestConfig {
    std::size_t n_trees = 100;
    TreeConfig tree{8, 5, 1.0 / 3.0};
    std::uint64_t seed = 42;
};

// Bagged trees over bootstrap resamples with per-split feature subsampling;
// the prediction is the plain mean of the trees.
class ForestModel {
public:
    static constexpr const char* kMagic = "RF01";
    static constexpr std::uint16_t kVersion = 1;

    static ForestModel fit(const Matrix& x, std::span<const double> y, const ForestConfig& cfg = {}) {
        detail::check_fit_input(x, y);
        if (cfg.n_trees < 1) throw Error("random forest: at least one tree required");
        ForestModel m;
        m.n_features_ = x.cols;
        for (std::size_t t = 0; t < cfg.n_trees; ++t) {
            Rng rng(derive_seed(cfg.seed, 2 * t));
            std::vector<std::size_t> sample(x.rows);
            for (auto& s : sample) s = rng.index(x.rows);
            m.trees_.push_back(TreeModel::fit_sample(x, y, std::move(sample), cfg.tree, derive_seed(cfg.seed, 2 * t + 1)));
        }
        return m;
    }

    std::size_t input_dim() const noexcept { return n_features_; }
    const std::vector<TreeModel>& trees() const noexcept { return trees_; }

    double predict(std::span<const double> x) const {
        detail::check_width(x.size(), n_features_, "random forest");
        double s = 0;
        for (const auto& t : trees_) s += t.predict(x);
        return s / static_cast<double>(trees_.size());
    }

    void save(io::ByteWriter& w) const {
        detail::write_header(w, kMagic, kVersion);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(n_features_));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(trees_.size()));
        for (const auto& t : trees_) t.write_body(w);
    }

    static ForestModel read(io::ByteReader& r) {
        detail::read_header(r, kMagic, kVersion, "random forest model");
        ForestModel m;
        m.n_features_ = r.get<std::uint32_t>();
        const std::size_t n = r.get<std::uint32_t>();
        if (n == 0) throw Error("random forest model: no trees");
        for (std::size_t i = 0; i < n; ++i) {
            m.trees_.push_back(TreeModel::read_body(r));
            if (m.trees_.back().input_dim() != m.n_features_) throw Error("random forest model: tree width mismatch");
        }
        return m;
    }

private:
    std::vector<TreeModel> trees_;
    std::size_t n_features_ = 0;
};

// ---------------------------------------------------------------- boosting

struct GbtConfig {
    std::size_t rounds = 100;
    double shrinkage = 0.1;
    TreeConfig tree{3, 1, 1.0};
};

// Gradient boosting for squared loss: start from the target mean and add
// shrunken trees fitted to the current residuals.
class GbtModel {
public:
    static constexpr const char* kMagic = "GBT1";
    static constexpr std::uint16_t kVersion = 1;

    static GbtModel fit(const Matrix& x, std::span<const double> y, const GbtConfig& cfg = {}) {
        detail::check_fit_input(x, y);
        if (!(cfg.shrinkage > 0 && cfg.shrinkage <= 1)) throw Error("GBT: shrinkage must be in (0, 1]");
        GbtModel m;
        m.n_features_ = x.cols;
        m.shrinkage_ = cfg.shrinkage;
        m.base_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
        std::vector<double> f(y.size(), m.base_), resid(y.size());
        m.train_mse_.push_back(mse_of(f, y));
        for (std::size_t round = 0; round < cfg.rounds; ++round) {
            for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - f[i];
            auto t = TreeModel::fit(x, resid, cfg.tree);
            for (std::size_t i = 0; i < y.size(); ++i) f[i] += m.shrinkage_ * t.predict(x.row(i));
            m.trees_.push_back(std::move(t));
            m.train_mse_.push_back(mse_of(f, y));
        }
        return m;
    }

    std::size_t input_dim() const noexcept { return n_features_; }
    double base() const noexcept { return base_; }
    std::size_t rounds() const noexcept { return trees_.size(); }
    // Training MSE before any round and after each round.
    const std::vector<double>& train_mse() const noexcept { return train_mse_; }

    double predict(std::span<const double> x) const {
        detail::check_width(x.size(), n_features_, "GBT");
        double s = base_;
        for (const auto& t : trees_) s += shrinkage_ * t.predict(x);
        return s;
    }

    void save(io::ByteWriter& w) const {
        detail::write_header(w, kMagic, kVersion);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(n_features_));
        w.put<double>(base_);
        w.put<double>(shrinkage_);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(trees_.size()));
        for (const auto& t : trees_) t.write_body(w);
    }

    static GbtModel read(io::ByteReader& r) {
        detail::read_header(r, kMagic, kVersion, "GBT model");
        GbtModel m;
        m.n_features_ = r.get<std::uint32_t>();
        m.base_ = r.get<double>();
        m.shrinkage_ = r.get<double>();
        const std::size_t n = r.get<std::uint32_t>();
        for (std::size_t i = 0; i < n; ++i) m.trees_.push_back(TreeModel::read_body(r));
        return m;
    }

private:
    static double mse_of(std::span<const double> f, std::span<const double> y) {
        double s = 0;
        for (std::size_t i = 0; i < y.size(); ++i) s += (f[i] - y[i]) * (f[i] - y[i]);
        return s / static_cast<double>(y.size());
    }

    std::vector<TreeModel> trees_;
    std::vector<double> train_mse_;
    double base_ = 0, shrinkage_ = 0.1;
    std::size_t n_features_ = 0;
};

} // namespace mmf
