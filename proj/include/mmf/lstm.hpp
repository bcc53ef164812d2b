#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mmf/adam.hpp"
#include "mmf/binary_io.hpp"
#include "mmf/error.hpp"
#include "mmf/features.hpp"
#include "mmf/random.hpp"

namespace mmf {

enum class NewsPlacement : std::uint8_t { Last = 0, All = 1 };

inline const char* to_string(NewsPlacement p) { return p == NewsPlacement::Last ? "last" : "all"; }

inline NewsPlacement parse_news_placement(std::string_view s) {
    if (s == "last") return NewsPlacement::Last;
    if (s == "all") return NewsPlacement::All;
    throw Error("unknown news placement '" + std::string(s) + "' (expected last|all)");
}

// A feature row is read as `steps` time steps of `fields` price returns
// (x_price is field-major, so step t of field f sits at f * steps + t),
// with the news vector appended to the input of the final step or of every
// step.
struct LstmShape {
    std::size_t steps = 5;
    std::size_t fields = 4;
    std::size_t news_dim = 0;
    std::size_t hidden = 64;
    NewsPlacement news_at = NewsPlacement::Last;

    std::size_t input_dim() const noexcept { return fields + news_dim; }
    std::size_t feature_width() const noexcept { return steps * fields + news_dim; }
    bool news_active(std::size_t t) const noexcept {
        return news_dim > 0 && (news_at == NewsPlacement::All || t + 1 == steps);
    }
    bool operator==(const LstmShape&) const = default;
};

// Affine maps applied before the network: each price field is shifted and
// scaled (shared across steps), and the network output is mapped back to
// return units. Identity by default.
struct Standardizer {
    std::vector<double> field_mean, field_scale;
    double y_mean = 0, y_scale = 1;

    static Standardizer identity(std::size_t fields) {
        return {std::vector<double>(fields, 0.0), std::vector<double>(fields, 1.0), 0.0, 1.0};
    }
};

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 42;
    double clip_norm = 1.0;

    void validate() const {
        if (epochs < 1) throw Error("train config: epochs must be at least 1");
        if (batch_size < 1) throw Error("train config: batch size must be at least 1");
        if (!(learning_rate > 0)) throw Error("train config: learning rate must be positive");
    }
};

struct LstmConfig {
    std::size_t hidden = 64;
    NewsPlacement news_at = NewsPlacement::Last;
    bool standardize = true;
    TrainConfig train{};
};

// Single-layer LSTM with an affine head on the last hidden state.
// Gate rows are stacked input, forget, cell candidate, output. Parameters
// live in one flat vector: W (4H x I), U (4H x H), b (4H), head v (H), c.
class LstmModel {
public:
    enum Gate : std::size_t { InputGate = 0, ForgetGate = 1, CellGate = 2, OutputGate = 3 };

    LstmModel() = default;

    explicit LstmModel(LstmShape shape) : shape_(shape), scaler_(Standardizer::identity(shape.fields)) {
        if (shape.steps == 0 || shape.fields == 0 || shape.hidden == 0) throw Error("LstmModel: zero-sized shape");
        params_.assign(param_count(), 0.0);
    }

    // uniform(-1/sqrt(H), 1/sqrt(H)) everywhere, forget-gate bias +1
    void initialize(std::uint64_t seed) {
        Rng rng(seed);
        const double bound = 1.0 / std::sqrt(static_cast<double>(shape_.hidden));
        for (auto& p : params_) p = rng.uniform(-bound, bound);
        for (std::size_t j = 0; j < shape_.hidden; ++j) params_[b_offset() + ForgetGate * shape_.hidden + j] = 1.0;
    }

    const LstmShape& shape() const noexcept { return shape_; }
    const Standardizer& scaler() const noexcept { return scaler_; }
    void set_scaler(Standardizer s) {
        if (s.field_mean.size() != shape_.fields || s.field_scale.size() != shape_.fields)
            throw Error("LstmModel: standardizer width mismatch");
        scaler_ = std::move(s);
    }

    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }

    std::size_t param_count() const noexcept {
        const std::size_t h = shape_.hidden;
        return 4 * h * shape_.input_dim() + 4 * h * h + 4 * h + h + 1;
    }
    std::size_t w_offset() const noexcept { return 0; }
    std::size_t u_offset() const noexcept { return 4 * shape_.hidden * shape_.input_dim(); }
    std::size_t b_offset() const noexcept { return u_offset() + 4 * shape_.hidden * shape_.hidden; }
    std::size_t v_offset() const noexcept { return b_offset() + 4 * shape_.hidden; }
    std::size_t c_offset() const noexcept { return v_offset() + shape_.hidden; }

    double w(Gate g, std::size_t unit, std::size_t col) const {
        return params_[w_offset() + (g * shape_.hidden + unit) * shape_.input_dim() + col];
    }
    double u(Gate g, std::size_t unit, std::size_t col) const {
        return params_[u_offset() + (g * shape_.hidden + unit) * shape_.hidden + col];
    }
    double b(Gate g, std::size_t unit) const { return params_[b_offset() + g * shape_.hidden + unit]; }
    double v(std::size_t unit) const { return params_[v_offset() + unit]; }
    double c() const { return params_[c_offset()]; }

    // Predicted return for a feature vector [x_price || x_news].
    double predict(std::span<const double> x) const {
        check_width(x.size());
        Trace tr;
        return scaler_.y_scale * forward(x, tr) + scaler_.y_mean;
    }

    double predict(const FeatureRow& row) const { return predict(row.features()); }

    // Mean squared error in standardized target units over `rows`; this is
    // the training objective.
    double loss(std::span<const FeatureRow> rows) const {
        if (rows.empty()) throw Error("LstmModel::loss: no rows");
        double s = 0;
        Trace tr;
        for (const auto& r : rows) {
            auto x = r.features();
            check_width(x.size());
            double e = forward(x, tr) - target(r.y);
            s += e * e;
        }
        return s / static_cast<double>(rows.size());
    }

    // Same objective; adds its gradient to `grad` and returns the loss.
    double loss_and_gradient(std::span<const FeatureRow> rows, std::span<double> grad) const {
        if (rows.empty()) throw Error("LstmModel::loss_and_gradient: no rows");
        if (grad.size() != params_.size()) throw Error("LstmModel: gradient size mismatch");
        const double inv_n = 1.0 / static_cast<double>(rows.size());
        double s = 0;
        Trace tr;
        for (const auto& r : rows) {
            auto x = r.features();
            check_width(x.size());
            double e = forward(x, tr) - target(r.y);
            s += e * e;
            backward(tr, 2.0 * e * inv_n, grad);
        }
        return s * inv_n;
    }

    // MSE in return units.
    double mse(std::span<const FeatureRow> rows) const {
        if (rows.empty()) throw Error("LstmModel::mse: no rows");
        double s = 0;
        for (const auto& r : rows) {
            double e = predict(r) - r.y;
            s += e * e;
        }
        return s / static_cast<double>(rows.size());
    }

    // "LSTM" | u16 version | u32 steps, fields, news dim, hidden | u8 news
    // placement | f64 standardizer (fields means, fields scales, y mean,
    // y scale) | u64 parameter count | f64 parameters
    void save(std::ostream& out) const {
        io::ByteWriter wr;
        wr.magic(kMagic);
        wr.put<std::uint16_t>(kVersion);
        wr.put<std::uint32_t>(static_cast<std::uint32_t>(shape_.steps));
        wr.put<std::uint32_t>(static_cast<std::uint32_t>(shape_.fields));
        wr.put<std::uint32_t>(static_cast<std::uint32_t>(shape_.news_dim));
        wr.put<std::uint32_t>(static_cast<std::uint32_t>(shape_.hidden));
        wr.put<std::uint8_t>(static_cast<std::uint8_t>(shape_.news_at));
        for (double m : scaler_.field_mean) wr.put<double>(m);
        for (double s : scaler_.field_scale) wr.put<double>(s);
        wr.put<double>(scaler_.y_mean);
        wr.put<double>(scaler_.y_scale);
        wr.put<std::uint64_t>(params_.size());
        for (double p : params_) wr.put<double>(p);
        wr.write_to(out);
    }

    static LstmModel read(io::ByteReader& rd) {
        rd.expect_magic(kMagic, "LSTM model");
        if (auto ver = rd.get<std::uint16_t>(); ver != kVersion)
            throw Error("LSTM model: unsupported version " + std::to_string(ver));
        LstmShape shape;
        shape.steps = rd.get<std::uint32_t>();
        shape.fields = rd.get<std::uint32_t>();
        shape.news_dim = rd.get<std::uint32_t>();
        shape.hidden = rd.get<std::uint32_t>();
        auto placement = rd.get<std::uint8_t>();
        if (placement > 1) throw Error("LSTM model: bad news placement");
        shape.news_at = static_cast<NewsPlacement>(placement);
        LstmModel m(shape);
        Standardizer s = Standardizer::identity(shape.fields);
        for (auto& x : s.field_mean) x = rd.get<double>();
        for (auto& x : s.field_scale) x = rd.get<double>();
        s.y_mean = rd.get<double>();
        s.y_scale = rd.get<double>();
        m.scaler_ = std::move(s);
        if (rd.get<std::uint64_t>() != m.params_.size()) throw Error("LSTM model: parameter count mismatch");
        for (auto& p : m.params_) p = rd.get<double>();
        return m;
    }

    static constexpr const char* kMagic = "LSTM";
    static constexpr std::uint16_t kVersion = 1;

private:
    // Per-step activations kept for backpropagation.
    struct Trace {
        std::vector<double> x;      // steps x input_dim (standardized; news only where active)
        std::vector<double> gates;  // steps x 4H, post-activation
        std::vector<double> cell;   // (steps + 1) x H, cell[0] = 0
        std::vector<double> hid;    // (steps + 1) x H, hid[0] = 0
    };

    double target(double y) const { return (y - scaler_.y_mean) / scaler_.y_scale; }

    void check_width(std::size_t n) const {
        if (n != shape_.feature_width())
            throw Error("LstmModel: feature width " + std::to_string(n) + ", expected " +
                        std::to_string(shape_.feature_width()));
    }

    static double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

    double forward(std::span<const double> x, Trace& tr) const {
        const std::size_t T = shape_.steps, F = shape_.fields, I = shape_.input_dim(), H = shape_.hidden;
        tr.x.assign(T * I, 0.0);
        tr.gates.assign(T * 4 * H, 0.0);
        tr.cell.assign((T + 1) * H, 0.0);
        tr.hid.assign((T + 1) * H, 0.0);
        const double* W = params_.data() + w_offset();
        const double* U = params_.data() + u_offset();
        const double* B = params_.data() + b_offset();
        std::vector<double> z(4 * H);
        for (std::size_t t = 0; t < T; ++t) {
            double* xt = tr.x.data() + t * I;
            for (std::size_t f = 0; f < F; ++f) xt[f] = (x[f * T + t] - scaler_.field_mean[f]) / scaler_.field_scale[f];
            const bool news = shape_.news_active(t);
            if (news) std::copy(x.begin() + static_cast<long>(T * F), x.end(), xt + F);
            const std::size_t cols = news ? I : F;
            const double* hp = tr.hid.data() + t * H;
            for (std::size_t r = 0; r < 4 * H; ++r) {
                double s = B[r];
                const double* wr = W + r * I;
                for (std::size_t k = 0; k < cols; ++k) s += wr[k] * xt[k];
                const double* ur = U + r * H;
                for (std::size_t k = 0; k < H; ++k) s += ur[k] * hp[k];
                z[r] = s;
            }
            double* g = tr.gates.data() + t * 4 * H;
            const double* cp = tr.cell.data() + t * H;
            double* cn = tr.cell.data() + (t + 1) * H;
            double* hn = tr.hid.data() + (t + 1) * H;
            for (std::size_t j = 0; j < H; ++j) {
                const double ig = sigmoid(z[j]);
                const double fg = sigmoid(z[H + j]);
                const double cg = std::tanh(z[2 * H + j]);
                const double og = sigmoid(z[3 * H + j]);
                g[j] = ig;
                g[H + j] = fg;
                g[2 * H + j] = cg;
                g[3 * H + j] = og;
                cn[j] = fg * cp[j] + ig * cg;
                hn[j] = og * std::tanh(cn[j]);
            }
        }
        const double* hT = tr.hid.data() + T * H;
        double out = params_[c_offset()];
        for (std::size_t j = 0; j < H; ++j) out += params_[v_offset() + j] * hT[j];
        return out;
    }

    // Backpropagation through time from d(loss)/d(output) = dout.
    void backward(const Trace& tr, double dout, std::span<double> grad) const {
        const std::size_t T = shape_.steps, F = shape_.fields, I = shape_.input_dim(), H = shape_.hidden;
        const double* U = params_.data() + u_offset();
        double* gW = grad.data() + w_offset();
        double* gU = grad.data() + u_offset();
        double* gB = grad.data() + b_offset();
        double* gV = grad.data() + v_offset();
        const double* hT = tr.hid.data() + T * H;
        grad[c_offset()] += dout;
        std::vector<double> dh(H), dc(H, 0.0), dz(4 * H);
        for (std::size_t j = 0; j < H; ++j) {
            gV[j] += dout * hT[j];
            dh[j] = dout * params_[v_offset() + j];
        }
        for (std::size_t t = T; t-- > 0;) {
            const double* g = tr.gates.data() + t * 4 * H;
            const double* cp = tr.cell.data() + t * H;
            const double* cn = tr.cell.data() + (t + 1) * H;
            for (std::size_t j = 0; j < H; ++j) {
                const double ig = g[j], fg = g[H + j], cg = g[2 * H + j], og = g[3 * H + j];
                const double tc = std::tanh(cn[j]);
                const double dcj = dc[j] + dh[j] * og * (1.0 - tc * tc);
                dz[j] = dcj * cg * ig * (1.0 - ig);
                dz[H + j] = dcj * cp[j] * fg * (1.0 - fg);
                dz[2 * H + j] = dcj * ig * (1.0 - cg * cg);
                dz[3 * H + j] = dh[j] * tc * og * (1.0 - og);
                dc[j] = dcj * fg;
            }
            const double* xt = tr.x.data() + t * I;
            const double* hp = tr.hid.data() + t * H;
            const std::size_t cols = shape_.news_active(t) ? I : F;
            std::fill(dh.begin(), dh.end(), 0.0);
            for (std::size_t r = 0; r < 4 * H; ++r) {
                const double d = dz[r];
                gB[r] += d;
                double* gw = gW + r * I;
                for (std::size_t k = 0; k < cols; ++k) gw[k] += d * xt[k];
                double* gu = gU + r * H;
                const double* ur = U + r * H;
                for (std::size_t k = 0; k < H; ++k) {
                    gu[k] += d * hp[k];
                    dh[k] += d * ur[k];
                }
            }
        }
    }

    LstmShape shape_{};
    Standardizer scaler_{};
    std::vector<double> params_;
};

// Mean/std per price field (pooled over steps) and of the target, taken
// from the training rows; near-constant columns keep unit scale.
inline Standardizer fit_standardizer(std::span<const FeatureRow> rows, const LstmShape& shape) {
    Standardizer s = Standardizer::identity(shape.fields);
    auto finish = [](double sum, double sq, double n, double& mean, double& scale) {
        mean = sum / n;
        double var = std::max(0.0, sq / n - mean * mean);
        scale = var > 1e-24 ? std::sqrt(var) : 1.0;
    };
    for (std::size_t f = 0; f < shape.fields; ++f) {
        double sum = 0, sq = 0;
        for (const auto& r : rows)
            for (std::size_t t = 0; t < shape.steps; ++t) {
                double x = r.x_price[f * shape.steps + t];
                sum += x;
                sq += x * x;
            }
        finish(sum, sq, static_cast<double>(rows.size() * shape.steps), s.field_mean[f], s.field_scale[f]);
    }
    double sum = 0, sq = 0;
    for (const auto& r : rows) {
        sum += r.y;
        sq += r.y * r.y;
    }
    finish(sum, sq, static_cast<double>(rows.size()), s.y_mean, s.y_scale);
    return s;
}

// Infers the shape implied by a set of rows (all must agree).
inline LstmShape shape_for_rows(std::span<const FeatureRow> rows, std::size_t hidden, NewsPlacement news_at,
                                std::size_t fields = 4) {
    if (rows.empty()) throw Error("no feature rows");
    const auto& r0 = rows.front();
    if (r0.x_price.empty() || r0.x_price.size() % fields != 0)
        throw Error("price feature width " + std::to_string(r0.x_price.size()) + " is not a multiple of " +
                    std::to_string(fields));
    LstmShape shape;
    shape.steps = r0.x_price.size() / fields;
    shape.fields = fields;
    shape.news_dim = r0.x_news ? r0.x_news->size() : 0;
    shape.hidden = hidden;
    shape.news_at = news_at;
    for (const auto& r : rows)
        if (r.x_price.size() != r0.x_price.size() || (r.x_news ? r.x_news->size() : 0) != shape.news_dim ||
            r.x_news.has_value() != r0.x_news.has_value())
            throw Error("feature rows have non-uniform widths");
    return shape;
}

struct LossCurves {
    std::vector<double> train;    // per epoch, return units
    std::vector<double> heldout;  // per epoch; empty without held-out rows
};

struct LstmTrainResult {
    LstmModel model;
    double initial_train_mse = 0;
    LossCurves curves;
};

// Mini-batch Adam with backpropagation through time and gradient-norm
// clipping. Rows are reshuffled each epoch from the seeded stream.
inline LstmTrainResult train_lstm(std::span<const FeatureRow> train, std::span<const FeatureRow> heldout,
                                  const LstmConfig& cfg) {
    if (train.empty()) throw Error("train_lstm: no training rows");
    cfg.train.validate();
    LstmShape shape = shape_for_rows(train, cfg.hidden, cfg.news_at);
    if (!heldout.empty() && shape_for_rows(heldout, cfg.hidden, cfg.news_at) != shape)
        throw Error("train_lstm: held-out rows differ in width from training rows");
    LstmTrainResult res;
    res.model = LstmModel(shape);
    res.model.initialize(derive_seed(cfg.train.seed, 1));
    if (cfg.standardize) res.model.set_scaler(fit_standardizer(train, shape));
    res.initial_train_mse = res.model.mse(train);

    Rng rng(derive_seed(cfg.train.seed, 2));
    Adam adam(res.model.params().size(), AdamConfig{cfg.train.learning_rate});
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad(res.model.params().size());
    std::vector<FeatureRow> batch;
    for (std::size_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.train.batch_size) {
            ++batch_no;
            const std::size_t end = std::min(order.size(), start + cfg.train.batch_size);
            batch.clear();
            for (std::size_t k = start; k < end; ++k) batch.push_back(train[order[k]]);
            std::fill(grad.begin(), grad.end(), 0.0);
            double l = res.model.loss_and_gradient(batch, grad);
            if (!std::isfinite(l))
                throw Error("train_lstm: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(batch_no));
            clip_by_norm(grad, cfg.train.clip_norm);
            adam.step(res.model.params(), grad);
        }
        res.curves.train.push_back(res.model.mse(train));
        if (!heldout.empty()) res.curves.heldout.push_back(res.model.mse(heldout));
    }
    return res;
}

} // namespace mmf
