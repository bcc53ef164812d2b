#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mmf/baselines.hpp"
#include "mmf/binary_io.hpp"
#include "mmf/error.hpp"
#include "mmf/features.hpp"
#include "mmf/lstm.hpp"

namespace mmf {

enum class ModelKind { Lstm, Ols, Knn, Tree, Forest, Gbt };

inline const char* to_string(ModelKind k) {
    switch (k) {
    case ModelKind::Lstm: return "lstm";
    case ModelKind::Ols: return "ols";
    case ModelKind::Knn: return "knn";
    case ModelKind::Tree: return "dt";
    case ModelKind::Forest: return "rf";
    case ModelKind::Gbt: return "gbt";
    }
    return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
    for (auto k : {ModelKind::Lstm, ModelKind::Ols, ModelKind::Knn, ModelKind::Tree, ModelKind::Forest, ModelKind::Gbt})
        if (s == to_string(k)) return k;
    throw Error("unknown model '" + std::string(s) + "' (expected lstm|ols|knn|dt|rf|gbt)");
}

struct ModelConfig {
    ModelKind kind = ModelKind::Lstm;
    LstmConfig lstm{};
    std::size_t knn_k = 5;
    TreeConfig tree{};
    ForestConfig forest{};
    GbtConfig gbt{};
    double ols_ridge = OlsModel::kRidge;

    // Points every seeded component at `seed`.
    void set_seed(std::uint64_t seed) {
        lstm.train.seed = seed;
        forest.seed = seed;
    }
};

using Model = std::variant<LstmModel, OlsModel, KnnModel, TreeModel, ForestModel, GbtModel>;

inline ModelKind kind_of(const Model& m) { return static_cast<ModelKind>(m.index()); }

inline std::size_t input_dim(const Model& m) {
    return std::visit(
        [](const auto& x) -> std::size_t {
            if constexpr (std::is_same_v<std::decay_t<decltype(x)>, LstmModel>) return x.shape().feature_width();
            else return x.input_dim();
        },
        m);
}

inline double predict(const Model& m, std::span<const double> x) {
    return std::visit([&](const auto& v) { return v.predict(x); }, m);
}

inline double predict(const Model& m, const FeatureRow& row) { return predict(m, row.features()); }

inline std::vector<double> predict(const Model& m, std::span<const FeatureRow> rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(predict(m, r));
    return out;
}

struct FitResult {
    Model model;
    LossCurves curves;  // per-epoch MSE; only iterative models fill it
};

// Trains the configured variant on `train`; `heldout` only feeds the
// per-epoch held-out loss curve.
inline FitResult fit_model(const ModelConfig& cfg, std::span<const FeatureRow> train,
                           std::span<const FeatureRow> heldout = {}) {
    if (train.empty()) throw Error("fit_model: no training rows");
    if (cfg.kind == ModelKind::Lstm) {
        auto r = train_lstm(train, heldout, cfg.lstm);
        return {std::move(r.model), std::move(r.curves)};
    }
    auto d = to_dataset(train);
    switch (cfg.kind) {
    case ModelKind::Ols: return {OlsModel::fit(d.x, d.y, cfg.ols_ridge), {}};
    case ModelKind::Knn: return {KnnModel::fit(d.x, d.y, cfg.knn_k), {}};
    case ModelKind::Tree: return {TreeModel::fit(d.x, d.y, cfg.tree), {}};
    case ModelKind::Forest: return {ForestModel::fit(d.x, d.y, cfg.forest), {}};
    case ModelKind::Gbt: return {GbtModel::fit(d.x, d.y, cfg.gbt), {}};
    default: break;
    }
    throw Error("fit_model: unsupported model");
}

inline void write_model(std::ostream& out, const Model& m) {
    if (const auto* lstm = std::get_if<LstmModel>(&m)) {
        lstm->save(out);
        return;
    }
    io::ByteWriter w;
    std::visit(
        [&](const auto& v) {
            if constexpr (!std::is_same_v<std::decay_t<decltype(v)>, LstmModel>) v.save(w);
        },
        m);
    w.write_to(out);
}

inline Model read_model(std::istream& in) {
    auto bytes = io::slurp(in);
    if (bytes.size() < 4) throw Error("model file: truncated stream");
    std::string magic(bytes.begin(), bytes.begin() + 4);
    io::ByteReader r(bytes);
    Model m = [&]() -> Model {
        if (magic == LstmModel::kMagic) return LstmModel::read(r);
        if (magic == OlsModel::kMagic) return OlsModel::read(r);
        if (magic == KnnModel::kMagic) return KnnModel::read(r);
        if (magic == TreeModel::kMagic) return TreeModel::read(r);
        if (magic == ForestModel::kMagic) return ForestModel::read(r);
        if (magic == GbtModel::kMagic) return GbtModel::read(r);
        throw Error("model file: unknown magic '" + magic + "'");
    }();
    if (r.remaining() != 0) throw Error("model file: trailing bytes");
    return m;
}

inline void save_model(const std::filesystem::path& path, const Model& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    write_model(out, m);
}

inline Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return read_model(in);
}

} // namespace mmf
