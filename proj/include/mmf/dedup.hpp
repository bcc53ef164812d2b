#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "mmf/adam.hpp"
#include "mmf/binary_io.hpp"
#include "mmf/csv.hpp"
#include "mmf/embedding.hpp"
#include "mmf/error.hpp"
#include "mmf/newscorpus.hpp"
#include "mmf/random.hpp"
#include "mmf/text.hpp"

namespace mmf {

struct LabeledPair {
    std::string id_a;
    std::string id_b;
    bool duplicate = false;
};

// [va || vb]
inline Vector pair_features(std::span<const double> va, std::span<const double> vb) {
    if (va.size() != vb.size()) throw Error("pair_features: dim mismatch");
    Vector x(va.begin(), va.end());
    x.insert(x.end(), vb.begin(), vb.end());
    return x;
}

// Three fully connected layers over concatenated article embeddings:
// 2*dim -> h1 -> h2 -> 1, ReLU hidden activations, sigmoid output.
// Parameters live in one flat vector: for each layer, W (out x in,
// row-major) followed by b (out).
class PairClassifier {
public:
    static constexpr std::uint8_t kReluActivation = 0;

    PairClassifier() = default;

    PairClassifier(std::size_t dim, std::size_t hidden1, std::size_t hidden2, double threshold = 0.5)
        : widths_{2 * dim, hidden1, hidden2, 1}, threshold_(threshold) {
        if (dim == 0 || hidden1 == 0 || hidden2 == 0) throw Error("PairClassifier: zero-width layer");
        check_threshold();
        params_.assign(offset(3), 0.0);
    }

    // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
    void initialize(std::uint64_t seed) {
        Rng rng(seed);
        for (std::size_t l = 0; l < 3; ++l) {
            double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
            for (std::size_t i = offset(l); i < offset(l + 1); ++i) params_[i] = rng.uniform(-bound, bound);
        }
    }

    // Scores every pair with the same probability sigmoid(logit).
    static PairClassifier constant(std::size_t dim, double logit, double threshold = 0.5) {
        PairClassifier c(dim, 1, 1, threshold);
        c.params_[c.offset(3) - 1] = logit;
        return c;
    }

    std::size_t input_width() const noexcept { return widths_[0]; }
    std::size_t embedding_dim() const noexcept { return widths_[0] / 2; }
    const std::array<std::size_t, 4>& widths() const noexcept { return widths_; }
    double threshold() const noexcept { return threshold_; }
    void set_threshold(double t) {
        threshold_ = t;
        check_threshold();
    }

    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }

    double logit(std::span<const double> x) const {
        Activations act;
        return forward(x, act);
    }

    double probability(std::span<const double> va, std::span<const double> vb) const {
        return sigmoid(logit(pair_features(va, vb)));
    }

    bool is_duplicate(std::span<const double> va, std::span<const double> vb) const {
        return probability(va, vb) >= threshold_;
    }

    // Binary cross-entropy of one example; adds dLoss/dparams into `grad`.
    double loss_and_gradient(std::span<const double> x, bool label, std::span<double> grad) const {
        Activations act;
        double z = forward(x, act);
        double y = label ? 1.0 : 0.0;
        double loss = std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
        // backward, from the output layer down
        std::vector<double> delta{sigmoid(z) - y};
        const std::span<const double> inputs[3] = {x, act.h[0], act.h[1]};
        for (std::size_t l = 3; l-- > 0;) {
            const std::size_t in = widths_[l], out = widths_[l + 1];
            const double* W = params_.data() + offset(l);
            double* gW = grad.data() + offset(l);
            double* gb = gW + in * out;
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o];
                gb[o] += d;
                if (d == 0.0) continue;
                for (std::size_t i = 0; i < in; ++i) gW[o * in + i] += d * inputs[l][i];
            }
            if (l == 0) break;
            std::vector<double> prev(in, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o];
                if (d == 0.0) continue;
                for (std::size_t i = 0; i < in; ++i) prev[i] += W[o * in + i] * d;
            }
            for (std::size_t i = 0; i < in; ++i)
                if (act.pre[l - 1][i] <= 0.0) prev[i] = 0.0;
            delta = std::move(prev);
        }
        return loss;
    }

    double loss(std::span<const double> x, bool label) const {
        double z = logit(x);
        double y = label ? 1.0 : 0.0;
        return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
    }

    // DDP1 layout, little-endian: "DDP1" | u8 activation | u32 x 4 widths
    // | f32 threshold | per layer: W (row-major) then b, all f32.
    void save(std::ostream& out) const {
        io::ByteWriter w;
        w.magic("DDP1");
        w.put<std::uint8_t>(kReluActivation);
        for (auto width : widths_) w.put<std::uint32_t>(static_cast<std::uint32_t>(width));
        w.put<float>(static_cast<float>(threshold_));
        for (double p : params_) w.put<float>(static_cast<float>(p));
        w.write_to(out);
    }

    static PairClassifier load(std::istream& in) {
        auto bytes = io::slurp(in);
        io::ByteReader r(bytes);
        r.expect_magic("DDP1", "DDP1 pair classifier");
        if (r.get<std::uint8_t>() != kReluActivation) throw Error("DDP1: unsupported activation");
        std::array<std::size_t, 4> w{};
        for (auto& x : w) x = r.get<std::uint32_t>();
        if (w[0] % 2 != 0 || w[3] != 1) throw Error("DDP1: inconsistent layer shapes");
        PairClassifier c(w[0] / 2, w[1], w[2], r.get<float>());
        for (auto& p : c.params_) p = r.get<float>();
        if (r.remaining() != 0) throw Error("DDP1: trailing bytes");
        return c;
    }

private:
    struct Activations {
        std::vector<double> pre[2];
        std::vector<double> h[2];
    };

    static double sigmoid(double z) {
        return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }

    void check_threshold() const {
        if (!(threshold_ > 0.0 && threshold_ < 1.0)) throw Error("PairClassifier: threshold must be in (0,1)");
    }

    std::size_t offset(std::size_t layer) const {
        std::size_t off = 0;
        for (std::size_t l = 0; l < layer; ++l) off += widths_[l + 1] * (widths_[l] + 1);
        return off;
    }

    double forward(std::span<const double> x, Activations& act) const {
        if (x.size() != widths_[0]) throw Error("PairClassifier: input width mismatch");
        std::span<const double> in = x;
        for (std::size_t l = 0; l < 3; ++l) {
            const std::size_t n_in = widths_[l], n_out = widths_[l + 1];
            const double* W = params_.data() + offset(l);
            const double* b = W + n_in * n_out;
            std::vector<double> z(n_out);
            for (std::size_t o = 0; o < n_out; ++o) {
                double s = b[o];
                const double* row = W + o * n_in;
                for (std::size_t i = 0; i < n_in; ++i) s += row[i] * in[i];
                z[o] = s;
            }
            if (l == 2) return z[0];
            act.pre[l] = z;
            act.h[l].resize(n_out);
            for (std::size_t o = 0; o < n_out; ++o) act.h[l][o] = std::max(z[o], 0.0);
            in = act.h[l];
        }
        return 0.0;
    }

    std::array<std::size_t, 4> widths_{};
    double threshold_ = 0.5;
    std::vector<double> params_;
};

struct DedupTrainConfig {
    std::size_t hidden1 = 256;
    std::size_t hidden2 = 64;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double threshold = 0.5;
    std::uint64_t seed = 42;
};

struct DedupTrainResult {
    PairClassifier classifier;
    std::vector<double> epoch_loss;  // mean BCE over the training set after each epoch
    double train_accuracy = 0;
};

// Mini-batch Adam on binary cross-entropy. Both orientations of each pair
// are used so the classifier sees (a, b) and (b, a).
inline DedupTrainResult train_pair_classifier(std::span<const LabeledPair> pairs, const EmbeddingProvider& provider,
                                              const DedupTrainConfig& cfg) {
    if (pairs.empty()) throw Error("train_pair_classifier: empty pair set");
    bool has_dup = false, has_distinct = false;
    for (const auto& p : pairs) (p.duplicate ? has_dup : has_distinct) = true;
    if (!has_dup || !has_distinct) throw Error("train_pair_classifier: training set must contain both classes");
    if (cfg.batch_size == 0 || cfg.epochs == 0) throw Error("train_pair_classifier: epochs and batch size must be positive");

    std::vector<Vector> xs;
    std::vector<bool> ys;
    for (const auto& p : pairs) {
        if (!provider.contains(p.id_a)) throw Error("train_pair_classifier: unresolvable id '" + p.id_a + "'");
        if (!provider.contains(p.id_b)) throw Error("train_pair_classifier: unresolvable id '" + p.id_b + "'");
        auto a = provider.first(p.id_a), b = provider.first(p.id_b);
        xs.push_back(pair_features(a, b));
        ys.push_back(p.duplicate);
        xs.push_back(pair_features(b, a));
        ys.push_back(p.duplicate);
    }

    DedupTrainResult res;
    res.classifier = PairClassifier(provider.dim(), cfg.hidden1, cfg.hidden2, cfg.threshold);
    auto& clf = res.classifier;
    clf.initialize(derive_seed(cfg.seed, 0));
    Rng rng(derive_seed(cfg.seed, 1));
    Adam adam(clf.params().size(), {cfg.learning_rate});
    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> grad(clf.params().size());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t k = start; k < end; ++k) clf.loss_and_gradient(xs[order[k]], ys[order[k]], grad);
            double inv = 1.0 / static_cast<double>(end - start);
            for (double& g : grad) g *= inv;
            adam.step(clf.params(), grad);
        }
        double total = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) total += clf.loss(xs[i], ys[i]);
        double mean = total / static_cast<double>(xs.size());
        if (!std::isfinite(mean)) throw Error("train_pair_classifier: loss diverged at epoch " + std::to_string(epoch + 1));
        res.epoch_loss.push_back(mean);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        correct += ((1.0 / (1.0 + std::exp(-clf.logit(xs[i]))) >= clf.threshold()) == ys[i]);
    res.train_accuracy = static_cast<double>(correct) / static_cast<double>(xs.size());
    return res;
}

inline constexpr std::chrono::hours kDefaultDedupWindow{72};

// One-shot scan in arrival order: an article is dropped when it scores as a
// duplicate of any already-retained article published within `window`
// before it. Bitwise-identical embeddings always count as duplicates.
// Each article is represented by its first embedding vector.
inline std::vector<std::string> filter_duplicates(std::span<const TimedId> items, const EmbeddingProvider& provider,
                                                  const PairClassifier& clf,
                                                  std::chrono::seconds window = kDefaultDedupWindow) {
    struct Kept {
        Timestamp at;
        std::span<const double> v;
    };
    std::vector<Kept> kept;
    std::vector<std::string> out;
    std::size_t lo = 0;  // first retained article still inside the window
    for (const auto& item : items) {
        auto v = provider.first(item.id);
        while (lo < kept.size() && kept[lo].at < item.at - window) ++lo;
        bool dup = false;
        for (std::size_t k = lo; k < kept.size() && !dup; ++k) {
            if (kept[k].at > item.at) continue;
            dup = std::equal(v.begin(), v.end(), kept[k].v.begin(), kept[k].v.end()) ||
                  clf.is_duplicate(kept[k].v, v);
        }
        if (dup) continue;
        kept.push_back({item.at, v});
        out.push_back(item.id);
    }
    return out;
}

// CSV `id_a,id_b,label`; label is 1/0, true/false or duplicate/distinct.
inline std::vector<LabeledPair> parse_labeled_pairs(std::istream& in) {
    csv::Reader reader(in);
    std::vector<LabeledPair> out;
    bool header = true;
    while (auto rec = reader.next()) {
        if (header) {
            header = false;
            if (rec->size() == 3 && (*rec)[0] == "id_a") continue;
        }
        if (rec->size() != 3) throw ParseError("expected id_a,id_b,label", reader.line());
        const auto& l = (*rec)[2];
        bool dup;
        if (l == "1" || l == "true" || l == "duplicate") dup = true;
        else if (l == "0" || l == "false" || l == "distinct") dup = false;
        else throw ParseError("bad label '" + l + "'", reader.line());
        if ((*rec)[0] == (*rec)[1]) throw ParseError("pair references the same id twice", reader.line());
        out.push_back({(*rec)[0], (*rec)[1], dup});
    }
    return out;
}

inline void write_labeled_pairs(std::ostream& out, std::span<const LabeledPair> pairs) {
    out << "id_a,id_b,label\n";
    for (const auto& p : pairs) out << csv::quote(p.id_a) << ',' << csv::quote(p.id_b) << ',' << (p.duplicate ? 1 : 0) << '\n';
}

// Synthetic rewrites for classifier training: a test fixture, not a
// linguistic model. Variant 0 shuffles body tokens, variant 1 also drops
// ~`dropout` of them, variant 2 moves the title into the body before
// shuffling and dropping.
struct ParaphraseConfig {
    std::size_t variants = 3;
    double dropout = 0.1;
};

inline NewsArticle paraphrase(const NewsArticle& a, std::size_t variant, double dropout, Rng& rng) {
    std::vector<std::string> toks = text::tokenize(a.body);
    NewsArticle p = a;
    p.id = a.id + "#p" + std::to_string(variant);
    if (variant % 3 == 2 && a.title != kNoTitle) {
        auto t = text::tokenize(a.title);
        toks.insert(toks.end(), t.begin(), t.end());
        p.title = toks.empty() ? std::string(kNoTitle) : toks.front();
    }
    rng.shuffle(toks.begin(), toks.end());
    if (variant % 3 != 0 && toks.size() > 1) {
        std::vector<std::string> kept;
        for (auto& t : toks)
            if (rng.uniform() >= dropout) kept.push_back(std::move(t));
        if (!kept.empty()) toks = std::move(kept);
    }
    p.body.clear();
    for (const auto& t : toks) {
        if (!p.body.empty()) p.body.push_back(' ');
        p.body += t;
    }
    if (p.body.empty()) p.body = a.body;
    return p;
}

struct SyntheticPairs {
    std::vector<NewsArticle> paraphrases;
    std::vector<LabeledPair> pairs;
};

// For each original: `variants` paraphrases and as many duplicate pairs,
// plus an equal number of distinct pairs against other originals or their
// paraphrases.
inline SyntheticPairs make_synthetic_pairs(std::span<const NewsArticle> originals, const ParaphraseConfig& cfg,
                                           std::uint64_t seed) {
    if (originals.size() < 2) throw Error("make_synthetic_pairs: need at least two articles");
    Rng rng(seed);
    SyntheticPairs out;
    for (const auto& a : originals)
        for (std::size_t v = 0; v < cfg.variants; ++v) out.paraphrases.push_back(paraphrase(a, v, cfg.dropout, rng));
    for (std::size_t i = 0; i < originals.size(); ++i) {
        for (std::size_t v = 0; v < cfg.variants; ++v) {
            out.pairs.push_back({originals[i].id, out.paraphrases[i * cfg.variants + v].id, true});
            std::size_t j = rng.index(originals.size() - 1);
            if (j >= i) ++j;
            const std::string& other = rng.uniform() < 0.5 ? originals[j].id
                                                           : out.paraphrases[j * cfg.variants + rng.index(cfg.variants)].id;
            out.pairs.push_back({originals[i].id, other, false});
        }
    }
    return out;
}

// Dedup compares body text only.
inline EmbeddingProvider hash_embed_bodies(std::span<const NewsArticle> articles, std::size_t dim) {
    EmbeddingProvider p(hash_model_id(dim), dim);
    for (const auto& a : articles) p.add(hash_embed(a.body, dim, a.id));
    return p;
}

inline void save_classifier(const std::filesystem::path& path, const PairClassifier& clf) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    clf.save(out);
}

inline PairClassifier load_classifier(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return PairClassifier::load(in);
}

} // namespace mmf
