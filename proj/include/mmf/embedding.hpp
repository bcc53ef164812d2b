#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <ranges>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmf/binary_io.hpp"
#include "mmf/error.hpp"
#include "mmf/newscorpus.hpp"
#include "mmf/random.hpp"
#include "mmf/text.hpp"

namespace mmf {

using Vector = std::vector<double>;

struct EmbeddingRecord {
    std::string article_id;
    std::string model_id;
    Vector values;

    std::size_t dim() const noexcept { return values.size(); }
};

enum class AggregationMode { Sum, Mean };

inline const char* to_string(AggregationMode m) { return m == AggregationMode::Sum ? "sum" : "mean"; }

inline AggregationMode parse_aggregation(std::string_view s) {
    if (s == "sum") return AggregationMode::Sum;
    if (s == "mean") return AggregationMode::Mean;
    throw Error("unknown aggregation mode '" + std::string(s) + "' (expected sum|mean)");
}

// Read-only map from article id to one or more vectors. An article may own
// several vectors when the encoder split it into context-sized chunks.
class EmbeddingProvider {
public:
    EmbeddingProvider() = default;
    EmbeddingProvider(std::string model_id, std::size_t dim) : model_id_(std::move(model_id)), dim_(dim) {
        if (dim_ == 0) throw Error("embedding dim must be positive");
    }

    void add(EmbeddingRecord rec) {
        if (rec.dim() == 0) throw Error("embedding dim must be positive");
        if (dim_ == 0 && records_.empty()) {
            dim_ = rec.dim();
            if (model_id_.empty()) model_id_ = rec.model_id;
        }
        if (rec.dim() != dim_)
            throw Error("embedding dim mismatch: record '" + rec.article_id + "' has " + std::to_string(rec.dim()) +
                        ", provider has " + std::to_string(dim_));
        if (rec.model_id.empty()) rec.model_id = model_id_;
        if (rec.model_id != model_id_) throw Error("embedding model-id mismatch for '" + rec.article_id + "'");
        for (double v : rec.values)
            if (!std::isfinite(v)) throw Error("non-finite embedding value for '" + rec.article_id + "'");
        by_id_[rec.article_id].push_back(records_.size());
        records_.push_back(std::move(rec));
    }

    const std::string& model_id() const noexcept { return model_id_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return records_.size(); }
    std::size_t article_count() const noexcept { return by_id_.size(); }
    bool contains(std::string_view id) const { return by_id_.count(std::string(id)) != 0; }
    std::span<const EmbeddingRecord> records() const noexcept { return records_; }

    // Every vector belonging to `id`; empty when the id is unknown.
    std::vector<std::span<const double>> lookup(std::string_view id) const {
        std::vector<std::span<const double>> out;
        auto it = by_id_.find(std::string(id));
        if (it == by_id_.end()) return out;
        for (auto i : it->second) out.emplace_back(records_[i].values);
        return out;
    }

    // First vector for `id`; throws when absent.
    std::span<const double> first(std::string_view id) const {
        auto it = by_id_.find(std::string(id));
        if (it == by_id_.end()) throw Error("no embedding for article '" + std::string(id) + "'");
        return records_[it->second.front()].values;
    }

private:
    std::string model_id_;
    std::size_t dim_ = 0;
    std::vector<EmbeddingRecord> records_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_id_;
};

// EMB1 layout, little-endian:
//   "EMB1" | u16 model-id length, bytes | u32 dim | u64 count
//   | count x (u16 id length, bytes, dim x f32) | u32 CRC-32
// The CRC covers every byte between the magic and the CRC itself.
inline void write_embedding_file(std::ostream& out, const EmbeddingProvider& provider) {
    if (provider.dim() == 0) throw Error("cannot write an embedding file without a dimension");
    io::ByteWriter w;
    w.magic("EMB1");
    w.str16(provider.model_id());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(provider.dim()));
    w.put<std::uint64_t>(provider.size());
    for (const auto& r : provider.records()) {
        w.str16(r.article_id);
        for (double v : r.values) w.put<float>(static_cast<float>(v));
    }
    auto crc = io::crc32(std::span(w.bytes()).subspan(4));
    w.put<std::uint32_t>(crc);
    w.write_to(out);
}

inline EmbeddingProvider read_embedding_file(std::istream& in) {
    auto bytes = io::slurp(in);
    io::ByteReader r(bytes);
    r.expect_magic("EMB1", "EMB1 embedding");
    auto model_id = r.str16();
    auto dim = r.get<std::uint32_t>();
    auto count = r.get<std::uint64_t>();
    if (dim == 0) throw Error("embedding file declares dim 0");
    EmbeddingProvider p(model_id, dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        EmbeddingRecord rec{r.str16(), model_id, Vector(dim)};
        for (auto& v : rec.values) v = r.get<float>();
        p.add(std::move(rec));
    }
    if (r.remaining() < 4) throw Error("truncated stream: missing CRC");
    if (r.remaining() > 4)
        throw Error("embedding record size mismatch: " + std::to_string(r.remaining() - 4) +
                    " unexpected bytes (dim mismatch or corrupt file)");
    auto payload_end = r.pos();
    auto stored = r.get<std::uint32_t>();
    auto actual = io::crc32(std::span(bytes).subspan(4, payload_end - 4));
    if (stored != actual) throw Error("embedding file checksum failure");
    return p;
}

inline EmbeddingProvider load_embedding_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return read_embedding_file(in);
    } catch (const Error& e) {
        throw Error(path.filename().string() + ": " + e.what());
    }
}

inline void save_embedding_file(const std::filesystem::path& path, const EmbeddingProvider& provider) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    write_embedding_file(out, provider);
}

inline std::string hash_model_id(std::size_t dim) { return "hash-bow-fnv1a-" + std::to_string(dim); }

// Hashed bag-of-words: each token adds +-1 at fnv1a(token) mod dim (sign
// from the top hash bit); the count vector is L2-normalised.
inline EmbeddingRecord hash_embed(std::string_view text_in, std::size_t dim, std::string article_id = {}) {
    if (dim < 1) throw Error("hash_embed: dim must be at least 1");
    auto tokens = text::tokenize(text_in);
    if (tokens.empty()) throw Error("hash_embed: no tokens in text");
    std::vector<std::int64_t> counts(dim, 0);
    for (const auto& t : tokens) {
        auto h = fnv1a64(t);
        counts[h % dim] += (h >> 63) ? -1 : 1;
    }
    double norm2 = 0;
    for (auto c : counts) norm2 += static_cast<double>(c) * static_cast<double>(c);
    if (norm2 == 0) throw Error("hash_embed: token hashes cancel to a zero vector");
    double inv = 1.0 / std::sqrt(norm2);
    EmbeddingRecord rec{std::move(article_id), hash_model_id(dim), Vector(dim)};
    for (std::size_t i = 0; i < dim; ++i) rec.values[i] = static_cast<double>(counts[i]) * inv;
    return rec;
}

// Text fed to encoders: title and body separated by a newline; the
// "no title" marker is not embedded.
inline std::string embedding_text(const NewsArticle& a) {
    return a.title == kNoTitle ? a.body : a.title + "\n" + a.body;
}

inline EmbeddingProvider hash_embed_corpus(std::span<const NewsArticle> articles, std::size_t dim) {
    EmbeddingProvider p(hash_model_id(dim), dim);
    for (const auto& a : articles) p.add(hash_embed(embedding_text(a), dim, a.id));
    return p;
}

inline Vector zero_vector(std::size_t dim) {
    if (dim < 1) throw Error("zero_vector: dim must be at least 1");
    return Vector(dim, 0.0);
}

// Coordinate-wise Sum or Mean of equal-length vectors. With `l2_normalize`
// each input is scaled to unit length first (off by default).
template <std::ranges::input_range R>
Vector aggregate(const R& vectors, AggregationMode mode, bool l2_normalize = false) {
    Vector out;
    std::size_t n = 0;
    for (const auto& v_ : vectors) {
        std::span<const double> v(v_);
        if (n == 0) out.assign(v.size(), 0.0);
        else if (v.size() != out.size()) throw Error("aggregate: dim mismatch");
        double scale = 1.0;
        if (l2_normalize) {
            double s = 0;
            for (double x : v) s += x * x;
            if (s > 0) scale = 1.0 / std::sqrt(s);
        }
        for (std::size_t i = 0; i < v.size(); ++i) out[i] += v[i] * scale;
        ++n;
    }
    if (n == 0) throw Error("aggregate: empty vector set (use zero_vector for no-news days)");
    if (mode == AggregationMode::Mean)
        for (auto& x : out) x /= static_cast<double>(n);
    return out;
}

} // namespace mmf
