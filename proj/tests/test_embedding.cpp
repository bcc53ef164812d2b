#include <catch_amalgamated.hpp>

#include <sstream>

#include "mmf/embedding.hpp"

using namespace mmf;

namespace {

EmbeddingRecord random_record(Rng& rng, std::string id, std::size_t dim, std::string model = "test-model") {
    EmbeddingRecord r{std::move(id), std::move(model), Vector(dim)};
    // f32-representable values so the roundtrip is bit-exact
    for (auto& v : r.values) v = static_cast<float>(rng.normal());
    return r;
}

std::string to_bytes(const EmbeddingProvider& p) {
    std::ostringstream out(std::ios::binary);
    write_embedding_file(out, p);
    return out.str();
}

} // namespace

TEST_CASE("embedding file roundtrip") {
    Rng rng(1);
    EmbeddingProvider p("test-model", 768);
    p.add(random_record(rng, "a", 768));
    p.add(random_record(rng, "b", 768));
    p.add(random_record(rng, "b", 768));  // split article: two chunks
    auto bytes = to_bytes(p);
    std::istringstream in(bytes, std::ios::binary);
    auto q = read_embedding_file(in);
    CHECK(q.size() == 3);
    CHECK(q.article_count() == 2);
    CHECK(q.dim() == 768);
    CHECK(q.model_id() == "test-model");
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(q.records()[i].article_id == p.records()[i].article_id);
        CHECK(q.records()[i].values == p.records()[i].values);
    }
    CHECK(q.lookup("b").size() == 2);
    CHECK(q.lookup("zzz").empty());
    CHECK(to_bytes(q) == bytes);
}

TEST_CASE("embedding file layout") {
    EmbeddingProvider p("m", 2);
    p.add({"x", "m", {1.0, -2.0}});
    auto b = to_bytes(p);
    // magic + (2+1) + 4 + 8 + (2+1 + 2*4) + crc
    REQUIRE(b.size() == 4 + 3 + 4 + 8 + 11 + 4);
    CHECK(b.substr(0, 4) == "EMB1");
    CHECK(static_cast<unsigned char>(b[7]) == 2);  // dim, little-endian
}

TEST_CASE("embedding file errors") {
    Rng rng(2);
    EmbeddingProvider p("m", 8);
    p.add(random_record(rng, "a", 8, "m"));
    p.add(random_record(rng, "b", 8, "m"));
    auto good = to_bytes(p);

    SECTION("dim mismatch across records") {
        EmbeddingProvider q("m", 768);
        q.add(random_record(rng, "a", 768, "m"));
        CHECK_THROWS_WITH(q.add(random_record(rng, "b", 896, "m")), Catch::Matchers::ContainsSubstring("dim mismatch"));

        // a header declaring 768 with a trailing 896-wide record
        io::ByteWriter w;
        w.magic("EMB1");
        w.str16("m");
        w.put<std::uint32_t>(768);
        w.put<std::uint64_t>(2);
        w.str16("a");
        for (int i = 0; i < 768; ++i) w.put<float>(0.5f);
        w.str16("b");
        for (int i = 0; i < 896; ++i) w.put<float>(0.5f);
        w.put<std::uint32_t>(io::crc32(std::span(w.bytes()).subspan(4)));
        std::string s(w.bytes().begin(), w.bytes().end());
        std::istringstream in(s);
        CHECK_THROWS_WITH(read_embedding_file(in), Catch::Matchers::ContainsSubstring("dim mismatch"));
    }
    SECTION("truncated") {
        std::istringstream in(good.substr(0, good.size() - 10));
        CHECK_THROWS_WITH(read_embedding_file(in), Catch::Matchers::ContainsSubstring("truncated"));
    }
    SECTION("checksum") {
        auto bad = good;
        bad[bad.size() - 8] ^= 0x01;  // inside the last record's floats
        std::istringstream in(bad);
        CHECK_THROWS_WITH(read_embedding_file(in), Catch::Matchers::ContainsSubstring("checksum"));
    }
    SECTION("magic") {
        auto bad = good;
        bad[0] = 'X';
        std::istringstream in(bad);
        CHECK_THROWS_WITH(read_embedding_file(in), Catch::Matchers::ContainsSubstring("magic"));
    }
}

TEST_CASE("hash_embed") {
    auto a = hash_embed("Сбербанк повысил дивиденды на 20 процентов", 64);
    auto b = hash_embed("Сбербанк повысил дивиденды на 20 процентов", 64);
    CHECK(a.values == b.values);
    auto c = hash_embed("процентов 20 на дивиденды повысил Сбербанк", 64);
    CHECK(a.values == c.values);
    CHECK(a.model_id == hash_model_id(64));
    CHECK_THROWS(hash_embed("!! ? a", 16));
    CHECK_THROWS(hash_embed("text", 0));

    Rng rng(9);
    for (int t = 0; t < 200; ++t) {
        std::string s;
        for (std::size_t w = 0, n = 1 + rng.index(40); w < n; ++w) s += "w" + std::to_string(rng.index(1000)) + " ";
        std::size_t dim = 1 + rng.index(900);
        Vector v;
        try {
            v = hash_embed(s, dim).values;
        } catch (const Error&) {
            continue;  // all hashes cancelled (only plausible for tiny dims)
        }
        double n2 = 0;
        for (double x : v) n2 += x * x;
        REQUIRE(std::abs(std::sqrt(n2) - 1.0) < 1e-9);
    }
}

TEST_CASE("hash_embed pins platform-independent values") {
    // fnv1a64("ab") = 0x089c4407b545986a -> coordinate 0x6a % 8 = 2, sign +
    auto r = hash_embed("ab", 8);
    CHECK(r.values[2] == 1.0);
    CHECK(fnv1a64("ab") == 0x089c4407b545986aull);
}

TEST_CASE("aggregate and zero_vector") {
    std::vector<Vector> v{{1, 2}, {3, 4}};
    CHECK(aggregate(v, AggregationMode::Sum) == Vector{4, 6});
    CHECK(aggregate(v, AggregationMode::Mean) == Vector{2, 3});
    std::vector<Vector> one{{5, -1}};
    CHECK(aggregate(one, AggregationMode::Sum) == Vector{5, -1});
    CHECK(aggregate(one, AggregationMode::Mean) == Vector{5, -1});

    CHECK(zero_vector(768) == Vector(768, 0.0));
    CHECK(zero_vector(896).size() == 896);
    CHECK_THROWS(zero_vector(0));

    std::vector<Vector> with_zero{zero_vector(2), {3, 4}};
    CHECK(aggregate(with_zero, AggregationMode::Sum) == Vector{3, 4});

    std::vector<Vector> empty;
    CHECK_THROWS(aggregate(empty, AggregationMode::Sum));
    std::vector<Vector> bad{{1}, {1, 2}};
    CHECK_THROWS(aggregate(bad, AggregationMode::Mean));

    std::vector<Vector> to_norm{{3, 4}, {0, 2}};
    auto n = aggregate(to_norm, AggregationMode::Sum, true);
    CHECK(n[0] == Catch::Approx(0.6));
    CHECK(n[1] == Catch::Approx(1.8));
}

TEST_CASE("aggregation identities hold on random sets") {
    Rng rng(11);
    for (int t = 0; t < 1000; ++t) {
        std::size_t n = 1 + rng.index(12), dim = 1 + rng.index(16);
        std::vector<Vector> vs(n, Vector(dim));
        for (auto& v : vs)
            for (auto& x : v) x = rng.normal();
        auto sum = aggregate(vs, AggregationMode::Sum);
        auto mean = aggregate(vs, AggregationMode::Mean);
        auto shuffled = vs;
        rng.shuffle(shuffled.begin(), shuffled.end());
        auto sum2 = aggregate(shuffled, AggregationMode::Sum);
        auto mean2 = aggregate(shuffled, AggregationMode::Mean);
        for (std::size_t i = 0; i < dim; ++i) {
            REQUIRE(std::abs(mean[i] - sum[i] / static_cast<double>(n)) <= 1e-12);
            REQUIRE(std::abs(sum[i] - sum2[i]) <= 1e-12);
            REQUIRE(std::abs(mean[i] - mean2[i]) <= 1e-12);
        }
    }
}
