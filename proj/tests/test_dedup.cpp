#include <catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "mmf/dedup.hpp"
#include "mmf/synthetic.hpp"

using namespace mmf;

TEST_CASE("pair_features concatenates in order") {
    Vector a{1, 2}, b{3, 4};
    CHECK(pair_features(a, b) == Vector{1, 2, 3, 4});
    CHECK(pair_features(zero_vector(3), zero_vector(3)) == Vector(6, 0.0));
    CHECK(pair_features(a, b) != pair_features(b, a));
    CHECK_THROWS(pair_features(a, Vector{1}));
}

TEST_CASE("classifier gradient matches finite differences") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        PairClassifier clf(3, 5, 4);
        clf.initialize(100 + trial);
        Vector x(6);
        for (auto& v : x) v = rng.normal();
        bool label = rng.uniform() < 0.5;
        std::vector<double> analytic(clf.params().size(), 0.0);
        clf.loss_and_gradient(x, label, analytic);
        auto numeric = testing::numeric_gradient(clf.params(), [&] { return clf.loss(x, label); });
        REQUIRE(testing::max_relative_error(analytic, numeric) < 1e-4);
    }
}

TEST_CASE("classifier persistence") {
    PairClassifier clf(4, 6, 3, 0.7);
    clf.initialize(5);
    std::stringstream buf;
    clf.save(buf);
    auto back = PairClassifier::load(buf);
    CHECK(back.widths() == clf.widths());
    CHECK(back.threshold() == Catch::Approx(0.7));
    for (std::size_t i = 0; i < clf.params().size(); ++i)
        CHECK(back.params()[i] == static_cast<double>(static_cast<float>(clf.params()[i])));
    std::stringstream bad("DDPX");
    CHECK_THROWS(PairClassifier::load(bad));
    CHECK_THROWS(PairClassifier(4, 6, 3, 1.0));
}

TEST_CASE("labeled pairs CSV") {
    std::istringstream in("id_a,id_b,label\na,b,1\nc,d,distinct\n");
    auto pairs = parse_labeled_pairs(in);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].duplicate);
    CHECK_FALSE(pairs[1].duplicate);
    std::istringstream same("a,a,1\n");
    CHECK_THROWS(parse_labeled_pairs(same));
}

TEST_CASE("train_pair_classifier errors") {
    EmbeddingProvider p("m", 2);
    p.add({"a", "m", {1, 0}});
    p.add({"b", "m", {0, 1}});
    DedupTrainConfig cfg;
    CHECK_THROWS(train_pair_classifier(std::vector<LabeledPair>{}, p, cfg));
    std::vector<LabeledPair> one_class{{"a", "b", true}};
    CHECK_THROWS_WITH(train_pair_classifier(one_class, p, cfg), Catch::Matchers::ContainsSubstring("both classes"));
    std::vector<LabeledPair> unknown{{"a", "zz", true}, {"a", "b", false}};
    CHECK_THROWS_WITH(train_pair_classifier(unknown, p, cfg), Catch::Matchers::ContainsSubstring("unresolvable"));
}

TEST_CASE("identical-text duplicates are separable and training is deterministic") {
    auto vocab = synthetic::make_vocabulary(500, 1);
    auto originals = synthetic::random_articles(80, vocab, Timestamp{make_date(2024, 1, 1)}, std::chrono::hours{1}, 2);
    // token-shuffled copies hash to identical vectors
    ParaphraseConfig pc{1, 0.0};
    auto syn = make_synthetic_pairs(originals, pc, 3);
    std::vector<NewsArticle> all = originals;
    all.insert(all.end(), syn.paraphrases.begin(), syn.paraphrases.end());
    auto provider = hash_embed_bodies(all, 32);
    for (const auto& p : syn.pairs)
        if (p.duplicate) REQUIRE(std::ranges::equal(provider.first(p.id_a), provider.first(p.id_b)));

    DedupTrainConfig cfg;
    cfg.hidden1 = 64;
    cfg.hidden2 = 16;
    cfg.epochs = 40;
    auto a = train_pair_classifier(syn.pairs, provider, cfg);
    CHECK(a.train_accuracy >= 0.95);

    std::size_t upticks = 0;
    for (std::size_t e = 1; e < a.epoch_loss.size(); ++e) upticks += a.epoch_loss[e] > a.epoch_loss[e - 1];
    CHECK(static_cast<double>(upticks) <= 0.05 * static_cast<double>(a.epoch_loss.size() - 1) + 1e-9);

    auto b = train_pair_classifier(syn.pairs, provider, cfg);
    CHECK(std::ranges::equal(a.classifier.params(), b.classifier.params()));
}

TEST_CASE("filter_duplicates") {
    auto t0 = Timestamp{make_date(2024, 1, 1)};
    SECTION("three identical texts keep the earliest") {
        std::vector<NewsArticle> arts;
        for (int i = 0; i < 3; ++i) {
            NewsArticle a;
            a.id = "n" + std::to_string(i);
            a.published_at = t0 + std::chrono::hours{i};
            a.body = "Газпром объявил дивиденды за год";
            arts.push_back(a);
        }
        auto provider = hash_embed_bodies(arts, 16);
        std::vector<TimedId> items;
        for (const auto& a : arts) items.push_back({a.id, a.published_at});
        auto clf = PairClassifier::constant(16, -20.0);
        CHECK(filter_duplicates(items, provider, clf) == std::vector<std::string>{"n0"});
    }
    SECTION("unrelated texts with an always-distinct classifier") {
        auto vocab = synthetic::make_vocabulary(300, 4);
        auto arts = synthetic::random_articles(30, vocab, t0, std::chrono::minutes{20}, 5);
        auto provider = hash_embed_bodies(arts, 32);
        std::vector<TimedId> items;
        for (const auto& a : arts) items.push_back({a.id, a.published_at});
        auto kept = filter_duplicates(items, provider, PairClassifier::constant(32, -20.0));
        CHECK(kept.size() == arts.size());
        // and everything after the first collapses under an always-duplicate classifier
        auto one = filter_duplicates(items, provider, PairClassifier::constant(32, 20.0));
        CHECK(one == std::vector<std::string>{arts[0].id});
    }
    SECTION("comparison window is trailing three days") {
        std::vector<NewsArticle> arts(2);
        arts[0].id = "old";
        arts[0].published_at = t0;
        arts[0].body = "same words here";
        arts[1].id = "new";
        arts[1].published_at = t0 + std::chrono::hours{73};
        arts[1].body = "same words here";
        auto provider = hash_embed_bodies(arts, 16);
        std::vector<TimedId> items{{"old", arts[0].published_at}, {"new", arts[1].published_at}};
        CHECK(filter_duplicates(items, provider, PairClassifier::constant(16, 20.0)).size() == 2);
        items[1].at = t0 + std::chrono::hours{71};
        CHECK(filter_duplicates(items, provider, PairClassifier::constant(16, 20.0)).size() == 1);
    }
}

TEST_CASE("filter_duplicates output is an order-preserving subsequence") {
    auto vocab = synthetic::make_vocabulary(200, 8);
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        auto c = synthetic::planted_dedup_corpus(15, vocab, 50 + trial, 0.1, std::chrono::hours{3});
        auto provider = hash_embed_bodies(c.articles, 32);
        std::vector<TimedId> items;
        for (const auto& a : c.articles) items.push_back({a.id, a.published_at});
        PairClassifier clf(32, 8, 4);
        clf.initialize(trial);
        auto kept = filter_duplicates(items, provider, clf);
        std::size_t pos = 0;
        for (const auto& id : kept) {
            while (pos < items.size() && items[pos].id != id) ++pos;
            REQUIRE(pos < items.size());
        }
        REQUIRE(kept.front() == items.front().id);
    }
}

TEST_CASE("paraphrase generator") {
    Rng rng(1);
    NewsArticle a;
    a.id = "x";
    a.title = "Мечел отчет";
    a.body = "one two three four five six seven eight nine ten";
    auto p0 = paraphrase(a, 0, 0.1, rng);
    CHECK(p0.id == "x#p0");
    auto t0 = text::tokenize(p0.body), t = text::tokenize(a.body);
    std::multiset<std::string> m0(t0.begin(), t0.end()), m(t.begin(), t.end());
    CHECK(m0 == m);
    auto p2 = paraphrase(a, 2, 0.0, rng);
    CHECK_THAT(p2.body, Catch::Matchers::ContainsSubstring("мечел"));
}

TEST_CASE("planted corpus: trained classifier retains the originals") {
    auto vocab = synthetic::make_vocabulary(2000, 77);
    auto train_articles = synthetic::random_articles(300, vocab, Timestamp{make_date(2023, 1, 1)}, std::chrono::hours{1}, 78);
    auto syn = make_synthetic_pairs(train_articles, ParaphraseConfig{}, 79);
    std::vector<NewsArticle> all = train_articles;
    all.insert(all.end(), syn.paraphrases.begin(), syn.paraphrases.end());
    const std::size_t dim = 128;
    auto train_provider = hash_embed_bodies(all, dim);
    DedupTrainConfig cfg;
    cfg.epochs = 15;
    auto res = train_pair_classifier(syn.pairs, train_provider, cfg);
    INFO("train accuracy " << res.train_accuracy);

    auto planted = synthetic::planted_dedup_corpus(50, vocab, 80);
    auto provider = hash_embed_bodies(planted.articles, dim);
    std::vector<TimedId> items;
    for (const auto& a : planted.articles) items.push_back({a.id, a.published_at});
    auto kept = filter_duplicates(items, provider, res.classifier);
    INFO("retained " << kept.size());
    CHECK(kept.size() >= 45);
    CHECK(kept.size() <= 55);
}
