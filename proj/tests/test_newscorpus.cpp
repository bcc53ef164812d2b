#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "mmf/newscorpus.hpp"
#include "mmf/random.hpp"

using namespace mmf;
using Catch::Approx;

namespace {

NewsArticle article(std::string id, std::string ts, std::string title, std::string body,
                    std::vector<std::string> tags = {}) {
    NewsArticle a;
    a.id = std::move(id);
    a.published_at = parse_timestamp(ts);
    a.source = "RDV";
    a.title = std::move(title);
    a.body = std::move(body);
    a.tags = std::move(tags);
    return a;
}

} // namespace

TEST_CASE("tokenizer lowercases Latin and Cyrillic and drops short tokens") {
    auto t = text::tokenize("Сегежа (SGZH): таргет 16.2 руб., апсайд +102 a Ё");
    CHECK(t == std::vector<std::string>{"сегежа", "sgzh", "таргет", "16", "руб", "апсайд", "102"});
    CHECK(text::lowercase("ФосАгро ÉCOLE") == "фосагро école");
    CHECK(text::tokenize("сур-нфтгз", 1) == std::vector<std::string>{"сур", "нфтгз"});
}

TEST_CASE("parse_news normalizes records") {
    std::istringstream in(
        R"({"id":"a1","published_at":"2024-03-01T14:00","source":"RDV","body":"Сегежа выплатит","tags":"SGZH"})" "\n"
        R"({"id":"a2","published_at":"2024-03-02","source":"Finam","title":"Газпром","body":"text","tags":["Газпром GAZP"]})" "\n"
        R"({"id":"a1","published_at":"2024-03-03","source":"RDV","body":"again"})" "\n");
    auto c = parse_news(in);
    REQUIRE(c.articles.size() == 2);
    CHECK(c.articles[0].title == "no title");
    CHECK(c.articles[0].tags == std::vector<std::string>{"SGZH"});
    CHECK(c.articles[1].tags == std::vector<std::string>{"Газпром GAZP"});
    CHECK(c.articles[1].published_at == parse_timestamp("2024-03-02T00:00"));
    REQUIRE(c.warnings.size() == 1);
    CHECK_THAT(c.warnings[0], Catch::Matchers::ContainsSubstring("duplicate"));
}

TEST_CASE("parse_news errors carry line numbers") {
    std::istringstream missing_date(R"({"id":"a","source":"RDV","body":"x"})" "\n" R"({"id":"b","source":"RDV","body":"x"})");
    try {
        parse_news(missing_date);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 1);
        CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("missing date"));
    }
    std::istringstream bad(R"({"id":"a","published_at":"2024-01-01","body":"x"})" "\n{not json\n");
    try {
        parse_news(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    std::istringstream empty_body(R"({"id":"a","published_at":"2024-01-01","body":"  "})");
    CHECK_THROWS_AS(parse_news(empty_body), ParseError);
}

TEST_CASE("parse_registry handles quoted descriptions") {
    std::istringstream in("ticker,name,description\n"
                          "SMLT,Samolet,\"Developer, real estate \"\"Moscow region\"\"\"\n"
                          "MTLR,Mechel,Mining and coal\n");
    auto reg = parse_registry(in);
    REQUIRE(reg.size() == 2);
    CHECK(reg[0].description == "Developer, real estate \"Moscow region\"");
    std::istringstream empty("ticker,name,description\nX,Y,\n");
    CHECK_THROWS(parse_registry(empty));
    std::istringstream dup("A,a,d\nA,b,e\n");
    CHECK_THROWS(parse_registry(dup));
}

TEST_CASE("tfidf_keywords on a single-company registry ranks by frequency") {
    std::vector<CompanyRecord> reg{{"X", "x", "coal coal coal ore ore steel mining"}};
    auto ks = tfidf_keywords(reg, 3);
    REQUIRE(ks.size() == 1);
    CHECK(ks[0].keywords == std::vector<std::string>{"coal", "ore", "mining"});
}

TEST_CASE("tfidf_keywords prefers tokens unique to a company") {
    std::vector<CompanyRecord> reg{{"SMLT", "Samolet", "developer rent housing company"},
                                   {"MTLR", "Mechel", "mining coal company"},
                                   {"SNGS", "Surgut", "oil gas company"}};
    // Hand scores with N = 3: unique tokens idf = ln(4/2) + 1, shared idf = ln(4/4) + 1 = 1.
    auto scores = tfidf_scores(reg);
    double rent = 0, company = 0;
    for (const auto& s : scores[0]) {
        if (s.token == "rent") rent = s.score;
        if (s.token == "company") company = s.score;
    }
    CHECK(rent == Approx(std::log(2.0) + 1.0).epsilon(1e-15));
    CHECK(company == Approx(1.0).epsilon(1e-15));
    CHECK(rent > company);
    auto ks = tfidf_keywords(reg, 3);
    // equal-score ties break lexicographically
    CHECK(ks[0].keywords == std::vector<std::string>{"developer", "housing", "rent"});
    CHECK_THROWS(tfidf_keywords(reg, 0));
    std::vector<CompanyRecord> none;
    CHECK_THROWS(tfidf_keywords(none, 30));
}

TEST_CASE("idf is monotone in document frequency") {
    for (std::size_t n = 1; n < 200; n += 7)
        for (std::size_t df = 1; df < n; ++df) REQUIRE(smoothed_idf(n, df) >= smoothed_idf(n, df + 1));
}

TEST_CASE("tfidf is deterministic") {
    std::vector<CompanyRecord> reg{{"A", "a", "alpha beta beta gamma"}, {"B", "b", "beta delta delta"}};
    auto a = tfidf_keywords(reg, 30), b = tfidf_keywords(reg, 30);
    CHECK(a[0].keywords == b[0].keywords);
    CHECK(a[1].keywords == b[1].keywords);
}

TEST_CASE("supplement keywords are merged without duplicates") {
    std::istringstream in("ticker,keyword\nSMLT,Самолет\nSMLT,smlt\nSMLT,samolet\n");
    auto sup = parse_keyword_supplement(in);
    std::vector<KeywordSet> sets{{"SMLT", {"smlt", "rent"}}};
    merge_supplement(sets, sup);
    CHECK(sets[0].keywords == std::vector<std::string>{"smlt", "rent", "самолет", "samolet"});
}

TEST_CASE("match_articles") {
    std::vector<NewsArticle> corpus{
        article("late", "2024-03-02T12:00", "no title", "Сегежа растет", {"SGZH"}),
        article("early", "2024-03-01T09:00", "Segezha", "lumber prices", {}),
        article("other", "2024-03-01T10:00", "no title", "Газпром отчитался", {"GAZP"}),
    };
    KeywordSet ks{"SGZH", {"sgzh"}};
    CHECK(match_articles(corpus, ks) == std::vector<std::string>{"late"});

    KeywordSet both{"SGZH", {"sgzh", "segezha"}};
    CHECK(match_articles(corpus, both) == std::vector<std::string>{"early", "late"});

    KeywordSet none{"X", {"nickel"}};
    CHECK(match_articles(corpus, none).empty());

    CHECK(match_articles(corpus, both, MatchBody).empty());
    CHECK(match_articles(corpus, both, MatchTitle) == std::vector<std::string>{"early"});

    KeywordSet phrase{"X", {"lumber prices"}};
    CHECK(match_articles(corpus, phrase) == std::vector<std::string>{"early"});

    KeywordSet empty{"X", {}};
    CHECK_THROWS(match_articles(corpus, empty));
}

TEST_CASE("match_articles is monotone in the keyword set") {
    Rng rng(3);
    const std::vector<std::string> vocab{"coal", "oil", "gas", "ore", "bank", "steel", "rent", "gold"};
    std::vector<NewsArticle> corpus;
    for (int i = 0; i < 60; ++i) {
        std::string body;
        for (int w = 0; w < 3; ++w) body += vocab[rng.index(vocab.size())] + " ";
        corpus.push_back(article("n" + std::to_string(i), "2024-01-01T10:00", "no title", body));
    }
    TokenIndex index(corpus);
    for (int t = 0; t < 50; ++t) {
        KeywordSet ks{"X", {vocab[rng.index(vocab.size())]}};
        auto before = match_articles(index, ks);
        ks.add(vocab[rng.index(vocab.size())]);
        auto after = match_articles(index, ks);
        std::set<std::string> a(after.begin(), after.end());
        for (const auto& id : before) REQUIRE(a.count(id));
    }
}

TEST_CASE("length_stats groups by source") {
    std::vector<SourceCount> counts{{"RBC", 10}, {"RBC", 10}, {"RBC", 10}, {"SmartLab", 1}, {"SmartLab", 2},
                                    {"SmartLab", 3}, {"SmartLab", 4}};
    auto st = length_stats(counts);
    CHECK(st["RBC"].mean == 10);
    CHECK(st["RBC"].std == 0);
    CHECK(st["SmartLab"].q25 == Approx(1.75));
    std::vector<SourceCount> neg{{"X", -1}};
    CHECK_THROWS(length_stats(neg));
}
