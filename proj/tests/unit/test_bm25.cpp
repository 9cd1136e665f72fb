#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "rare/bm25.hpp"
#include "support.hpp"

using namespace rare;

namespace {

std::vector<std::string> random_items(std::mt19937_64& gen, std::size_t n, std::size_t max_len, std::size_t vocab)
{
    std::vector<std::string> items;
    for (std::size_t i = 0; i < n; ++i) {
        std::string s;
        std::size_t const len = 1 + gen() % max_len;
        for (std::size_t t = 0; t < len; ++t) {
            s += (t ? " w" : "w") + std::to_string(gen() % vocab);
        }
        items.push_back(s);
    }
    return items;
}

}  // namespace

TEST_CASE("tokenize")
{
    CHECK(tokenize("Apple, banana!") == TokenList{"apple", "banana"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("don't stop") == TokenList{"don't", "stop"});
    CHECK(tokenize("  ...  ,, ").empty());
    CHECK(tokenize("a\tb\nc d　e f") == TokenList{"a", "b", "c", "d", "e", "f"});
    CHECK(tokenize("(Élan)") == TokenList{"Élan"});
    CHECK(tokenize("x--y") == TokenList{"x--y"});
}

TEST_CASE("build computes length statistics")
{
    auto idx = Bm25Index::build({"apple banana", "banana cherry"});
    CHECK(idx.avg_len() == 2.0);
    CHECK(idx.size() == 2);
    CHECK_ERRC(Bm25Index::build({}), errc::empty_collection);
    CHECK_ERRC(Bm25Index::build({"a"}, {0.0, 0.75}), errc::invalid_argument);
    CHECK_ERRC(Bm25Index::build({"a"}, {1.2, 1.5}), errc::invalid_argument);

    std::mt19937_64 gen(3);
    std::vector<std::string> items;
    for (int i = 0; i < 1000; ++i) {
        std::string s;
        std::size_t const len = 5;
        for (std::size_t t = 0; t < len; ++t) {
            s += (t ? " t" : "t") + std::to_string(gen() % 50);
        }
        items.push_back(s);
    }
    auto big = Bm25Index::build(items);
    double sum = 0;
    for (auto const& it : items) {
        sum += static_cast<double>(oracle::split(it).size());
    }
    CHECK(big.avg_len() == sum / static_cast<double>(items.size()));
}

TEST_CASE("score examples")
{
    auto idx = Bm25Index::build({"apple banana", "banana cherry"});
    CHECK(idx.score({"apple"}, 1) == 0.0);
    double const one = idx.score({"apple"}, 0);
    CHECK(one > 0.0);
    CHECK(one == doctest::Approx(oracle::bm25_scores({"apple banana", "banana cherry"}, "apple")[0]).epsilon(1e-15));
    CHECK(idx.score({"apple", "apple"}, 0) == 2.0 * one);
    CHECK(idx.score({"unknown"}, 0) == 0.0);
    CHECK_ERRC(idx.score({"apple"}, 2), errc::ordinal_out_of_range);
}

TEST_CASE("score is additive and order invariant")
{
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto items = random_items(gen, 30, 12, 20);
        auto idx = Bm25Index::build(items);
        auto q = tokenize(random_items(gen, 1, 6, 25)[0]);
        for (std::size_t i = 0; i < items.size(); ++i) {
            double parts = 0;
            for (auto const& t : q) {
                parts += idx.score({t}, i);
            }
            auto rev = q;
            std::reverse(rev.begin(), rev.end());
            CHECK(idx.score(q, i) == doctest::Approx(parts).epsilon(1e-12));
            CHECK(idx.score(rev, i) == doctest::Approx(idx.score(q, i)).epsilon(1e-12));
        }
    }
}

TEST_CASE("rarer terms score at least as high")
{
    // Same tf and lengths; "rare" appears in one item, "common" in three.
    auto idx = Bm25Index::build({"rare common", "x common", "y common", "z w"});
    CHECK(idx.idf("rare") > idx.idf("common"));
    CHECK(idx.score({"rare"}, 0) >= idx.score({"common"}, 0));
    CHECK(idx.idf("common") > 0.0);
}

TEST_CASE("top_k basics")
{
    auto idx = Bm25Index::build({"what is bm25", "what is okapi"});
    CHECK(idx.top_k("what is bm25", 0).empty());
    auto r = idx.top_k("what is bm25", 1, 0);
    REQUIRE(r.size() == 1);
    CHECK(r[0].ordinal == 1);
    auto all = idx.top_k("nothing matches", 5);
    REQUIRE(all.size() == 2);
    CHECK(all[0].ordinal == 0);
    CHECK(all[1].ordinal == 1);
    CHECK(all[0].score == 0.0);
}

TEST_CASE("top_k matches brute force on random pools")
{
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t const n = 1 + gen() % 50;
        auto items = random_items(gen, n, 8, 15);
        auto idx = Bm25Index::build(items);
        auto query = random_items(gen, 1, 10, 18)[0];
        std::size_t const k = gen() % 7;
        long const exclude = gen() % 2 ? static_cast<long>(gen() % n) : -1;
        auto got = idx.top_k(query, k, exclude >= 0 ? std::optional<std::size_t>(exclude) : std::nullopt);
        auto want = oracle::bm25_top_k(items, query, k, exclude);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].ordinal == want[i]);
        }
    }
}

TEST_CASE("scores are deterministic")
{
    std::mt19937_64 gen(9);
    auto items = random_items(gen, 40, 10, 30);
    auto a = Bm25Index::build(items);
    auto b = Bm25Index::build(items);
    auto q = tokenize(items[3]);
    CHECK(a.score_all(q) == b.score_all(q));
}

TEST_CASE("save and load round trip")
{
    auto dir = testing::scratch("bm25_io");
    std::mt19937_64 gen(2);
    auto items = random_items(gen, 60, 9, 40);
    auto idx = Bm25Index::build(items, {0.9, 0.4});
    idx.save(dir / "a.rbm");
    auto back = Bm25Index::load(dir / "a.rbm");
    CHECK(back == idx);
    idx.save(dir / "b.rbm");
    CHECK(testing::read_file(dir / "a.rbm") == testing::read_file(dir / "b.rbm"));
    CHECK(testing::read_file(dir / "a.rbm").substr(0, 4) == "RBM1");

    auto bytes = testing::read_file(dir / "a.rbm");
    testing::write_file(dir / "bad.rbm", "XXXX" + bytes.substr(4));
    CHECK_ERRC(Bm25Index::load(dir / "bad.rbm"), errc::bad_magic);
    auto wrong = bytes;
    wrong[4] = 9;
    testing::write_file(dir / "ver.rbm", wrong);
    CHECK_ERRC(Bm25Index::load(dir / "ver.rbm"), errc::version_mismatch);
    testing::write_file(dir / "short.rbm", bytes.substr(0, bytes.size() / 2));
    CHECK_ERRC(Bm25Index::load(dir / "short.rbm"), errc::truncated);
}
