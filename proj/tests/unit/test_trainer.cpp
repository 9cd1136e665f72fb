#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rare/synth.hpp"
#include "rare/trainer.hpp"
#include "support.hpp"

using namespace rare;

namespace {

std::mt19937_64& stream()
{
    static std::mt19937_64 gen(17);
    return gen;
}

std::string words(std::size_t n, std::size_t vocab = 30)
{
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
        s += (i ? " w" : "w") + std::to_string(stream()() % vocab);
    }
    return s;
}

Embedding unit(std::size_t d)
{
    std::normal_distribution<double> n;
    Embedding e{std::vector<double>(d)};
    double s = 0;
    for (auto& v : e.values) {
        v = n(stream());
        s += v * v;
    }
    for (auto& v : e.values) {
        v /= std::sqrt(s);
    }
    return e;
}

std::vector<BatchItem> random_batch(std::size_t b)
{
    std::vector<BatchItem> batch;
    for (std::size_t i = 0; i < b; ++i) {
        batch.push_back({words(1 + stream()() % 8), words(1 + stream()() % 10),
                         stream()() % 2 ? words(1 + stream()() % 10) : ""});
    }
    return batch;
}

EmbedderParams small_params(std::uint32_t v, std::uint32_t d)
{
    EmbedderConfig c;
    c.hash_dim = v;
    c.embed_dim = d;
    c.seed = stream()();
    return EmbedderParams::random(c);
}

ExamplePool make_pool(std::vector<std::string> const& queries)
{
    ExamplePool pool;
    pool.task_id = "t";
    for (auto const& q : queries) {
        pool.examples.push_back({q, "doc of " + q, std::nullopt});
    }
    return pool;
}

}  // namespace

TEST_CASE("contrastive loss special cases")
{
    auto q = unit(8);
    auto p = unit(8);
    CHECK(contrastive_loss(q, p, std::nullopt, {}, 0.01) == 0.0);

    Embedding zero{std::vector<double>(8, 0.0)};
    CHECK(contrastive_loss(zero, p, unit(8), {}, 0.01) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    std::vector<Embedding> others{unit(8), unit(8), unit(8)};
    CHECK(std::abs(contrastive_loss(zero, p, unit(8), others, 0.01) - std::log(5.0)) <= 1e-9);
    CHECK(std::abs(contrastive_loss(q, q, q, std::vector<Embedding>{q, q}, 0.05) - std::log(4.0)) <= 1e-9);

    CHECK_ERRC(contrastive_loss(q, p, std::nullopt, {}, 0.0), errc::non_positive_temperature);
    CHECK_ERRC(contrastive_loss(q, unit(4), std::nullopt, {}, 0.01), errc::dim_mismatch);
}

TEST_CASE("contrastive loss matches a high-precision evaluation")
{
    using big = oracle::big;
    for (int trial = 0; trial < 200; ++trial) {
        auto q = unit(16);
        auto p = unit(16);
        auto n = unit(16);
        std::vector<Embedding> batch;
        for (int i = 0; i < 6; ++i) {
            batch.push_back(unit(16));
        }
        std::vector<big> sims{oracle::precise_dot(q.values, p.values), oracle::precise_dot(q.values, n.values)};
        for (auto const& e : batch) {
            sims.push_back(oracle::precise_dot(q.values, e.values));
        }
        big z = 0;
        for (auto const& s : sims) {
            z += exp(s / big(0.01));
        }
        big const want = log(z) - sims[0] / big(0.01);
        CHECK(std::abs(contrastive_loss(q, p, n, batch, 0.01) - static_cast<double>(want)) <= 1e-9);
        CHECK(contrastive_loss(q, p, n, batch, 0.01) >= 0.0);
    }
}

TEST_CASE("loss is invariant to a shift of all similarities")
{
    // Shifting every candidate by the same cosine amounts to adding the same
    // component along q; emulate through the logits directly.
    auto q = unit(6);
    Embedding p = unit(6);
    Embedding n = unit(6);
    for (auto* e : {&p, &n}) {
        for (auto& v : e->values) {
            v *= 0.5;  // keep shifted similarities inside [-1, 1]
        }
    }
    double const base = contrastive_loss(q, p, n, {}, 0.1);
    auto shifted = [&](Embedding e, double c) {
        for (std::size_t r = 0; r < e.values.size(); ++r) {
            e.values[r] += c * q.values[r];
        }
        return e;
    };
    // cosine is a plain dot of the stored values, so adding c*q adds c to every similarity.
    CHECK(std::abs(contrastive_loss(q, shifted(p, 0.3), shifted(n, 0.3), {}, 0.1) - base) <= 1e-9);
}

TEST_CASE("batch gradients: single positive-only example")
{
    auto params = small_params(64, 4);
    std::vector<BatchItem> batch{{"a b", "c d", ""}};
    auto loss = batch_grads(batch, params, {});
    CHECK(loss.value == 0.0);
    CHECK(loss.grads.all_zero());
}

TEST_CASE("batch gradients match finite differences at unit temperature")
{
    LossOptions opts;
    opts.temperature = 1.0;
    for (int trial = 0; trial < 10; ++trial) {
        auto params = small_params(16 + stream()() % 100, 2 + stream()() % 7);
        auto batch = random_batch(1 + stream()() % 8);
        auto loss = batch_grads(batch, params, opts);
        for (std::uint32_t j = 0; j < params.hash_dim(); ++j) {
            for (std::uint32_t r = 0; r < params.embed_dim(); ++r) {
                double const n = oracle::finite_difference(batch, params, opts, r, j);
                CHECK(oracle::relative_error(loss.grads.at(r, j), n) < 1e-4);
            }
        }
    }
}

TEST_CASE("batch gradients match finite differences at the default temperature")
{
    // At tau = 0.01 central differences carry ~1e-9 absolute noise, so
    // entries are compared relative to max(|analytic|, |numeric|, 1e-5).
    LossOptions opts;
    for (int trial = 0; trial < 10; ++trial) {
        auto params = small_params(16 + stream()() % 100, 2 + stream()() % 7);
        auto batch = random_batch(1 + stream()() % 8);
        auto loss = batch_grads(batch, params, opts);
        for (std::uint32_t j = 0; j < params.hash_dim(); ++j) {
            for (std::uint32_t r = 0; r < params.embed_dim(); ++r) {
                double const a = loss.grads.at(r, j);
                double const n = oracle::finite_difference(batch, params, opts, r, j);
                CHECK(std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-5}) < 1e-4);
            }
        }
    }
}

TEST_CASE("duplicated batch keeps the mean loss")
{
    for (int trial = 0; trial < 20; ++trial) {
        auto params = small_params(512, 8);
        auto batch = random_batch(1 + stream()() % 6);
        auto doubled = batch;
        doubled.insert(doubled.end(), batch.begin(), batch.end());
        LossOptions opts;
        // Positives must differ across examples for the equality to be exact.
        for (std::size_t i = 0; i < batch.size(); ++i) {
            batch[i].positive += " p" + std::to_string(i);
            doubled[i].positive = batch[i].positive;
            doubled[i + batch.size()].positive = batch[i].positive;
        }
        double const single = batch_grads(batch, params, opts).value;
        CHECK(batch_grads(doubled, params, opts).value == doctest::Approx(single).epsilon(1e-12));
    }
}

TEST_CASE("candidate sets")
{
    std::vector<BatchItem> batch;
    for (int i = 0; i < 5; ++i) {
        batch.push_back({"q" + std::to_string(i), "p" + std::to_string(i), "n" + std::to_string(i)});
    }
    LossOptions opts;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto c = candidate_texts(batch, i, opts);
        REQUIRE(c.size() == 1 + 1 + (batch.size() - 1));
        CHECK(*c[0] == batch[i].positive);
        CHECK(*c[1] == batch[i].negative);
    }
    opts.include_other_hard_negatives = true;
    CHECK(candidate_texts(batch, 0, opts).size() == 2 + 2 * 4);
    opts.include_other_hard_negatives = false;
    opts.use_hard_negative = false;
    CHECK(candidate_texts(batch, 0, opts).size() == 1 + 4);
}

TEST_CASE("gradient step with zero learning rate leaves weights untouched")
{
    auto params = small_params(128, 4);
    auto batch = random_batch(4);
    auto before = params;
    batch_grads(batch, params, {}).grads.apply(params, 0.0);
    CHECK(params == before);
}

TEST_CASE("select examples")
{
    auto pool = make_pool({"apple pie", "apple tart", "pear cake", "plum jam"});
    auto ip = IndexedPool::build(pool);
    rng gen(1);
    CHECK(select_examples(pool, ip.bm25, "apple", 0, Selection::retrieved, gen).empty());

    auto got = select_examples(pool, ip.bm25, "apple pie", 2, Selection::retrieved, gen, 0);
    REQUIRE(got.size() == 2);
    CHECK(got[0].query == "apple tart");

    auto small = make_pool({"self", "other"});
    auto sip = IndexedPool::build(small);
    auto one = select_examples(small, sip.bm25, "self", 1, Selection::retrieved, gen, 0);
    REQUIRE(one.size() == 1);
    CHECK(one[0].query == "other");
    CHECK_ERRC(select_examples(small, sip.bm25, "self", 2, Selection::retrieved, gen, 0), errc::pool_too_small);
    CHECK_ERRC(select_examples(ExamplePool{}, sip.bm25, "x", 1, Selection::retrieved, gen), errc::empty_pool);

    rng a(9);
    rng b(9);
    auto ra = select_examples(pool, ip.bm25, "x", 3, Selection::random, a);
    auto rb = select_examples(pool, ip.bm25, "x", 3, Selection::random, b);
    CHECK(ra == rb);
    std::set<std::string> distinct;
    for (auto const& e : ra) {
        distinct.insert(e.query);
    }
    CHECK(distinct.size() == 3);
    auto excl = select_examples(pool, ip.bm25, "x", 3, Selection::random, a, 2);
    for (auto const& e : excl) {
        CHECK(e.query != "pear cake");
    }
}

TEST_CASE("training: zero learning rate, mixture boundaries, determinism")
{
    SynthSpec spec;
    spec.n_clusters = 3;
    spec.docs_per_cluster = 6;
    spec.queries_per_cluster = 2;
    spec.train_queries_per_cluster = 3;
    spec.paraphrases = 3;
    auto data = generate(spec);
    std::map<std::string, ExamplePool> pools{{data.name, data.pool}};
    EmbedderConfig ec;
    ec.hash_dim = 1024;
    ec.embed_dim = 8;
    auto init = EmbedderParams::random(ec);

    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 2;
    cfg.learning_rate = 0.0;
    CHECK(train(data.train, pools, cfg, init).params == init);

    cfg.learning_rate = 0.5;
    cfg.ic_mixture = 0.0;
    std::size_t with_examples = 0;
    std::size_t renders = 0;
    TrainHooks hooks;
    hooks.on_render = [&](AugmentedQuery const& aq) {
        ++renders;
        with_examples += aq.n_examples > 0 ? 1 : 0;
    };
    (void)train(data.train, pools, cfg, init, hooks);
    CHECK(renders == 2 * data.train.size());
    CHECK(with_examples == 0);

    cfg.ic_mixture = 1.0;
    with_examples = 0;
    renders = 0;
    (void)train(data.train, pools, cfg, init, hooks);
    CHECK(with_examples == renders);

    cfg.ic_mixture = 0.7;
    auto r1 = train(data.train, pools, cfg, init);
    auto r2 = train(data.train, pools, cfg, init);
    CHECK(r1.params == r2.params);
    CHECK(r1.log.size() == 2);
    CHECK(r1.log[0].mean_loss == r2.log[0].mean_loss);

    cfg.temperature = -1.0;
    CHECK_ERRC(train(data.train, pools, cfg, init), errc::non_positive_temperature);
    cfg.temperature = 0.01;
    cfg.ic_mixture = 1.5;
    CHECK_ERRC(train(data.train, pools, cfg, init), errc::invalid_argument);
    cfg.ic_mixture = 0.7;
    CHECK_ERRC(train(data.train, {}, cfg, init), errc::empty_pool);
}

TEST_CASE("training with threads matches the single-threaded path")
{
    SynthSpec spec;
    spec.n_clusters = 3;
    spec.docs_per_cluster = 5;
    spec.train_queries_per_cluster = 3;
    auto data = generate(spec);
    std::map<std::string, ExamplePool> pools{{data.name, data.pool}};
    EmbedderConfig ec;
    ec.hash_dim = 2048;
    ec.embed_dim = 8;
    auto init = EmbedderParams::random(ec);
    TrainConfig cfg;
    cfg.epochs = 1;
    auto one = train(data.train, pools, cfg, init);
    cfg.threads = 4;
    CHECK(train(data.train, pools, cfg, init).params == one.params);
}

TEST_CASE("training lowers the loss on the synthetic task")
{
    auto data = generate(SynthSpec{});
    std::map<std::string, ExamplePool> pools{{data.name, data.pool}};
    TrainConfig cfg;
    auto init = EmbedderParams::random(EmbedderConfig{});
    double const before = dataset_loss(data.train, pools, cfg, init, 99);
    auto trained = train(data.train, pools, cfg, init);
    double const after = dataset_loss(data.train, pools, cfg, trained.params, 99);
    CHECK(after < before);
}
