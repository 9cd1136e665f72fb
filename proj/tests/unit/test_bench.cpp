#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "rare/bench.hpp"
#include "rare/synth.hpp"
#include "support.hpp"

using namespace rare;

namespace {

struct fixture {
    SynthData data = generate(SynthSpec{});
    EmbedderParams params = EmbedderParams::random(EmbedderConfig{});
    FlatIndex index = build_flat_index(data.corpus, params);
    IndexedPool pool = IndexedPool::build(data.pool);

    BenchInputs inputs()
    {
        BenchInputs in;
        in.dataset = data.name;
        in.queries = &data.queries;
        in.instruction = data.instruction;
        in.pool = &pool;
        in.index = &index;
        in.params = &params;
        return in;
    }
};

fixture& shared()
{
    static fixture f;
    return f;
}

}  // namespace

TEST_CASE("bench settings")
{
    CHECK(parse_bench_setting("inst") == BenchSetting::inst);
    CHECK(parse_bench_setting("inst+ic") == BenchSetting::inst_ic);
    CHECK(to_string(BenchSetting::inst_ic) == "inst+ic");
    CHECK_ERRC((void)parse_bench_setting("fast"), errc::invalid_argument);
    CHECK(timer_resolution() > 0.0);
    CHECK(timer_resolution() < 1e-3);
}

TEST_CASE("increase factor")
{
    double const f = increase_factor(153.76, 3.84);
    CHECK(std::round(f * 100.0) / 100.0 == doctest::Approx(40.04).epsilon(1e-12));
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", f);
    CHECK(std::string(buf) == "40.04");
    CHECK_ERRC((void)increase_factor(1.0, 0.0), errc::invalid_argument);
}

TEST_CASE("profile structure")
{
    auto& f = shared();
    auto in = f.inputs();
    auto inst = profile(in, BenchSetting::inst, 3, 1);
    auto ic = profile(in, BenchSetting::inst_ic, 3, 1);
    double const tol = 2.0 * timer_resolution() * 3.0;
    for (auto const& r : {inst, ic}) {
        CHECK(std::abs(r.total_s - (r.nn_s + r.query_s + r.search_s)) <= tol);
        CHECK(r.n_corpus == f.data.corpus.size());
        CHECK(!r.inc_factor.has_value());
    }
    CHECK(inst.nn_s == 0.0);
    CHECK(ic.nn_s > 0.0);
    CHECK(ic.avg_q_len > inst.avg_q_len);
    CHECK(ic.query_s >= inst.query_s);
    double const ratio = ic.search_s / inst.search_s;
    CHECK(ratio >= 0.5);
    CHECK(ratio <= 2.0);

    in.k = 0;
    auto degenerate = profile(in, BenchSetting::inst_ic, 1, 0);
    CHECK(degenerate.nn_s == 0.0);
    CHECK(degenerate.avg_q_len == inst.avg_q_len);
}

TEST_CASE("average rendered query length")
{
    auto& f = shared();
    std::vector<Query> one{{"q", "b c"}};
    auto in = f.inputs();
    in.queries = &one;
    in.instruction = "";
    // Rendered as "Query: b c".
    CHECK(profile(in, BenchSetting::inst, 1, 0).avg_q_len == 3.0);
}

TEST_CASE("profile preconditions")
{
    auto& f = shared();
    auto in = f.inputs();
    CHECK_ERRC((void)profile(in, BenchSetting::inst, 0, 0), errc::invalid_argument);
    in.pool = nullptr;
    CHECK_ERRC((void)profile(in, BenchSetting::inst_ic, 1, 0), errc::empty_pool);
    CHECK_NOTHROW((void)profile(in, BenchSetting::inst, 1, 0));
    in.index = nullptr;
    CHECK_ERRC((void)profile(in, BenchSetting::inst, 1, 0), errc::invalid_argument);
}

TEST_CASE("latency csv")
{
    auto dir = testing::scratch("bench_csv");
    emit_csv(dir / "empty.csv", {});
    CHECK(testing::read_file(dir / "empty.csv") == "Dataset,#Corpus,Setting,AvgQLen,NN,Query,Search,Total,Inc\n");
    CHECK(parse_latency_csv(dir / "empty.csv").empty());

    LatencyReport a{"NFCorpus", BenchSetting::inst, 3633, 12.25, 0.0, 3.3, 0.54, 3.84, std::nullopt};
    LatencyReport b{"NFCorpus", BenchSetting::inst_ic, 3633, 180.1, 149.1, 4.09, 0.57, 153.76, std::nullopt};
    std::vector<LatencyReport> reports{a, b};
    attach_inc_factors(reports);
    CHECK(!reports[0].inc_factor.has_value());
    REQUIRE(reports[1].inc_factor.has_value());
    CHECK(*reports[1].inc_factor == increase_factor(153.76, 3.84));

    emit_csv(dir / "t.csv", reports);
    CHECK(parse_latency_csv(dir / "t.csv") == reports);
    auto lines = testing::read_file(dir / "t.csv");
    CHECK(lines.find("NFCorpus,3633,inst,") != std::string::npos);
    CHECK(lines.find(",3.84,\n") != std::string::npos);

    testing::write_file(dir / "bad.csv", "Dataset,Setting\nx,inst\n");
    CHECK_ERRC((void)parse_latency_csv(dir / "bad.csv"), errc::malformed_row);
    CHECK_ERRC(emit_csv(dir / "missing" / "x.csv", reports), errc::io);
}
