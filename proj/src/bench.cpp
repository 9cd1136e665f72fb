#include "rare/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <numeric>

#include "rare/error.hpp"
#include "rare/eval.hpp"

namespace rare {

std::string_view to_string(BenchSetting s) noexcept
{
    return s == BenchSetting::inst ? "inst" : "inst+ic";
}

BenchSetting parse_bench_setting(std::string_view name)
{
    if (name == "inst") {
        return BenchSetting::inst;
    }
    if (name == "inst+ic") {
        return BenchSetting::inst_ic;
    }
    raise(errc::invalid_argument, "unknown bench setting '" + std::string(name) + "'");
}

double timer_resolution() noexcept
{
    using period = std::chrono::steady_clock::period;
    return static_cast<double>(period::num) / static_cast<double>(period::den);
}

namespace {

using clock = std::chrono::steady_clock;

double seconds(clock::duration d)
{
    return std::chrono::duration<double>(d).count();
}

struct Repetition {
    double nn = 0.0;
    double query = 0.0;
    double search = 0.0;
    double q_len_sum = 0.0;

    [[nodiscard]] double total() const { return nn + query + search; }
};

// Each stage runs as its own pass over all queries so that one stage's
// working set does not evict the next stage's from cache.
Repetition run_once(BenchInputs const& in, BenchSetting setting)
{
    Repetition rep;
    bool const with_examples = setting == BenchSetting::inst_ic && in.k > 0;
    PromptFormat plain = in.format;
    plain.kind = FormatKind::inst;
    auto const& queries = *in.queries;
    rng gen(0);

    std::vector<std::vector<ICExample>> examples(queries.size());
    if (with_examples) {
        for (std::size_t i = 0; i < queries.size(); ++i) {
            auto const t0 = clock::now();
            examples[i] = select_examples(in.pool->pool, in.pool->bm25, queries[i].text, in.k,
                                          Selection::retrieved, gen);
            rep.nn += seconds(clock::now() - t0);
        }
    }

    std::vector<Embedding> embedded(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        auto const t0 = clock::now();
        auto const rendered = with_examples ? render_inst_ic(in.instruction, examples[i], queries[i].text, in.format)
                                            : render_inst(in.instruction, queries[i].text, plain);
        embedded[i] = embed(*in.params, rendered.text);
        rep.query += seconds(clock::now() - t0);
        rep.q_len_sum += static_cast<double>(rendered.approx_len);
    }

    for (std::size_t i = 0; i < queries.size(); ++i) {
        auto const t0 = clock::now();
        auto const ranking = search(*in.index, embedded[i], in.top_k);
        rep.search += seconds(clock::now() - t0);
        if (ranking.size() > in.top_k) {
            raise(errc::invalid_argument, "search returned more than top_k");
        }
    }
    return rep;
}

}  // namespace

LatencyReport profile(BenchInputs const& inputs, BenchSetting setting, std::size_t repetitions,
                      std::size_t warmup)
{
    if (repetitions == 0) {
        raise(errc::invalid_argument, "repetitions must be >= 1");
    }
    if (inputs.queries == nullptr || inputs.index == nullptr || inputs.params == nullptr) {
        raise(errc::invalid_argument, "bench inputs are incomplete");
    }
    if (setting == BenchSetting::inst_ic && inputs.k > 0 && inputs.pool == nullptr) {
        raise(errc::empty_pool, "inst+ic profiling needs an example pool");
    }
    for (std::size_t i = 0; i < warmup; ++i) {
        (void)run_once(inputs, setting);
    }
    std::vector<Repetition> reps;
    reps.reserve(repetitions);
    for (std::size_t i = 0; i < repetitions; ++i) {
        reps.push_back(run_once(inputs, setting));
    }
    std::vector<std::size_t> order(reps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return reps[a].total() < reps[b].total(); });
    auto const& median = reps[order[(order.size() - 1) / 2]];

    LatencyReport r;
    r.dataset = inputs.dataset;
    r.setting = setting;
    r.n_corpus = inputs.index->size();
    auto const n_queries = inputs.queries->size();
    r.avg_q_len = n_queries == 0 ? 0.0 : median.q_len_sum / static_cast<double>(n_queries);
    r.nn_s = median.nn;
    r.query_s = median.query;
    r.search_s = median.search;
    r.total_s = median.total();
    return r;
}

double increase_factor(double total_ic, double total_inst)
{
    if (!(total_inst > 0.0)) {
        raise(errc::invalid_argument, "baseline total must be positive");
    }
    return total_ic / total_inst;
}

void attach_inc_factors(std::vector<LatencyReport>& reports)
{
    for (auto& r : reports) {
        r.inc_factor.reset();
    }
    for (auto& r : reports) {
        if (r.setting != BenchSetting::inst_ic) {
            continue;
        }
        auto base = std::find_if(reports.begin(), reports.end(), [&](LatencyReport const& o) {
            return o.setting == BenchSetting::inst && o.dataset == r.dataset;
        });
        if (base != reports.end() && base->total_s > 0.0) {
            r.inc_factor = increase_factor(r.total_s, base->total_s);
        }
    }
}

namespace {

std::string number(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double parse_double(std::string const& s, std::filesystem::path const& path)
{
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        raise(errc::malformed_row, path.string() + ": bad number '" + s + "'");
    }
    return v;
}

}  // namespace

void emit_csv(std::filesystem::path const& path, std::vector<LatencyReport> const& reports)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(errc::io, "cannot write " + path.string());
    }
    out << "Dataset,#Corpus,Setting,AvgQLen,NN,Query,Search,Total,Inc\n";
    for (auto const& r : reports) {
        out << r.dataset << ',' << r.n_corpus << ',' << to_string(r.setting) << ',' << number(r.avg_q_len)
            << ',' << number(r.nn_s) << ',' << number(r.query_s) << ',' << number(r.search_s) << ','
            << number(r.total_s) << ',' << (r.inc_factor ? number(*r.inc_factor) : "") << '\n';
    }
    if (!out) {
        raise(errc::io, "write failed: " + path.string());
    }
}

std::vector<LatencyReport> parse_latency_csv(std::filesystem::path const& path)
{
    auto const table = read_csv(path);
    std::vector<std::string> const expected{"Dataset", "#Corpus", "Setting", "AvgQLen", "NN",
                                            "Query", "Search", "Total", "Inc"};
    if (table.header != expected) {
        raise(errc::malformed_row, path.string() + ": unexpected header");
    }
    std::vector<LatencyReport> out;
    for (auto const& row : table.rows) {
        if (row.size() != expected.size()) {
            raise(errc::malformed_row, path.string() + ": expected 9 columns");
        }
        LatencyReport r;
        r.dataset = row[0];
        r.n_corpus = static_cast<std::size_t>(parse_double(row[1], path));
        r.setting = parse_bench_setting(row[2]);
        r.avg_q_len = parse_double(row[3], path);
        r.nn_s = parse_double(row[4], path);
        r.query_s = parse_double(row[5], path);
        r.search_s = parse_double(row[6], path);
        r.total_s = parse_double(row[7], path);
        if (!row[8].empty()) {
            r.inc_factor = parse_double(row[8], path);
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace rare
