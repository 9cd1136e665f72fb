#include "rare/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "rare/error.hpp"

namespace rare {

using json = nlohmann::ordered_json;

bool has_relevant(std::map<std::string, int> const& judged) noexcept
{
    return std::any_of(judged.begin(), judged.end(), [](auto const& kv) { return kv.second > 0; });
}

double ndcg_at_k(RankedList const& ranked, std::map<std::string, int> const& judged, std::size_t k)
{
    if (k == 0) {
        raise(errc::invalid_argument, "nDCG cutoff must be >= 1");
    }
    auto const gain = [](int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; };
    std::vector<int> ideal;
    for (auto const& [_, grade] : judged) {
        if (grade > 0) {
            ideal.push_back(grade);
        }
    }
    if (ideal.empty()) {
        return 0.0;
    }
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
        idcg += gain(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
    }
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
        auto it = judged.find(ranked[i].doc_id);
        if (it != judged.end() && it->second > 0) {
            dcg += gain(it->second) / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    return dcg / idcg;
}

EvalReport evaluate(Run const& run, QRels const& qrels, std::size_t k, std::string dataset,
                    std::string fingerprint)
{
    EvalReport report;
    report.dataset = std::move(dataset);
    report.k = k;
    report.config_fingerprint = std::move(fingerprint);
    double sum = 0.0;
    for (auto const& [qid, ranking] : run) {
        auto const* judged = qrels.find(qid);
        if (judged == nullptr || !has_relevant(*judged)) {
            report.without_relevant.push_back(qid);
            continue;
        }
        double const v = ndcg_at_k(ranking, *judged, k);
        report.per_query.emplace(qid, v);
    }
    // Sum in id order so the mean does not depend on how the run was built.
    for (auto const& [_, v] : report.per_query) {
        sum += v;
    }
    if (!report.per_query.empty()) {
        report.mean = sum / static_cast<double>(report.per_query.size());
    }
    return report;
}

void write_report(std::filesystem::path const& path, EvalReport const& report)
{
    json obj;
    obj["dataset"] = report.dataset;
    obj["metric"] = "ndcg_cut_" + std::to_string(report.k);
    obj["k"] = report.k;
    obj["config"] = report.config_fingerprint;
    obj["mean"] = report.mean ? json(*report.mean) : json(nullptr);
    obj["n_evaluated"] = report.per_query.size();
    obj["n_without_relevant"] = report.without_relevant.size();
    obj["without_relevant"] = report.without_relevant;
    json per_query = json::object();
    for (auto const& [qid, v] : report.per_query) {
        per_query[qid] = v;
    }
    obj["per_query"] = std::move(per_query);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(errc::io, "cannot write " + path.string());
    }
    out << obj.dump(2) << '\n';
}

EvalReport load_report(std::filesystem::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(errc::io, "cannot open " + path.string());
    }
    json obj = json::parse(in, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        raise(errc::malformed_line, path.string() + ": not a JSON report");
    }
    try {
        EvalReport r;
        r.dataset = obj.at("dataset").get<std::string>();
        r.k = obj.at("k").get<std::size_t>();
        r.config_fingerprint = obj.at("config").get<std::string>();
        if (!obj.at("mean").is_null()) {
            r.mean = obj.at("mean").get<double>();
        }
        r.without_relevant = obj.at("without_relevant").get<std::vector<std::string>>();
        for (auto const& [qid, v] : obj.at("per_query").items()) {
            r.per_query.emplace(qid, v.get<double>());
        }
        return r;
    } catch (json::exception const& e) {
        raise(errc::malformed_line, path.string() + ": " + e.what());
    }
}

std::string config_fingerprint(std::map<std::string, std::string> const& config)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto const feed = [&h](std::string_view s) {
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        h ^= 0xFF;
        h *= 0x100000001b3ULL;
    };
    for (auto const& [key, value] : config) {
        feed(key);
        feed(value);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Ablations

std::string AblationCell::row_label() const
{
    if (!label.empty()) {
        return label;
    }
    std::string out(to_string(format.kind));
    if (format.kind != FormatKind::inst) {
        out += " k=" + std::to_string(k) + " " + std::string(to_string(selection));
    }
    if (format.bracket_queries) {
        out += " brackets";
    }
    return out;
}

AblationCell parse_cell(std::string_view spec)
{
    AblationCell cell;
    auto const first = spec.find(':');
    auto const second = first == std::string_view::npos ? first : spec.find(':', first + 1);
    cell.format.kind = parse_format_kind(spec.substr(0, first));
    if (first == std::string_view::npos) {
        cell.k = cell.format.kind == FormatKind::inst ? 0 : 5;
        return cell;
    }
    auto const k_text = spec.substr(first + 1, second == std::string_view::npos ? second : second - first - 1);
    std::size_t k = 0;
    auto [ptr, ec] = std::from_chars(k_text.data(), k_text.data() + k_text.size(), k);
    if (ec != std::errc() || ptr != k_text.data() + k_text.size()) {
        raise(errc::invalid_argument, "bad k in grid cell '" + std::string(spec) + "'");
    }
    cell.k = k;
    if (second != std::string_view::npos) {
        cell.selection = parse_selection(spec.substr(second + 1));
    }
    return cell;
}

double AblationTable::value(std::size_t cell, std::size_t dataset) const
{
    auto const& runs = reports.at(cell).at(dataset);
    double sum = 0.0;
    std::size_t n = 0;
    for (auto const& r : runs) {
        if (r.mean) {
            sum += *r.mean;
            ++n;
        }
    }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

double AblationTable::average(std::size_t cell) const
{
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        double const v = value(cell, d);
        if (!std::isnan(v)) {
            sum += v;
            ++n;
        }
    }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

AblationTable ablate(std::vector<AblationCell> const& grid, std::vector<EvalDataset> const& datasets,
                     EmbedderParams const& params, AblationOptions const& options)
{
    if (grid.empty()) {
        raise(errc::invalid_argument, "ablation grid is empty");
    }
    if (options.seeds.empty()) {
        raise(errc::invalid_argument, "at least one evaluation seed is required");
    }
    AblationTable table;
    table.cells = grid;
    for (auto const& ds : datasets) {
        table.datasets.push_back(ds.name);
    }
    table.reports.assign(grid.size(), std::vector<std::vector<EvalReport>>(datasets.size()));

    for (std::size_t d = 0; d < datasets.size(); ++d) {
        auto const& ds = datasets[d];
        auto const index = build_flat_index(ds.corpus, params, options.threads);
        std::optional<IndexedPool> pool;
        if (ds.pool) {
            pool = IndexedPool::build(*ds.pool, options.bm25);
        }
        for (std::size_t c = 0; c < grid.size(); ++c) {
            auto const& cell = grid[c];
            // Retrieved selection is deterministic; one pass is enough.
            bool const seeded = uses_examples(cell.format, cell.k) && cell.selection == Selection::random;
            std::size_t const n_seeds = seeded ? options.seeds.size() : 1;
            for (std::size_t s = 0; s < n_seeds; ++s) {
                InferenceOptions inf{cell.format, cell.k, options.top_k, cell.selection,
                                     options.seeds[s], options.threads};
                auto const run = run_inference(ds.queries, ds.instruction, pool ? &*pool : nullptr,
                                               index, params, inf);
                std::map<std::string, std::string> fp{
                    {"format", std::string(to_string(cell.format.kind))},
                    {"k", std::to_string(cell.k)},
                    {"selection", std::string(to_string(cell.selection))},
                    {"brackets", cell.format.bracket_queries ? "1" : "0"},
                    {"shuffle_seed", std::to_string(cell.format.shuffle_seed)},
                    {"seed", std::to_string(options.seeds[s])},
                };
                table.reports[c][d].push_back(
                    evaluate(run, ds.qrels, options.top_k, ds.name, config_fingerprint(fp)));
            }
        }
    }
    return table;
}

namespace {

std::string csv_field(std::string_view s)
{
    if (s.find_first_of(",\"\n") == std::string_view::npos) {
        return std::string(s);
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

std::string csv_number(double v)
{
    if (std::isnan(v)) {
        return "";
    }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::vector<std::string> split_csv_line(std::string const& line)
{
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char const c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    out.push_back(std::move(field));
    return out;
}

}  // namespace

void write_ablation_csv(std::filesystem::path const& path, AblationTable const& table)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(errc::io, "cannot write " + path.string());
    }
    out << "Setting";
    for (auto const& name : table.datasets) {
        out << ',' << csv_field(name);
    }
    out << ",Average\n";
    for (std::size_t c = 0; c < table.cells.size(); ++c) {
        out << csv_field(table.cells[c].row_label());
        for (std::size_t d = 0; d < table.datasets.size(); ++d) {
            out << ',' << csv_number(table.value(c, d));
        }
        out << ',' << csv_number(table.average(c)) << '\n';
    }
}

CsvTable read_csv(std::filesystem::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(errc::io, "cannot open " + path.string());
    }
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (first) {
            table.header = split_csv_line(line);
            first = false;
        } else {
            table.rows.push_back(split_csv_line(line));
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Score@Top-1

double top1_similarity(IndexedPool const& pool, EmbedderParams const& params, std::string const& query)
{
    if (pool.pool.examples.empty()) {
        raise(errc::empty_pool, "Score@Top-1 needs a nonempty pool");
    }
    auto const hits = pool.bm25.top_k(query, 1);
    return cosine(embed(params, query), embed(params, pool.pool.examples[hits.front().ordinal].query));
}

std::vector<ScoreBucket> score_at_top1(std::vector<Query> const& queries, IndexedPool const& pool,
                                       EmbedderParams const& params, EvalReport const& baseline,
                                       EvalReport const& treatment, double bin_width)
{
    if (pool.pool.examples.empty()) {
        raise(errc::empty_pool, "Score@Top-1 needs a nonempty pool");
    }
    if (!(bin_width > 0.0 && bin_width <= 1.0)) {
        raise(errc::invalid_argument, "bin width must be in (0, 1]");
    }
    auto const n_bins = static_cast<std::size_t>(std::ceil(1.0 / bin_width - 1e-9));
    std::vector<ScoreBucket> buckets(n_bins);
    std::vector<double> delta_sum(n_bins, 0.0);
    for (std::size_t b = 0; b < n_bins; ++b) {
        buckets[b].lower = static_cast<double>(b) * bin_width;
        buckets[b].upper = b + 1 == n_bins ? 1.0 : static_cast<double>(b + 1) * bin_width;
    }
    for (auto const& q : queries) {
        auto const a = baseline.per_query.find(q.id);
        auto const t = treatment.per_query.find(q.id);
        if (a == baseline.per_query.end() || t == treatment.per_query.end()) {
            continue;
        }
        double const s = std::clamp(top1_similarity(pool, params, q.text), 0.0, 1.0);
        auto const b = std::min(n_bins - 1, static_cast<std::size_t>(std::floor(s / bin_width)));
        ++buckets[b].n;
        delta_sum[b] += t->second - a->second;
    }
    for (std::size_t b = 0; b < n_bins; ++b) {
        if (buckets[b].n > 0) {
            buckets[b].mean_ndcg = delta_sum[b] / static_cast<double>(buckets[b].n);
        }
    }
    return buckets;
}

}  // namespace rare
