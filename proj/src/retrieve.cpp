#include "rare/retrieve.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "rare/binary_io.hpp"
#include "rare/error.hpp"
#include "rare/parallel.hpp"

namespace rare {

FlatIndex::FlatIndex(std::vector<std::string> ids, std::vector<double> matrix, std::size_t dim)
    : m_ids(std::move(ids)), m_matrix(std::move(matrix)), m_dim(dim)
{
    if (m_matrix.size() != m_ids.size() * m_dim) {
        raise(errc::dim_mismatch, "matrix size does not match ids x dim");
    }
}

std::span<double const> FlatIndex::row(std::size_t i) const
{
    return {m_matrix.data() + i * m_dim, m_dim};
}

FlatIndex build_flat_index(std::vector<Document> const& corpus, EmbedderParams const& params,
                           std::size_t threads)
{
    if (corpus.empty()) {
        raise(errc::empty_corpus, "cannot index an empty corpus");
    }
    std::size_t const dim = params.embed_dim();
    std::vector<std::string> ids;
    ids.reserve(corpus.size());
    for (auto const& d : corpus) {
        ids.push_back(d.id);
    }
    std::vector<double> matrix(corpus.size() * dim);
    parallel_for(corpus.size(), threads, [&](std::size_t i) {
        auto const e = embed(params, corpus[i].encoder_text());
        std::copy(e.values.begin(), e.values.end(), matrix.begin() + static_cast<std::ptrdiff_t>(i * dim));
    });
    return FlatIndex(std::move(ids), std::move(matrix), dim);
}

RankedList search(FlatIndex const& index, Embedding const& query, std::size_t top_k)
{
    if (query.dim() != index.dim()) {
        raise(errc::dim_mismatch, "query dim " + std::to_string(query.dim()) + ", index dim "
                                      + std::to_string(index.dim()));
    }
    if (top_k == 0 || index.size() == 0) {
        return {};
    }
    if (query.is_zero()) {
        warn("zero query embedding; ranking falls back to doc id order");
    }
    std::vector<std::pair<double, std::size_t>> scored(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        auto const row = index.row(i);
        double s = 0.0;
        for (std::size_t r = 0; r < row.size(); ++r) {
            s += row[r] * query.values[r];
        }
        scored[i] = {s, i};
    }
    auto const& ids = index.ids();
    auto const better = [&ids](auto const& a, auto const& b) {
        if (a.first != b.first) {
            return a.first > b.first;
        }
        return ids[a.second] < ids[b.second];
    };
    std::size_t const n = std::min(top_k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
    RankedList out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({ids[scored[i].second], scored[i].first});
    }
    return out;
}

bool uses_examples(PromptFormat const& format, std::size_t k) noexcept
{
    return k > 0 && format.kind != FormatKind::inst;
}

QueryTrace infer_one(Query const& query, std::string_view instruction, IndexedPool const* pool,
                     FlatIndex const& index, EmbedderParams const& params,
                     InferenceOptions const& options, rng& gen)
{
    QueryTrace trace;
    if (uses_examples(options.format, options.k)) {
        if (pool == nullptr) {
            raise(errc::empty_pool, "format " + std::string(to_string(options.format.kind))
                                        + " needs an example pool");
        }
        trace.examples = select_examples(pool->pool, pool->bm25, query.text, options.k,
                                         options.selection, gen);
        trace.rendered = render_inst_ic(instruction, trace.examples, query.text, options.format);
    } else {
        trace.rendered = render_inst(instruction, query.text, options.format);
    }
    trace.ranking = search(index, embed(params, trace.rendered.text), options.top_k);
    return trace;
}

Run run_inference(std::vector<Query> const& queries, std::string_view instruction, IndexedPool const* pool,
                  FlatIndex const& index, EmbedderParams const& params, InferenceOptions const& options)
{
    if (index.dim() != params.embed_dim()) {
        raise(errc::dim_mismatch, "index was built with a different embedding dimension");
    }
    std::vector<RankedList> rankings(queries.size());
    parallel_for(queries.size(), options.threads, [&](std::size_t i) {
        rng gen(mix64(options.seed ^ mix64(i)));
        rankings[i] = infer_one(queries[i], instruction, pool, index, params, options, gen).ranking;
    });
    Run run;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        run[queries[i].id] = std::move(rankings[i]);
    }
    return run;
}

namespace {

std::string format_score(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

void write_trec_run(std::filesystem::path const& path, Run const& run, std::string_view tag)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(errc::io, "cannot write " + path.string());
    }
    for (auto const& [qid, ranking] : run) {
        for (std::size_t r = 0; r < ranking.size(); ++r) {
            out << qid << " Q0 " << ranking[r].doc_id << ' ' << (r + 1) << ' '
                << format_score(ranking[r].score) << ' ' << tag << '\n';
        }
    }
    if (!out) {
        raise(errc::io, "write failed: " + path.string());
    }
}

Run load_trec_run(std::filesystem::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(errc::io, "cannot open " + path.string());
    }
    std::map<std::string, std::vector<std::pair<long, RankedEntry>>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream fields(line);
        std::string qid, q0, docid, tag;
        long rank = 0;
        double score = 0.0;
        if (!(fields >> qid >> q0 >> docid >> rank >> score >> tag)) {
            raise(errc::malformed_row, path.string() + ":" + std::to_string(line_no));
        }
        rows[qid].push_back({rank, {docid, score}});
    }
    Run run;
    for (auto& [qid, entries] : rows) {
        std::stable_sort(entries.begin(), entries.end(),
                         [](auto const& a, auto const& b) { return a.first < b.first; });
        auto& ranking = run[qid];
        for (auto& [_, e] : entries) {
            ranking.push_back(std::move(e));
        }
    }
    return run;
}

// RFI1 layout (little-endian):
//   "RFI1" | u32 version | u64 n | u64 dim | n x string id | f64 matrix[n * dim] (row-major)
namespace {
constexpr std::string_view index_magic = "RFI1";
constexpr std::uint32_t index_version = 1;
}  // namespace

void FlatIndex::save(std::filesystem::path const& path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(errc::io, "cannot write " + path.string());
    }
    out.write(index_magic.data(), static_cast<std::streamsize>(index_magic.size()));
    binary::put_u32(out, index_version);
    binary::put_u64(out, m_ids.size());
    binary::put_u64(out, m_dim);
    for (auto const& id : m_ids) {
        binary::put_string(out, id);
    }
    for (double v : m_matrix) {
        binary::put_f64(out, v);
    }
    if (!out) {
        raise(errc::io, "write failed: " + path.string());
    }
}

FlatIndex FlatIndex::load(std::filesystem::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(errc::io, "cannot open " + path.string());
    }
    binary::reader r(in, path.string());
    r.expect_magic(index_magic);
    r.expect_version(index_version);
    std::uint64_t const n = r.u64();
    std::uint64_t const dim = r.u64();
    auto const remaining = std::filesystem::file_size(path) - static_cast<std::uint64_t>(in.tellg());
    if (n * dim * sizeof(double) > remaining || n * 4 > remaining) {
        raise(errc::truncated, path.string());
    }
    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        ids.push_back(r.string());
    }
    std::vector<double> matrix(n * dim);
    for (auto& v : matrix) {
        v = r.f64();
    }
    return FlatIndex(std::move(ids), std::move(matrix), dim);
}

}  // namespace rare
