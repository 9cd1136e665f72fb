#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rare/data.hpp"
#include "rare/embedder.hpp"
#include "rare/prompt.hpp"
#include "rare/trainer.hpp"

namespace rare {

struct RankedEntry {
    std::string doc_id;
    double score;

    friend bool operator==(RankedEntry const&, RankedEntry const&) = default;
};

/// Scores non-increasing; equal scores ordered by ascending doc id.
using RankedList = std::vector<RankedEntry>;

/// query id -> ranking. Ordered so run files are deterministic.
using Run = std::map<std::string, RankedList>;

/// Exact search over an n x D row-major matrix of unit (or zero) embeddings.
class FlatIndex {
  public:
    FlatIndex() = default;
    FlatIndex(std::vector<std::string> ids, std::vector<double> matrix, std::size_t dim);

    [[nodiscard]] std::size_t size() const noexcept { return m_ids.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return m_dim; }
    [[nodiscard]] std::vector<std::string> const& ids() const noexcept { return m_ids; }
    [[nodiscard]] std::vector<double> const& matrix() const noexcept { return m_matrix; }
    [[nodiscard]] std::span<double const> row(std::size_t i) const;

    void save(std::filesystem::path const& path) const;
    static FlatIndex load(std::filesystem::path const& path);

    friend bool operator==(FlatIndex const&, FlatIndex const&) = default;

  private:
    std::vector<std::string> m_ids;
    std::vector<double> m_matrix;
    std::size_t m_dim = 0;
};

/// Row i = embed(title + " " + text of doc i), in corpus order.
[[nodiscard]] FlatIndex build_flat_index(std::vector<Document> const& corpus,
                                         EmbedderParams const& params, std::size_t threads = 1);

/// Exact top-K by dot product; K larger than the index returns everything.
[[nodiscard]] RankedList search(FlatIndex const& index, Embedding const& query, std::size_t top_k);

struct InferenceOptions {
    PromptFormat format{FormatKind::inst_ic};
    std::size_t k = 5;        // in-context examples per query
    std::size_t top_k = 10;   // documents returned per query
    Selection selection = Selection::retrieved;
    std::uint64_t seed = 0;   // random selection only
    std::size_t threads = 1;
};

/// One query of the inference pipeline: select examples, render, encode, search.
struct QueryTrace {
    AugmentedQuery rendered;
    std::vector<ICExample> examples;
    RankedList ranking;
};

[[nodiscard]] QueryTrace infer_one(Query const& query, std::string_view instruction,
                                   IndexedPool const* pool, FlatIndex const& index,
                                   EmbedderParams const& params, InferenceOptions const& options,
                                   rng& gen);

/// Runs every query through `infer_one`. `pool` may be null when the format
/// or k needs no examples. Random selection draws from a per-query stream
/// derived from `options.seed` and the query's position, so results do not
/// depend on thread scheduling.
[[nodiscard]] Run run_inference(std::vector<Query> const& queries, std::string_view instruction,
                                IndexedPool const* pool, FlatIndex const& index,
                                EmbedderParams const& params, InferenceOptions const& options);

/// TREC run lines: `qid Q0 docid rank score tag`, rank from 1.
void write_trec_run(std::filesystem::path const& path, Run const& run, std::string_view tag);
[[nodiscard]] Run load_trec_run(std::filesystem::path const& path);

[[nodiscard]] bool uses_examples(PromptFormat const& format, std::size_t k) noexcept;

}  // namespace rare
