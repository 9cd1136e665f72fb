#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rare/data.hpp"
#include "rare/retrieve.hpp"

namespace rare {

/// nDCG@K with gain 2^grade - 1 and discount 1/log2(rank + 1), rank from 1.
/// Unjudged documents have gain 0. Returns 0 when nothing in `judged` is
/// relevant (see `has_relevant`).
[[nodiscard]] double ndcg_at_k(RankedList const& ranked, std::map<std::string, int> const& judged,
                               std::size_t k);

[[nodiscard]] bool has_relevant(std::map<std::string, int> const& judged) noexcept;

struct EvalReport {
    std::string dataset;
    std::size_t k = 10;
    std::string config_fingerprint;
    /// Only queries with at least one relevant judgment.
    std::map<std::string, double> per_query;
    /// Mean of per_query; empty when no query was evaluated.
    std::optional<double> mean;
    /// Run queries that had no relevant judgment, excluded from the mean.
    std::vector<std::string> without_relevant;
};

/// Scores every query of the run. Queries judged but absent from the run
/// are ignored, as trec_eval does by default.
[[nodiscard]] EvalReport evaluate(Run const& run, QRels const& qrels, std::size_t k = 10,
                                  std::string dataset = {}, std::string fingerprint = {});

void write_report(std::filesystem::path const& path, EvalReport const& report);
[[nodiscard]] EvalReport load_report(std::filesystem::path const& path);

/// Stable hex digest of a flat key=value configuration.
[[nodiscard]] std::string config_fingerprint(std::map<std::string, std::string> const& config);

// ---------------------------------------------------------------------------
// Ablations

struct AblationCell {
    PromptFormat format{FormatKind::inst_ic};
    std::size_t k = 5;
    Selection selection = Selection::retrieved;
    std::string label;  // row name; derived from the settings when empty

    [[nodiscard]] std::string row_label() const;
};

/// Parses `format:k:selection`, e.g. `inst+ic:5:retrieved`.
[[nodiscard]] AblationCell parse_cell(std::string_view spec);

struct EvalDataset {
    std::string name;
    std::string instruction;
    std::vector<Document> corpus;
    std::vector<Query> queries;
    QRels qrels;
    std::optional<ExamplePool> pool;
};

struct AblationOptions {
    std::size_t top_k = 10;              // nDCG cutoff and retrieval depth
    std::vector<std::uint64_t> seeds{0};  // random selection averages over these
    std::size_t threads = 1;
    Bm25Params bm25;
};

struct AblationTable {
    std::vector<std::string> datasets;
    std::vector<AblationCell> cells;
    /// reports[cell][dataset][seed]
    std::vector<std::vector<std::vector<EvalReport>>> reports;

    /// Mean over seeds of each report's mean; NaN when nothing was evaluated.
    [[nodiscard]] double value(std::size_t cell, std::size_t dataset) const;
    /// Mean of `value` over the datasets with a value.
    [[nodiscard]] double average(std::size_t cell) const;
};

[[nodiscard]] AblationTable ablate(std::vector<AblationCell> const& grid,
                                   std::vector<EvalDataset> const& datasets, EmbedderParams const& params,
                                   AblationOptions const& options = {});

/// Header `Setting,<datasets...>,Average`; one row per cell.
void write_ablation_csv(std::filesystem::path const& path, AblationTable const& table);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

[[nodiscard]] CsvTable read_csv(std::filesystem::path const& path);

// ---------------------------------------------------------------------------
// Score@Top-1

struct ScoreBucket {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t n = 0;
    double mean_ndcg = 0.0;  // mean per-query nDCG delta (treatment - baseline)
};

/// Cosine between the query and its BM25 top-1 pool query, both encoded
/// with `params`. No self-exclusion.
[[nodiscard]] double top1_similarity(IndexedPool const& pool, EmbedderParams const& params,
                                     std::string const& query);

/// Buckets the queries evaluated in both reports by Score@Top-1 into
/// equal-width bins over [0, 1] and averages the per-query nDCG delta.
[[nodiscard]] std::vector<ScoreBucket> score_at_top1(std::vector<Query> const& queries,
                                                     IndexedPool const& pool,
                                                     EmbedderParams const& params,
                                                     EvalReport const& baseline,
                                                     EvalReport const& treatment,
                                                     double bin_width = 0.1);

}  // namespace rare
