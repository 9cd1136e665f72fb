#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rare/retrieve.hpp"

namespace rare {

enum class BenchSetting { inst, inst_ic };

[[nodiscard]] std::string_view to_string(BenchSetting s) noexcept;
[[nodiscard]] BenchSetting parse_bench_setting(std::string_view name);

/// Stage latencies summed over all queries of one repetition, in seconds.
struct LatencyReport {
    std::string dataset;
    BenchSetting setting = BenchSetting::inst;
    std::size_t n_corpus = 0;
    double avg_q_len = 0.0;  // whitespace tokens of the rendered queries
    double nn_s = 0.0;       // BM25 neighbor lookup + example join
    double query_s = 0.0;    // render + featurize + project + normalize
    double search_s = 0.0;   // dot products + top-K selection
    double total_s = 0.0;    // nn_s + query_s + search_s
    std::optional<double> inc_factor;  // total / total of the matching inst row

    friend bool operator==(LatencyReport const&, LatencyReport const&) = default;
};

struct BenchInputs {
    std::string dataset;
    std::vector<Query> const* queries = nullptr;
    std::string instruction;
    IndexedPool const* pool = nullptr;
    FlatIndex const* index = nullptr;
    EmbedderParams const* params = nullptr;
    PromptFormat format{FormatKind::inst_ic};  // used for the inst+ic setting
    std::size_t k = 5;
    std::size_t top_k = 10;
};

/// Times every stage for each query, sums per repetition, and reports the
/// repetition with the median total. `warmup` runs are discarded.
[[nodiscard]] LatencyReport profile(BenchInputs const& inputs, BenchSetting setting,
                                    std::size_t repetitions = 5, std::size_t warmup = 1);

/// total_ic / total_inst.
[[nodiscard]] double increase_factor(double total_ic, double total_inst);

/// Fills inc_factor on every inst+ic row that has an inst row for the same dataset.
void attach_inc_factors(std::vector<LatencyReport>& reports);

/// Period of the steady clock, in seconds.
[[nodiscard]] double timer_resolution() noexcept;

/// Columns: Dataset,#Corpus,Setting,AvgQLen,NN,Query,Search,Total,Inc.
void emit_csv(std::filesystem::path const& path, std::vector<LatencyReport> const& reports);
[[nodiscard]] std::vector<LatencyReport> parse_latency_csv(std::filesystem::path const& path);

}  // namespace rare
