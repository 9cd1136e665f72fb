#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rare/bm25.hpp"
#include "rare/data.hpp"
#include "rare/embedder.hpp"
#include "rare/prompt.hpp"
#include "rare/rng.hpp"

namespace rare {

enum class Selection { retrieved, random };

[[nodiscard]] std::string_view to_string(Selection s) noexcept;
[[nodiscard]] Selection parse_selection(std::string_view name);

/// How the candidate set of each query is assembled.
struct LossOptions {
    double temperature = 0.01;
    bool use_hard_negative = true;
    /// Add the other examples' hard negatives to the in-batch negatives.
    bool include_other_hard_negatives = false;
    /// Drop in-batch candidates whose text equals the positive or an earlier
    /// candidate, so duplicated examples do not act as negatives of each other.
    bool distinct_in_batch = true;
    std::size_t threads = 1;
};

struct TrainConfig {
    std::size_t k = 5;
    double temperature = 0.01;
    std::size_t batch_size = 32;
    std::size_t epochs = 5;
    double learning_rate = 0.5;
    double ic_mixture = 0.7;
    Selection selection = Selection::retrieved;
    PromptFormat format{FormatKind::inst_ic};
    std::uint64_t seed = 0;
    bool use_hard_negative = true;
    bool include_other_hard_negatives = false;
    bool distinct_in_batch = true;
    Bm25Params bm25;
    std::size_t threads = 1;

    [[nodiscard]] LossOptions loss_options() const
    {
        return {temperature, use_hard_negative, include_other_hard_negatives, distinct_in_batch, threads};
    }
};

/// One rendered training instance.
struct BatchItem {
    std::string query;     // rendered query (instruction and examples applied)
    std::string positive;  // bare document text
    std::string negative;  // bare document text; may be empty
};

/// Gradient with respect to the D x V projection. Only columns of buckets
/// that occur in the batch can be nonzero; those are stored densely.
class ColumnGradient {
  public:
    ColumnGradient(std::uint32_t embed_dim, std::uint32_t hash_dim)
        : m_embed_dim(embed_dim), m_hash_dim(hash_dim)
    {}

    [[nodiscard]] std::span<double> column(std::uint32_t bucket);
    [[nodiscard]] double at(std::uint32_t row, std::uint32_t bucket) const;
    [[nodiscard]] std::map<std::uint32_t, std::vector<double>> const& columns() const noexcept
    {
        return m_columns;
    }
    [[nodiscard]] std::uint32_t embed_dim() const noexcept { return m_embed_dim; }
    [[nodiscard]] std::uint32_t hash_dim() const noexcept { return m_hash_dim; }
    [[nodiscard]] bool all_finite() const noexcept;
    [[nodiscard]] bool all_zero() const noexcept;

    /// W <- W - lr * G
    void apply(EmbedderParams& params, double learning_rate) const;

  private:
    std::uint32_t m_embed_dim;
    std::uint32_t m_hash_dim;
    std::map<std::uint32_t, std::vector<double>> m_columns;
};

struct BatchLoss {
    double value = 0.0;
    ColumnGradient grads;
};

/// -log softmax of the positive among {positive, hard negative, in-batch},
/// with every similarity divided by the temperature.
[[nodiscard]] double contrastive_loss(Embedding const& query, Embedding const& positive,
                                      std::optional<Embedding> const& hard_negative,
                                      std::span<Embedding const> in_batch, double temperature);

/// Mean loss over the batch and its exact gradient with respect to W.
[[nodiscard]] BatchLoss batch_grads(std::span<BatchItem const> batch, EmbedderParams const& params,
                                    LossOptions const& options);

/// Candidate document texts for `batch[i]`, positive first.
[[nodiscard]] std::vector<std::string const*> candidate_texts(std::span<BatchItem const> batch,
                                                              std::size_t i,
                                                              LossOptions const& options);

/// Picks `k` in-context examples for `query` from `pool`.
/// Retrieved: BM25 neighbors of the query among pool queries, most similar
/// first. Random: `k` distinct pool items drawn without replacement.
[[nodiscard]] std::vector<ICExample> select_examples(ExamplePool const& pool, Bm25Index const& bm25,
                                                     std::string_view query, std::size_t k,
                                                     Selection policy, rng& gen,
                                                     std::optional<std::size_t> exclude = {});

struct EpochLog {
    std::size_t epoch;
    double mean_loss;
};

struct TrainHooks {
    /// Called with every rendered training query.
    std::function<void(AugmentedQuery const&)> on_render;
};

struct TrainResult {
    EmbedderParams params;
    std::vector<EpochLog> log;
};

/// Per-task example pool with its BM25 index over pool queries.
struct IndexedPool {
    ExamplePool pool;
    Bm25Index bm25;
    std::map<std::string, std::size_t> ordinal_of_query;  // first occurrence

    static IndexedPool build(ExamplePool pool, Bm25Params params = {});
    [[nodiscard]] std::optional<std::size_t> find(std::string const& query) const;
};

/// Renders one epoch's worth of training items (mixture coin, example
/// selection and formatting) in the given example order.
[[nodiscard]] std::vector<BatchItem> render_training_items(std::span<TrainExample const> train,
                                                           std::span<std::size_t const> order,
                                                           std::map<std::string, IndexedPool> const& pools,
                                                           TrainConfig const& config, rng& gen,
                                                           TrainHooks const& hooks = {});

/// Mini-batch SGD over the contrastive objective. Starts from `initial`.
[[nodiscard]] TrainResult train(std::span<TrainExample const> train_set,
                                std::map<std::string, ExamplePool> const& pools,
                                TrainConfig const& config, EmbedderParams initial,
                                TrainHooks const& hooks = {});

/// Mean batch loss of `params` over the training set rendered once with
/// `render_seed`, in file order, without updating anything.
[[nodiscard]] double dataset_loss(std::span<TrainExample const> train_set,
                                  std::map<std::string, ExamplePool> const& pools,
                                  TrainConfig const& config, EmbedderParams const& params,
                                  std::uint64_t render_seed);

}  // namespace rare
