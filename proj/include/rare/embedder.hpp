#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace rare {

/// Sparse feature vector: (bucket, weight) pairs sorted by bucket, buckets unique.
struct SparseFeatures {
    std::vector<std::pair<std::uint32_t, double>> entries;

    [[nodiscard]] bool empty() const noexcept { return entries.empty(); }
    [[nodiscard]] double sum() const noexcept;
    [[nodiscard]] std::vector<double> dense(std::size_t dim) const;
};

struct Embedding {
    std::vector<double> values;

    [[nodiscard]] std::size_t dim() const noexcept { return values.size(); }
    [[nodiscard]] bool is_zero() const noexcept;

    friend bool operator==(Embedding const&, Embedding const&) = default;
};

struct EmbedderConfig {
    std::uint32_t hash_dim = 1U << 16U;
    std::uint32_t embed_dim = 64;
    std::vector<std::uint32_t> ngram_orders{1, 2};
    std::uint64_t seed = 0;
    std::optional<std::uint32_t> max_tokens;
};

/// Hashed n-gram features followed by a learnable D x V projection.
///
/// The projection is stored column-major: column `j` (the D weights of hash
/// bucket `j`) is contiguous, so projecting a sparse feature vector touches
/// only the columns of its active buckets.
class EmbedderParams {
  public:
    EmbedderParams() = default;

    /// Uniform init in [-1/sqrt(V), 1/sqrt(V)] drawn from `config.seed`.
    static EmbedderParams random(EmbedderConfig const& config);
    /// All-zero projection; used as the shape template for gradients.
    static EmbedderParams zeros(EmbedderConfig const& config);

    [[nodiscard]] std::uint32_t hash_dim() const noexcept { return m_hash_dim; }
    [[nodiscard]] std::uint32_t embed_dim() const noexcept { return m_embed_dim; }
    [[nodiscard]] std::vector<std::uint32_t> const& ngram_orders() const noexcept { return m_orders; }
    [[nodiscard]] std::uint64_t hash_seed() const noexcept { return m_hash_seed; }
    [[nodiscard]] std::optional<std::uint32_t> max_tokens() const noexcept { return m_max_tokens; }
    [[nodiscard]] EmbedderConfig config() const;

    [[nodiscard]] std::span<double const> column(std::uint32_t bucket) const;
    [[nodiscard]] std::span<double> column(std::uint32_t bucket);
    [[nodiscard]] double at(std::uint32_t row, std::uint32_t bucket) const
    {
        return m_weights[static_cast<std::size_t>(bucket) * m_embed_dim + row];
    }
    double& at(std::uint32_t row, std::uint32_t bucket)
    {
        return m_weights[static_cast<std::size_t>(bucket) * m_embed_dim + row];
    }
    [[nodiscard]] std::vector<double> const& weights() const noexcept { return m_weights; }
    [[nodiscard]] std::vector<double>& weights() noexcept { return m_weights; }

    [[nodiscard]] bool all_finite() const noexcept;

    void save(std::filesystem::path const& path) const;
    static EmbedderParams load(std::filesystem::path const& path);

    friend bool operator==(EmbedderParams const&, EmbedderParams const&) = default;

  private:
    std::uint32_t m_hash_dim = 0;
    std::uint32_t m_embed_dim = 0;
    std::vector<std::uint32_t> m_orders;
    std::uint64_t m_hash_seed = 0;
    std::optional<std::uint32_t> m_max_tokens;
    std::vector<double> m_weights;
};

/// Tokenize, truncate to max_tokens, hash every n-gram of each configured
/// order into [0, V) and normalize counts by the total n-gram count.
[[nodiscard]] SparseFeatures featurize(EmbedderParams const& params, std::string_view text);

/// Intermediate values of one forward pass, kept for backpropagation.
struct Encoding {
    SparseFeatures features;
    std::vector<double> projected;  // u = W f
    double norm = 0.0;              // |u|
    Embedding embedding;            // u / |u|, or zero
};

[[nodiscard]] Encoding encode(EmbedderParams const& params, std::string_view text);
[[nodiscard]] Embedding embed(EmbedderParams const& params, std::string_view text);

/// Dot product of unit vectors, clamped to [-1, 1]; 0 if either is zero.
[[nodiscard]] double cosine(Embedding const& a, Embedding const& b);

/// Bucket of one n-gram (tokens joined in order) under the given seed.
[[nodiscard]] std::uint32_t hash_ngram(std::span<std::string const> tokens, std::uint64_t seed,
                                       std::uint32_t hash_dim);

}  // namespace rare
