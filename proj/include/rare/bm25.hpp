#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rare {

using TokenList = std::vector<std::string>;

/// Lowercases, splits on whitespace (ASCII and the common Unicode spaces),
/// strips leading/trailing ASCII punctuation from each token and drops
/// tokens left empty. No stemming, no stopwords.
[[nodiscard]] TokenList tokenize(std::string_view text);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;

    friend bool operator==(Bm25Params const&, Bm25Params const&) = default;
};

struct Posting {
    std::uint32_t ordinal;
    std::uint32_t tf;

    friend bool operator==(Posting const&, Posting const&) = default;
};

struct ScoredOrdinal {
    std::size_t ordinal;
    double score;
};

/// Okapi BM25 over a fixed list of short texts (example-pool queries).
///
/// idf(t) = ln(1 + (N - n_t + 0.5) / (n_t + 0.5))
/// w(t, i) = idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len_i / avg_len))
class Bm25Index {
  public:
    static Bm25Index build(std::vector<std::string> const& items, Bm25Params params = {});

    /// Sum of term weights over query tokens (repeats count again); terms
    /// unknown to the index contribute 0.
    [[nodiscard]] double score(TokenList const& query, std::size_t ordinal) const;

    /// Scores for every item, accumulated through the postings.
    [[nodiscard]] std::vector<double> score_all(TokenList const& query) const;

    /// Best `k` items by (score desc, ordinal asc), skipping `exclude`.
    [[nodiscard]] std::vector<ScoredOrdinal> top_k(std::string_view query, std::size_t k,
                                                  std::optional<std::size_t> exclude = {}) const;

    [[nodiscard]] double idf(std::string const& term) const;

    [[nodiscard]] std::size_t size() const noexcept { return m_doc_lengths.size(); }
    [[nodiscard]] double avg_len() const noexcept { return m_avg_len; }
    [[nodiscard]] Bm25Params params() const noexcept { return m_params; }
    [[nodiscard]] std::vector<std::uint32_t> const& doc_lengths() const noexcept { return m_doc_lengths; }
    [[nodiscard]] std::unordered_map<std::string, std::vector<Posting>> const& postings() const noexcept
    {
        return m_postings;
    }

    void save(std::filesystem::path const& path) const;
    static Bm25Index load(std::filesystem::path const& path);

    friend bool operator==(Bm25Index const&, Bm25Index const&) = default;

  private:
    [[nodiscard]] double term_weight(double idf, std::uint32_t tf, std::size_t ordinal) const;

    Bm25Params m_params;
    std::unordered_map<std::string, std::vector<Posting>> m_postings;
    std::vector<std::uint32_t> m_doc_lengths;
    double m_avg_len = 0.0;
};

}  // namespace rare
