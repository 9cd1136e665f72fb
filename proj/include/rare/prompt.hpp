#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rare/data.hpp"

namespace rare {

enum class FormatKind {
    inst,          // instruction + target query only
    inst_ic,       // (query, document) pairs before the target query
    queries_only,  // example queries only
    doc_only,      // example documents only
    shuffle_nc,    // all labeled example segments permuted freely
    shuffle_c,     // query/document pairing permuted, alternation kept
    inst_ic_neg,   // (query, positive, negative) triples
};

struct PromptFormat {
    FormatKind kind = FormatKind::inst_ic;
    bool bracket_queries = false;
    std::uint64_t shuffle_seed = 0;

    friend bool operator==(PromptFormat const&, PromptFormat const&) = default;
};

struct AugmentedQuery {
    std::string text;
    std::size_t n_examples = 0;
    PromptFormat format;
    std::size_t approx_len = 0;  // whitespace-separated token count of `text`
};

/// `Instruct: {t} ; Query: {q}`, or `Query: {q}` when the instruction is empty.
[[nodiscard]] AugmentedQuery render_inst(std::string_view instruction, std::string_view query,
                                         PromptFormat const& format = {FormatKind::inst});

/// Renders the target query with in-context examples per `format.kind`.
/// With no examples every kind degenerates to `render_inst`.
[[nodiscard]] AugmentedQuery render_inst_ic(std::string_view instruction,
                                            std::span<ICExample const> examples,
                                            std::string_view query, PromptFormat const& format);

/// Split of a rendered prompt on the ` ; ` separator.
[[nodiscard]] std::vector<std::string> prompt_segments(std::string_view rendered);

[[nodiscard]] std::size_t whitespace_token_count(std::string_view text);

[[nodiscard]] std::string_view to_string(FormatKind kind) noexcept;
/// Parses the CLI spelling (`inst`, `inst+ic`, `queries-only`, `doc-only`,
/// `shuffle-nc`, `shuffle-c`, `inst+ic+neg`).
[[nodiscard]] FormatKind parse_format_kind(std::string_view name);

inline constexpr std::string_view segment_separator = " ; ";

}  // namespace rare
