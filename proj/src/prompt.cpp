#include "rare/prompt.hpp"

#include <numeric>

#include "rare/error.hpp"
#include "rare/rng.hpp"

namespace rare {

namespace {

std::string query_payload(std::string_view q, bool brackets)
{
    if (brackets) {
        std::string out;
        out.reserve(q.size() + 2);
        out += '[';
        out += q;
        out += ']';
        return out;
    }
    return std::string(q);
}

std::string labeled(std::string_view label, std::string_view payload)
{
    std::string out(label);
    out += payload;
    return out;
}

std::string join(std::vector<std::string> const& segments)
{
    std::string out;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (i > 0) {
            out += segment_separator;
        }
        out += segments[i];
    }
    return out;
}

AugmentedQuery finish(std::vector<std::string> const& segments, std::size_t n_examples,
                      PromptFormat const& format)
{
    AugmentedQuery aq;
    aq.text = join(segments);
    aq.n_examples = n_examples;
    aq.format = format;
    aq.approx_len = whitespace_token_count(aq.text);
    return aq;
}

}  // namespace

std::size_t whitespace_token_count(std::string_view text)
{
    std::size_t count = 0;
    bool in_token = false;
    for (char c : text) {
        bool const ws = c == ' ' || (c >= '\t' && c <= '\r');
        if (!ws && !in_token) {
            ++count;
        }
        in_token = !ws;
    }
    return count;
}

std::vector<std::string> prompt_segments(std::string_view rendered)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = rendered.find(segment_separator, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(rendered.substr(start));
            return out;
        }
        out.emplace_back(rendered.substr(start, pos - start));
        start = pos + segment_separator.size();
    }
}

AugmentedQuery render_inst(std::string_view instruction, std::string_view query,
                           PromptFormat const& format)
{
    if (query.empty()) {
        raise(errc::empty_query, "target query is empty");
    }
    std::vector<std::string> segments;
    if (!instruction.empty()) {
        segments.push_back(labeled("Instruct: ", instruction));
    }
    segments.push_back(labeled("Query: ", query_payload(query, format.bracket_queries)));
    return finish(segments, 0, format);
}

AugmentedQuery render_inst_ic(std::string_view instruction, std::span<ICExample const> examples,
                              std::string_view query, PromptFormat const& format)
{
    if (query.empty()) {
        raise(errc::empty_query, "target query is empty");
    }
    if (format.kind == FormatKind::inst || examples.empty()) {
        return render_inst(instruction, query, format);
    }
    bool const br = format.bracket_queries;
    std::vector<std::string> segments;
    if (!instruction.empty()) {
        segments.push_back(labeled("Instruct: ", instruction));
    }

    switch (format.kind) {
    case FormatKind::inst:
    case FormatKind::inst_ic:
        for (auto const& ex : examples) {
            segments.push_back(labeled("Query: ", query_payload(ex.query, br)));
            segments.push_back(labeled("Document: ", ex.positive));
        }
        break;
    case FormatKind::queries_only:
        for (auto const& ex : examples) {
            segments.push_back(labeled("Query: ", query_payload(ex.query, br)));
        }
        break;
    case FormatKind::doc_only:
        for (auto const& ex : examples) {
            segments.push_back(labeled("Document: ", ex.positive));
        }
        break;
    case FormatKind::shuffle_c: {
        std::vector<std::size_t> doc_of(examples.size());
        std::iota(doc_of.begin(), doc_of.end(), std::size_t{0});
        rng gen(format.shuffle_seed);
        gen.shuffle(doc_of);
        for (std::size_t j = 0; j < examples.size(); ++j) {
            segments.push_back(labeled("Query: ", query_payload(examples[j].query, br)));
            segments.push_back(labeled("Document: ", examples[doc_of[j]].positive));
        }
        break;
    }
    case FormatKind::shuffle_nc: {
        std::vector<std::string> pieces;
        for (auto const& ex : examples) {
            pieces.push_back(labeled("Query: ", query_payload(ex.query, br)));
            pieces.push_back(labeled("Document: ", ex.positive));
        }
        rng gen(format.shuffle_seed);
        gen.shuffle(pieces);
        for (auto& p : pieces) {
            segments.push_back(std::move(p));
        }
        break;
    }
    case FormatKind::inst_ic_neg:
        for (auto const& ex : examples) {
            if (!ex.negative) {
                raise(errc::missing_negative, "example query '" + ex.query + "' has no negative");
            }
            segments.push_back(labeled("Query: ", query_payload(ex.query, br)));
            segments.push_back(labeled("Positive Document: ", ex.positive));
            segments.push_back(labeled("Negative Document: ", *ex.negative));
        }
        break;
    }

    segments.push_back(labeled("Query: ", query_payload(query, br)));
    return finish(segments, examples.size(), format);
}

std::string_view to_string(FormatKind kind) noexcept
{
    switch (kind) {
    case FormatKind::inst: return "inst";
    case FormatKind::inst_ic: return "inst+ic";
    case FormatKind::queries_only: return "queries-only";
    case FormatKind::doc_only: return "doc-only";
    case FormatKind::shuffle_nc: return "shuffle-nc";
    case FormatKind::shuffle_c: return "shuffle-c";
    case FormatKind::inst_ic_neg: return "inst+ic+neg";
    }
    return "inst";
}

FormatKind parse_format_kind(std::string_view name)
{
    for (auto kind : {FormatKind::inst, FormatKind::inst_ic, FormatKind::queries_only,
                      FormatKind::doc_only, FormatKind::shuffle_nc, FormatKind::shuffle_c,
                      FormatKind::inst_ic_neg}) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    raise(errc::invalid_argument, "unknown format '" + std::string(name) + "'");
}

}  // namespace rare
