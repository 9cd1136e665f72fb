#include "rare/bm25.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "rare/binary_io.hpp"
#include "rare/error.hpp"

namespace rare {

namespace {

/// Length of the whitespace code point starting at `s[i]`, or 0.
std::size_t whitespace_len(std::string_view s, std::size_t i)
{
    auto const c = static_cast<unsigned char>(s[i]);
    if (c == ' ' || (c >= '\t' && c <= '\r')) {
        return 1;
    }
    auto byte = [&](std::size_t k) -> unsigned {
        return i + k < s.size() ? static_cast<unsigned char>(s[i + k]) : 0U;
    };
    if (c == 0xC2 && (byte(1) == 0x85 || byte(1) == 0xA0)) {
        return 2;  // NEL, NBSP
    }
    if (c == 0xE1 && byte(1) == 0x9A && byte(2) == 0x80) {
        return 3;  // OGHAM SPACE MARK
    }
    if (c == 0xE2 && byte(1) == 0x80) {
        unsigned const t = byte(2);
        if ((t >= 0x80 && t <= 0x8A) || t == 0xA8 || t == 0xA9 || t == 0xAF) {
            return 3;  // EN QUAD .. HAIR SPACE, LINE/PARAGRAPH SEPARATOR, NNBSP
        }
    }
    if (c == 0xE2 && byte(1) == 0x81 && byte(2) == 0x9F) {
        return 3;  // MEDIUM MATHEMATICAL SPACE
    }
    if (c == 0xE3 && byte(1) == 0x80 && byte(2) == 0x80) {
        return 3;  // IDEOGRAPHIC SPACE
    }
    return 0;
}

bool is_ascii_punct(char c)
{
    auto const u = static_cast<unsigned char>(c);
    return u < 0x80 && std::ispunct(u) != 0;
}

void push_token(TokenList& out, std::string_view raw)
{
    std::size_t lo = 0;
    std::size_t hi = raw.size();
    while (lo < hi && is_ascii_punct(raw[lo])) {
        ++lo;
    }
    while (hi > lo && is_ascii_punct(raw[hi - 1])) {
        --hi;
    }
    if (lo == hi) {
        return;
    }
    std::string tok(raw.substr(lo, hi - lo));
    for (auto& ch : tok) {
        auto const u = static_cast<unsigned char>(ch);
        if (u >= 'A' && u <= 'Z') {
            ch = static_cast<char>(u - 'A' + 'a');
        }
    }
    out.push_back(std::move(tok));
}

}  // namespace

TokenList tokenize(std::string_view text)
{
    TokenList out;
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t const ws = whitespace_len(text, i);
        if (ws > 0) {
            if (i > start) {
                push_token(out, text.substr(start, i - start));
            }
            i += ws;
            start = i;
        } else {
            ++i;
        }
    }
    if (start < text.size()) {
        push_token(out, text.substr(start));
    }
    return out;
}

Bm25Index Bm25Index::build(std::vector<std::string> const& items, Bm25Params params)
{
    if (items.empty()) {
        raise(errc::empty_collection, "BM25 index needs at least one item");
    }
    if (!(params.k1 > 0.0) || !(params.b >= 0.0 && params.b <= 1.0)) {
        raise(errc::invalid_argument, "BM25 requires k1 > 0 and b in [0, 1]");
    }
    Bm25Index index;
    index.m_params = params;
    index.m_doc_lengths.reserve(items.size());
    std::uint64_t total = 0;
    for (std::size_t ord = 0; ord < items.size(); ++ord) {
        auto const tokens = tokenize(items[ord]);
        std::map<std::string_view, std::uint32_t> tf;
        for (auto const& t : tokens) {
            ++tf[t];
        }
        for (auto const& [term, count] : tf) {
            index.m_postings[std::string(term)].push_back({static_cast<std::uint32_t>(ord), count});
        }
        index.m_doc_lengths.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += tokens.size();
    }
    index.m_avg_len = static_cast<double>(total) / static_cast<double>(items.size());
    return index;
}

double Bm25Index::idf(std::string const& term) const
{
    auto it = m_postings.find(term);
    if (it == m_postings.end()) {
        return 0.0;
    }
    auto const n = static_cast<double>(size());
    auto const df = static_cast<double>(it->second.size());
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double Bm25Index::term_weight(double idf, std::uint32_t tf, std::size_t ordinal) const
{
    double const f = tf;
    // All-empty items give avg_len 0; every length is then 0 as well.
    double const rel_len = m_avg_len > 0.0 ? m_doc_lengths[ordinal] / m_avg_len : 0.0;
    double const norm = m_params.k1 * (1.0 - m_params.b + m_params.b * rel_len);
    return idf * f * (m_params.k1 + 1.0) / (f + norm);
}

double Bm25Index::score(TokenList const& query, std::size_t ordinal) const
{
    if (ordinal >= size()) {
        raise(errc::ordinal_out_of_range,
              std::to_string(ordinal) + " >= " + std::to_string(size()));
    }
    double total = 0.0;
    for (auto const& term : query) {
        auto it = m_postings.find(term);
        if (it == m_postings.end()) {
            continue;
        }
        auto const& list = it->second;
        auto pos = std::lower_bound(list.begin(), list.end(), ordinal,
                                    [](Posting const& p, std::size_t o) { return p.ordinal < o; });
        if (pos != list.end() && pos->ordinal == ordinal) {
            total += term_weight(idf(term), pos->tf, ordinal);
        }
    }
    return total;
}

std::vector<double> Bm25Index::score_all(TokenList const& query) const
{
    std::vector<double> scores(size(), 0.0);
    for (auto const& term : query) {
        auto it = m_postings.find(term);
        if (it == m_postings.end()) {
            continue;
        }
        double const w = idf(term);
        for (auto const& p : it->second) {
            scores[p.ordinal] += term_weight(w, p.tf, p.ordinal);
        }
    }
    return scores;
}

std::vector<ScoredOrdinal> Bm25Index::top_k(std::string_view query, std::size_t k,
                                            std::optional<std::size_t> exclude) const
{
    if (k == 0) {
        return {};
    }
    auto const scores = score_all(tokenize(query));
    std::vector<ScoredOrdinal> candidates;
    candidates.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (exclude && *exclude == i) {
            continue;
        }
        candidates.push_back({i, scores[i]});
    }
    auto const better = [](ScoredOrdinal const& a, ScoredOrdinal const& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.ordinal < b.ordinal;
    };
    std::size_t const n = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n),
                      candidates.end(), better);
    candidates.resize(n);
    return candidates;
}

// RBM1 layout (little-endian):
//   "RBM1" | u32 version | f64 k1 | f64 b | u64 n_items | u32 len[n_items]
//   | u64 n_terms | n_terms x (string term | u64 n_postings | (u32 ordinal, u32 tf)...)
// Strings are u32 byte length followed by UTF-8 bytes. Terms are written in
// byte-lexicographic order so the file is deterministic.
namespace {
constexpr char bm25_magic[] = "RBM1";
constexpr std::uint32_t bm25_version = 1;
}  // namespace

void Bm25Index::save(std::filesystem::path const& path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(errc::io, "cannot write " + path.string());
    }
    out.write(bm25_magic, 4);
    binary::put_u32(out, bm25_version);
    binary::put_f64(out, m_params.k1);
    binary::put_f64(out, m_params.b);
    binary::put_u64(out, m_doc_lengths.size());
    for (auto len : m_doc_lengths) {
        binary::put_u32(out, len);
    }
    std::vector<std::string const*> terms;
    terms.reserve(m_postings.size());
    for (auto const& [term, _] : m_postings) {
        terms.push_back(&term);
    }
    std::sort(terms.begin(), terms.end(), [](auto* a, auto* b) { return *a < *b; });
    binary::put_u64(out, terms.size());
    for (auto const* term : terms) {
        binary::put_string(out, *term);
        auto const& list = m_postings.at(*term);
        binary::put_u64(out, list.size());
        for (auto const& p : list) {
            binary::put_u32(out, p.ordinal);
            binary::put_u32(out, p.tf);
        }
    }
    if (!out) {
        raise(errc::io, "write failed: " + path.string());
    }
}

Bm25Index Bm25Index::load(std::filesystem::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(errc::io, "cannot open " + path.string());
    }
    binary::reader r(in, path.string());
    r.expect_magic(std::string_view(bm25_magic, 4));
    r.expect_version(bm25_version);
    Bm25Index index;
    index.m_params.k1 = r.f64();
    index.m_params.b = r.f64();
    std::uint64_t const n = r.u64();
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        index.m_doc_lengths.push_back(r.u32());
        total += index.m_doc_lengths.back();
    }
    if (n == 0) {
        raise(errc::empty_collection, path.string());
    }
    index.m_avg_len = static_cast<double>(total) / static_cast<double>(n);
    std::uint64_t const n_terms = r.u64();
    for (std::uint64_t t = 0; t < n_terms; ++t) {
        auto term = r.string();
        std::uint64_t const count = r.u64();
        std::vector<Posting> list;
        for (std::uint64_t j = 0; j < count; ++j) {
            Posting p{r.u32(), r.u32()};
            if (p.ordinal >= n) {
                raise(errc::ordinal_out_of_range, path.string() + ": posting ordinal");
            }
            list.push_back(p);
        }
        index.m_postings.emplace(std::move(term), std::move(list));
    }
    return index;
}

}  // namespace rare
