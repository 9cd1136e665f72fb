#include <doctest.h>

#include <algorithm>

#include "prompt_golden.hpp"
#include "rare/prompt.hpp"
#include "rare/rng.hpp"
#include "support.hpp"

using namespace rare;

namespace {

std::vector<std::string> sorted_segments(std::string const& text)
{
    auto s = prompt_segments(text);
    std::sort(s.begin(), s.end());
    return s;
}

}  // namespace

TEST_CASE("inst template")
{
    CHECK(render_inst("Retrieve relevant passages", "what is bm25").text
          == "Instruct: Retrieve relevant passages ; Query: what is bm25");
    CHECK(render_inst("", "what is bm25").text == "Query: what is bm25");
    CHECK_ERRC(render_inst("T", ""), errc::empty_query);
    auto aq = render_inst("Retrieve relevant passages", "what is bm25");
    CHECK(aq.n_examples == 0);
    CHECK(aq.approx_len == 9);
}

TEST_CASE("inst+ic template")
{
    std::vector<ICExample> ex{{"a", "b", std::nullopt}};
    CHECK(render_inst_ic("T", ex, "c", {FormatKind::inst_ic}).text == "Instruct: T ; Query: a ; Document: b ; Query: c");
    CHECK(render_inst_ic("", ex, "c", {FormatKind::inst_ic}).text == "Query: a ; Document: b ; Query: c");
    CHECK(render_inst_ic("T", {}, "c", {FormatKind::inst_ic}).text == render_inst("T", "c").text);
    CHECK_ERRC(render_inst_ic("T", ex, "", {FormatKind::inst_ic}), errc::empty_query);
}

TEST_CASE("golden renderings of every format")
{
    for (auto const& c : golden::cases) {
        PromptFormat f{c.kind, c.brackets, golden::shuffle_seed};
        CAPTURE(to_string(c.kind));
        auto aq = c.kind == FormatKind::inst ? render_inst("T", "q", f) : render_inst_ic("T", golden::examples(), "q", f);
        CHECK(aq.text == c.text);
        CHECK(aq.approx_len == whitespace_token_count(aq.text));
    }
}

TEST_CASE("zero examples degenerate to inst for every kind")
{
    for (auto kind : {FormatKind::inst, FormatKind::inst_ic, FormatKind::queries_only, FormatKind::doc_only,
                      FormatKind::shuffle_nc, FormatKind::shuffle_c, FormatKind::inst_ic_neg}) {
        for (bool br : {false, true}) {
            PromptFormat f{kind, br, 3};
            CHECK(render_inst_ic("T", {}, "q", f).text == render_inst("T", "q", f).text);
        }
    }
}

TEST_CASE("bracketed queries")
{
    PromptFormat f{FormatKind::inst, true, 0};
    CHECK(render_inst("Retrieve the answer", "2+2", f).text == "Instruct: Retrieve the answer ; Query: [2+2]");
    std::vector<ICExample> ex{{"a", "b", std::string("n")}};
    f.kind = FormatKind::inst_ic_neg;
    CHECK(render_inst_ic("T", ex, "c", f).text
          == "Instruct: T ; Query: [a] ; Positive Document: b ; Negative Document: n ; Query: [c]");
}

TEST_CASE("inst+ic+neg needs negatives")
{
    std::vector<ICExample> ex{{"a", "b", std::string("n")}, {"x", "y", std::nullopt}};
    CHECK_ERRC(render_inst_ic("T", ex, "c", {FormatKind::inst_ic_neg}), errc::missing_negative);
}

TEST_CASE("shuffle-c keeps the segment multiset and alternation")
{
    auto const& ex = golden::examples();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        PromptFormat sc{FormatKind::shuffle_c, false, seed};
        PromptFormat ic{FormatKind::inst_ic, false, seed};
        auto const shuffled = render_inst_ic("T", ex, "q", sc).text;
        CHECK(sorted_segments(shuffled) == sorted_segments(render_inst_ic("T", ex, "q", ic).text));
        auto seg = prompt_segments(shuffled);
        for (std::size_t j = 0; j < ex.size(); ++j) {
            CHECK(seg[1 + 2 * j] == "Query: " + ex[j].query);
            CHECK(seg[2 + 2 * j].rfind("Document: ", 0) == 0);
        }
        // Pairing follows the seeded permutation.
        std::vector<std::size_t> perm{0, 1, 2};
        rng gen(seed);
        gen.shuffle(perm);
        for (std::size_t j = 0; j < ex.size(); ++j) {
            CHECK(seg[2 + 2 * j] == "Document: " + ex[perm[j]].positive);
        }
        CHECK(render_inst_ic("T", ex, "q", sc).text == shuffled);
    }
}

TEST_CASE("shuffle-nc keeps the segment multiset")
{
    auto const& ex = golden::examples();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto a = render_inst_ic("T", ex, "q", {FormatKind::shuffle_nc, false, seed}).text;
        CHECK(sorted_segments(a) == sorted_segments(render_inst_ic("T", ex, "q", {FormatKind::inst_ic}).text));
        CHECK(prompt_segments(a).front() == "Instruct: T");
    }
}

TEST_CASE("properties over all kinds")
{
    auto const& ex = golden::examples();
    std::vector<ICExample> rev(ex.rbegin(), ex.rend());
    auto const inst = render_inst("T", "target words", {FormatKind::inst});
    for (auto kind : {FormatKind::inst_ic, FormatKind::queries_only, FormatKind::doc_only, FormatKind::shuffle_nc,
                      FormatKind::shuffle_c, FormatKind::inst_ic_neg}) {
        PromptFormat f{kind, false, 5};
        auto a = render_inst_ic("T", ex, "target words", f);
        CHECK(a.text == render_inst_ic("T", ex, "target words", f).text);
        CHECK(prompt_segments(a.text).back() == "Query: target words");
        CHECK(a.n_examples == ex.size());
        CHECK(a.approx_len > inst.approx_len);
        if (kind != FormatKind::shuffle_nc && kind != FormatKind::shuffle_c) {
            CHECK(sorted_segments(render_inst_ic("T", rev, "target words", f).text) == sorted_segments(a.text));
        }
    }
}

TEST_CASE("format names")
{
    for (auto kind : {FormatKind::inst, FormatKind::inst_ic, FormatKind::queries_only, FormatKind::doc_only,
                      FormatKind::shuffle_nc, FormatKind::shuffle_c, FormatKind::inst_ic_neg}) {
        CHECK(parse_format_kind(to_string(kind)) == kind);
    }
    CHECK_ERRC(parse_format_kind("chat"), errc::invalid_argument);
}

TEST_CASE("segments and token counts")
{
    CHECK(prompt_segments("a ; b ; c") == std::vector<std::string>{"a", "b", "c"});
    CHECK(whitespace_token_count("  a  b\tc\n") == 3);
    CHECK(whitespace_token_count("") == 0);
}
