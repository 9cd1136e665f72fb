#include <doctest.h>

#include <set>

#include "rare/data.hpp"
#include "rare/error.hpp"
#include "support.hpp"

using namespace rare;
using testing::read_file;
using testing::scratch;
using testing::write_file;


TEST_CASE("corpus line maps fields directly")
{
    auto dir = scratch("corpus_fields");
    write_file(dir / "c.jsonl", R"({"_id":"d1","title":"","text":"apple banana"})" "\n");
    auto docs = load_corpus(dir / "c.jsonl");
    REQUIRE(docs.size() == 1);
    CHECK(docs[0] == Document{"d1", "", "apple banana"});
    CHECK(docs[0].encoder_text() == "apple banana");
    CHECK(Document{"d2", "Title", "body"}.encoder_text() == "Title body");
}

TEST_CASE("corpus rejects duplicate ids and malformed lines")
{
    auto dir = scratch("corpus_errors");
    write_file(dir / "dup.jsonl", R"({"_id":"d1","title":"","text":"a"})" "\n" R"({"_id":"d1","title":"","text":"b"})" "\n");
    CHECK_ERRC(load_corpus(dir / "dup.jsonl"), errc::duplicate_id);
    try {
        (void)load_corpus(dir / "dup.jsonl");
    } catch (error const& e) {
        CHECK(std::string(e.what()).find("d1") != std::string::npos);
    }
    write_file(dir / "bad.jsonl", R"({"_id":"d1","title":"","text":"a"})" "\n{not json\n");
    CHECK_ERRC(load_corpus(dir / "bad.jsonl"), errc::malformed_line);
    try {
        (void)load_corpus(dir / "bad.jsonl");
    } catch (error const& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    write_file(dir / "missing.jsonl", R"({"_id":"d1","title":""})" "\n");
    CHECK_ERRC(load_corpus(dir / "missing.jsonl"), errc::malformed_line);
    CHECK_ERRC(load_corpus(dir / "nope.jsonl"), errc::io);
}

TEST_CASE("corpus of 3633 lines loads in file order")
{
    auto dir = scratch("corpus_3633");
    std::string content;
    for (int i = 0; i < 3633; ++i) {
        content += R"({"_id":"MED-)" + std::to_string(i) + R"(","title":"t","text":"x"})" "\n";
    }
    write_file(dir / "corpus.jsonl", content);
    auto docs = load_corpus(dir / "corpus.jsonl");
    CHECK(docs.size() == 3633);
    CHECK(docs.front().id == "MED-0");
    CHECK(docs.back().id == "MED-3632");
}

TEST_CASE("corpus round trip is byte identical")
{
    auto dir = scratch("corpus_roundtrip");
    std::string const content = R"({"_id":"d1","title":"T","text":"apple \"banana\" é"})" "\n"
                                R"({"_id":"d2","title":"","text":"cherry"})" "\n";
    write_file(dir / "in.jsonl", content);
    write_corpus(dir / "out.jsonl", load_corpus(dir / "in.jsonl"));
    CHECK(read_file(dir / "out.jsonl") == content);
}

TEST_CASE("queries load and round trip")
{
    auto dir = scratch("queries");
    std::string const content = R"({"_id":"q1","text":"what is x"})" "\n";
    write_file(dir / "q.jsonl", content);
    auto qs = load_queries(dir / "q.jsonl");
    REQUIRE(qs.size() == 1);
    CHECK(qs[0] == Query{"q1", "what is x"});
    write_queries(dir / "out.jsonl", qs);
    CHECK(read_file(dir / "out.jsonl") == content);
}

TEST_CASE("qrels parse grades")
{
    auto dir = scratch("qrels");
    write_file(dir / "a.tsv", "q1\td1\t1\n");
    auto q = load_qrels(dir / "a.tsv");
    CHECK(q.judgments.at("q1").at("d1") == 1);
    REQUIRE(q.find("q1") != nullptr);
    CHECK(q.find("q2") == nullptr);

    write_file(dir / "header.tsv", "query-id\tcorpus-id\tscore\nq1\td1\t2\n");
    CHECK(load_qrels(dir / "header.tsv").judgments.at("q1").at("d1") == 2);

    write_file(dir / "neg.tsv", "q1\td1\t-2\n");
    CHECK_ERRC(load_qrels(dir / "neg.tsv"), errc::negative_grade);
    write_file(dir / "cols.tsv", "q1\td1\n");
    CHECK_ERRC(load_qrels(dir / "cols.tsv"), errc::malformed_row);
    write_file(dir / "grade.tsv", "q1\td1\t1\nq1\td2\tx\n");
    CHECK_ERRC(load_qrels(dir / "grade.tsv"), errc::malformed_row);
}

TEST_CASE("qrels duplicates keep the later grade and warn")
{
    auto dir = scratch("qrels_dup");
    write_file(dir / "dup.tsv", "q1\td1\t1\nq1\td1\t2\n");
    testing::captured_warnings w;
    auto q = load_qrels(dir / "dup.tsv");
    CHECK(q.judgments.at("q1").at("d1") == 2);
    CHECK(w.messages.size() == 1);
}

TEST_CASE("qrels loading is order insensitive without duplicates")
{
    auto dir = scratch("qrels_order");
    write_file(dir / "a.tsv", "q1\td1\t1\nq2\td3\t0\nq1\td2\t3\n");
    write_file(dir / "b.tsv", "q1\td2\t3\nq1\td1\t1\nq2\td3\t0\n");
    CHECK(load_qrels(dir / "a.tsv").judgments == load_qrels(dir / "b.tsv").judgments);
    QRels q = load_qrels(dir / "a.tsv");
    write_qrels(dir / "c.tsv", q);
    CHECK(load_qrels(dir / "c.tsv").judgments == q.judgments);
}

TEST_CASE("validate_qrels requires known queries")
{
    QRels q;
    q.judgments["q9"]["d1"] = 1;
    CHECK_ERRC(validate_qrels(q, {{"q1", "x"}}), errc::malformed_row);
    CHECK_NOTHROW(validate_qrels(q, {{"q9", "x"}}));
}

TEST_CASE("example pool keeps file order and optional negatives")
{
    auto dir = scratch("pool");
    std::string const content = R"({"query":"a","positive":"pa"})" "\n"
                                R"({"query":"b","positive":"pb","negative":"nb"})" "\n";
    write_file(dir / "pool.jsonl", content);
    auto pool = load_example_pool(dir / "pool.jsonl", "t", PoolSource::genq);
    REQUIRE(pool.examples.size() == 2);
    CHECK(pool.task_id == "t");
    CHECK(pool.source == PoolSource::genq);
    CHECK(pool.examples[0] == ICExample{"a", "pa", std::nullopt});
    CHECK(pool.examples[1] == ICExample{"b", "pb", std::string("nb")});
    write_example_pool(dir / "out.jsonl", pool);
    CHECK(read_file(dir / "out.jsonl") == content);

    write_file(dir / "empty.jsonl", "");
    CHECK_ERRC(load_example_pool(dir / "empty.jsonl", "t"), errc::empty_pool);
    write_file(dir / "bad.jsonl", R"({"query":"a"})" "\n");
    CHECK_ERRC(load_example_pool(dir / "bad.jsonl", "t"), errc::malformed_line);
}

TEST_CASE("training triples round trip and group into pools")
{
    auto dir = scratch("train");
    std::vector<TrainExample> train{{"nq", "Find", "q1", "p1", "n1"}, {"fever", "Verify", "q2", "p2", ""},
                                    {"nq", "Find", "q3", "p3", "n3"}};
    write_train(dir / "train.jsonl", train);
    CHECK(load_train(dir / "train.jsonl") == train);
    auto pools = pools_from_train(train);
    REQUIRE(pools.size() == 2);
    CHECK(pools.at("nq").examples.size() == 2);
    CHECK(pools.at("nq").examples[1] == ICExample{"q3", "p3", std::string("n3")});
    CHECK(pools.at("fever").examples[0].negative == std::nullopt);
}

TEST_CASE("pool source names")
{
    for (auto s : {PoolSource::train_split, PoolSource::dev_split, PoolSource::genq}) {
        CHECK(parse_pool_source(to_string(s)) == s);
    }
    CHECK_ERRC(parse_pool_source("test"), errc::invalid_argument);
}

TEST_CASE("dataset categories")
{
    CHECK(dataset_category("NQ").category == Category::in_domain);
    CHECK(dataset_category("msmarco").category == Category::in_domain);
    CHECK(dataset_category("Quora").category == Category::in_domain);
    CHECK(dataset_category("nfcorpus").category == Category::out_of_domain);
    CHECK(dataset_category("TREC-COVID").category == Category::out_of_domain);
    CHECK(dataset_category("webis-touche2020").name == "Touche2020");
    CHECK(dataset_category("synth").category == Category::out_of_domain);
    CHECK_ERRC(dataset_category("imaginary"), errc::unknown_dataset);

    std::set<std::string> names;
    for (auto const& d : dataset_categories()) {
        CHECK(names.insert(d.name).second);
        CHECK(dataset_category(d.name).name == d.name);
    }
    std::size_t id = 0;
    for (auto const& d : dataset_categories()) {
        id += d.category == Category::in_domain ? 1 : 0;
    }
    CHECK(id == 5);
}
