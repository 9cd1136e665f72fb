#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rare/data.hpp"

namespace rare {

/// Parameters of the synthetic topic-disambiguation benchmark.
///
/// Every cluster owns a private vocabulary; all clusters share one ambiguous
/// vocabulary. Documents are mostly private words, queries mostly shared
/// words, so a query alone often cannot name its cluster. Each query is one
/// "intent"; the example pool holds paraphrases of every test intent paired
/// with documents of the right cluster, which is what BM25 neighbor
/// selection brings into the prompt.
struct SynthSpec {
    std::size_t n_clusters = 8;
    std::size_t vocab_per_cluster = 30;
    std::size_t shared_vocab = 40;
    std::size_t docs_per_cluster = 40;
    std::size_t queries_per_cluster = 10;        // test intents
    std::size_t train_queries_per_cluster = 20;  // training intents
    std::size_t paraphrases = 6;                 // pool / training variants per intent
    std::size_t doc_len = 20;
    std::size_t query_len = 6;
    double doc_private_fraction = 0.8;
    double query_ambiguity = 0.8;  // per-token probability of a shared word
    std::uint64_t seed = 7;

    void validate() const;
};

struct SynthData {
    std::string name = "synth";
    std::string instruction;
    std::vector<Document> corpus;
    std::vector<Query> queries;
    QRels qrels;
    std::vector<TrainExample> train;
    ExamplePool pool;

    /// Vocabularies, kept for property checks.
    std::vector<std::vector<std::string>> private_vocab;
    std::vector<std::string> shared_vocab;
    std::vector<std::size_t> query_cluster;  // parallel to `queries`
};

[[nodiscard]] SynthData generate(SynthSpec const& spec);

/// Writes corpus.jsonl, queries.jsonl, qrels.tsv, train.jsonl, pool.jsonl
/// and dataset.json (name, instruction) into `dir`.
void write_dataset(std::filesystem::path const& dir, SynthData const& data);

/// Dataset directory in the layout written by `write_dataset`.
struct DatasetFiles {
    std::string name;
    std::string instruction;
    std::filesystem::path corpus;
    std::filesystem::path queries;
    std::filesystem::path qrels;
    std::filesystem::path train;
    std::filesystem::path pool;
};

[[nodiscard]] DatasetFiles dataset_files(std::filesystem::path const& dir);

}  // namespace rare
