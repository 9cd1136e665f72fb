#include "rare/synth.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "rare/error.hpp"
#include "rare/rng.hpp"

namespace rare {

void SynthSpec::validate() const
{
    auto const positive = [](std::size_t v, char const* name) {
        if (v == 0) {
            raise(errc::spec_invalid, std::string(name) + " must be >= 1");
        }
    };
    positive(n_clusters, "n_clusters");
    positive(vocab_per_cluster, "vocab_per_cluster");
    positive(shared_vocab, "shared_vocab");
    positive(docs_per_cluster, "docs_per_cluster");
    positive(queries_per_cluster, "queries_per_cluster");
    positive(train_queries_per_cluster, "train_queries_per_cluster");
    positive(paraphrases, "paraphrases");
    positive(doc_len, "doc_len");
    positive(query_len, "query_len");
    if (!(query_ambiguity >= 0.0 && query_ambiguity <= 1.0)) {
        raise(errc::spec_invalid, "query_ambiguity must be in [0, 1]");
    }
    if (!(doc_private_fraction >= 0.0 && doc_private_fraction <= 1.0)) {
        raise(errc::spec_invalid, "doc_private_fraction must be in [0, 1]");
    }
}

namespace {

constexpr std::string_view consonants = "bdfgklmnprstvz";
constexpr std::string_view vowels = "aeiou";

/// Pronounceable pseudo-words, unique across the whole benchmark.
class WordFactory {
  public:
    explicit WordFactory(rng& gen) : m_gen(gen) {}

    std::string next()
    {
        while (true) {
            std::string w;
            std::size_t const syllables = 2 + m_gen.below(2);
            for (std::size_t s = 0; s < syllables; ++s) {
                w += consonants[m_gen.below(consonants.size())];
                w += vowels[m_gen.below(vowels.size())];
            }
            if (m_used.insert(w).second) {
                return w;
            }
        }
    }

  private:
    rng& m_gen;
    std::set<std::string> m_used;
};

std::string join(std::vector<std::string> const& words)
{
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += words[i];
    }
    return out;
}

}  // namespace

SynthData generate(SynthSpec const& spec)
{
    spec.validate();
    rng gen(spec.seed);
    WordFactory words(gen);

    SynthData data;
    data.instruction = "Retrieve documents on the same topic as the query";
    data.pool.task_id = data.name;
    data.pool.source = PoolSource::genq;

    data.private_vocab.resize(spec.n_clusters);
    for (auto& vocab : data.private_vocab) {
        for (std::size_t i = 0; i < spec.vocab_per_cluster; ++i) {
            vocab.push_back(words.next());
        }
    }
    for (std::size_t i = 0; i < spec.shared_vocab; ++i) {
        data.shared_vocab.push_back(words.next());
    }
    auto const pick = [&](std::vector<std::string> const& vocab) { return vocab[gen.below(vocab.size())]; };

    // Documents: exactly round(doc_len * fraction) private words, shuffled in.
    auto const n_private = static_cast<std::size_t>(
        std::llround(static_cast<double>(spec.doc_len) * spec.doc_private_fraction));
    std::vector<std::vector<std::string>> cluster_docs(spec.n_clusters);
    for (std::size_t c = 0; c < spec.n_clusters; ++c) {
        for (std::size_t j = 0; j < spec.docs_per_cluster; ++j) {
            std::vector<std::string> tokens;
            for (std::size_t t = 0; t < spec.doc_len; ++t) {
                tokens.push_back(t < n_private ? pick(data.private_vocab[c]) : pick(data.shared_vocab));
            }
            gen.shuffle(tokens);
            Document doc{"d" + std::to_string(c) + "_" + std::to_string(j), "", join(tokens)};
            cluster_docs[c].push_back(doc.text);
            data.corpus.push_back(std::move(doc));
        }
    }

    auto const query_token = [&](std::size_t c) {
        return gen.bernoulli(spec.query_ambiguity) ? pick(data.shared_vocab) : pick(data.private_vocab[c]);
    };
    auto const make_intent = [&](std::size_t c) {
        std::vector<std::string> tokens;
        for (std::size_t t = 0; t < spec.query_len; ++t) {
            tokens.push_back(query_token(c));
        }
        return tokens;
    };
    // A paraphrase redraws one position of the intent.
    auto const paraphrase = [&](std::vector<std::string> tokens, std::size_t c) {
        tokens[gen.below(tokens.size())] = query_token(c);
        return join(tokens);
    };
    auto const cluster_doc = [&](std::size_t c) { return cluster_docs[c][gen.below(cluster_docs[c].size())]; };
    auto const other_cluster_doc = [&](std::size_t c) -> std::string {
        if (spec.n_clusters == 1) {
            return {};
        }
        std::size_t other = gen.below(spec.n_clusters - 1);
        if (other >= c) {
            ++other;
        }
        return cluster_doc(other);
    };

    // Test queries and their paraphrase pool.
    for (std::size_t c = 0; c < spec.n_clusters; ++c) {
        for (std::size_t i = 0; i < spec.queries_per_cluster; ++i) {
            auto const intent = make_intent(c);
            std::string const qid = "q" + std::to_string(c) + "_" + std::to_string(i);
            data.queries.push_back({qid, join(intent)});
            data.query_cluster.push_back(c);
            auto& judged = data.qrels.judgments[qid];
            for (std::size_t j = 0; j < spec.docs_per_cluster; ++j) {
                judged["d" + std::to_string(c) + "_" + std::to_string(j)] = 1;
            }
            for (std::size_t p = 0; p < spec.paraphrases; ++p) {
                ICExample ex{paraphrase(intent, c), cluster_doc(c), std::nullopt};
                if (auto neg = other_cluster_doc(c); !neg.empty()) {
                    ex.negative = std::move(neg);
                }
                data.pool.examples.push_back(std::move(ex));
            }
        }
    }

    // Training triples: separate intents, several paraphrases each.
    for (std::size_t c = 0; c < spec.n_clusters; ++c) {
        for (std::size_t i = 0; i < spec.train_queries_per_cluster; ++i) {
            auto const intent = make_intent(c);
            for (std::size_t p = 0; p < spec.paraphrases; ++p) {
                data.train.push_back({data.name, data.instruction, paraphrase(intent, c), cluster_doc(c),
                                      other_cluster_doc(c)});
            }
        }
    }
    return data;
}

void write_dataset(std::filesystem::path const& dir, SynthData const& data)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        raise(errc::io, "cannot create " + dir.string() + ": " + ec.message());
    }
    write_corpus(dir / "corpus.jsonl", data.corpus);
    write_queries(dir / "queries.jsonl", data.queries);
    write_qrels(dir / "qrels.tsv", data.qrels);
    write_train(dir / "train.jsonl", data.train);
    write_example_pool(dir / "pool.jsonl", data.pool);
    nlohmann::ordered_json meta;
    meta["name"] = data.name;
    meta["instruction"] = data.instruction;
    meta["pool_source"] = std::string(to_string(data.pool.source));
    std::ofstream out(dir / "dataset.json", std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(errc::io, "cannot write " + (dir / "dataset.json").string());
    }
    out << meta.dump(2) << '\n';
}

DatasetFiles dataset_files(std::filesystem::path const& dir)
{
    DatasetFiles files;
    files.name = dir.filename().string();
    if (files.name.empty()) {
        files.name = dir.parent_path().filename().string();
    }
    files.corpus = dir / "corpus.jsonl";
    files.queries = dir / "queries.jsonl";
    files.qrels = dir / "qrels.tsv";
    files.train = dir / "train.jsonl";
    files.pool = dir / "pool.jsonl";
    auto const meta_path = dir / "dataset.json";
    if (std::filesystem::exists(meta_path)) {
        std::ifstream in(meta_path, std::ios::binary);
        auto meta = nlohmann::json::parse(in, nullptr, false);
        if (meta.is_discarded() || !meta.is_object()) {
            raise(errc::malformed_line, meta_path.string() + ": not a JSON object");
        }
        files.name = meta.value("name", files.name);
        files.instruction = meta.value("instruction", std::string{});
    }
    return files;
}

}  // namespace rare
