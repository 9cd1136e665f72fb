#include "rare/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "rare/bench.hpp"
#include "rare/data.hpp"
#include "rare/error.hpp"
#include "rare/eval.hpp"
#include "rare/retrieve.hpp"
#include "rare/synth.hpp"
#include "rare/trainer.hpp"

namespace rare::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string file_sha256(fs::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(errc::io, "cannot open " + path.string());
    }
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        raise(errc::io, "sha256 init failed");
    }
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) {
            EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
        }
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return hex.str();
}

namespace {

// ---------------------------------------------------------------------------
// Shared helpers

std::vector<std::uint32_t> parse_orders(std::string const& spec)
{
    std::vector<std::uint32_t> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            auto v = std::stoul(item, &used);
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
            out.push_back(static_cast<std::uint32_t>(v));
        } catch (std::exception const&) {
            raise(errc::invalid_argument, "bad n-gram order list '" + spec + "'");
        }
    }
    return out;
}

std::vector<std::uint64_t> parse_seeds(std::string const& spec)
{
    std::vector<std::uint64_t> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoull(item));
        } catch (std::exception const&) {
            raise(errc::invalid_argument, "bad seed list '" + spec + "'");
        }
    }
    return out;
}

std::string utc_timestamp()
{
    auto const now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

/// Records how an artifact was produced; written next to it.
struct Manifest {
    std::string command_line;
    std::string subcommand;
    std::map<std::string, std::string> config;
    std::map<std::string, std::uint64_t> seeds;
    std::vector<fs::path> inputs;

    void write(fs::path const& path) const
    {
        json obj;
        obj["artifact_version"] = artifact_version;
        obj["subcommand"] = subcommand;
        obj["command_line"] = command_line;
        json cfg = json::object();
        for (auto const& [k, v] : config) {
            cfg[k] = v;
        }
        obj["config"] = std::move(cfg);
        json s = json::object();
        for (auto const& [k, v] : seeds) {
            s[k] = v;
        }
        obj["seeds"] = std::move(s);
        json digests = json::object();
        for (auto const& p : inputs) {
            digests[p.string()] = "sha256:" + file_sha256(p);
        }
        obj["inputs"] = std::move(digests);
        obj["timestamp"] = utc_timestamp();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            raise(errc::io, "cannot write " + path.string());
        }
        out << obj.dump(2) << '\n';
    }
};

fs::path companion(fs::path const& out, std::string const& suffix)
{
    return fs::path(out.string() + suffix);
}

std::map<std::string, std::string> option_values(CLI::App const& app)
{
    std::map<std::string, std::string> values;
    for (auto const* opt : app.get_options()) {
        if (opt == app.get_help_ptr() || opt == app.get_config_ptr()) {
            continue;
        }
        auto name = opt->get_name(false, true);
        while (!name.empty() && name.front() == '-') {
            name.erase(name.begin());
        }
        std::string value;
        if (opt->count() > 0) {
            auto const& res = opt->results();
            for (std::size_t i = 0; i < res.size(); ++i) {
                value += (i > 0 ? "," : "") + res[i];
            }
        } else {
            value = opt->get_default_str();
        }
        values[name] = value;
    }
    return values;
}

struct Common {
    std::size_t threads = 1;
};

struct EmbedderFlags {
    std::uint32_t hash_dim = 1U << 16U;
    std::uint32_t dim = 64;
    std::string ngrams = "1,2";
    std::optional<std::uint32_t> max_tokens;

    void bind(CLI::App& app)
    {
        app.add_option("--hash-dim", hash_dim, "Feature hashing buckets V")->capture_default_str();
        app.add_option("--dim", dim, "Embedding dimension D")->capture_default_str();
        app.add_option("--ngrams", ngrams, "Comma-separated n-gram orders")->capture_default_str();
        app.add_option("--max-tokens", max_tokens, "Truncate encoder input to this many tokens");
    }
};

struct FormatFlags {
    std::string format = "inst+ic";
    bool brackets = false;
    std::uint64_t shuffle_seed = 0;

    void bind(CLI::App& app, std::string const& default_format)
    {
        format = default_format;
        app.add_option("--format", format,
                       "inst|inst+ic|queries-only|doc-only|shuffle-nc|shuffle-c|inst+ic+neg")
            ->capture_default_str();
        app.add_flag("--brackets", brackets, "Wrap every query payload in [ ]");
        app.add_option("--shuffle-seed", shuffle_seed, "Seed of the shuffle formats")->capture_default_str();
    }

    [[nodiscard]] PromptFormat get() const { return {parse_format_kind(format), brackets, shuffle_seed}; }
};

struct Bm25Flags {
    double k1 = 1.2;
    double b = 0.75;

    void bind(CLI::App& app)
    {
        app.add_option("--bm25-k1", k1, "BM25 k1")->capture_default_str();
        app.add_option("--bm25-b", b, "BM25 b")->capture_default_str();
    }
    [[nodiscard]] Bm25Params get() const { return {k1, b}; }
};

/// Loads the files of a dataset directory, tolerating absent optional parts.
EvalDataset load_eval_dataset(fs::path const& dir, std::string const& instruction_override,
                              bool with_pool)
{
    auto files = dataset_files(dir);
    EvalDataset ds;
    ds.name = files.name;
    ds.instruction = instruction_override.empty() ? files.instruction : instruction_override;
    ds.corpus = load_corpus(files.corpus);
    ds.queries = load_queries(files.queries);
    ds.qrels = load_qrels(files.qrels);
    if (with_pool && fs::exists(files.pool)) {
        ds.pool = load_example_pool(files.pool, ds.name);
    }
    (void)dataset_category(ds.name);
    return ds;
}

std::vector<fs::path> dataset_inputs(fs::path const& dir)
{
    auto files = dataset_files(dir);
    std::vector<fs::path> out;
    for (auto const& p : {files.corpus, files.queries, files.qrels, files.pool}) {
        if (fs::exists(p)) {
            out.push_back(p);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct SynthCmd {
    SynthSpec spec;
    fs::path out;

    void bind(CLI::App& app)
    {
        app.add_option("--clusters", spec.n_clusters, "Number of topic clusters")->capture_default_str();
        app.add_option("--vocab", spec.vocab_per_cluster, "Private words per cluster")->capture_default_str();
        app.add_option("--shared", spec.shared_vocab, "Shared ambiguous words")->capture_default_str();
        app.add_option("--docs", spec.docs_per_cluster, "Documents per cluster")->capture_default_str();
        app.add_option("--queries", spec.queries_per_cluster, "Test queries per cluster")->capture_default_str();
        app.add_option("--train-queries", spec.train_queries_per_cluster, "Training intents per cluster")
            ->capture_default_str();
        app.add_option("--paraphrases", spec.paraphrases, "Variants per intent")->capture_default_str();
        app.add_option("--doc-len", spec.doc_len, "Tokens per document")->capture_default_str();
        app.add_option("--query-len", spec.query_len, "Tokens per query")->capture_default_str();
        app.add_option("--ambiguity", spec.query_ambiguity, "Probability a query token is shared")
            ->capture_default_str();
        app.add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
        app.add_option("--out", out, "Output directory")->required();
    }

    int run(Manifest& manifest, std::ostream& os) const
    {
        auto const data = generate(spec);
        write_dataset(out, data);
        manifest.seeds["seed"] = spec.seed;
        manifest.write(out / "manifest.json");
        os << "wrote " << data.corpus.size() << " documents, " << data.queries.size() << " queries, "
           << data.train.size() << " training triples, " << data.pool.examples.size()
           << " pool examples to " << out.string() << '\n';
        return ok;
    }
};

struct TrainCmd {
    fs::path data;
    std::optional<fs::path> pool;
    std::string task;
    std::string pool_source = "train";
    std::optional<fs::path> init;
    TrainConfig config;
    std::string select = "retrieved";
    bool no_hard_negative = false;
    bool other_negatives = false;
    FormatFlags format;
    EmbedderFlags embedder;
    Bm25Flags bm25;
    fs::path out;
    std::optional<fs::path> log;

    void bind(CLI::App& app)
    {
        app.add_option("--data", data, "Training triples (train.jsonl, or a dataset directory)")->required();
        app.add_option("--pool", pool, "Example pool (pool.jsonl); defaults to the training set");
        app.add_option("--task", task, "Task id the --pool file belongs to");
        app.add_option("--pool-source", pool_source, "train|dev|genq")->capture_default_str();
        app.add_option("--init", init, "Start from an existing model instead of a random init");
        app.add_option("--k", config.k, "In-context examples per query")->capture_default_str();
        app.add_option("--temp", config.temperature, "Softmax temperature")->capture_default_str();
        app.add_option("--mix", config.ic_mixture, "Fraction of queries rendered with examples")
            ->capture_default_str();
        app.add_option("--select", select, "retrieved|random")->capture_default_str();
        app.add_option("--batch", config.batch_size, "Mini-batch size")->capture_default_str();
        app.add_option("--epochs", config.epochs, "Passes over the training set")->capture_default_str();
        app.add_option("--lr", config.learning_rate, "SGD learning rate")->capture_default_str();
        app.add_option("--seed", config.seed, "Seed for init, shuffling, mixture and selection")
            ->capture_default_str();
        app.add_flag("--no-hard-negative", no_hard_negative, "Drop the per-example hard negative");
        app.add_flag("--other-negatives", other_negatives,
                     "Use other examples' hard negatives as in-batch negatives too");
        format.bind(app, "inst+ic");
        embedder.bind(app);
        bm25.bind(app);
        app.add_option("--out", out, "Output model file (.rare)")->required();
        app.add_option("--log", log, "Training log (JSONL); defaults to <out>.log.jsonl");
    }

    int run(Manifest& manifest, std::ostream& os, Common const& common)
    {
        if (fs::is_directory(data)) {
            data /= "train.jsonl";
        }
        auto const train_set = load_train(data);
        if (train_set.empty()) {
            raise(errc::empty_collection, data.string() + " has no training examples");
        }
        config.selection = parse_selection(select);
        config.format = format.get();
        config.use_hard_negative = !no_hard_negative;
        config.include_other_hard_negatives = other_negatives;
        config.bm25 = bm25.get();
        config.threads = common.threads;

        std::map<std::string, ExamplePool> pools;
        if (pool) {
            std::set<std::string> tasks;
            for (auto const& ex : train_set) {
                tasks.insert(ex.task_id);
            }
            std::string const pool_task = !task.empty() ? task : *tasks.begin();
            if (task.empty() && tasks.size() > 1) {
                raise(errc::invalid_argument, "training data has several tasks; pass --task for --pool");
            }
            pools[pool_task] = load_example_pool(*pool, pool_task, parse_pool_source(pool_source));
            for (auto const& [id, p] : pools_from_train(train_set)) {
                pools.try_emplace(id, p);
            }
            manifest.inputs.push_back(*pool);
        } else {
            pools = pools_from_train(train_set);
        }

        EmbedderParams initial;
        if (init) {
            initial = EmbedderParams::load(*init);
            manifest.inputs.push_back(*init);
        } else {
            EmbedderConfig ec;
            ec.hash_dim = embedder.hash_dim;
            ec.embed_dim = embedder.dim;
            ec.ngram_orders = parse_orders(embedder.ngrams);
            ec.seed = config.seed;
            ec.max_tokens = embedder.max_tokens;
            initial = EmbedderParams::random(ec);
        }
        auto const result = train(train_set, pools, config, std::move(initial));
        result.params.save(out);

        auto const log_path = log ? *log : companion(out, ".log.jsonl");
        std::ofstream log_out(log_path, std::ios::binary | std::ios::trunc);
        if (!log_out) {
            raise(errc::io, "cannot write " + log_path.string());
        }
        for (auto const& entry : result.log) {
            json line;
            line["epoch"] = entry.epoch;
            line["mean_loss"] = entry.mean_loss;
            log_out << line.dump() << '\n';
            os << "epoch " << entry.epoch << " mean_loss " << entry.mean_loss << '\n';
        }
        manifest.seeds["seed"] = config.seed;
        manifest.inputs.push_back(data);
        manifest.write(companion(out, ".manifest.json"));
        return ok;
    }
};

struct IndexCmd {
    std::optional<fs::path> corpus;
    std::optional<fs::path> dataset;
    fs::path model;
    fs::path out;

    void bind(CLI::App& app)
    {
        app.add_option("--corpus", corpus, "corpus.jsonl");
        app.add_option("--dataset", dataset, "Dataset directory (uses its corpus.jsonl)");
        app.add_option("--model", model, "Model file (.rare)")->required();
        app.add_option("--out", out, "Output index file")->required();
    }

    int run(Manifest& manifest, std::ostream& os, Common const& common) const
    {
        fs::path const corpus_path = corpus ? *corpus
            : dataset                       ? dataset_files(*dataset).corpus
                                            : throw error(errc::invalid_argument, "need --corpus or --dataset");
        auto const docs = load_corpus(corpus_path);
        auto const params = EmbedderParams::load(model);
        auto const index = build_flat_index(docs, params, common.threads);
        index.save(out);
        manifest.inputs = {corpus_path, model};
        manifest.write(companion(out, ".manifest.json"));
        os << "indexed " << index.size() << " documents (dim " << index.dim() << ")\n";
        return ok;
    }
};

struct SearchCmd {
    std::optional<fs::path> dataset;
    std::optional<fs::path> index_path;
    std::optional<fs::path> corpus;
    fs::path model;
    std::optional<fs::path> queries;
    std::optional<fs::path> pool;
    std::string instruction;
    FormatFlags format;
    Bm25Flags bm25;
    std::size_t k = 5;
    std::size_t top = 10;
    std::string select = "retrieved";
    std::uint64_t seed = 0;
    std::string tag = "rare";
    fs::path out;

    void bind(CLI::App& app)
    {
        app.add_option("--dataset", dataset, "Dataset directory (queries, pool, instruction)");
        app.add_option("--index", index_path, "Dense index built by `rare index`");
        app.add_option("--corpus", corpus, "Build the index on the fly from this corpus");
        app.add_option("--model", model, "Model file (.rare)")->required();
        app.add_option("--queries", queries, "queries.jsonl");
        app.add_option("--pool", pool, "Example pool (pool.jsonl)");
        app.add_option("--instruction", instruction, "Task instruction (empty: none)");
        format.bind(app, "inst+ic");
        bm25.bind(app);
        app.add_option("--k", k, "In-context examples per query")->capture_default_str();
        app.add_option("--top", top, "Documents per query")->capture_default_str();
        app.add_option("--select", select, "retrieved|random")->capture_default_str();
        app.add_option("--seed", seed, "Seed for random selection")->capture_default_str();
        app.add_option("--tag", tag, "Run tag column")->capture_default_str();
        app.add_option("--out", out, "Output TREC run file")->required();
    }

    int run(Manifest& manifest, std::ostream& os, Common const& common) const
    {
        std::optional<DatasetFiles> files;
        if (dataset) {
            files = dataset_files(*dataset);
        }
        auto const queries_path = queries ? *queries
            : files                       ? files->queries
                                          : throw error(errc::invalid_argument, "need --queries or --dataset");
        auto const qs = load_queries(queries_path);
        auto const params = EmbedderParams::load(model);
        manifest.inputs = {queries_path, model};

        FlatIndex index;
        if (index_path) {
            index = FlatIndex::load(*index_path);
            manifest.inputs.push_back(*index_path);
        } else {
            auto const corpus_path = corpus ? *corpus
                : files                     ? files->corpus
                                            : throw error(errc::invalid_argument, "need --index, --corpus or --dataset");
            index = build_flat_index(load_corpus(corpus_path), params, common.threads);
            manifest.inputs.push_back(corpus_path);
        }

        InferenceOptions options{format.get(), k, top, parse_selection(select), seed, common.threads};
        std::optional<IndexedPool> indexed;
        if (uses_examples(options.format, options.k)) {
            auto const pool_path = pool ? *pool
                : files                 ? files->pool
                                        : throw error(errc::invalid_argument, "format needs --pool or --dataset");
            indexed = IndexedPool::build(load_example_pool(pool_path, files ? files->name : "default"), bm25.get());
            manifest.inputs.push_back(pool_path);
        }
        std::string const inst = instruction.empty() && files ? files->instruction : instruction;
        auto const run = run_inference(qs, inst, indexed ? &*indexed : nullptr, index, params, options);
        write_trec_run(out, run, tag);
        manifest.seeds["seed"] = seed;
        manifest.write(companion(out, ".manifest.json"));
        os << "searched " << qs.size() << " queries\n";
        return ok;
    }
};

struct EvalCmd {
    fs::path run_path;
    fs::path qrels;
    std::size_t cutoff = 10;
    std::string dataset_name;
    fs::path out;
    std::optional<fs::path> top1_baseline;
    std::optional<fs::path> top1_dataset;
    std::optional<fs::path> top1_model;
    double bin_width = 0.1;
    std::optional<fs::path> top1_out;

    void bind(CLI::App& app)
    {
        app.add_option("--run", run_path, "TREC run file")->required();
        app.add_option("--qrels", qrels, "qrels.tsv")->required();
        app.add_option("--cutoff", cutoff, "nDCG cutoff K")->capture_default_str();
        app.add_option("--name", dataset_name, "Dataset name recorded in the report");
        app.add_option("--out", out, "Output report.json")->required();
        auto* base = app.add_option("--top1-baseline", top1_baseline,
                                    "Baseline report.json; buckets the nDCG delta by Score@Top-1");
        auto* ds = app.add_option("--dataset", top1_dataset, "Dataset directory (queries and pool) for Score@Top-1");
        auto* model = app.add_option("--model", top1_model, "Model used to encode queries for Score@Top-1");
        app.add_option("--bin-width", bin_width, "Score@Top-1 bucket width")->capture_default_str();
        auto* bins = app.add_option("--top1-out", top1_out, "Score@Top-1 buckets (CSV)");
        base->needs(ds)->needs(model)->needs(bins);
        bins->needs(base);
    }

    int run(Manifest& manifest, std::ostream& os) const
    {
        if (cutoff == 0) {
            raise(errc::invalid_argument, "--cutoff must be >= 1");
        }
        auto const judgments = load_qrels(qrels);
        auto const run = load_trec_run(run_path);
        if (!dataset_name.empty()) {
            (void)dataset_category(dataset_name);
        }
        std::map<std::string, std::string> const fingerprint_inputs{
            {"cutoff", std::to_string(cutoff)},
            {"name", dataset_name},
            {"qrels", file_sha256(qrels)},
            {"run", file_sha256(run_path)},
        };
        auto const report = evaluate(run, judgments, cutoff, dataset_name, config_fingerprint(fingerprint_inputs));
        write_report(out, report);
        manifest.inputs = {run_path, qrels};
        if (top1_baseline) {
            write_top1(report, manifest);
        }
        manifest.write(companion(out, ".manifest.json"));
        os << "nDCG@" << cutoff << " = ";
        if (report.mean) {
            os << std::setprecision(6) << *report.mean;
        } else {
            os << "null";
        }
        os << " over " << report.per_query.size() << " queries\n";
        return ok;
    }

    void write_top1(EvalReport const& treatment, Manifest& manifest) const
    {
        auto const baseline = load_report(*top1_baseline);
        auto const files = dataset_files(*top1_dataset);
        auto const queries = load_queries(files.queries);
        auto const pool = IndexedPool::build(load_example_pool(files.pool, files.name));
        auto const params = EmbedderParams::load(*top1_model);
        auto const buckets = score_at_top1(queries, pool, params, baseline, treatment, bin_width);
        std::ofstream csv(*top1_out, std::ios::binary | std::ios::trunc);
        if (!csv) {
            raise(errc::io, "cannot write " + top1_out->string());
        }
        auto const number = [](double v) { return json(v).dump(); };
        csv << "Lower,Upper,N,MeanDelta\n";
        for (auto const& b : buckets) {
            csv << number(b.lower) << ',' << number(b.upper) << ',' << b.n << ',' << number(b.mean_ndcg) << '\n';
        }
        if (!csv) {
            raise(errc::io, "write failed: " + top1_out->string());
        }
        for (auto const& p : {*top1_baseline, files.queries, files.pool, *top1_model}) {
            manifest.inputs.push_back(p);
        }
    }
};

struct AblateCmd {
    std::vector<fs::path> datasets;
    fs::path model;
    std::vector<std::string> cells;
    std::string seeds = "0";
    std::size_t top = 10;
    bool brackets = false;
    std::uint64_t shuffle_seed = 0;
    std::string instruction;
    Bm25Flags bm25;
    fs::path out;

    void bind(CLI::App& app)
    {
        app.add_option("--dataset", datasets, "Dataset directory (repeatable)")->required();
        app.add_option("--model", model, "Model file (.rare)")->required();
        app.add_option("--cell", cells, "Grid cell format:k:selection (repeatable)")->required();
        app.add_option("--seeds", seeds, "Comma-separated seeds for random selection")->capture_default_str();
        app.add_option("--top", top, "Retrieval depth and nDCG cutoff")->capture_default_str();
        app.add_flag("--brackets", brackets, "Wrap every query payload in [ ]");
        app.add_option("--shuffle-seed", shuffle_seed, "Seed of the shuffle formats")->capture_default_str();
        app.add_option("--instruction", instruction, "Override every dataset's instruction");
        bm25.bind(app);
        app.add_option("--out", out, "Output ablation.csv")->required();
    }

    int run(Manifest& manifest, std::ostream& os, Common const& common) const
    {
        std::vector<AblationCell> grid;
        for (auto const& c : cells) {
            auto cell = parse_cell(c);
            cell.format.bracket_queries = brackets;
            cell.format.shuffle_seed = shuffle_seed;
            grid.push_back(cell);
        }
        std::vector<EvalDataset> loaded;
        for (auto const& dir : datasets) {
            loaded.push_back(load_eval_dataset(dir, instruction, true));
            for (auto const& p : dataset_inputs(dir)) {
                manifest.inputs.push_back(p);
            }
        }
        auto const params = EmbedderParams::load(model);
        manifest.inputs.push_back(model);
        AblationOptions options;
        options.top_k = top;
        options.seeds = parse_seeds(seeds);
        options.threads = common.threads;
        options.bm25 = bm25.get();
        auto const table = ablate(grid, loaded, params, options);
        write_ablation_csv(out, table);
        manifest.write(companion(out, ".manifest.json"));
        for (std::size_t c = 0; c < table.cells.size(); ++c) {
            os << table.cells[c].row_label() << ": " << table.average(c) << '\n';
        }
        return ok;
    }
};

struct BenchCmd {
    fs::path dataset;
    fs::path model;
    std::optional<fs::path> index_path;
    std::vector<std::string> settings{"inst", "inst+ic"};
    std::size_t reps = 5;
    std::size_t warmup = 1;
    std::size_t k = 5;
    std::size_t top = 10;
    std::string instruction;
    FormatFlags format;
    Bm25Flags bm25;
    fs::path out;

    void bind(CLI::App& app)
    {
        app.add_option("--dataset", dataset, "Dataset directory")->required();
        app.add_option("--model", model, "Model file (.rare)")->required();
        app.add_option("--index", index_path, "Prebuilt dense index");
        app.add_option("--setting", settings, "inst and/or inst+ic (repeatable)")->capture_default_str();
        app.add_option("--reps", reps, "Timed repetitions (median reported)")->capture_default_str();
        app.add_option("--warmup", warmup, "Untimed warmup runs")->capture_default_str();
        app.add_option("--k", k, "In-context examples per query")->capture_default_str();
        app.add_option("--top", top, "Documents per query")->capture_default_str();
        app.add_option("--instruction", instruction, "Override the dataset instruction");
        format.bind(app, "inst+ic");
        bm25.bind(app);
        app.add_option("--out", out, "Output latency.csv")->required();
    }

    int run(Manifest& manifest, std::ostream& os, Common const& common) const
    {
        if (common.threads > 1) {
            warn("bench always profiles single-threaded; --threads only affects index construction");
        }
        auto ds = load_eval_dataset(dataset, instruction, true);
        auto const params = EmbedderParams::load(model);
        manifest.inputs = dataset_inputs(dataset);
        manifest.inputs.push_back(model);
        FlatIndex index = index_path ? FlatIndex::load(*index_path)
                                     : build_flat_index(ds.corpus, params, common.threads);
        std::optional<IndexedPool> pool;
        if (ds.pool) {
            pool = IndexedPool::build(*ds.pool, bm25.get());
        }
        BenchInputs inputs;
        inputs.dataset = ds.name;
        inputs.queries = &ds.queries;
        inputs.instruction = ds.instruction;
        inputs.pool = pool ? &*pool : nullptr;
        inputs.index = &index;
        inputs.params = &params;
        inputs.format = format.get();
        inputs.k = k;
        inputs.top_k = top;
        std::vector<LatencyReport> reports;
        for (auto const& s : settings) {
            reports.push_back(profile(inputs, parse_bench_setting(s), reps, warmup));
        }
        attach_inc_factors(reports);
        emit_csv(out, reports);
        manifest.write(companion(out, ".manifest.json"));
        for (auto const& r : reports) {
            os << r.dataset << ' ' << to_string(r.setting) << " total " << r.total_s << "s";
            if (r.inc_factor) {
                os << " (" << std::fixed << std::setprecision(2) << *r.inc_factor << "x)" << std::defaultfloat;
            }
            os << '\n';
        }
        return ok;
    }
};

int exit_for(errc code)
{
    switch (classify(code)) {
    case error_class::usage: return usage_error;
    case error_class::numeric: return numeric_error;
    case error_class::data: return data_error;
    }
    return data_error;
}

/// Appends `--key=value` for every entry of the `--config` file whose key is
/// not already given on the command line.
std::vector<std::string> with_config(std::vector<std::string> const& args)
{
    std::optional<std::string> path;
    std::set<std::string> given;
    for (std::size_t i = 1; i < args.size(); ++i) {
        auto const& a = args[i];
        if (a == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
        } else if (a.rfind("--config=", 0) == 0) {
            path = a.substr(9);
        }
        if (a.rfind("--", 0) == 0) {
            given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
        }
    }
    if (!path) {
        return args;
    }
    std::ifstream in(*path);
    if (!in) {
        raise(errc::io, "cannot open config file " + *path);
    }
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_config(in);
    } catch (CLI::ParseError const& e) {
        raise(errc::malformed_line, *path + ": " + e.what());
    }
    auto out = args;
    for (auto const& item : items) {
        if (!item.parents.empty() || item.name == "++" || item.name == "--" || given.count(item.name) > 0) {
            continue;
        }
        for (auto const& value : item.inputs) {
            out.push_back("--" + item.name + "=" + value);
        }
        if (item.inputs.empty()) {
            out.push_back("--" + item.name);
        }
    }
    return out;
}

}  // namespace

int dispatch(std::vector<std::string> const& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"rare: retrieval with in-context examples, desk-scale", "rare"};
    app.require_subcommand(1, 1);
    Common common;
    std::string config_path;

    SynthCmd synth;
    TrainCmd train_cmd;
    IndexCmd index_cmd;
    SearchCmd search_cmd;
    EvalCmd eval_cmd;
    AblateCmd ablate_cmd;
    BenchCmd bench_cmd;

    auto add = [&](char const* name, char const* help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "key=value configuration file (flags on the command line win)");
        sub->add_option("--threads", common.threads, "Worker threads (1 = deterministic reference path)")
            ->capture_default_str();
        return sub;
    };
    auto* synth_app = add("synth", "Generate the synthetic benchmark");
    synth.bind(*synth_app);
    auto* train_app = add("train", "Train the embedder with the contrastive objective");
    train_cmd.bind(*train_app);
    auto* index_app = add("index", "Build the dense document index");
    index_cmd.bind(*index_app);
    auto* search_app = add("search", "Run inference and write a TREC run file");
    search_cmd.bind(*search_app);
    auto* eval_app = add("eval", "Score a run with nDCG@K");
    eval_cmd.bind(*eval_app);
    auto* ablate_app = add("ablate", "Evaluate a grid of formats / k / selection policies");
    ablate_cmd.bind(*ablate_app);
    auto* bench_app = add("bench", "Profile stage latencies");
    bench_cmd.bind(*bench_app);

    if (args.size() <= 1) {
        err << app.help();
        return usage_error;
    }
    std::vector<std::string> expanded;
    try {
        expanded = with_config(args);
    } catch (error const& e) {
        err << "error: " << e.what() << '\n';
        return exit_for(e.code());
    }
    std::vector<std::string> rev(expanded.rbegin(), expanded.rend() - 1);
    try {
        app.parse(rev);
    } catch (CLI::CallForHelp const&) {
        out << app.help();
        return ok;
    } catch (CLI::ParseError const& e) {
        if (e.get_exit_code() == 0) {
            auto const* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
            out << sub->help();
            return ok;
        }
        err << "error: " << e.what() << '\n';
        auto const* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return usage_error;
    }

    Manifest manifest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        manifest.command_line += (i > 0 ? " " : "") + args[i];
    }
    auto* sub = app.get_subcommands().front();
    manifest.subcommand = sub->get_name();
    manifest.config = option_values(*sub);

    try {
        if (sub == synth_app) {
            return synth.run(manifest, out);
        }
        if (sub == train_app) {
            return train_cmd.run(manifest, out, common);
        }
        if (sub == index_app) {
            return index_cmd.run(manifest, out, common);
        }
        if (sub == search_app) {
            return search_cmd.run(manifest, out, common);
        }
        if (sub == eval_app) {
            return eval_cmd.run(manifest, out);
        }
        if (sub == ablate_app) {
            return ablate_cmd.run(manifest, out, common);
        }
        if (sub == bench_app) {
            return bench_cmd.run(manifest, out, common);
        }
    } catch (error const& e) {
        err << "error: " << e.what() << '\n';
        return exit_for(e.code());
    } catch (fs::filesystem_error const& e) {
        err << "error: " << e.what() << '\n';
        return data_error;
    } catch (std::bad_alloc const&) {
        err << "error: out of memory\n";
        return data_error;
    }
    return usage_error;
}

}  // namespace rare::cli
