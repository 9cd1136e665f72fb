#include "rare/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "rare/error.hpp"

namespace rare {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string Document::encoder_text() const
{
    if (title.empty()) {
        return text;
    }
    return title + " " + text;
}

std::map<std::string, int> const* QRels::find(std::string const& query_id) const
{
    auto it = judgments.find(query_id);
    return it == judgments.end() ? nullptr : &it->second;
}

namespace {

std::ifstream open_in(fs::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(errc::io, "cannot open " + path.string());
    }
    return in;
}

std::ofstream open_out(fs::path const& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        raise(errc::io, "cannot write " + path.string());
    }
    return out;
}

bool is_blank(std::string_view line)
{
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

void strip_cr(std::string& line)
{
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
}

[[noreturn]] void malformed(fs::path const& path, std::size_t line_no, std::string const& why)
{
    raise(errc::malformed_line, path.string() + ":" + std::to_string(line_no) + ": " + why);
}

/// Iterates non-blank JSONL records, handing each parsed object to `fn`.
template <typename Fn>
void for_each_jsonl(fs::path const& path, Fn&& fn)
{
    auto in = open_in(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (is_blank(line)) {
            continue;
        }
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) {
            malformed(path, line_no, "not a JSON object");
        }
        fn(obj, line_no);
    }
    if (in.bad()) {
        raise(errc::io, "read failed: " + path.string());
    }
}

std::string required_string(json const& obj, char const* key, fs::path const& path,
                            std::size_t line_no)
{
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        malformed(path, line_no, std::string("missing string field '") + key + "'");
    }
    return it->get<std::string>();
}

std::string optional_string(json const& obj, char const* key, fs::path const& path,
                            std::size_t line_no)
{
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        return {};
    }
    if (!it->is_string()) {
        malformed(path, line_no, std::string("field '") + key + "' is not a string");
    }
    return it->get<std::string>();
}

std::vector<std::string_view> split_tabs(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        fields.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return fields;
}

std::optional<long long> parse_int(std::string_view s)
{
    long long v = 0;
    auto const* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        return std::nullopt;
    }
    return v;
}

}  // namespace

std::vector<Document> load_corpus(fs::path const& path)
{
    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    for_each_jsonl(path, [&](json const& obj, std::size_t line_no) {
        Document doc{required_string(obj, "_id", path, line_no),
                     optional_string(obj, "title", path, line_no),
                     required_string(obj, "text", path, line_no)};
        if (doc.id.empty()) {
            malformed(path, line_no, "empty _id");
        }
        if (doc.title.empty() && doc.text.empty()) {
            malformed(path, line_no, "title and text both empty");
        }
        if (!seen.insert(doc.id).second) {
            raise(errc::duplicate_id, doc.id);
        }
        docs.push_back(std::move(doc));
    });
    return docs;
}

std::vector<Query> load_queries(fs::path const& path)
{
    std::vector<Query> queries;
    std::unordered_set<std::string> seen;
    for_each_jsonl(path, [&](json const& obj, std::size_t line_no) {
        Query q{required_string(obj, "_id", path, line_no),
                required_string(obj, "text", path, line_no)};
        if (q.id.empty()) {
            malformed(path, line_no, "empty _id");
        }
        if (q.text.empty()) {
            malformed(path, line_no, "empty query text");
        }
        if (!seen.insert(q.id).second) {
            raise(errc::duplicate_id, q.id);
        }
        queries.push_back(std::move(q));
    });
    return queries;
}

QRels load_qrels(fs::path const& path)
{
    auto in = open_in(path);
    QRels qrels;
    std::string line;
    std::size_t line_no = 0;
    bool first_row = true;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (is_blank(line)) {
            continue;
        }
        auto fields = split_tabs(line);
        auto const bad_row = [&](std::string const& why) {
            raise(errc::malformed_row, path.string() + ":" + std::to_string(line_no) + ": " + why);
        };
        if (fields.size() != 3) {
            bad_row("expected 3 tab-separated columns");
        }
        auto grade = parse_int(fields[2]);
        if (!grade) {
            if (first_row) {
                first_row = false;
                continue;  // header
            }
            bad_row("non-integer grade");
        }
        first_row = false;
        if (fields[0].empty() || fields[1].empty()) {
            bad_row("empty id");
        }
        if (*grade < 0) {
            raise(errc::negative_grade, path.string() + ":" + std::to_string(line_no));
        }
        auto& row = qrels.judgments[std::string(fields[0])];
        auto [it, inserted] = row.insert_or_assign(std::string(fields[1]), static_cast<int>(*grade));
        if (!inserted) {
            warn(path.string() + ":" + std::to_string(line_no) + ": duplicate judgment for ("
                 + std::string(fields[0]) + ", " + std::string(fields[1]) + "), keeping the later grade");
        }
    }
    return qrels;
}

ExamplePool load_example_pool(fs::path const& path, std::string task_id, PoolSource source)
{
    ExamplePool pool;
    pool.task_id = std::move(task_id);
    pool.source = source;
    for_each_jsonl(path, [&](json const& obj, std::size_t line_no) {
        ICExample ex;
        ex.query = required_string(obj, "query", path, line_no);
        ex.positive = required_string(obj, "positive", path, line_no);
        if (ex.query.empty() || ex.positive.empty()) {
            malformed(path, line_no, "query and positive must be nonempty");
        }
        if (auto it = obj.find("negative"); it != obj.end() && !it->is_null()) {
            if (!it->is_string()) {
                malformed(path, line_no, "field 'negative' is not a string");
            }
            ex.negative = it->get<std::string>();
        }
        pool.examples.push_back(std::move(ex));
    });
    if (pool.examples.empty()) {
        raise(errc::empty_pool, path.string());
    }
    return pool;
}

std::vector<TrainExample> load_train(fs::path const& path)
{
    std::vector<TrainExample> out;
    for_each_jsonl(path, [&](json const& obj, std::size_t line_no) {
        TrainExample ex{optional_string(obj, "task_id", path, line_no),
                        optional_string(obj, "instruction", path, line_no),
                        required_string(obj, "query", path, line_no),
                        required_string(obj, "positive", path, line_no),
                        optional_string(obj, "negative", path, line_no)};
        if (ex.query.empty() || ex.positive.empty()) {
            malformed(path, line_no, "query and positive must be nonempty");
        }
        out.push_back(std::move(ex));
    });
    return out;
}

void validate_qrels(QRels const& qrels, std::vector<Query> const& queries)
{
    std::unordered_set<std::string> ids;
    for (auto const& q : queries) {
        ids.insert(q.id);
    }
    for (auto const& [qid, _] : qrels.judgments) {
        if (!ids.contains(qid)) {
            raise(errc::malformed_row, "qrels references unknown query id " + qid);
        }
    }
}

void write_corpus(fs::path const& path, std::vector<Document> const& docs)
{
    auto out = open_out(path);
    for (auto const& d : docs) {
        json obj;
        obj["_id"] = d.id;
        obj["title"] = d.title;
        obj["text"] = d.text;
        out << obj.dump() << '\n';
    }
}

void write_queries(fs::path const& path, std::vector<Query> const& queries)
{
    auto out = open_out(path);
    for (auto const& q : queries) {
        json obj;
        obj["_id"] = q.id;
        obj["text"] = q.text;
        out << obj.dump() << '\n';
    }
}

void write_qrels(fs::path const& path, QRels const& qrels)
{
    auto out = open_out(path);
    out << "query-id\tcorpus-id\tscore\n";
    for (auto const& [qid, row] : qrels.judgments) {
        for (auto const& [did, grade] : row) {
            out << qid << '\t' << did << '\t' << grade << '\n';
        }
    }
}

void write_example_pool(fs::path const& path, ExamplePool const& pool)
{
    auto out = open_out(path);
    for (auto const& ex : pool.examples) {
        json obj;
        obj["query"] = ex.query;
        obj["positive"] = ex.positive;
        if (ex.negative) {
            obj["negative"] = *ex.negative;
        }
        out << obj.dump() << '\n';
    }
}

void write_train(fs::path const& path, std::vector<TrainExample> const& examples)
{
    auto out = open_out(path);
    for (auto const& ex : examples) {
        json obj;
        obj["task_id"] = ex.task_id;
        obj["instruction"] = ex.instruction;
        obj["query"] = ex.query;
        obj["positive"] = ex.positive;
        obj["negative"] = ex.negative;
        out << obj.dump() << '\n';
    }
}

std::map<std::string, ExamplePool> pools_from_train(std::vector<TrainExample> const& train)
{
    std::map<std::string, ExamplePool> pools;
    for (auto const& ex : train) {
        auto& pool = pools[ex.task_id];
        pool.task_id = ex.task_id;
        pool.source = PoolSource::train_split;
        ICExample ic{ex.query, ex.positive, std::nullopt};
        if (!ex.negative.empty()) {
            ic.negative = ex.negative;
        }
        pool.examples.push_back(std::move(ic));
    }
    return pools;
}

std::string_view to_string(PoolSource source) noexcept
{
    switch (source) {
    case PoolSource::train_split: return "train";
    case PoolSource::dev_split: return "dev";
    case PoolSource::genq: return "genq";
    }
    return "train";
}

PoolSource parse_pool_source(std::string_view name)
{
    if (name == "train") {
        return PoolSource::train_split;
    }
    if (name == "dev") {
        return PoolSource::dev_split;
    }
    if (name == "genq") {
        return PoolSource::genq;
    }
    raise(errc::invalid_argument, "unknown pool source '" + std::string(name) + "'");
}

std::string_view to_string(Category category) noexcept
{
    return category == Category::in_domain ? "ID" : "OOD";
}

std::vector<DatasetCategory> const& dataset_categories()
{
    // In-domain: datasets whose training splits are part of the training mixture.
    static std::vector<DatasetCategory> const table = {
        {"FEVER", Category::in_domain},
        {"HotpotQA", Category::in_domain},
        {"NQ", Category::in_domain},
        {"QuoraRetrieval", Category::in_domain},
        {"MSMARCO", Category::in_domain},
        {"ArguAna", Category::out_of_domain},
        {"ClimateFEVER", Category::out_of_domain},
        {"CQADupStack", Category::out_of_domain},
        {"DBPedia", Category::out_of_domain},
        {"FiQA2018", Category::out_of_domain},
        {"NFCorpus", Category::out_of_domain},
        {"SCIDOCS", Category::out_of_domain},
        {"SciFact", Category::out_of_domain},
        {"Touche2020", Category::out_of_domain},
        {"TRECCOVID", Category::out_of_domain},
        // RAR-b tasks are all treated as out-of-domain.
        {"ARC-C", Category::out_of_domain},
        {"alphaNLI", Category::out_of_domain},
        {"HellaSwag", Category::out_of_domain},
        {"PIQA", Category::out_of_domain},
        {"Quail", Category::out_of_domain},
        {"SiQA", Category::out_of_domain},
        {"TempReason-L1", Category::out_of_domain},
        {"WinoGrande", Category::out_of_domain},
        // Desk-scale synthetic benchmark.
        {"synth", Category::out_of_domain},
    };
    return table;
}

namespace {

std::string canonical_name(std::string_view name)
{
    std::string out;
    for (unsigned char c : name) {
        if (c == '-' || c == '_' || c == ' ') {
            continue;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

}  // namespace

DatasetCategory dataset_category(std::string_view name)
{
    static std::map<std::string, DatasetCategory> const by_key = [] {
        std::map<std::string, DatasetCategory> m;
        for (auto const& entry : dataset_categories()) {
            m.emplace(canonical_name(entry.name), entry);
        }
        // Common aliases.
        m.emplace("quora", DatasetCategory{"QuoraRetrieval", Category::in_domain});
        m.emplace("fiqa", DatasetCategory{"FiQA2018", Category::out_of_domain});
        m.emplace(canonical_name("webis-touche2020"), DatasetCategory{"Touche2020", Category::out_of_domain});
        m.emplace("treccovid", DatasetCategory{"TRECCOVID", Category::out_of_domain});
        m.emplace("arcchallenge", DatasetCategory{"ARC-C", Category::out_of_domain});
        return m;
    }();
    auto it = by_key.find(canonical_name(name));
    if (it == by_key.end()) {
        raise(errc::unknown_dataset, std::string(name));
    }
    return it->second;
}

}  // namespace rare
