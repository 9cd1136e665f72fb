#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rare {

struct Document {
    std::string id;
    std::string title;
    std::string text;

    /// Text fed to the encoder: `title + " " + text`, or just `text` when
    /// the title is empty.
    [[nodiscard]] std::string encoder_text() const;

    friend bool operator==(Document const&, Document const&) = default;
};

struct Query {
    std::string id;
    std::string text;

    friend bool operator==(Query const&, Query const&) = default;
};

/// query id -> doc id -> graded relevance (>= 0).
struct QRels {
    std::map<std::string, std::map<std::string, int>> judgments;

    [[nodiscard]] std::map<std::string, int> const* find(std::string const& query_id) const;
};

struct TrainExample {
    std::string task_id;
    std::string instruction;
    std::string query;
    std::string positive;
    std::string negative;

    friend bool operator==(TrainExample const&, TrainExample const&) = default;
};

struct ICExample {
    std::string query;
    std::string positive;
    std::optional<std::string> negative;

    friend bool operator==(ICExample const&, ICExample const&) = default;
};

enum class PoolSource { train_split, dev_split, genq };

struct ExamplePool {
    std::string task_id;
    std::vector<ICExample> examples;
    PoolSource source = PoolSource::train_split;
};

enum class Category { in_domain, out_of_domain };

struct DatasetCategory {
    std::string name;
    Category category;
};

// Loaders. All throw rare::error on failure; line numbers are 1-based.

std::vector<Document> load_corpus(std::filesystem::path const& path);
std::vector<Query> load_queries(std::filesystem::path const& path);
QRels load_qrels(std::filesystem::path const& path);
ExamplePool load_example_pool(std::filesystem::path const& path, std::string task_id,
                              PoolSource source = PoolSource::train_split);
std::vector<TrainExample> load_train(std::filesystem::path const& path);

/// Checks that every judged query id appears in `queries`.
void validate_qrels(QRels const& qrels, std::vector<Query> const& queries);

void write_corpus(std::filesystem::path const& path, std::vector<Document> const& docs);
void write_queries(std::filesystem::path const& path, std::vector<Query> const& queries);
void write_qrels(std::filesystem::path const& path, QRels const& qrels);
void write_example_pool(std::filesystem::path const& path, ExamplePool const& pool);
void write_train(std::filesystem::path const& path, std::vector<TrainExample> const& examples);

/// Builds per-task pools from training triples, in file order.
std::map<std::string, ExamplePool> pools_from_train(std::vector<TrainExample> const& train);

[[nodiscard]] std::string_view to_string(PoolSource source) noexcept;
[[nodiscard]] PoolSource parse_pool_source(std::string_view name);
[[nodiscard]] std::string_view to_string(Category category) noexcept;

/// Shipped ID/OOD table. Lookup is case-insensitive and ignores '-', '_'
/// and spaces; unknown names raise `UnknownDataset`.
[[nodiscard]] DatasetCategory dataset_category(std::string_view name);
[[nodiscard]] std::vector<DatasetCategory> const& dataset_categories();

}  // namespace rare
