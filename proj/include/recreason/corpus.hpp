#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "recreason/error.hpp"
#include "recreason/jsonl.hpp"

namespace recreason::corpus {

struct ItemMetadata {
    std::string item_id;
    std::string title;
    std::string brand;
    std::vector<std::string> categories;
    std::string description;
    std::optional<double> price;
    // False when the item never appeared in the metadata stream; the other
    // fields are then empty.
    bool metadata_found = true;

    bool operator==(const ItemMetadata&) const = default;
};

struct PastPurchase {
    ItemMetadata metadata;
    int rating = 0;
    std::string review;

    bool operator==(const PastPurchase&) const = default;
};

/// Purchases in chronological order (oldest first).
struct UserHistory {
    std::string user_id;
    std::vector<PastPurchase> purchases;

    bool operator==(const UserHistory&) const = default;
};

struct Example {
    std::string example_id;
    UserHistory history;
    ItemMetadata target;
    int truth_rating = 0;
    std::optional<std::string> truth_review;
    std::string domain_tag;

    bool operator==(const Example&) const = default;
};

struct SplitSpec {
    std::size_t per_label_train = 800;
    std::size_t per_label_test = 100;
    std::uint64_t seed = 0;
};

/// Raw review row, before grouping into examples.
struct ReviewRecord {
    std::string user_id;
    std::string item_id;
    int rating = 0;
    std::string review_text;
    std::int64_t timestamp = 0;
};

struct IngestReport {
    std::size_t review_records = 0;
    std::size_t metadata_records = 0;
    // Every skipped review row; out_of_range_rating is a subset.
    std::size_t malformed_count = 0;
    std::size_t out_of_range_rating = 0;
    std::size_t malformed_metadata = 0;
    std::size_t unknown_item_references = 0;
    std::size_t duplicate_target_purchases_dropped = 0;
    std::size_t users = 0;
    std::size_t examples = 0;
};

struct IngestResult {
    std::vector<Example> examples;
    IngestReport report;
};

/// Thrown by balanced_split; `label()` is the first rating that could not be filled.
class InsufficientLabel : public InsufficientData {
public:
    InsufficientLabel(int label, const std::string& message)
        : InsufficientData(message), label_(label) {}
    int label() const noexcept { return label_; }

private:
    int label_;
};

/// Parses one review line (reviewerID, asin, overall, reviewText, unixReviewTime).
/// Returns nullopt and bumps the report counters for malformed rows.
std::optional<ReviewRecord> parse_review_record(const json& row, IngestReport& report);

/// Parses one metadata line (asin, title, brand, categories|category,
/// description, price). Returns nullopt for rows without an asin.
std::optional<ItemMetadata> parse_metadata_record(const json& row);

/// Groups reviews per user, orders them by timestamp (ties keep source
/// order) and emits one example per user: last purchase as the target,
/// earlier purchases as history. Output is sorted by example_id.
IngestResult ingest(const std::vector<json>& review_rows,
                    const std::vector<json>& metadata_rows,
                    const std::string& domain_tag);

IngestResult ingest_files(const std::filesystem::path& reviews,
                          const std::filesystem::path& metadata,
                          const std::string& domain_tag);

std::vector<Example> filter_by_history(const std::vector<Example>& examples,
                                       std::size_t min_len = 4, std::size_t max_len = 10);

/// Label-balanced, user-disjoint split.
///
/// Users are shuffled with `spec.seed`; whole users go to test while every
/// one of their examples fits a remaining per-label test quota, the rest
/// form the train pool, from which the first `per_label_train` examples of
/// each label (in shuffled-user order) are taken.
std::pair<std::vector<Example>, std::vector<Example>>
balanced_split(const std::vector<Example>& examples, const SplitSpec& spec);

json to_json(const ItemMetadata& item);
json to_json(const Example& example);
json to_json(const IngestReport& report);
ItemMetadata item_from_json(const json& j);
Example example_from_json(const json& j);

std::string to_jsonl(const std::vector<Example>& examples);
std::vector<Example> read_examples(const std::filesystem::path& path);

} // namespace recreason::corpus
