#include "recreason/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "recreason/rng.hpp"

namespace recreason::corpus {

namespace {

std::optional<std::string> string_field(const json& row, const char* key) {
    auto it = row.find(key);
    if (it == row.end() || it->is_null()) return std::nullopt;
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer() || it->is_number_unsigned()) return it->dump();
    return std::nullopt;
}

std::optional<double> number_field(const json& row, const char* key) {
    auto it = row.find(key);
    if (it == row.end() || it->is_null()) return std::nullopt;
    if (it->is_number()) return it->get<double>();
    if (it->is_string()) {
        const auto& s = it->get_ref<const std::string&>();
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used == s.size()) return v;
        } catch (const std::exception&) {
        }
    }
    return std::nullopt;
}

// Amazon dumps store the price as "$1,234.50"; ranges and blanks are unknown.
std::optional<double> parse_price(const json& row) {
    auto it = row.find("price");
    if (it == row.end() || it->is_null()) return std::nullopt;
    if (it->is_number()) return it->get<double>();
    if (!it->is_string()) return std::nullopt;
    std::string cleaned;
    for (char c : it->get_ref<const std::string&>()) {
        if (c == '$' || c == ',' || c == ' ') continue;
        cleaned += c;
    }
    if (cleaned.empty()) return std::nullopt;
    try {
        std::size_t used = 0;
        double v = std::stod(cleaned, &used);
        if (used == cleaned.size() && std::isfinite(v) && v >= 0) return v;
    } catch (const std::exception&) {
    }
    return std::nullopt;
}

void append_strings(const json& value, std::vector<std::string>& out) {
    if (value.is_string()) {
        const auto& s = value.get_ref<const std::string&>();
        if (!s.empty() && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    } else if (value.is_array()) {
        for (const auto& v : value) append_strings(v, out);
    }
}

std::string join_text(const json& value) {
    if (value.is_string()) return value.get<std::string>();
    std::string out;
    if (value.is_array()) {
        for (const auto& v : value) {
            if (!v.is_string()) continue;
            const auto& s = v.get_ref<const std::string&>();
            if (s.empty()) continue;
            if (!out.empty()) out += ' ';
            out += s;
        }
    }
    return out;
}

} // namespace

std::optional<ReviewRecord> parse_review_record(const json& row, IngestReport& report) {
    ++report.review_records;
    if (!row.is_object()) {
        ++report.malformed_count;
        return std::nullopt;
    }
    auto user = string_field(row, "reviewerID");
    auto item = string_field(row, "asin");
    auto rating = number_field(row, "overall");
    auto ts = number_field(row, "unixReviewTime");
    if (!user || user->empty() || !item || item->empty() || !rating || !ts) {
        ++report.malformed_count;
        return std::nullopt;
    }
    const double r = *rating;
    if (!(r >= 1.0 && r <= 5.0) || r != std::floor(r)) {
        ++report.malformed_count;
        ++report.out_of_range_rating;
        return std::nullopt;
    }
    ReviewRecord rec;
    rec.user_id = std::move(*user);
    rec.item_id = std::move(*item);
    rec.rating = static_cast<int>(r);
    rec.review_text = string_field(row, "reviewText").value_or("");
    rec.timestamp = static_cast<std::int64_t>(*ts);
    return rec;
}

std::optional<ItemMetadata> parse_metadata_record(const json& row) {
    if (!row.is_object()) return std::nullopt;
    auto asin = string_field(row, "asin");
    if (!asin || asin->empty()) return std::nullopt;
    ItemMetadata item;
    item.item_id = std::move(*asin);
    item.title = string_field(row, "title").value_or("");
    item.brand = string_field(row, "brand").value_or("");
    for (const char* key : {"categories", "category"}) {
        if (auto it = row.find(key); it != row.end()) append_strings(*it, item.categories);
    }
    if (auto it = row.find("description"); it != row.end()) item.description = join_text(*it);
    item.price = parse_price(row);
    return item;
}

IngestResult ingest(const std::vector<json>& review_rows,
                    const std::vector<json>& metadata_rows,
                    const std::string& domain_tag) {
    IngestResult result;
    auto& report = result.report;

    std::unordered_map<std::string, ItemMetadata> catalog;
    for (const auto& row : metadata_rows) {
        ++report.metadata_records;
        auto item = parse_metadata_record(row);
        if (!item) {
            ++report.malformed_metadata;
            continue;
        }
        catalog.try_emplace(item->item_id, std::move(*item));
    }

    // Per-user reviews in source order; stable sort below keeps ties that way.
    std::map<std::string, std::vector<ReviewRecord>> by_user;
    for (const auto& row : review_rows) {
        if (auto rec = parse_review_record(row, report)) by_user[rec->user_id].push_back(std::move(*rec));
    }
    report.users = by_user.size();

    auto lookup = [&](const std::string& item_id) {
        if (auto it = catalog.find(item_id); it != catalog.end()) return it->second;
        ++report.unknown_item_references;
        ItemMetadata missing;
        missing.item_id = item_id;
        missing.metadata_found = false;
        return missing;
    };

    for (auto& [user_id, reviews] : by_user) {
        std::stable_sort(reviews.begin(), reviews.end(),
                         [](const ReviewRecord& a, const ReviewRecord& b) { return a.timestamp < b.timestamp; });
        const ReviewRecord& last = reviews.back();
        Example ex;
        ex.example_id = user_id + ":" + last.item_id;
        ex.history.user_id = user_id;
        ex.target = lookup(last.item_id);
        ex.truth_rating = last.rating;
        if (!last.review_text.empty()) ex.truth_review = last.review_text;
        ex.domain_tag = domain_tag;
        for (std::size_t i = 0; i + 1 < reviews.size(); ++i) {
            if (reviews[i].item_id == last.item_id) {
                ++report.duplicate_target_purchases_dropped;
                continue;
            }
            ex.history.purchases.push_back({lookup(reviews[i].item_id), reviews[i].rating, reviews[i].review_text});
        }
        result.examples.push_back(std::move(ex));
    }
    std::sort(result.examples.begin(), result.examples.end(),
              [](const Example& a, const Example& b) { return a.example_id < b.example_id; });
    report.examples = result.examples.size();
    return result;
}

IngestResult ingest_files(const std::filesystem::path& reviews,
                          const std::filesystem::path& metadata,
                          const std::string& domain_tag) {
    std::vector<json> review_rows;
    IngestReport parse_errors;
    for_each_line(reviews, [&](std::size_t, const std::string& line) {
        try {
            review_rows.push_back(json::parse(line));
        } catch (const json::parse_error&) {
            ++parse_errors.malformed_count;
            ++parse_errors.review_records;
        }
    });
    std::vector<json> metadata_rows;
    for_each_line(metadata, [&](std::size_t, const std::string& line) {
        try {
            metadata_rows.push_back(json::parse(line));
        } catch (const json::parse_error&) {
            ++parse_errors.malformed_metadata;
            ++parse_errors.metadata_records;
        }
    });
    auto result = ingest(review_rows, metadata_rows, domain_tag);
    result.report.malformed_count += parse_errors.malformed_count;
    result.report.review_records += parse_errors.review_records;
    result.report.malformed_metadata += parse_errors.malformed_metadata;
    result.report.metadata_records += parse_errors.metadata_records;
    return result;
}

std::vector<Example> filter_by_history(const std::vector<Example>& examples,
                                       std::size_t min_len, std::size_t max_len) {
    if (min_len > max_len) {
        throw ConfigError("filter_by_history: min " + std::to_string(min_len) + " > max " +
                          std::to_string(max_len));
    }
    std::vector<Example> kept;
    for (const auto& ex : examples) {
        const auto n = ex.history.purchases.size();
        if (n >= min_len && n <= max_len) kept.push_back(ex);
    }
    return kept;
}

std::pair<std::vector<Example>, std::vector<Example>>
balanced_split(const std::vector<Example>& examples, const SplitSpec& spec) {
    if (spec.per_label_train == 0 || spec.per_label_test == 0) {
        throw ConfigError("balanced_split: per-label counts must be positive");
    }
    std::array<std::size_t, 6> available{};
    for (const auto& ex : examples) {
        if (ex.truth_rating < 1 || ex.truth_rating > 5) {
            throw InvalidInput("InvalidRating", "example " + ex.example_id + " has rating outside 1..5");
        }
        ++available[ex.truth_rating];
    }
    for (int label = 1; label <= 5; ++label) {
        if (available[label] < spec.per_label_train + spec.per_label_test) {
            throw InsufficientLabel(label, "label " + std::to_string(label) + ": " +
                                               std::to_string(available[label]) + " examples, need " +
                                               std::to_string(spec.per_label_train + spec.per_label_test));
        }
    }

    // Canonical order first so the result depends only on the example set.
    std::map<std::string, std::vector<const Example*>> by_user;
    for (const auto& ex : examples) by_user[ex.history.user_id].push_back(&ex);
    std::vector<std::vector<const Example*>> users;
    users.reserve(by_user.size());
    for (auto& [_, list] : by_user) {
        std::sort(list.begin(), list.end(),
                  [](const Example* a, const Example* b) { return a->example_id < b->example_id; });
        users.push_back(std::move(list));
    }
    Rng rng(spec.seed);
    shuffle_in_place(std::span(users), rng);

    std::array<std::size_t, 6> test_left{};
    for (int label = 1; label <= 5; ++label) test_left[label] = spec.per_label_test;
    std::size_t test_total_left = 5 * spec.per_label_test;

    std::vector<Example> test;
    std::vector<const Example*> train_pool;
    for (const auto& user : users) {
        bool fits = test_total_left > 0;
        if (fits) {
            std::array<std::size_t, 6> need{};
            for (const auto* ex : user) ++need[ex->truth_rating];
            for (int label = 1; label <= 5; ++label) fits = fits && need[label] <= test_left[label];
        }
        if (fits) {
            for (const auto* ex : user) {
                --test_left[ex->truth_rating];
                --test_total_left;
                test.push_back(*ex);
            }
        } else {
            train_pool.insert(train_pool.end(), user.begin(), user.end());
        }
    }
    for (int label = 1; label <= 5; ++label) {
        if (test_left[label] > 0) {
            throw InsufficientLabel(label, "label " + std::to_string(label) +
                                               ": cannot fill test quota with whole users");
        }
    }

    std::array<std::size_t, 6> train_left{};
    for (int label = 1; label <= 5; ++label) train_left[label] = spec.per_label_train;
    std::vector<Example> train;
    for (const auto* ex : train_pool) {
        if (train_left[ex->truth_rating] == 0) continue;
        --train_left[ex->truth_rating];
        train.push_back(*ex);
    }
    for (int label = 1; label <= 5; ++label) {
        if (train_left[label] > 0) {
            throw InsufficientLabel(label, "label " + std::to_string(label) +
                                               ": train pool short after user-disjoint test assignment");
        }
    }
    return {std::move(train), std::move(test)};
}

json to_json(const ItemMetadata& item) {
    json j;
    j["item_id"] = item.item_id;
    j["title"] = item.title;
    j["brand"] = item.brand;
    j["categories"] = item.categories;
    j["description"] = item.description;
    j["price"] = item.price ? json(*item.price) : json(nullptr);
    j["metadata_found"] = item.metadata_found;
    return j;
}

json to_json(const Example& ex) {
    json history = json::array();
    for (const auto& p : ex.history.purchases) {
        history.push_back({{"item", to_json(p.metadata)}, {"rating", p.rating}, {"review", p.review}});
    }
    json j;
    j["example_id"] = ex.example_id;
    j["user_id"] = ex.history.user_id;
    j["history"] = std::move(history);
    j["target"] = to_json(ex.target);
    j["truth_rating"] = ex.truth_rating;
    j["truth_review"] = ex.truth_review ? json(*ex.truth_review) : json(nullptr);
    j["domain"] = ex.domain_tag;
    return j;
}

json to_json(const IngestReport& r) {
    return {{"review_records", r.review_records},
            {"metadata_records", r.metadata_records},
            {"malformed_count", r.malformed_count},
            {"out_of_range_rating", r.out_of_range_rating},
            {"malformed_metadata", r.malformed_metadata},
            {"unknown_item_references", r.unknown_item_references},
            {"duplicate_target_purchases_dropped", r.duplicate_target_purchases_dropped},
            {"users", r.users},
            {"examples", r.examples}};
}

ItemMetadata item_from_json(const json& j) {
    ItemMetadata item;
    item.item_id = j.at("item_id").get<std::string>();
    if (item.item_id.empty()) throw InvalidInput("SchemaError", "item_id must be non-empty");
    item.title = j.value("title", "");
    item.brand = j.value("brand", "");
    item.categories = j.value("categories", std::vector<std::string>{});
    item.description = j.value("description", "");
    if (auto it = j.find("price"); it != j.end() && it->is_number()) item.price = it->get<double>();
    item.metadata_found = j.value("metadata_found", true);
    return item;
}

Example example_from_json(const json& j) {
    Example ex;
    try {
        ex.example_id = j.at("example_id").get<std::string>();
        ex.history.user_id = j.at("user_id").get<std::string>();
        for (const auto& p : j.at("history")) {
            ex.history.purchases.push_back(
                {item_from_json(p.at("item")), p.at("rating").get<int>(), p.value("review", "")});
        }
        ex.target = item_from_json(j.at("target"));
        ex.truth_rating = j.at("truth_rating").get<int>();
        if (auto it = j.find("truth_review"); it != j.end() && it->is_string()) ex.truth_review = it->get<std::string>();
        ex.domain_tag = j.value("domain", "");
    } catch (const json::exception& e) {
        throw InvalidInput("SchemaError", std::string("example record: ") + e.what());
    }
    if (ex.truth_rating < 1 || ex.truth_rating > 5) {
        throw InvalidInput("SchemaError", "example " + ex.example_id + ": truth_rating outside 1..5");
    }
    return ex;
}

std::string to_jsonl(const std::vector<Example>& examples) {
    std::vector<json> rows;
    rows.reserve(examples.size());
    for (const auto& ex : examples) rows.push_back(to_json(ex));
    return recreason::to_jsonl(rows);
}

std::vector<Example> read_examples(const std::filesystem::path& path) {
    std::vector<Example> out;
    for (const auto& row : read_jsonl(path)) out.push_back(example_from_json(row));
    return out;
}

} // namespace recreason::corpus
