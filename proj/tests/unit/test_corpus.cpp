#include <doctest.h>

#include <algorithm>
#include <set>

#include "recreason/corpus.hpp"
#include "synth.hpp"

using namespace recreason;
using corpus::Example;

namespace {

json review(const std::string& user, const std::string& item, double rating, std::int64_t ts) {
    return {{"reviewerID", user}, {"asin", item}, {"overall", rating}, {"reviewText", "ok"}, {"unixReviewTime", ts}};
}

json meta(const std::string& item) {
    return {{"asin", item}, {"title", "Item " + item}, {"description", "desc " + item}, {"price", "$1,234.50"}};
}

std::vector<json> metas(std::initializer_list<const char*> ids) {
    std::vector<json> out;
    for (auto id : ids) out.push_back(meta(id));
    return out;
}

std::set<std::string> users_of(const std::vector<Example>& xs) {
    std::set<std::string> out;
    for (const auto& e : xs) out.insert(e.history.user_id);
    return out;
}

std::array<std::size_t, 5> histogram(const std::vector<Example>& xs) {
    std::array<std::size_t, 5> h{};
    for (const auto& e : xs) ++h[e.truth_rating - 1];
    return h;
}

} // namespace

TEST_SUITE("corpus") {

TEST_CASE("last purchase becomes the target, earlier ones the history") {
    std::vector<json> reviews;
    for (int k = 0; k < 5; ++k) reviews.push_back(review("u1", "i" + std::to_string(k), k % 5 + 1, 100 + k));
    const auto r = corpus::ingest(reviews, metas({"i0", "i1", "i2", "i3", "i4"}), "beauty");
    REQUIRE(r.examples.size() == 1);
    const auto& ex = r.examples[0];
    CHECK(ex.history.purchases.size() == 4);
    CHECK(ex.target.item_id == "i4");
    CHECK(ex.truth_rating == 5);
    CHECK(ex.example_id == "u1:i4");
    CHECK(ex.target.price.value() == doctest::Approx(1234.5));
    CHECK(ex.domain_tag == "beauty");
}

TEST_CASE("out-of-range and malformed rows are counted and skipped") {
    std::vector<json> reviews = {review("u1", "a", 0, 1), review("u1", "b", 6, 2), review("u1", "c", 4, 3),
                                 review("u1", "d", 3, 4), json{{"asin", "x"}, {"overall", 3}}};
    const auto r = corpus::ingest(reviews, metas({"a", "b", "c", "d"}), "beauty");
    CHECK(r.report.malformed_count == 3);
    CHECK(r.report.out_of_range_rating == 2);
    REQUIRE(r.examples.size() == 1);
    CHECK(r.examples[0].history.purchases.size() == 1);
}

TEST_CASE("each user's history follows their own timestamps") {
    std::vector<json> reviews = {review("u1", "a", 1, 30), review("u2", "b", 2, 10), review("u1", "c", 3, 5),
                                 review("u2", "d", 4, 40), review("u1", "e", 5, 20), review("u2", "f", 1, 25)};
    const auto r = corpus::ingest(reviews, metas({"a", "b", "c", "d", "e", "f"}), "beauty");
    REQUIRE(r.examples.size() == 2);
    const auto& u1 = r.examples[0];
    CHECK(u1.target.item_id == "a");
    CHECK(u1.history.purchases[0].metadata.item_id == "c");
    CHECK(u1.history.purchases[1].metadata.item_id == "e");
    const auto& u2 = r.examples[1];
    CHECK(u2.target.item_id == "d");
    CHECK(u2.history.purchases[0].metadata.item_id == "b");
    CHECK(u2.history.purchases[1].metadata.item_id == "f");
}

TEST_CASE("timestamp ties keep source order") {
    std::vector<json> reviews = {review("u1", "a", 1, 7), review("u1", "b", 2, 7), review("u1", "c", 3, 7)};
    const auto r = corpus::ingest(reviews, metas({"a", "b", "c"}), "beauty");
    REQUIRE(r.examples.size() == 1);
    CHECK(r.examples[0].target.item_id == "c");
    CHECK(r.examples[0].history.purchases[0].metadata.item_id == "a");
}

TEST_CASE("unknown items are joined with empty metadata and flagged") {
    std::vector<json> reviews = {review("u1", "a", 1, 1), review("u1", "ghost", 2, 2)};
    const auto r = corpus::ingest(reviews, metas({"a"}), "beauty");
    REQUIRE(r.examples.size() == 1);
    CHECK_FALSE(r.examples[0].target.metadata_found);
    CHECK(r.examples[0].target.title.empty());
    CHECK(r.report.unknown_item_references == 1);
}

TEST_CASE("ingestion is idempotent") {
    testing::TempDir dir;
    const auto files = testing::write_corpus(dir.path(), 40);
    const auto a = corpus::ingest_files(files.reviews, files.metadata, "beauty");
    const auto b = corpus::ingest_files(files.reviews, files.metadata, "beauty");
    CHECK(a.examples == b.examples);
    CHECK(corpus::to_jsonl(a.examples) == corpus::to_jsonl(b.examples));
    CHECK(a.examples.size() == 40);
}

TEST_CASE("history filter bounds are inclusive") {
    auto xs = testing::synthetic_examples(3, {.min_history = 4, .max_history = 4});
    xs[1].history.purchases.resize(3);
    xs[2].history.purchases.resize(11, xs[2].history.purchases.front());
    const auto kept = corpus::filter_by_history(xs, 4, 10);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].example_id == xs[0].example_id);
    CHECK_THROWS_AS(corpus::filter_by_history(xs, 5, 4), ConfigError);
}

TEST_CASE("balanced split has flat histograms and disjoint users") {
    const auto xs = testing::synthetic_examples(600);
    const auto [train, test] = corpus::balanced_split(xs, {.per_label_train = 80, .per_label_test = 20, .seed = 3});
    CHECK(train.size() == 400);
    CHECK(test.size() == 100);
    for (auto n : histogram(train)) CHECK(n == 80);
    for (auto n : histogram(test)) CHECK(n == 20);
    const auto tu = users_of(train);
    for (const auto& u : users_of(test)) CHECK(tu.count(u) == 0);
}

TEST_CASE("split is seed-deterministic and seed-sensitive") {
    const auto xs = testing::synthetic_examples(300);
    corpus::SplitSpec spec{.per_label_train = 20, .per_label_test = 10, .seed = 11};
    const auto a = corpus::balanced_split(xs, spec);
    const auto b = corpus::balanced_split(xs, spec);
    CHECK(corpus::to_jsonl(a.first) == corpus::to_jsonl(b.first));
    CHECK(corpus::to_jsonl(a.second) == corpus::to_jsonl(b.second));
    spec.seed = 12;
    const auto c = corpus::balanced_split(xs, spec);
    CHECK(corpus::to_jsonl(a.second) != corpus::to_jsonl(c.second));
}

TEST_CASE("insufficient label supply names the label") {
    auto xs = testing::synthetic_examples(500);
    // Keep only 30 examples rated 2.
    std::size_t twos = 0;
    std::erase_if(xs, [&](const Example& e) { return e.truth_rating == 2 && ++twos > 30; });
    try {
        corpus::balanced_split(xs, {.per_label_train = 25, .per_label_test = 10, .seed = 1});
        FAIL("expected InsufficientLabel");
    } catch (const corpus::InsufficientLabel& e) {
        CHECK(e.label() == 2);
        CHECK(e.code() == "InsufficientData");
    }
}

TEST_CASE("examples round-trip through jsonl") {
    testing::TempDir dir;
    const auto xs = testing::synthetic_examples(12);
    write_file_atomic(dir.path() / "x.jsonl", corpus::to_jsonl(xs));
    CHECK(corpus::read_examples(dir.path() / "x.jsonl") == xs);
}

}
