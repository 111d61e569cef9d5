#include <doctest.h>

#include <sstream>

#include "recreason/promptkit.hpp"
#include "synth.hpp"

using namespace recreason;
using namespace recreason::promptkit;

namespace {

bool contains(const std::string& s, std::string_view needle) { return s.find(needle) != std::string::npos; }

std::string without_lines_starting(const std::string& text, std::string_view prefix) {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line)) {
        if (line.rfind(prefix, 0) == 0) continue;
        out += line + "\n";
    }
    return out;
}

constexpr std::string_view kScaleSentence = "User ratings range from 1 to 5, where 1 is the lowest and 5 is the highest.";

} // namespace

TEST_SUITE("promptkit") {

TEST_CASE("reasoning mode asks for both blocks, rating-only drops the reason block") {
    const auto ex = testing::synthetic_examples(1)[0];
    const auto cot = render_task_prompt(ex, *mode_from_name("cot")).text;
    CHECK(contains(cot, kReasonMarker));
    CHECK(contains(cot, kRatingMarker));
    CHECK(contains(cot, "After your reasoning, predict a numerical rating."));
    const auto plain = render_task_prompt(ex, *mode_from_name("no_reasoning")).text;
    CHECK_FALSE(contains(plain, kReasonMarker));
    CHECK(contains(plain, kRatingMarker));
    CHECK_FALSE(contains(plain, "After your reasoning"));
}

TEST_CASE("every mode keeps the rating-scale sentence") {
    const auto ex = testing::synthetic_examples(1)[0];
    for (auto name : {"cot", "no_reasoning", "no_review", "no_review_no_rating", "no_description"}) {
        CAPTURE(name);
        CHECK(contains(render_task_prompt(ex, *mode_from_name(name)).text, kScaleSentence));
    }
}

TEST_CASE("ablations delete exactly the targeted lines") {
    const auto ex = testing::synthetic_examples(1)[0];
    const auto full = render_task_prompt(ex, *mode_from_name("cot")).text;
    const auto no_review = render_task_prompt(ex, *mode_from_name("no_review")).text;
    CHECK_FALSE(contains(no_review, "User Review:"));
    CHECK(no_review == without_lines_starting(full, "User Review:"));
    const auto no_rr = render_task_prompt(ex, *mode_from_name("no_review_no_rating")).text;
    CHECK(no_rr == without_lines_starting(without_lines_starting(full, "User Review:"), "User Rating:"));
    const auto no_desc = render_task_prompt(ex, *mode_from_name("no_description")).text;
    CHECK(no_desc == without_lines_starting(full, "Description:"));
}

TEST_CASE("one-shot needs an exemplar and renders it above the task") {
    const auto xs = testing::synthetic_examples(2);
    const auto mode = *mode_from_name("one_shot");
    CHECK_THROWS_AS(render_task_prompt(xs[0], mode), ConfigError);
    CHECK_THROWS_AS(render_task_prompt(xs[0], mode, Exemplar{xs[1], ""}), ConfigError);
    const auto text = render_task_prompt(xs[0], mode, Exemplar{xs[1], "They like serums."}).text;
    const auto begin = text.find(kExemplarBegin);
    const auto end = text.find(kExemplarEnd);
    REQUIRE(begin == 0);
    REQUIRE(end != std::string::npos);
    const auto worked = text.substr(0, end);
    CHECK(contains(worked, "They like serums."));
    CHECK(contains(worked, std::string(kRatingMarker) + "\n" + std::to_string(xs[1].truth_rating) + "\n"));
    CHECK(contains(text.substr(end), xs[0].target.title));
}

TEST_CASE("missing fields render as unknown and prices use two decimals") {
    auto ex = testing::synthetic_examples(1)[0];
    ex.target.brand.clear();
    ex.target.description.clear();
    ex.target.price = 12.5;
    const auto text = render_task_prompt(ex, *mode_from_name("cot")).text;
    const auto block = text.substr(text.find("### New Item Information: ###"));
    CHECK(contains(block, "Brand: unknown\n"));
    CHECK(contains(block, "Description: unknown\n"));
    CHECK(contains(block, "Item Price: 12.50\n"));
    ex.target.price.reset();
    CHECK(contains(render_task_prompt(ex, *mode_from_name("cot")).text, "Item Price: unknown\n"));
}

TEST_CASE("rendering is a pure function of its inputs") {
    const auto ex = testing::synthetic_examples(3)[2];
    CHECK(render_task_prompt(ex, {}).text == render_task_prompt(ex, {}).text);
    CHECK(render_posthoc_prompt(ex).text == render_posthoc_prompt(ex).text);
}

TEST_CASE("post hoc prompt states the truth and never asks for a rating") {
    auto ex = testing::synthetic_examples(1)[0];
    ex.truth_rating = 5;
    const auto text = render_posthoc_prompt(ex).text;
    CHECK(contains(text, kGroundTruthHeader));
    CHECK(contains(text, "The user gave the new product a rating of 5."));
    CHECK_FALSE(contains(text, kRatingMarker));
    CHECK_FALSE(contains(text, kReasonMarker));
    CHECK_FALSE(contains(text, "predict"));
}

TEST_CASE("verification prompt carries the explanation but not the truth") {
    auto ex = testing::synthetic_examples(1)[0];
    const std::string expl = "The user enjoys gentle skin care.";
    const auto text = render_verification_prompt(ex, expl).text;
    CHECK(contains(text, std::string(kExplanationHeader) + "\n" + expl + "\n"));
    CHECK(contains(text, kRatingMarker));
    CHECK_FALSE(contains(text, kReasonMarker));
    CHECK_FALSE(contains(text, kGroundTruthHeader));
    // The renderer never reads the truth rating.
    for (int r = 1; r <= 5; ++r) {
        ex.truth_rating = r;
        CHECK(render_verification_prompt(ex, expl).text == text);
    }
    CHECK_THROWS_AS(render_verification_prompt(ex, ""), EmptyExplanation);
    CHECK_THROWS_AS(render_verification_prompt(ex, "  \n"), EmptyExplanation);
}

TEST_CASE("mode names") {
    CHECK(mode_from_name("cot")->reasoning);
    CHECK_FALSE(mode_from_name("no_reasoning")->reasoning);
    CHECK(mode_from_name("one_shot")->one_shot);
    CHECK_FALSE(mode_from_name("no_review")->include_reviews);
    CHECK_FALSE(mode_from_name("no_review_no_rating")->include_ratings);
    CHECK_FALSE(mode_from_name("no_description")->include_item_description);
    CHECK_FALSE(mode_from_name("zero").has_value());
}

}
