#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "recreason/jsonl.hpp"
#include "recreason/promptkit.hpp"

namespace recreason::outparse {

struct ParsedOutput {
    std::string reasoning;  // empty in rating-only mode
    int rating = 0;         // always 1..5
    std::string raw;
};

enum class FailureReason { MissingRatingMarker, MalformedRating, OutOfRangeRating, EmptyOutput };

std::string_view to_string(FailureReason reason);

struct ParseFailure {
    FailureReason reason;
    std::string raw;
};

using ParseResult = std::variant<ParsedOutput, ParseFailure>;

/// With reasoning: reasoning is the trimmed text between "### Reason ###"
/// and the last "### Rating ###"; the rating is the first numeric token
/// after that marker. Rating-only: the first numeric token after the last
/// rating marker if one is present, else in the whole text. A numeric token
/// must be a bare integer in 1..5; "4.5", "4/5" or "6" are failures.
ParseResult parse_prediction(std::string_view text, const promptkit::PromptMode& mode);

/// Splits after '.', '!' or '?' when followed by whitespace or end of text.
/// Sentences keep their terminator and are trimmed.
std::vector<std::string> split_sentences(std::string_view text);

/// Phrases whose presence marks a sentence as leaking the target rating.
inline constexpr std::array<std::string_view, 3> kLeakageTriggers = {"a rating of", "stars", "scores"};

/// Case-insensitive ASCII substring test against kLeakageTriggers.
bool contains_leakage_trigger(std::string_view text);

/// Drops every sentence containing a trigger and re-joins the rest with
/// single spaces. The result may be empty.
std::string scrub_leakage(std::string_view explanation);

/// Failure counts per reason plus the failure rate over `total` attempts.
struct FailureReport {
    std::array<std::size_t, 4> counts{};
    std::size_t total = 0;

    void record(const ParseResult& result);
    std::size_t failures() const;
    double failure_rate() const;
    json to_json() const;
};

} // namespace recreason::outparse
