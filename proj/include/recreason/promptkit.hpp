#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "recreason/corpus.hpp"

namespace recreason::promptkit {

/// Bumped whenever any template text below changes; recorded in run manifests.
inline constexpr std::string_view kTemplateVersion = "rp-v1";

inline constexpr std::string_view kReasonMarker = "### Reason ###";
inline constexpr std::string_view kRatingMarker = "### Rating ###";
inline constexpr std::string_view kExplanationHeader = "### Explanation: ###";
inline constexpr std::string_view kGroundTruthHeader = "### Ground Truth Rating: ###";
inline constexpr std::string_view kExemplarBegin = "=== Example ===";
inline constexpr std::string_view kExemplarEnd = "=== End of Example ===";

struct PromptMode {
    bool reasoning = true;
    bool one_shot = false;
    bool include_reviews = true;
    bool include_ratings = true;
    bool include_item_description = true;

    bool operator==(const PromptMode&) const = default;
};

/// A worked example shown above the real task in one-shot mode.
struct Exemplar {
    corpus::Example example;
    std::string reasoning;
};

struct RenderedPrompt {
    std::string text;
    PromptMode mode;
    std::string example_id;
};

class EmptyExplanation : public Error {
public:
    EmptyExplanation() : Error("EmptyExplanation", "explanation is empty after scrubbing") {}
};

RenderedPrompt render_task_prompt(const corpus::Example& example, const PromptMode& mode,
                                  const std::optional<Exemplar>& exemplar = std::nullopt);

/// Post hoc explanation request: states the ground-truth rating and asks
/// why the user gave it. Never asks for a prediction.
RenderedPrompt render_posthoc_prompt(const corpus::Example& example);

/// Self-verification request: history, new item and the scrubbed
/// explanation, followed by the rating-only task description. The
/// example's truth rating is never read.
RenderedPrompt render_verification_prompt(const corpus::Example& example,
                                          std::string_view scrubbed_explanation);

/// Named ablation ladder used by configs: "cot", "no_reasoning",
/// "no_review", "no_review_no_rating", "no_description", "one_shot".
std::optional<PromptMode> mode_from_name(std::string_view name);

} // namespace recreason::promptkit
