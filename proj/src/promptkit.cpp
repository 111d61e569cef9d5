#include "recreason/promptkit.hpp"

#include <cstdio>

namespace recreason::promptkit {

namespace {

struct DomainWords {
    std::string_view noun;        // "product"
    std::string_view label;       // "Product"
    std::string_view history_verb;  // "purchase"
};

DomainWords domain_words(std::string_view tag) {
    if (tag == "movies_tv" || tag == "movies" || tag == "movies_and_tv") {
        return {"video (movies and tv)", "Video (Movies and TV)", "watch"};
    }
    return {"product", "Product", "purchase"};
}

// Field values are flattened to one line so each field occupies exactly one
// line of the prompt.
std::string field(std::string_view value) {
    std::string out;
    out.reserve(value.size());
    bool pending_space = false;
    for (char c : value) {
        if (c == '\n' || c == '\r' || c == '\t' || c == ' ') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += c;
    }
    return out.empty() ? std::string("unknown") : out;
}

std::string price_text(const std::optional<double>& price) {
    if (!price) return "unknown";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", *price);
    return buf;
}

std::string categories_text(const corpus::ItemMetadata& item) {
    std::string joined;
    for (const auto& c : item.categories) {
        if (!joined.empty()) joined += ", ";
        joined += c;
    }
    return field(joined);
}

void append_item_block(std::string& out, const corpus::ItemMetadata& item, const DomainWords& words,
                       const PromptMode& mode) {
    out += words.label;
    out += " Title: " + field(item.title) + "\n";
    out += "Brand: " + field(item.brand) + "\n";
    out += "Categories: " + categories_text(item) + "\n";
    if (mode.include_item_description) out += "Description: " + field(item.description) + "\n";
    out += "Item Price: " + price_text(item.price) + "\n";
}

void append_preamble(std::string& out, const DomainWords& words) {
    out += "Here is information about a user and a new ";
    out += words.noun;
    out +=
        " being recommended to the user. For the user, we have the user's past item information history "
        "and the user's corresponding ratings. User ratings range from 1 to 5, where 1 is the lowest and 5 "
        "is the highest. For the new item being recommended, we have the item information.\n\n";
}

void append_inputs(std::string& out, const corpus::Example& ex, const DomainWords& words,
                   const PromptMode& mode) {
    out += "### Past User History: ###\n";
    for (const auto& purchase : ex.history.purchases) {
        append_item_block(out, purchase.metadata, words, mode);
        if (mode.include_ratings) out += "User Rating: " + std::to_string(purchase.rating) + "\n";
        if (mode.include_reviews) out += "User Review: " + field(purchase.review) + "\n";
        out += "\n";
    }
    out += "### New Item Information: ###\n";
    out += "New ";
    out += words.label;
    out += "\n";
    append_item_block(out, ex.target, words, mode);
    out += "\n######\n\n";
}

void append_question(std::string& out, const DomainWords& words) {
    out += "Given the user's past ";
    out += words.history_verb;
    out += " history and the new item information, what information can you infer about the user's "
           "preferences and how they will rate the new ";
    out += words.noun;
    out += "?\n\n";
    out += "Your reasoning explanation should be based on any commonalities in the user history items and "
           "inferred user tastes or preferences.\n\n";
}

// The rating-only variant drops "After your reasoning," and the reason block.
void append_task_description(std::string& out, const DomainWords& words, bool reasoning) {
    append_question(out, words);
    out += reasoning ? "After your reasoning, predict a numerical rating.\n\n" : "predict a numerical rating.\n\n";
    out += "Please follow the format below:\n";
    if (reasoning) {
        out += kReasonMarker;
        out += "\nWrite your reasoning explanation here. You can have line breaks.\n\n";
    }
    out += kRatingMarker;
    out += "\nGive a single numerical rating, e.g. 1\n";
}

std::string render_body(const corpus::Example& ex, const PromptMode& mode) {
    const auto words = domain_words(ex.domain_tag);
    std::string out;
    append_preamble(out, words);
    append_inputs(out, ex, words, mode);
    append_task_description(out, words, mode.reasoning);
    return out;
}

} // namespace

RenderedPrompt render_task_prompt(const corpus::Example& example, const PromptMode& mode,
                                  const std::optional<Exemplar>& exemplar) {
    std::string text;
    if (mode.one_shot) {
        if (!exemplar) throw ConfigError("one-shot mode requires an exemplar");
        if (mode.reasoning && exemplar->reasoning.empty()) {
            throw ConfigError("one-shot exemplar " + exemplar->example.example_id + " has no reasoning text");
        }
        text += kExemplarBegin;
        text += "\n";
        text += render_body(exemplar->example, mode);
        text += "\n";
        if (mode.reasoning) {
            text += kReasonMarker;
            text += "\n" + exemplar->reasoning + "\n\n";
        }
        text += kRatingMarker;
        text += "\n" + std::to_string(exemplar->example.truth_rating) + "\n";
        text += kExemplarEnd;
        text += "\n\n";
    }
    text += render_body(example, mode);
    return {std::move(text), mode, example.example_id};
}

RenderedPrompt render_posthoc_prompt(const corpus::Example& example) {
    if (example.truth_rating < 1 || example.truth_rating > 5) {
        throw InvalidInput("MissingField", "post hoc prompt needs a truth rating in 1..5");
    }
    const auto words = domain_words(example.domain_tag);
    const PromptMode mode{};
    std::string out;
    append_preamble(out, words);
    append_inputs(out, example, words, mode);
    out += kGroundTruthHeader;
    out += "\nThe user gave the new ";
    out += words.noun;
    out += " a rating of " + std::to_string(example.truth_rating) + ".\n\n";
    out += "Given the user's past ";
    out += words.history_verb;
    out += " history, the new item information and the rating the user gave, explain why the user gave the new ";
    out += words.noun;
    out += " this rating.\n\n";
    out += "Your explanation should be based on any commonalities in the user history items and inferred user "
           "tastes or preferences. Write only the explanation.\n";
    return {std::move(out), mode, example.example_id};
}

RenderedPrompt render_verification_prompt(const corpus::Example& example,
                                          std::string_view scrubbed_explanation) {
    if (scrubbed_explanation.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        throw EmptyExplanation();
    }
    const auto words = domain_words(example.domain_tag);
    PromptMode mode{};
    mode.reasoning = false;
    std::string out;
    append_preamble(out, words);
    append_inputs(out, example, words, mode);
    out += kExplanationHeader;
    out += "\n";
    out += scrubbed_explanation;
    out += "\n######\n\n";
    append_task_description(out, words, false);
    return {std::move(out), mode, example.example_id};
}

std::optional<PromptMode> mode_from_name(std::string_view name) {
    PromptMode m{};
    if (name == "cot") return m;
    if (name == "no_reasoning") {
        m.reasoning = false;
        return m;
    }
    if (name == "no_review") {
        m.include_reviews = false;
        return m;
    }
    if (name == "no_review_no_rating") {
        m.include_reviews = false;
        m.include_ratings = false;
        return m;
    }
    if (name == "no_description") {
        m.include_item_description = false;
        return m;
    }
    if (name == "one_shot") {
        m.one_shot = true;
        return m;
    }
    return std::nullopt;
}

} // namespace recreason::promptkit
