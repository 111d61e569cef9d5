#include "recreason/outparse.hpp"

#include <algorithm>
#include <cctype>

namespace recreason::outparse {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Scans whitespace-separated tokens for the first one that looks numeric
// (optionally after an opening bracket or sign) and classifies it.
ParseResult first_rating_token(std::string_view region, std::string_view raw) {
    std::size_t i = 0;
    while (i < region.size()) {
        while (i < region.size() && is_space(region[i])) ++i;
        std::size_t j = i;
        while (j < region.size() && !is_space(region[j])) ++j;
        std::string_view token = region.substr(i, j - i);
        i = j;
        while (!token.empty() && (token.front() == '(' || token.front() == '[' || token.front() == '"' ||
                                  token.front() == '\'' || token.front() == '*')) {
            token.remove_prefix(1);
        }
        while (!token.empty() && std::string_view(".,;:!?)]\"'*").find(token.back()) != std::string_view::npos) {
            token.remove_suffix(1);
        }
        std::string_view digits = token;
        if (!digits.empty() && (digits.front() == '-' || digits.front() == '+')) digits.remove_prefix(1);
        if (digits.empty() || !is_digit(digits.front())) continue;
        if (token.size() != digits.size() || !std::all_of(digits.begin(), digits.end(), is_digit)) {
            return ParseFailure{FailureReason::MalformedRating, std::string(raw)};
        }
        if (digits.size() > 2) return ParseFailure{FailureReason::OutOfRangeRating, std::string(raw)};
        const int value = std::stoi(std::string(digits));
        if (value < 1 || value > 5) return ParseFailure{FailureReason::OutOfRangeRating, std::string(raw)};
        return ParsedOutput{{}, value, std::string(raw)};
    }
    return ParseFailure{FailureReason::MalformedRating, std::string(raw)};
}

} // namespace

std::string_view to_string(FailureReason reason) {
    switch (reason) {
    case FailureReason::MissingRatingMarker: return "MissingRatingMarker";
    case FailureReason::MalformedRating: return "MalformedRating";
    case FailureReason::OutOfRangeRating: return "OutOfRangeRating";
    case FailureReason::EmptyOutput: return "EmptyOutput";
    }
    return "Unknown";
}

ParseResult parse_prediction(std::string_view text, const promptkit::PromptMode& mode) {
    if (trim(text).empty()) return ParseFailure{FailureReason::EmptyOutput, std::string(text)};

    const auto marker = text.rfind(promptkit::kRatingMarker);
    if (!mode.reasoning) {
        auto region = marker == std::string_view::npos ? text
                                                        : text.substr(marker + promptkit::kRatingMarker.size());
        return first_rating_token(region, text);
    }
    if (marker == std::string_view::npos) return ParseFailure{FailureReason::MissingRatingMarker, std::string(text)};

    auto result = first_rating_token(text.substr(marker + promptkit::kRatingMarker.size()), text);
    if (auto* parsed = std::get_if<ParsedOutput>(&result)) {
        auto head = text.substr(0, marker);
        if (auto r = head.find(promptkit::kReasonMarker); r != std::string_view::npos) {
            head = head.substr(r + promptkit::kReasonMarker.size());
        }
        parsed->reasoning = std::string(trim(head));
    }
    return result;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    auto emit = [&](std::size_t end) {
        auto s = trim(text.substr(start, end - start));
        if (!s.empty()) out.emplace_back(s);
        start = end;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        if (i + 1 == text.size() || is_space(text[i + 1])) emit(i + 1);
    }
    if (start < text.size()) emit(text.size());
    return out;
}

bool contains_leakage_trigger(std::string_view text) {
    const auto lowered = to_lower(text);
    return std::any_of(kLeakageTriggers.begin(), kLeakageTriggers.end(),
                       [&](std::string_view t) { return lowered.find(t) != std::string::npos; });
}

std::string scrub_leakage(std::string_view explanation) {
    std::string out;
    for (const auto& sentence : split_sentences(explanation)) {
        if (contains_leakage_trigger(sentence)) continue;
        if (!out.empty()) out += ' ';
        out += sentence;
    }
    return out;
}

void FailureReport::record(const ParseResult& result) {
    ++total;
    if (const auto* f = std::get_if<ParseFailure>(&result)) ++counts[static_cast<std::size_t>(f->reason)];
}

std::size_t FailureReport::failures() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
}

double FailureReport::failure_rate() const {
    return total == 0 ? 0.0 : static_cast<double>(failures()) / static_cast<double>(total);
}

json FailureReport::to_json() const {
    json by_reason = json::object();
    for (std::size_t i = 0; i < counts.size(); ++i) {
        by_reason[std::string(to_string(static_cast<FailureReason>(i)))] = counts[i];
    }
    return {{"total", total}, {"failures", failures()}, {"failure_rate", failure_rate()}, {"by_reason", by_reason}};
}

} // namespace recreason::outparse
