#include "recreason/ftexport.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "recreason/promptkit.hpp"

namespace recreason::ftexport {

std::string_view to_string(FilterPolicy policy) {
    switch (policy) {
    case FilterPolicy::None: return "none";
    case FilterPolicy::FiveClass: return "five_class";
    case FilterPolicy::Binary: return "binary";
    case FilterPolicy::OneOff: return "one_off";
    }
    return "none";
}

std::optional<FilterPolicy> policy_from_name(std::string_view name) {
    for (auto p : kAllPolicies) {
        if (to_string(p) == name) return p;
    }
    return std::nullopt;
}

genbackend::GenerationRequest teacher_request(const corpus::Example& example, std::size_t m, double temperature,
                                              std::uint64_t seed) {
    if (m == 0) throw ConfigError("teacher sampling needs m >= 1");
    if (m > 1 && !(temperature > 0.0)) throw ConfigError("m > 1 samples need a positive temperature");
    genbackend::GenerationRequest req;
    req.prompt = promptkit::render_task_prompt(example, promptkit::PromptMode{}).text;
    req.temperature = temperature;
    req.num_samples = m;
    req.seed = seed;
    return req;
}

CollectionResult collect_samples(const std::vector<corpus::Example>& dataset, std::size_t m, double temperature,
                                 std::uint64_t seed, genbackend::GenerationClient& client) {
    std::vector<genbackend::GenerationRequest> requests;
    requests.reserve(dataset.size());
    for (const auto& ex : dataset) requests.push_back(teacher_request(ex, m, temperature, seed));
    const auto outcomes = client.run(requests);

    CollectionResult result;
    result.requested = dataset.size() * m;
    const promptkit::PromptMode with_reasoning{};
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& outcome = outcomes[i];
        if (!outcome.ok()) {
            result.backend_failures += m;
            continue;
        }
        for (std::size_t k = 0; k < outcome.candidates.size() && k < m; ++k) {
            const auto parsed = outparse::parse_prediction(outcome.candidates[k].text, with_reasoning);
            result.parse_failures.record(parsed);
            if (const auto* ok = std::get_if<outparse::ParsedOutput>(&parsed)) {
                result.samples.push_back({dataset[i].example_id, k, ok->reasoning, ok->rating, dataset[i].truth_rating});
            }
        }
        if (outcome.candidates.size() < m) result.backend_failures += m - outcome.candidates.size();
    }
    return result;
}

bool keeps(FilterPolicy policy, int predicted, int truth) {
    switch (policy) {
    case FilterPolicy::None: return true;
    case FilterPolicy::FiveClass: return predicted == truth;
    case FilterPolicy::Binary: return (predicted > 3) == (truth > 3);
    case FilterPolicy::OneOff: return std::abs(predicted - truth) <= 1;
    }
    return false;
}

std::vector<ReasoningSample> apply_filter(const std::vector<ReasoningSample>& samples, FilterPolicy policy) {
    std::vector<ReasoningSample> out;
    std::copy_if(samples.begin(), samples.end(), std::back_inserter(out),
                 [policy](const ReasoningSample& s) { return keeps(policy, s.predicted_rating, s.truth_rating); });
    return out;
}

std::string target_text(std::string_view reasoning, int truth_rating) {
    std::string t(promptkit::kReasonMarker);
    t += "\n";
    t += reasoning;
    t += "\n";
    t += promptkit::kRatingMarker;
    t += "\n";
    t += std::to_string(truth_rating);
    return t;
}

std::vector<FineTuneRecord> export_records(const std::vector<ReasoningSample>& samples,
                                           const std::vector<corpus::Example>& dataset, FilterPolicy policy) {
    std::unordered_map<std::string, const corpus::Example*> index;
    for (const auto& ex : dataset) index.emplace(ex.example_id, &ex);

    std::vector<std::string> missing;
    for (const auto& s : samples) {
        if (!index.count(s.example_id)) missing.push_back(s.example_id);
    }
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        std::string list;
        for (const auto& id : missing) list += (list.empty() ? "" : ",") + id;
        throw ExportError("samples refer to unknown examples: " + list, missing);
    }

    std::vector<const ReasoningSample*> ordered;
    for (const auto& s : samples) ordered.push_back(&s);
    std::sort(ordered.begin(), ordered.end(), [](const ReasoningSample* a, const ReasoningSample* b) {
        return std::tie(a->example_id, a->sample_index) < std::tie(b->example_id, b->sample_index);
    });

    // Prompts are shared by every sample of an example.
    std::unordered_map<std::string, std::string> prompt_cache;
    std::vector<FineTuneRecord> out;
    out.reserve(ordered.size());
    for (const auto* s : ordered) {
        const auto& ex = *index.at(s->example_id);
        auto [it, fresh] = prompt_cache.try_emplace(ex.example_id);
        if (fresh) it->second = promptkit::render_task_prompt(ex, promptkit::PromptMode{}).text;
        out.push_back({it->second, target_text(s->reasoning, ex.truth_rating), s->example_id, s->sample_index, policy});
    }
    return out;
}

json to_json(const ReasoningSample& s) {
    return {{"example_id", s.example_id},
            {"sample_index", s.sample_index},
            {"reasoning", s.reasoning},
            {"predicted_rating", s.predicted_rating},
            {"truth_rating", s.truth_rating}};
}

ReasoningSample sample_from_json(const json& j) {
    try {
        return {j.at("example_id").get<std::string>(), j.at("sample_index").get<std::size_t>(),
                j.at("reasoning").get<std::string>(), j.at("predicted_rating").get<int>(),
                j.at("truth_rating").get<int>()};
    } catch (const json::exception& e) {
        throw InvalidInput("SchemaError", std::string("bad reasoning sample: ") + e.what());
    }
}

json to_json(const FineTuneRecord& r) {
    return {{"input", r.input},
            {"target", r.target},
            {"example_id", r.example_id},
            {"sample_index", r.sample_index},
            {"policy", to_string(r.policy)}};
}

} // namespace recreason::ftexport
