#include "recreason/recsaver.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "recreason/outparse.hpp"
#include "recreason/promptkit.hpp"

namespace recreason::recsaver {

namespace {

constexpr std::array<std::pair<CandidateStatus, std::string_view>, 6> kStatusNames = {{
    {CandidateStatus::Verified, "verified"},
    {CandidateStatus::Rejected, "rejected"},
    {CandidateStatus::Unverifiable, "unverifiable"},
    {CandidateStatus::GenerationFailed, "generation_failed"},
    {CandidateStatus::VerifyFailed, "verify_failed"},
    {CandidateStatus::Pending, "pending"},
}};

std::unordered_map<std::string, const corpus::Example*> index_by_id(const std::vector<corpus::Example>& dataset) {
    std::unordered_map<std::string, const corpus::Example*> index;
    index.reserve(dataset.size());
    for (const auto& ex : dataset) index.emplace(ex.example_id, &ex);
    return index;
}

template <typename Keep>
ReferencePool assemble(const std::vector<corpus::Example>& dataset, const std::vector<PostHocExplanation>& candidates,
                       Keep keep) {
    ReferencePool pool;
    for (const auto& ex : dataset) pool[ex.example_id];
    std::map<std::string, std::set<std::string>> seen;
    for (const auto& c : candidates) {
        auto it = pool.find(c.example_id);
        if (it == pool.end() || !keep(c) || c.scrubbed_text.empty()) continue;
        if (seen[c.example_id].insert(c.scrubbed_text).second) it->second.push_back(c.scrubbed_text);
    }
    return pool;
}

} // namespace

std::string_view to_string(CandidateStatus status) {
    for (const auto& [s, name] : kStatusNames) {
        if (s == status) return name;
    }
    return "pending";
}

CandidateStatus status_from_string(std::string_view name) {
    for (const auto& [s, n] : kStatusNames) {
        if (n == name) return s;
    }
    throw InvalidInput("SchemaError", "unknown candidate status: " + std::string(name));
}

genbackend::GenerationRequest posthoc_request(const corpus::Example& example, const Settings& settings) {
    if (settings.n == 0) throw ConfigError("reference generation needs n >= 1");
    genbackend::GenerationRequest req;
    req.prompt = promptkit::render_posthoc_prompt(example).text;
    req.temperature = settings.temperature;
    req.num_samples = settings.n;
    req.max_tokens = settings.max_tokens;
    req.seed = settings.seed;
    return req;
}

genbackend::GenerationRequest verification_request(const corpus::Example& example, std::string_view scrubbed_text) {
    genbackend::GenerationRequest req;
    req.prompt = promptkit::render_verification_prompt(example, scrubbed_text).text;
    req.temperature = 0.0;
    req.num_samples = 1;
    return req;
}

std::vector<PostHocExplanation> candidates_from_outcome(const corpus::Example& example,
                                                        const genbackend::Outcome& outcome, std::size_t n) {
    std::vector<PostHocExplanation> out;
    if (!outcome.ok()) {
        for (std::size_t i = 0; i < n; ++i) {
            PostHocExplanation c;
            c.example_id = example.example_id;
            c.sample_index = i;
            c.status = CandidateStatus::GenerationFailed;
            c.failure = outcome.error_code;
            out.push_back(std::move(c));
        }
        return out;
    }
    for (std::size_t i = 0; i < outcome.candidates.size(); ++i) {
        PostHocExplanation c;
        c.example_id = example.example_id;
        c.sample_index = i;
        c.text = outcome.candidates[i].text;
        c.scrubbed_text = outparse::scrub_leakage(c.text);
        c.status = c.scrubbed_text.empty() ? CandidateStatus::Unverifiable : CandidateStatus::Pending;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<PostHocExplanation> generate_candidates(const corpus::Example& example, std::size_t n,
                                                    genbackend::GenerationClient& client, const Settings& settings) {
    Settings s = settings;
    s.n = n;
    return candidates_from_outcome(example, client.run_one(posthoc_request(example, s)), n);
}

PostHocExplanation apply_verification(const corpus::Example& example, PostHocExplanation candidate,
                                      const genbackend::Outcome& outcome) {
    if (!outcome.ok() || outcome.candidates.empty()) {
        candidate.status = CandidateStatus::VerifyFailed;
        candidate.failure = outcome.ok() ? "EmptyResponse" : outcome.error_code;
        return candidate;
    }
    promptkit::PromptMode rating_only{};
    rating_only.reasoning = false;
    const auto parsed = outparse::parse_prediction(outcome.candidates.front().text, rating_only);
    if (const auto* failure = std::get_if<outparse::ParseFailure>(&parsed)) {
        candidate.status = CandidateStatus::VerifyFailed;
        candidate.failure = std::string(outparse::to_string(failure->reason));
        return candidate;
    }
    candidate.verification_rating = std::get<outparse::ParsedOutput>(parsed).rating;
    candidate.verified = *candidate.verification_rating == example.truth_rating;
    candidate.status = candidate.verified ? CandidateStatus::Verified : CandidateStatus::Rejected;
    return candidate;
}

PostHocExplanation self_verify(const corpus::Example& example, PostHocExplanation candidate,
                               genbackend::GenerationClient& client) {
    if (candidate.scrubbed_text.empty()) throw promptkit::EmptyExplanation();
    const auto outcome = client.run_one(verification_request(example, candidate.scrubbed_text));
    return apply_verification(example, std::move(candidate), outcome);
}

std::vector<PostHocExplanation> generate_all(const std::vector<corpus::Example>& dataset, const Settings& settings,
                                             genbackend::GenerationClient& client) {
    std::vector<genbackend::GenerationRequest> requests;
    requests.reserve(dataset.size());
    for (const auto& ex : dataset) requests.push_back(posthoc_request(ex, settings));
    const auto outcomes = client.run(requests);
    std::vector<PostHocExplanation> out;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        auto batch = candidates_from_outcome(dataset[i], outcomes[i], settings.n);
        std::move(batch.begin(), batch.end(), std::back_inserter(out));
    }
    return out;
}

std::vector<PostHocExplanation> verify_all(const std::vector<corpus::Example>& dataset,
                                           std::vector<PostHocExplanation> candidates,
                                           genbackend::GenerationClient& client) {
    const auto index = index_by_id(dataset);
    std::vector<std::size_t> pending;
    std::vector<genbackend::GenerationRequest> requests;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        auto& c = candidates[i];
        if (c.status != CandidateStatus::Pending) continue;
        const auto it = index.find(c.example_id);
        if (it == index.end()) {
            throw InvalidInput("UnknownExample", "candidate refers to unknown example " + c.example_id);
        }
        pending.push_back(i);
        requests.push_back(verification_request(*it->second, c.scrubbed_text));
    }
    const auto outcomes = client.run(requests);
    for (std::size_t k = 0; k < pending.size(); ++k) {
        auto& c = candidates[pending[k]];
        const auto& example = *index.at(c.example_id);
        c = apply_verification(example, std::move(c), outcomes[k]);
    }
    return candidates;
}

ReferencePool assemble_pool(const std::vector<corpus::Example>& dataset,
                            const std::vector<PostHocExplanation>& candidates) {
    return assemble(dataset, candidates, [](const PostHocExplanation& c) { return c.verified; });
}

ReferencePool assemble_unverified_pool(const std::vector<corpus::Example>& dataset,
                                       const std::vector<PostHocExplanation>& candidates) {
    return assemble(dataset, candidates, [](const PostHocExplanation&) { return true; });
}

CoverageReport coverage(const std::vector<corpus::Example>& dataset,
                        const std::vector<PostHocExplanation>& candidates) {
    CoverageReport r;
    r.examples = dataset.size();
    r.candidates = candidates.size();
    for (const auto& c : candidates) {
        switch (c.status) {
        case CandidateStatus::Verified: ++r.verified; break;
        case CandidateStatus::Rejected: ++r.rejected; break;
        case CandidateStatus::Unverifiable: ++r.unverifiable; break;
        case CandidateStatus::GenerationFailed: ++r.generation_failed; break;
        case CandidateStatus::VerifyFailed: ++r.verify_failed; break;
        case CandidateStatus::Pending: break;
        }
    }
    for (const auto& [id, refs] : assemble_pool(dataset, candidates)) {
        if (refs.empty()) {
            r.empty_pools.push_back(id);
        } else {
            ++r.examples_with_references;
        }
    }
    return r;
}

PoolBuild build_reference_pool(const std::vector<corpus::Example>& dataset, const Settings& settings,
                               genbackend::GenerationClient& client) {
    PoolBuild b;
    b.candidates = verify_all(dataset, generate_all(dataset, settings, client), client);
    b.pool = assemble_pool(dataset, b.candidates);
    b.coverage = coverage(dataset, b.candidates);
    return b;
}

ReasoningScore evaluate_reasoning(std::string_view candidate_reasoning, const std::vector<std::string>& references,
                                  const nlg::EmbeddingScorer& scorer, const nlg::MeteorParams& meteor) {
    if (references.empty()) throw NoReferences("(inline)");
    const auto cand = nlg::tokenize(candidate_reasoning);
    ReasoningScore s;
    s.n_references = references.size();
    for (const auto& ref_text : references) {
        const auto ref = nlg::tokenize(ref_text);
        s.bleu = std::max(s.bleu, nlg::bleu(cand, ref));
        s.rouge1_f1 = std::max(s.rouge1_f1, nlg::rouge1_f1(cand, ref));
        s.meteor = std::max(s.meteor, nlg::meteor(cand, ref, meteor));
        s.embed_score = std::max(s.embed_score, nlg::embed_score(cand, ref, scorer));
    }
    return s;
}

json to_json(const PostHocExplanation& c) {
    json j = {{"example_id", c.example_id},
              {"sample_index", c.sample_index},
              {"text", c.text},
              {"scrubbed_text", c.scrubbed_text},
              {"verification_rating", nullptr},
              {"verified", c.verified},
              {"status", to_string(c.status)},
              {"failure", c.failure}};
    if (c.verification_rating) j["verification_rating"] = *c.verification_rating;
    return j;
}

PostHocExplanation explanation_from_json(const json& j) {
    try {
        PostHocExplanation c;
        c.example_id = j.at("example_id").get<std::string>();
        c.sample_index = j.at("sample_index").get<std::size_t>();
        c.text = j.at("text").get<std::string>();
        c.scrubbed_text = j.at("scrubbed_text").get<std::string>();
        if (!j.at("verification_rating").is_null()) c.verification_rating = j["verification_rating"].get<int>();
        c.verified = j.at("verified").get<bool>();
        c.status = status_from_string(j.at("status").get<std::string>());
        c.failure = j.value("failure", "");
        return c;
    } catch (const json::exception& e) {
        throw InvalidInput("SchemaError", std::string("bad explanation record: ") + e.what());
    }
}

json to_json(const CoverageReport& r) {
    return {{"examples", r.examples},
            {"examples_with_references", r.examples_with_references},
            {"candidates", r.candidates},
            {"verified", r.verified},
            {"rejected", r.rejected},
            {"unverifiable", r.unverifiable},
            {"generation_failed", r.generation_failed},
            {"verify_failed", r.verify_failed},
            {"empty_pools", r.empty_pools}};
}

json to_json(const ReasoningScore& s) {
    return {{"example_id", s.example_id}, {"bleu", s.bleu},           {"rouge1_f1", s.rouge1_f1},
            {"meteor", s.meteor},         {"embed_score", s.embed_score}, {"n_references", s.n_references}};
}

ReasoningScore score_from_json(const json& j) {
    try {
        ReasoningScore s;
        s.example_id = j.at("example_id").get<std::string>();
        s.bleu = j.at("bleu").get<double>();
        s.rouge1_f1 = j.at("rouge1_f1").get<double>();
        s.meteor = j.at("meteor").get<double>();
        s.embed_score = j.at("embed_score").get<double>();
        s.n_references = j.at("n_references").get<std::size_t>();
        return s;
    } catch (const json::exception& e) {
        throw InvalidInput("SchemaError", std::string("bad score record: ") + e.what());
    }
}

std::string pool_to_jsonl(const ReferencePool& pool, const std::vector<corpus::Example>& dataset) {
    const auto index = index_by_id(dataset);
    std::vector<json> rows;
    for (const auto& [id, refs] : pool) {
        const auto it = index.find(id);
        for (std::size_t i = 0; i < refs.size(); ++i) {
            json row = {{"example_id", id}, {"reference_index", i}, {"text", refs[i]}, {"verification_rating", nullptr}};
            if (it != index.end()) row["verification_rating"] = it->second->truth_rating;
            rows.push_back(std::move(row));
        }
    }
    return to_jsonl(rows);
}

ReferencePool pool_from_jsonl(const std::filesystem::path& path) {
    ReferencePool pool;
    for (const auto& row : read_jsonl(path)) {
        pool[row.at("example_id").get<std::string>()].push_back(row.at("text").get<std::string>());
    }
    return pool;
}

} // namespace recreason::recsaver
