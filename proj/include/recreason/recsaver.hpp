#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "recreason/corpus.hpp"
#include "recreason/genbackend.hpp"
#include "recreason/nlgmetrics.hpp"

namespace recreason::recsaver {

enum class CandidateStatus {
    Verified,
    Rejected,          // verification rating differs from the truth
    Unverifiable,      // nothing left after scrubbing
    GenerationFailed,  // backend error for the post hoc request
    VerifyFailed,      // backend error or unparseable verification output
    Pending,           // scrubbed, not yet verified
};

std::string_view to_string(CandidateStatus status);
CandidateStatus status_from_string(std::string_view name);

struct PostHocExplanation {
    std::string example_id;
    std::size_t sample_index = 0;
    std::string text;
    std::string scrubbed_text;
    std::optional<int> verification_rating;
    bool verified = false;
    CandidateStatus status = CandidateStatus::Pending;
    std::string failure;  // error code or parse failure reason

    bool operator==(const PostHocExplanation&) const = default;
};

struct Settings {
    std::size_t n = 8;
    double temperature = 0.7;
    std::uint64_t seed = 0;
    std::size_t max_tokens = 512;
};

/// Verified scrubbed texts per example id; every input example has an entry.
using ReferencePool = std::map<std::string, std::vector<std::string>>;

struct CoverageReport {
    std::size_t examples = 0;
    std::size_t examples_with_references = 0;
    std::size_t candidates = 0;
    std::size_t verified = 0;
    std::size_t rejected = 0;
    std::size_t unverifiable = 0;
    std::size_t generation_failed = 0;
    std::size_t verify_failed = 0;
    std::vector<std::string> empty_pools;
};

struct ReasoningScore {
    std::string example_id;
    double bleu = 0;
    double rouge1_f1 = 0;
    double meteor = 0;
    double embed_score = 0;
    std::size_t n_references = 0;
};

class NoReferences : public Error {
public:
    explicit NoReferences(const std::string& example_id)
        : Error("NoReferences", "no references for example " + example_id) {}
};

/// Post hoc request for one example: n samples at the configured temperature.
genbackend::GenerationRequest posthoc_request(const corpus::Example& example, const Settings& settings);

/// Verification request: temperature 0, one sample, no seed.
genbackend::GenerationRequest verification_request(const corpus::Example& example,
                                                   std::string_view scrubbed_text);

/// Builds scrubbed candidates from one post hoc outcome. A failed outcome
/// yields n GenerationFailed records so shortfalls stay visible.
std::vector<PostHocExplanation> candidates_from_outcome(const corpus::Example& example,
                                                        const genbackend::Outcome& outcome, std::size_t n);

std::vector<PostHocExplanation> generate_candidates(const corpus::Example& example, std::size_t n,
                                                    genbackend::GenerationClient& client,
                                                    const Settings& settings);

/// Applies a verification outcome to a Pending candidate.
PostHocExplanation apply_verification(const corpus::Example& example, PostHocExplanation candidate,
                                      const genbackend::Outcome& outcome);

/// Throws EmptyExplanation when the candidate has no scrubbed text.
PostHocExplanation self_verify(const corpus::Example& example, PostHocExplanation candidate,
                               genbackend::GenerationClient& client);

/// Batched generation over a dataset, in dataset order.
std::vector<PostHocExplanation> generate_all(const std::vector<corpus::Example>& dataset,
                                             const Settings& settings, genbackend::GenerationClient& client);

/// Batched verification of every Pending candidate; others pass through.
std::vector<PostHocExplanation> verify_all(const std::vector<corpus::Example>& dataset,
                                           std::vector<PostHocExplanation> candidates,
                                           genbackend::GenerationClient& client);

/// Pool of verified texts (duplicates within an example collapsed).
ReferencePool assemble_pool(const std::vector<corpus::Example>& dataset,
                            const std::vector<PostHocExplanation>& candidates);

/// Every non-empty scrubbed text, verified or not; the comparison pool.
ReferencePool assemble_unverified_pool(const std::vector<corpus::Example>& dataset,
                                       const std::vector<PostHocExplanation>& candidates);

CoverageReport coverage(const std::vector<corpus::Example>& dataset,
                        const std::vector<PostHocExplanation>& candidates);

struct PoolBuild {
    std::vector<PostHocExplanation> candidates;
    ReferencePool pool;
    CoverageReport coverage;
};

PoolBuild build_reference_pool(const std::vector<corpus::Example>& dataset, const Settings& settings,
                               genbackend::GenerationClient& client);

/// Best match over references for each metric independently.
ReasoningScore evaluate_reasoning(std::string_view candidate_reasoning, const std::vector<std::string>& references,
                                  const nlg::EmbeddingScorer& scorer, const nlg::MeteorParams& meteor = {});

json to_json(const PostHocExplanation& candidate);
PostHocExplanation explanation_from_json(const json& j);
json to_json(const CoverageReport& report);
json to_json(const ReasoningScore& score);
ReasoningScore score_from_json(const json& j);

/// Lines of {example_id, reference_index, text, verification_rating}, sorted by id.
/// Pooled texts verified at the truth rating, which is what gets recorded.
std::string pool_to_jsonl(const ReferencePool& pool, const std::vector<corpus::Example>& dataset);
/// Examples without lines are absent; callers that need them add empty entries.
ReferencePool pool_from_jsonl(const std::filesystem::path& path);

} // namespace recreason::recsaver
