#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "recreason/corpus.hpp"
#include "recreason/genbackend.hpp"
#include "recreason/outparse.hpp"

namespace recreason::ftexport {

struct ReasoningSample {
    std::string example_id;
    std::size_t sample_index = 0;
    std::string reasoning;
    int predicted_rating = 0;
    int truth_rating = 0;

    bool operator==(const ReasoningSample&) const = default;
};

enum class FilterPolicy { None, FiveClass, Binary, OneOff };

inline constexpr std::array<FilterPolicy, 4> kAllPolicies = {FilterPolicy::None, FilterPolicy::FiveClass,
                                                             FilterPolicy::Binary, FilterPolicy::OneOff};

std::string_view to_string(FilterPolicy policy);
std::optional<FilterPolicy> policy_from_name(std::string_view name);

struct FineTuneRecord {
    std::string input;
    std::string target;
    std::string example_id;
    std::size_t sample_index = 0;
    FilterPolicy policy = FilterPolicy::None;
};

struct CollectionResult {
    std::vector<ReasoningSample> samples;
    outparse::FailureReport parse_failures;
    std::size_t backend_failures = 0;  // samples lost to backend errors
    std::size_t requested = 0;
    std::size_t shortfall() const { return requested - samples.size(); }
};

class ExportError : public Error {
public:
    ExportError(const std::string& message, std::vector<std::string> ids)
        : Error("ExportError", message), ids_(std::move(ids)) {}
    const std::vector<std::string>& ids() const noexcept { return ids_; }

private:
    std::vector<std::string> ids_;
};

/// Request for m reasoning samples from the with-reasoning prompt.
genbackend::GenerationRequest teacher_request(const corpus::Example& example, std::size_t m, double temperature,
                                              std::uint64_t seed);

/// m >= 1; temperature > 0 whenever m > 1.
CollectionResult collect_samples(const std::vector<corpus::Example>& dataset, std::size_t m, double temperature,
                                 std::uint64_t seed, genbackend::GenerationClient& client);

/// Survival predicate for one sample.
bool keeps(FilterPolicy policy, int predicted, int truth);

std::vector<ReasoningSample> apply_filter(const std::vector<ReasoningSample>& samples, FilterPolicy policy);

/// "### Reason ###\n<reasoning>\n### Rating ###\n<truth>".
std::string target_text(std::string_view reasoning, int truth_rating);

/// One record per sample in (example_id, sample_index) order. Throws
/// ExportError listing every id missing from `dataset`.
std::vector<FineTuneRecord> export_records(const std::vector<ReasoningSample>& samples,
                                           const std::vector<corpus::Example>& dataset, FilterPolicy policy);

json to_json(const ReasoningSample& s);
ReasoningSample sample_from_json(const json& j);
json to_json(const FineTuneRecord& r);

} // namespace recreason::ftexport
