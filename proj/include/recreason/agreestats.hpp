#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recreason/jsonl.hpp"
#include "recreason/recsaver.hpp"

namespace recreason::agreestats {

struct AnnotationRecord {
    std::string sample_id;
    std::string annotator_id;
    int coherence = 0;       // 1..5
    int faithfulness = 0;    // 0 or 1
    int insightfulness = 0;  // 1..5
};

class InputMismatch : public InvalidInput {
public:
    explicit InputMismatch(const std::string& message) : InvalidInput("InputMismatch", message) {}
};

class DegenerateInput : public InvalidInput {
public:
    explicit DegenerateInput(const std::string& message) : InvalidInput("DegenerateInput", message) {}
};

/// Cohen kappa with quadratic weights w_ij = (i-j)^2 / (k-1)^2 over
/// categories 1..k: 1 - sum(w*observed) / sum(w*expected). A zero
/// denominator (both raters constant and identical) gives 1.
double weighted_cohen_kappa(std::span<const int> a, std::span<const int> b, int n_categories);

/// Student t CDF via the regularized incomplete beta function.
double student_t_cdf(double t, double df);

/// Two-sided p-value for a t statistic.
double two_sided_p(double t, double df);

struct Correlation {
    double rho = 0;
    double p_value = 1;
    std::size_t n = 0;
};

/// Sample Pearson correlation with a two-sided t-test p-value (df = n-2).
Correlation pearson(std::span<const double> xs, std::span<const double> ys);

struct TTest {
    double t = 0;
    double p_value = 1;
    double df = 0;
};

/// Welch's unequal-variance t-test, Welch-Satterthwaite degrees of freedom.
TTest welch_t_test(std::span<const double> a, std::span<const double> b);

/// Fisher's method: -2 sum ln p against chi-square with 2k degrees of freedom.
double fisher_combine(std::span<const double> p_values);

enum class Dimension { Coherence, Faithfulness, Insightfulness };
std::string_view to_string(Dimension d);
int score_of(const AnnotationRecord& r, Dimension d);
int categories_of(Dimension d);

/// One row of the inter-annotator agreement table.
struct DimensionAgreement {
    Dimension dimension{};
    double mean = 0;
    std::optional<double> kappa;        // mean over annotator pairs
    std::optional<double> avg_rho;      // mean over annotator pairs
    std::optional<double> p_fisher;     // Fisher-combined pairwise p
    std::optional<double> p_max;        // largest pairwise p
    std::size_t pairs = 0;              // pairs with >= 2 shared samples
    std::size_t degenerate_pairs = 0;   // pairs skipped for rho (constant ratings)
};

std::vector<DimensionAgreement> agreement(const std::vector<AnnotationRecord>& annotations);

struct MetricCorrelation {
    std::string dimension;
    std::string metric;
    std::optional<Correlation> correlation;  // absent on constant input
};

struct GroupComparison {
    std::string measure;
    double faithful_mean = 0;
    double unfaithful_mean = 0;
    std::optional<TTest> test;  // absent when a group has fewer than 2 samples
};

struct AlignmentReport {
    std::vector<DimensionAgreement> agreement;
    std::size_t joined_samples = 0;
    std::vector<MetricCorrelation> correlations;
    std::size_t faithful_samples = 0;
    std::size_t unfaithful_samples = 0;
    std::vector<GroupComparison> faithfulness_split;
    // Coherence correlations against scores computed from unverified pools.
    std::vector<MetricCorrelation> unverified_correlations;
    std::vector<std::string> annotated_without_scores;
    std::vector<std::string> scored_without_annotations;
};

inline constexpr std::array<std::string_view, 4> kMetricNames = {"bleu", "rouge1_f1", "meteor", "embed_score"};
double metric_value(const recsaver::ReasoningScore& s, std::string_view metric);

/// Joins per-sample annotator means with scores by sample id. A sample is
/// faithful when more than half of its annotators marked it faithful.
/// Throws InsufficientData with fewer than 3 joined samples.
AlignmentReport alignment_report(const std::vector<AnnotationRecord>& annotations,
                                 const std::vector<recsaver::ReasoningScore>& scores,
                                 const std::optional<std::vector<recsaver::ReasoningScore>>& unverified_scores = std::nullopt);

/// Validates ranges; throws InvalidInput("SchemaError").
AnnotationRecord annotation_from_json(const json& j);
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path);

/// Which pairwise p-value summary is reported as the headline "p_value".
enum class PValueRule { Fisher, MaxPairwise };
std::optional<PValueRule> p_value_rule_from_name(std::string_view name);
std::string_view to_string(PValueRule rule);

json to_json(const DimensionAgreement& d, PValueRule rule = PValueRule::Fisher);
json to_json(const AlignmentReport& r, PValueRule rule = PValueRule::Fisher);
/// Markdown tables: agreement, metric correlations, faithful split, verification comparison.
std::string to_markdown(const AlignmentReport& r, PValueRule rule = PValueRule::Fisher);

} // namespace recreason::agreestats
