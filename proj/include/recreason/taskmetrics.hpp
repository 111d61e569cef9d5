#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "recreason/corpus.hpp"

namespace recreason::taskmetrics {

using ClassProbs = std::array<double, 5>;

struct Prediction {
    std::string example_id;
    int predicted = 0;
    int truth = 0;
    std::optional<ClassProbs> class_probs;  // P(rating = 1..5)
};

using PredictionSet = std::vector<Prediction>;

struct BinaryMetrics {
    double acc = 0;
    double f1 = 0;
    std::optional<double> auc;
};

struct MulticlassMetrics {
    double acc = 0;
    std::optional<double> auc;
    double mae = 0;
    double rmse = 0;
};

struct MetricReport {
    double binary_acc = 0;
    double binary_f1 = 0;
    std::optional<double> binary_auc;
    double multi_acc = 0;
    std::optional<double> multi_auc;
    double mae = 0;
    double rmse = 0;
    std::size_t n_evaluated = 0;
    std::size_t n_parse_failures = 0;
};

class EmptyInput : public Error {
public:
    EmptyInput() : Error("EmptyInput", "prediction set is empty") {}
};

class EmptyHistory : public Error {
public:
    explicit EmptyHistory(const std::string& example_id)
        : Error("EmptyHistory", "example " + example_id + " has no history") {}
};

enum class Rounding { HalfAwayFromZero, HalfToEven, HalfDown };

std::optional<Rounding> rounding_from_name(std::string_view name);

/// Positive iff rating > 3.
constexpr bool is_positive(int rating) noexcept { return rating > 3; }

/// Mann-Whitney AUC with tied scores sharing their average rank.
/// Absent when either class is empty.
std::optional<double> rank_auc(std::span<const double> scores, std::span<const bool> labels);

/// Throws InvalidInput for ratings outside 1..5 or probabilities that do
/// not sum to 1 within 1e-6.
void validate(const PredictionSet& preds);

/// F1 of the positive class; 0 when there are no true or predicted positives.
/// AUC uses P(4)+P(5) and needs class_probs on every prediction.
BinaryMetrics binary_metrics(const PredictionSet& preds);

/// AUC is the macro one-vs-rest average over classes that occur in the truth
/// (and are not the only class).
MulticlassMetrics multiclass_metrics(const PredictionSet& preds);

MetricReport evaluate(const PredictionSet& preds, std::size_t n_parse_failures);

/// Historical-average rating, rounded with `rounding` and clamped to 1..5.
int naive_baseline(const corpus::Example& example, Rounding rounding = Rounding::HalfAwayFromZero);

json to_json(const Prediction& p);
Prediction prediction_from_json(const json& j);
json to_json(const MetricReport& r);

} // namespace recreason::taskmetrics
