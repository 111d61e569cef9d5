#include "recreason/taskmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace recreason::taskmetrics {

std::optional<Rounding> rounding_from_name(std::string_view name) {
    if (name == "half_away_from_zero") return Rounding::HalfAwayFromZero;
    if (name == "half_to_even") return Rounding::HalfToEven;
    if (name == "half_down") return Rounding::HalfDown;
    return std::nullopt;
}

std::optional<double> rank_auc(std::span<const double> scores, std::span<const bool> labels) {
    if (scores.size() != labels.size()) throw InvalidInput("InputMismatch", "scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Ranks are 1-based; a tie block [i, j) shares (i + 1 + j) / 2.
    double positive_rank_sum = 0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) {
                positive_rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;
    const double np = static_cast<double>(n_pos);
    const double u = positive_rank_sum - np * (np + 1) / 2;
    return u / (np * static_cast<double>(n_neg));
}

void validate(const PredictionSet& preds) {
    for (const auto& p : preds) {
        if (p.predicted < 1 || p.predicted > 5 || p.truth < 1 || p.truth > 5) {
            throw InvalidInput("OutOfRangeRating", "rating outside 1..5 for " + p.example_id);
        }
        if (p.class_probs) {
            double sum = 0;
            for (double v : *p.class_probs) {
                if (!(v >= 0.0) || !std::isfinite(v)) {
                    throw InvalidInput("InvalidProbabilities", "negative or non-finite probability for " + p.example_id);
                }
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-6) {
                throw InvalidInput("InvalidProbabilities", "class probabilities do not sum to 1 for " + p.example_id);
            }
        }
    }
}

namespace {

bool all_have_probs(const PredictionSet& preds) {
    return std::all_of(preds.begin(), preds.end(), [](const Prediction& p) { return p.class_probs.has_value(); });
}

} // namespace

BinaryMetrics binary_metrics(const PredictionSet& preds) {
    if (preds.empty()) throw EmptyInput();
    validate(preds);
    std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
    for (const auto& p : preds) {
        const bool yp = is_positive(p.predicted);
        const bool yt = is_positive(p.truth);
        correct += yp == yt;
        tp += yp && yt;
        fp += yp && !yt;
        fn += !yp && yt;
    }
    BinaryMetrics m;
    m.acc = static_cast<double>(correct) / static_cast<double>(preds.size());
    const std::size_t denom = 2 * tp + fp + fn;
    m.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    if (all_have_probs(preds)) {
        std::vector<double> scores(preds.size());
        std::unique_ptr<bool[]> labels(new bool[preds.size()]);
        for (std::size_t i = 0; i < preds.size(); ++i) {
            scores[i] = (*preds[i].class_probs)[3] + (*preds[i].class_probs)[4];
            labels[i] = is_positive(preds[i].truth);
        }
        m.auc = rank_auc(scores, std::span<const bool>(labels.get(), preds.size()));
    }
    return m;
}

MulticlassMetrics multiclass_metrics(const PredictionSet& preds) {
    if (preds.empty()) throw EmptyInput();
    validate(preds);
    const double n = static_cast<double>(preds.size());
    std::size_t correct = 0;
    double abs_sum = 0, sq_sum = 0;
    for (const auto& p : preds) {
        correct += p.predicted == p.truth;
        const double d = p.predicted - p.truth;
        abs_sum += std::abs(d);
        sq_sum += d * d;
    }
    MulticlassMetrics m;
    m.acc = static_cast<double>(correct) / n;
    m.mae = abs_sum / n;
    m.rmse = std::sqrt(sq_sum / n);
    if (all_have_probs(preds)) {
        std::unique_ptr<bool[]> labels(new bool[preds.size()]);
        std::vector<double> scores(preds.size());
        double total = 0;
        int classes = 0;
        for (int c = 1; c <= 5; ++c) {
            for (std::size_t i = 0; i < preds.size(); ++i) {
                scores[i] = (*preds[i].class_probs)[c - 1];
                labels[i] = preds[i].truth == c;
            }
            if (const auto auc = rank_auc(scores, std::span<const bool>(labels.get(), preds.size()))) {
                total += *auc;
                ++classes;
            }
        }
        if (classes > 0) m.auc = total / classes;
    }
    return m;
}

MetricReport evaluate(const PredictionSet& preds, std::size_t n_parse_failures) {
    const auto b = binary_metrics(preds);
    const auto mc = multiclass_metrics(preds);
    MetricReport r;
    r.binary_acc = b.acc;
    r.binary_f1 = b.f1;
    r.binary_auc = b.auc;
    r.multi_acc = mc.acc;
    r.multi_auc = mc.auc;
    r.mae = mc.mae;
    r.rmse = mc.rmse;
    r.n_evaluated = preds.size();
    r.n_parse_failures = n_parse_failures;
    return r;
}

int naive_baseline(const corpus::Example& example, Rounding rounding) {
    const auto& purchases = example.history.purchases;
    if (purchases.empty()) throw EmptyHistory(example.example_id);
    // Integer arithmetic keeps exact halves exact: mean = sum / n.
    long sum = 0;
    for (const auto& p : purchases) sum += p.rating;
    const long n = static_cast<long>(purchases.size());
    const long floor_q = sum / n;  // ratings are positive
    const long twice_rem = 2 * (sum % n);
    long rounded = floor_q;
    if (twice_rem > n) {
        rounded = floor_q + 1;
    } else if (twice_rem == n) {
        switch (rounding) {
        case Rounding::HalfAwayFromZero: rounded = floor_q + 1; break;
        case Rounding::HalfToEven: rounded = floor_q % 2 == 0 ? floor_q : floor_q + 1; break;
        case Rounding::HalfDown: rounded = floor_q; break;
        }
    }
    return static_cast<int>(std::clamp<long>(rounded, 1, 5));
}

json to_json(const Prediction& p) {
    json j = {{"example_id", p.example_id}, {"predicted", p.predicted}, {"truth", p.truth}, {"class_probs", nullptr}};
    if (p.class_probs) j["class_probs"] = *p.class_probs;
    return j;
}

Prediction prediction_from_json(const json& j) {
    try {
        Prediction p;
        p.example_id = j.at("example_id").get<std::string>();
        p.predicted = j.at("predicted").get<int>();
        p.truth = j.at("truth").get<int>();
        if (j.contains("class_probs") && !j["class_probs"].is_null()) p.class_probs = j["class_probs"].get<ClassProbs>();
        return p;
    } catch (const json::exception& e) {
        throw InvalidInput("SchemaError", std::string("bad prediction record: ") + e.what());
    }
}

json to_json(const MetricReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"binary_acc", r.binary_acc}, {"binary_f1", r.binary_f1}, {"binary_auc", opt(r.binary_auc)},
            {"multi_acc", r.multi_acc},   {"multi_auc", opt(r.multi_auc)}, {"mae", r.mae},
            {"rmse", r.rmse},             {"n_evaluated", r.n_evaluated}, {"n_parse_failures", r.n_parse_failures}};
}

} // namespace recreason::taskmetrics
