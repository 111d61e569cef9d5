#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "recreason/rng.hpp"
#include "recreason/taskmetrics.hpp"
#include "synth.hpp"

using namespace recreason;
using namespace recreason::taskmetrics;

namespace {

PredictionSet from_pairs(std::initializer_list<std::pair<int, int>> pairs) {
    PredictionSet out;
    int i = 0;
    for (auto [p, t] : pairs) out.push_back({"e" + std::to_string(i++), p, t, std::nullopt});
    return out;
}

double concordance(const std::vector<double>& scores, const std::vector<bool>& labels) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (!labels[i] || labels[j]) continue;
            den += 1;
            num += scores[i] > scores[j] ? 1.0 : (scores[i] == scores[j] ? 0.5 : 0.0);
        }
    }
    return num / den;
}

std::optional<double> auc_of(const std::vector<double>& scores, const std::vector<bool>& labels) {
    auto flags = std::make_unique<bool[]>(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) flags[i] = labels[i];
    return rank_auc(scores, std::span<const bool>(flags.get(), labels.size()));
}

corpus::Example with_history(std::vector<int> ratings) {
    auto ex = testing::synthetic_examples(1, {.min_history = 1, .max_history = 1})[0];
    const auto item = ex.history.purchases.front();
    ex.history.purchases.clear();
    for (int r : ratings) {
        auto p = item;
        p.rating = r;
        ex.history.purchases.push_back(p);
    }
    return ex;
}

} // namespace

TEST_SUITE("taskmetrics") {

TEST_CASE("binary cutoff") {
    CHECK(is_positive(4));
    CHECK_FALSE(is_positive(3));
    const auto m = binary_metrics(from_pairs({{4, 2}}));
    CHECK(m.acc == 0.0);
    CHECK(m.f1 == 0.0);
}

TEST_CASE("perfect predictor") {
    const auto preds = from_pairs({{1, 1}, {2, 2}, {4, 4}, {5, 5}, {3, 3}});
    const auto b = binary_metrics(preds);
    CHECK(b.acc == 1.0);
    CHECK(b.f1 == 1.0);
    const auto m = multiclass_metrics(preds);
    CHECK(m.acc == 1.0);
    CHECK(m.mae == 0.0);
    CHECK(m.rmse == 0.0);
}

TEST_CASE("crafted sets") {
    SUBCASE("maximal error has mae equal to rmse") {
        const auto m = multiclass_metrics(from_pairs({{1, 5}, {5, 1}}));
        CHECK(m.mae == 4.0);
        CHECK(m.rmse == 4.0);
        CHECK(m.acc == 0.0);
    }
    SUBCASE("mixed errors") {
        // errors 0,1,2,0 -> mae 0.75, rmse sqrt(5/4)
        const auto preds = from_pairs({{3, 3}, {4, 5}, {2, 4}, {5, 5}});
        const auto m = multiclass_metrics(preds);
        CHECK(m.mae == doctest::Approx(0.75));
        CHECK(m.rmse == doctest::Approx(std::sqrt(1.25)));
        CHECK(m.acc == doctest::Approx(0.5));
        // truth -,+,+,+ against predicted -,+,-,+
        const auto b = binary_metrics(preds);
        CHECK(b.acc == doctest::Approx(0.75));
        CHECK(b.f1 == doctest::Approx(0.8));  // tp 2, fp 0, fn 1
    }
    SUBCASE("no positives anywhere gives f1 zero") {
        const auto b = binary_metrics(from_pairs({{1, 2}, {3, 3}}));
        CHECK(b.f1 == 0.0);
        CHECK(b.acc == 1.0);
    }
}

TEST_CASE("empty input and invalid ratings") {
    CHECK_THROWS_AS(binary_metrics({}), EmptyInput);
    CHECK_THROWS_AS(multiclass_metrics({}), EmptyInput);
    CHECK_THROWS_AS(evaluate(from_pairs({{0, 3}}), 0), InvalidInput);
    PredictionSet bad = from_pairs({{3, 3}});
    bad[0].class_probs = ClassProbs{0.5, 0.5, 0.5, 0, 0};
    CHECK_THROWS_AS(validate(bad), InvalidInput);
}

TEST_CASE("rank AUC reference values") {
    // sklearn roc_auc_score, tests/oracles/stats_oracle.py
    const std::vector<double> s = {0.9, 0.4, 0.4, 0.7, 0.2, 0.6, 0.8, 0.4};
    const std::vector<bool> y = {true, false, true, true, false, false, true, false};
    CHECK(std::abs(*auc_of(s, y) - 0.875) < 1e-12);
    CHECK(std::abs(*auc_of(s, y) - concordance(s, y)) < 1e-12);
    CHECK_FALSE(auc_of({0.1, 0.2}, {true, true}).has_value());
    CHECK(*auc_of({0.5, 0.5, 0.5, 0.5}, {true, false, true, false}) == 0.5);
    CHECK(*auc_of({0.1, 0.2, 0.8, 0.9}, {false, false, true, true}) == 1.0);
    CHECK(*auc_of({0.9, 0.8, 0.2, 0.1}, {false, false, true, true}) == 0.0);
}

TEST_CASE("rank AUC equals pairwise concordance on random sets") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + uniform_below(rng, 19);
        std::vector<double> s(n);
        std::vector<bool> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(uniform_below(rng, 6)) / 5.0;  // coarse, many ties
            y[i] = uniform_below(rng, 2) == 1;
        }
        y[0] = true;
        y[1] = false;
        CHECK(std::abs(*auc_of(s, y) - concordance(s, y)) < 1e-12);
    }
}

TEST_CASE("binary AUC scores the positive-class mass") {
    PredictionSet preds = from_pairs({{5, 5}, {1, 1}, {4, 2}, {2, 4}});
    preds[0].class_probs = ClassProbs{0, 0, 0, 0.2, 0.8};
    preds[1].class_probs = ClassProbs{0.9, 0.1, 0, 0, 0};
    preds[2].class_probs = ClassProbs{0.1, 0.2, 0.1, 0.3, 0.3};
    preds[3].class_probs = ClassProbs{0.2, 0.3, 0.1, 0.2, 0.2};
    // positives (truth 5, 4) have mass 1.0, 0.4; negatives 0.0, 0.6 -> 3 of 4 pairs concordant
    CHECK(binary_metrics(preds).auc.value() == doctest::Approx(0.75));
    preds[3].class_probs.reset();
    CHECK_FALSE(binary_metrics(preds).auc.has_value());
}

TEST_CASE("macro one-vs-rest AUC reference value") {
    const double probs[10][5] = {
        {0.70, 0.10, 0.10, 0.05, 0.05}, {0.10, 0.60, 0.10, 0.10, 0.10}, {0.05, 0.15, 0.50, 0.20, 0.10},
        {0.05, 0.05, 0.20, 0.40, 0.30}, {0.10, 0.10, 0.10, 0.20, 0.50}, {0.30, 0.30, 0.20, 0.10, 0.10},
        {0.10, 0.20, 0.40, 0.20, 0.10}, {0.05, 0.05, 0.10, 0.30, 0.50}, {0.20, 0.20, 0.20, 0.20, 0.20},
        {0.40, 0.10, 0.10, 0.20, 0.20}};
    const int labels[10] = {1, 2, 3, 4, 5, 2, 3, 5, 4, 1};
    PredictionSet preds;
    for (int i = 0; i < 10; ++i) {
        ClassProbs p;
        std::copy(std::begin(probs[i]), std::end(probs[i]), p.begin());
        const int argmax = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) + 1;
        preds.push_back({"e" + std::to_string(i), argmax, labels[i], p});
    }
    CHECK(std::abs(multiclass_metrics(preds).auc.value() - 0.9625) < 1e-12);
}

TEST_CASE("rmse dominates mae and metrics ignore order") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        PredictionSet preds;
        for (int i = 0; i < 12; ++i) {
            preds.push_back({"e" + std::to_string(i), 1 + static_cast<int>(uniform_below(rng, 5)),
                             1 + static_cast<int>(uniform_below(rng, 5)), std::nullopt});
        }
        const auto a = evaluate(preds, 0);
        CHECK(a.rmse >= a.mae - 1e-12);
        std::reverse(preds.begin(), preds.end());
        const auto b = evaluate(preds, 0);
        CHECK(a.mae == doctest::Approx(b.mae));
        CHECK(a.binary_f1 == doctest::Approx(b.binary_f1));
        CHECK(a.multi_acc == doctest::Approx(b.multi_acc));
    }
}

TEST_CASE("naive baseline rounding") {
    CHECK(naive_baseline(with_history({5, 5, 5, 5})) == 5);
    CHECK(naive_baseline(with_history({4, 5, 4, 5})) == 5);
    CHECK(naive_baseline(with_history({1, 2, 2, 2})) == 2);
    CHECK(naive_baseline(with_history({2, 3})) == 3);
    CHECK(naive_baseline(with_history({2, 3}), Rounding::HalfToEven) == 2);
    CHECK(naive_baseline(with_history({3, 4}), Rounding::HalfToEven) == 4);
    CHECK(naive_baseline(with_history({4, 5}), Rounding::HalfDown) == 4);
    CHECK(naive_baseline(with_history({1, 1, 2}), Rounding::HalfDown) == 1);
    CHECK_THROWS_AS(naive_baseline(with_history({})), EmptyHistory);
    CHECK(rounding_from_name("half_to_even") == Rounding::HalfToEven);
    CHECK_FALSE(rounding_from_name("banker").has_value());
}

TEST_CASE("report counts") {
    const auto r = evaluate(from_pairs({{3, 3}, {4, 5}}), 2);
    CHECK(r.n_evaluated == 2);
    CHECK(r.n_parse_failures == 2);
    CHECK_FALSE(r.binary_auc.has_value());
    const auto j = to_json(r);
    CHECK(j.at("binary_auc").is_null());
}

}
