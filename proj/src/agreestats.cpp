#include "recreason/agreestats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>

namespace recreason::agreestats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v, double mean) {
    double s = 0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw InvalidInput("NonFiniteInput", std::string(what) + " contains a non-finite value");
    }
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <typename T>
json nullable(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

} // namespace

double weighted_cohen_kappa(std::span<const int> a, std::span<const int> b, int n_categories) {
    if (a.size() != b.size()) throw InputMismatch("rating vectors differ in length");
    if (a.size() < 2) throw InsufficientData("kappa needs at least 2 paired ratings");
    if (n_categories < 2) throw InvalidInput("InvalidCategories", "kappa needs at least 2 categories");
    const auto k = static_cast<std::size_t>(n_categories);
    std::vector<double> observed(k * k, 0.0);
    std::vector<double> row(k, 0.0), col(k, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < 1 || a[i] > n_categories || b[i] < 1 || b[i] > n_categories) {
            throw InvalidInput("OutOfRange", "rating outside 1.." + std::to_string(n_categories));
        }
        const auto r = static_cast<std::size_t>(a[i] - 1);
        const auto c = static_cast<std::size_t>(b[i] - 1);
        observed[r * k + c] += 1;
        row[r] += 1;
        col[c] += 1;
    }
    const double total = static_cast<double>(a.size());
    const double scale = static_cast<double>((k - 1) * (k - 1));
    double num = 0, den = 0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const double d = static_cast<double>(i) - static_cast<double>(j);
            const double w = d * d / scale;
            num += w * observed[i * k + j];
            den += w * row[i] * col[j] / total;
        }
    }
    if (den == 0.0) return 1.0;
    return 1.0 - num / den;
}

double student_t_cdf(double t, double df) {
    if (!(df > 0) || std::isnan(t)) throw InvalidInput("InvalidArgument", "t CDF needs df > 0 and a non-NaN t");
    const double x = std::isinf(t) ? 0.0 : df / (df + t * t);
    const double tail = 0.5 * boost::math::ibeta(df / 2, 0.5, x);
    return t >= 0 ? 1.0 - tail : tail;
}

double two_sided_p(double t, double df) {
    if (!(df > 0) || std::isnan(t)) throw InvalidInput("InvalidArgument", "p-value needs df > 0 and a non-NaN t");
    const double x = std::isinf(t) ? 0.0 : df / (df + t * t);
    return std::clamp(boost::math::ibeta(df / 2, 0.5, x), 0.0, 1.0);
}

Correlation pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw InputMismatch("pearson inputs differ in length");
    if (xs.size() < 3) throw InsufficientData("pearson needs at least 3 pairs");
    require_finite(xs, "xs");
    require_finite(ys, "ys");
    const double mx = mean_of(xs), my = mean_of(ys);
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("pearson input is constant");
    Correlation c;
    c.n = xs.size();
    c.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double df = static_cast<double>(c.n - 2);
    if (std::abs(c.rho) == 1.0) {
        c.p_value = 0.0;
    } else {
        const double t = c.rho * std::sqrt(df / (1.0 - c.rho * c.rho));
        c.p_value = two_sided_p(t, df);
    }
    return c;
}

TTest welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw InsufficientData("welch t-test needs at least 2 values per group");
    require_finite(a, "group a");
    require_finite(b, "group b");
    const double ma = mean_of(a), mb = mean_of(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double qa = sample_variance(a, ma) / na;
    const double qb = sample_variance(b, mb) / nb;
    const double se2 = qa + qb;
    const double diff = ma - mb;
    TTest r;
    if (se2 == 0.0) {
        r.df = na + nb - 2;
        if (diff == 0.0) {
            r.t = 0.0;
            r.p_value = 1.0;
        } else {
            r.t = std::copysign(std::numeric_limits<double>::infinity(), diff);
            r.p_value = 0.0;
        }
        return r;
    }
    r.t = diff / std::sqrt(se2);
    r.df = se2 * se2 / (qa * qa / (na - 1) + qb * qb / (nb - 1));
    r.p_value = two_sided_p(r.t, r.df);
    return r;
}

double fisher_combine(std::span<const double> p_values) {
    if (p_values.empty()) throw InsufficientData("fisher combination needs at least one p-value");
    double stat = 0;
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("OutOfRange", "p-value outside [0, 1]");
        if (p == 0.0) return 0.0;
        stat += -2.0 * std::log(p);
    }
    const double k = static_cast<double>(p_values.size());
    return std::clamp(boost::math::gamma_q(k, stat / 2.0), 0.0, 1.0);
}

std::string_view to_string(Dimension d) {
    switch (d) {
    case Dimension::Coherence: return "coherence";
    case Dimension::Faithfulness: return "faithfulness";
    case Dimension::Insightfulness: return "insightfulness";
    }
    return "coherence";
}

int score_of(const AnnotationRecord& r, Dimension d) {
    switch (d) {
    case Dimension::Coherence: return r.coherence;
    case Dimension::Faithfulness: return r.faithfulness;
    case Dimension::Insightfulness: return r.insightfulness;
    }
    return 0;
}

int categories_of(Dimension d) { return d == Dimension::Faithfulness ? 2 : 5; }

std::vector<DimensionAgreement> agreement(const std::vector<AnnotationRecord>& annotations) {
    // annotator -> sample -> record
    std::map<std::string, std::map<std::string, const AnnotationRecord*>> by_annotator;
    for (const auto& r : annotations) {
        if (!by_annotator[r.annotator_id].emplace(r.sample_id, &r).second) {
            throw InvalidInput("DuplicateAnnotation",
                               "annotator " + r.annotator_id + " rated sample " + r.sample_id + " twice");
        }
    }
    std::vector<DimensionAgreement> out;
    for (Dimension d : {Dimension::Coherence, Dimension::Faithfulness, Dimension::Insightfulness}) {
        DimensionAgreement row;
        row.dimension = d;
        double sum = 0;
        for (const auto& r : annotations) sum += score_of(r, d);
        row.mean = annotations.empty() ? kNaN : sum / static_cast<double>(annotations.size());

        // Faithfulness 0/1 maps onto categories 1/2 for the kappa formula.
        const int offset = d == Dimension::Faithfulness ? 1 : 0;
        std::vector<double> kappas, rhos, ps;
        for (auto i = by_annotator.begin(); i != by_annotator.end(); ++i) {
            for (auto j = std::next(i); j != by_annotator.end(); ++j) {
                std::vector<int> a, b;
                for (const auto& [sample, rec] : i->second) {
                    if (auto hit = j->second.find(sample); hit != j->second.end()) {
                        a.push_back(score_of(*rec, d) + offset);
                        b.push_back(score_of(*hit->second, d) + offset);
                    }
                }
                if (a.size() < 2) continue;
                ++row.pairs;
                kappas.push_back(weighted_cohen_kappa(a, b, categories_of(d)));
                try {
                    const std::vector<double> xa(a.begin(), a.end()), xb(b.begin(), b.end());
                    const auto c = pearson(xa, xb);
                    rhos.push_back(c.rho);
                    ps.push_back(c.p_value);
                } catch (const InvalidInput&) {
                    ++row.degenerate_pairs;
                } catch (const InsufficientData&) {
                    ++row.degenerate_pairs;
                }
            }
        }
        if (!kappas.empty()) row.kappa = mean_of(kappas);
        if (!rhos.empty()) {
            row.avg_rho = mean_of(rhos);
            row.p_fisher = fisher_combine(ps);
            row.p_max = *std::max_element(ps.begin(), ps.end());
        }
        out.push_back(row);
    }
    return out;
}

double metric_value(const recsaver::ReasoningScore& s, std::string_view metric) {
    if (metric == "bleu") return s.bleu;
    if (metric == "rouge1_f1") return s.rouge1_f1;
    if (metric == "meteor") return s.meteor;
    if (metric == "embed_score") return s.embed_score;
    throw InvalidInput("UnknownMetric", "unknown metric " + std::string(metric));
}

namespace {

struct SampleMeans {
    double coherence = 0;
    double faithfulness = 0;
    double insightfulness = 0;
};

std::optional<Correlation> try_pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    try {
        return pearson(xs, ys);
    } catch (const DegenerateInput&) {
        return std::nullopt;
    } catch (const InsufficientData&) {
        return std::nullopt;
    }
}

} // namespace

AlignmentReport alignment_report(const std::vector<AnnotationRecord>& annotations,
                                 const std::vector<recsaver::ReasoningScore>& scores,
                                 const std::optional<std::vector<recsaver::ReasoningScore>>& unverified_scores) {
    AlignmentReport report;
    report.agreement = agreement(annotations);

    std::map<std::string, std::vector<const AnnotationRecord*>> by_sample;
    for (const auto& r : annotations) by_sample[r.sample_id].push_back(&r);
    std::map<std::string, const recsaver::ReasoningScore*> score_by_id;
    for (const auto& s : scores) score_by_id[s.example_id] = &s;

    std::map<std::string, SampleMeans> means;
    for (const auto& [id, recs] : by_sample) {
        SampleMeans m;
        for (const auto* r : recs) {
            m.coherence += r->coherence;
            m.faithfulness += r->faithfulness;
            m.insightfulness += r->insightfulness;
        }
        const double n = static_cast<double>(recs.size());
        m.coherence /= n;
        m.faithfulness /= n;
        m.insightfulness /= n;
        means[id] = m;
        if (!score_by_id.count(id)) report.annotated_without_scores.push_back(id);
    }
    for (const auto& [id, s] : score_by_id) {
        if (!means.count(id)) report.scored_without_annotations.push_back(id);
    }

    std::vector<std::string> joined;
    for (const auto& [id, m] : means) {
        if (score_by_id.count(id)) joined.push_back(id);
    }
    report.joined_samples = joined.size();
    if (joined.size() < 3) {
        throw InsufficientData("alignment needs at least 3 samples with both annotations and scores, got " +
                               std::to_string(joined.size()));
    }

    auto human = [&](const std::vector<std::string>& ids, double SampleMeans::*field) {
        std::vector<double> v;
        for (const auto& id : ids) v.push_back(means.at(id).*field);
        return v;
    };
    auto metric = [](const std::map<std::string, const recsaver::ReasoningScore*>& table,
                     const std::vector<std::string>& ids, std::string_view name) {
        std::vector<double> v;
        for (const auto& id : ids) v.push_back(metric_value(*table.at(id), name));
        return v;
    };

    const std::pair<const char*, double SampleMeans::*> dims[] = {{"coherence", &SampleMeans::coherence},
                                                                  {"insightfulness", &SampleMeans::insightfulness}};
    for (const auto& [dname, field] : dims) {
        const auto h = human(joined, field);
        for (auto mname : kMetricNames) {
            report.correlations.push_back({dname, std::string(mname), try_pearson(h, metric(score_by_id, joined, mname))});
        }
    }

    std::vector<std::string> faithful, unfaithful;
    for (const auto& id : joined) (means.at(id).faithfulness > 0.5 ? faithful : unfaithful).push_back(id);
    report.faithful_samples = faithful.size();
    report.unfaithful_samples = unfaithful.size();
    auto compare = [&](const std::string& measure, const std::vector<double>& fa, const std::vector<double>& un) {
        GroupComparison g;
        g.measure = measure;
        g.faithful_mean = fa.empty() ? kNaN : mean_of(fa);
        g.unfaithful_mean = un.empty() ? kNaN : mean_of(un);
        if (fa.size() >= 2 && un.size() >= 2) g.test = welch_t_test(fa, un);
        report.faithfulness_split.push_back(std::move(g));
    };
    for (const auto& [dname, field] : dims) compare(dname, human(faithful, field), human(unfaithful, field));
    for (auto mname : kMetricNames) {
        compare(std::string(mname), metric(score_by_id, faithful, mname), metric(score_by_id, unfaithful, mname));
    }

    if (unverified_scores) {
        std::map<std::string, const recsaver::ReasoningScore*> unverified_by_id;
        for (const auto& s : *unverified_scores) unverified_by_id[s.example_id] = &s;
        std::vector<std::string> both;
        for (const auto& id : joined) {
            if (unverified_by_id.count(id)) both.push_back(id);
        }
        const auto h = human(both, &SampleMeans::coherence);
        for (auto mname : kMetricNames) {
            report.unverified_correlations.push_back(
                {"coherence", std::string(mname), try_pearson(h, metric(unverified_by_id, both, mname))});
        }
    }
    return report;
}

AnnotationRecord annotation_from_json(const json& j) {
    AnnotationRecord r;
    try {
        auto id_of = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
        r.sample_id = id_of(j.at("sample_id"));
        r.annotator_id = id_of(j.at("annotator_id"));
        r.coherence = j.at("coherence").get<int>();
        r.faithfulness = j.at("faithfulness").get<int>();
        r.insightfulness = j.at("insightfulness").get<int>();
    } catch (const json::exception& e) {
        throw InvalidInput("SchemaError", std::string("bad annotation record: ") + e.what());
    }
    if (r.coherence < 1 || r.coherence > 5 || r.insightfulness < 1 || r.insightfulness > 5 ||
        (r.faithfulness != 0 && r.faithfulness != 1)) {
        throw InvalidInput("SchemaError", "annotation score out of range for sample " + r.sample_id);
    }
    return r;
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
    std::vector<AnnotationRecord> out;
    for (const auto& row : read_jsonl(path)) out.push_back(annotation_from_json(row));
    return out;
}

std::optional<PValueRule> p_value_rule_from_name(std::string_view name) {
    if (name == "fisher") return PValueRule::Fisher;
    if (name == "max_pairwise") return PValueRule::MaxPairwise;
    return std::nullopt;
}

std::string_view to_string(PValueRule rule) { return rule == PValueRule::Fisher ? "fisher" : "max_pairwise"; }

json to_json(const DimensionAgreement& d, PValueRule rule) {
    return {{"p_value", nullable(rule == PValueRule::Fisher ? d.p_fisher : d.p_max)},
            {"p_value_rule", to_string(rule)},   {"dimension", to_string(d.dimension)},
            {"mean", nullable(d.mean)},
            {"kappa", nullable(d.kappa)},          {"avg_rho", nullable(d.avg_rho)},
            {"p_fisher", nullable(d.p_fisher)},    {"p_max_pairwise", nullable(d.p_max)},
            {"pairs", d.pairs},                    {"degenerate_pairs", d.degenerate_pairs}};
}

namespace {

json correlation_json(const MetricCorrelation& c) {
    json j = {{"dimension", c.dimension}, {"metric", c.metric}, {"rho", nullptr}, {"p_value", nullptr}, {"n", 0}};
    if (c.correlation) {
        j["rho"] = c.correlation->rho;
        j["p_value"] = c.correlation->p_value;
        j["n"] = c.correlation->n;
    }
    return j;
}

std::string cell(const std::optional<double>& v, const char* spec = "{:.4f}") {
    return v && std::isfinite(*v) ? fmt::format(fmt::runtime(spec), *v) : std::string("n/a");
}

std::string cell(double v) { return cell(std::optional<double>(v)); }

std::optional<double> rho_of(const MetricCorrelation& c) {
    return c.correlation ? std::optional<double>(c.correlation->rho) : std::nullopt;
}

} // namespace

json to_json(const AlignmentReport& r, PValueRule rule) {
    json j;
    j["agreement"] = json::array();
    for (const auto& d : r.agreement) j["agreement"].push_back(to_json(d, rule));
    j["joined_samples"] = r.joined_samples;
    j["correlations"] = json::array();
    for (const auto& c : r.correlations) j["correlations"].push_back(correlation_json(c));
    j["faithful_samples"] = r.faithful_samples;
    j["unfaithful_samples"] = r.unfaithful_samples;
    j["faithfulness_split"] = json::array();
    for (const auto& g : r.faithfulness_split) {
        json row = {{"measure", g.measure},
                    {"faithful_mean", nullable(g.faithful_mean)},
                    {"unfaithful_mean", nullable(g.unfaithful_mean)},
                    {"t", nullptr},
                    {"df", nullptr},
                    {"p_value", nullptr}};
        if (g.test) {
            row["t"] = nullable(g.test->t);
            row["df"] = nullable(g.test->df);
            row["p_value"] = g.test->p_value;
        }
        j["faithfulness_split"].push_back(std::move(row));
    }
    j["unverified_correlations"] = json::array();
    for (const auto& c : r.unverified_correlations) j["unverified_correlations"].push_back(correlation_json(c));
    j["annotated_without_scores"] = r.annotated_without_scores;
    j["scored_without_annotations"] = r.scored_without_annotations;
    return j;
}

std::string to_markdown(const AlignmentReport& r, PValueRule rule) {
    std::string out;
    out += "## Inter-annotator agreement\n\n";
    out += fmt::format("| Dimension | Mean | Cohen kappa | Avg. rho | p-value ({}) |\n", to_string(rule));
    out += "|---|---|---|---|---|\n";
    for (const auto& d : r.agreement) {
        out += fmt::format("| {} | {} | {} | {} | {} |\n", to_string(d.dimension), cell(d.mean), cell(d.kappa),
                           cell(d.avg_rho), cell(rule == PValueRule::Fisher ? d.p_fisher : d.p_max, "{:.3g}"));
    }
    out += fmt::format("\n## Metric correlation with annotator means ({} samples)\n\n", r.joined_samples);
    out += "| Metric | Coherence | Insightfulness |\n|---|---|---|\n";
    for (auto m : kMetricNames) {
        std::optional<double> coh, ins;
        for (const auto& c : r.correlations) {
            if (c.metric != m) continue;
            (c.dimension == "coherence" ? coh : ins) = rho_of(c);
        }
        out += fmt::format("| {} | {} | {} |\n", m, cell(coh), cell(ins));
    }
    out += fmt::format("\n## Faithful ({}) vs unfaithful ({}) samples, Welch t-test\n\n", r.faithful_samples,
                       r.unfaithful_samples);
    out += "| Measure | Faithful | Unfaithful | t | p |\n|---|---|---|---|---|\n";
    for (const auto& g : r.faithfulness_split) {
        out += fmt::format("| {} | {} | {} | {} | {} |\n", g.measure, cell(g.faithful_mean), cell(g.unfaithful_mean),
                           g.test ? cell(g.test->t) : "n/a",
                           g.test ? cell(std::optional<double>(g.test->p_value), "{:.3g}") : "n/a");
    }
    if (!r.unverified_correlations.empty()) {
        out += "\n## Coherence correlation with and without self-verification\n\n";
        out += "| Metric | Verified | Unverified |\n|---|---|---|\n";
        for (auto m : kMetricNames) {
            std::optional<double> yes, no;
            for (const auto& c : r.correlations) {
                if (c.metric == m && c.dimension == "coherence") yes = rho_of(c);
            }
            for (const auto& c : r.unverified_correlations) {
                if (c.metric == m) no = rho_of(c);
            }
            out += fmt::format("| {} | {} | {} |\n", m, cell(yes), cell(no));
        }
    }
    if (!r.annotated_without_scores.empty() || !r.scored_without_annotations.empty()) {
        out += fmt::format("\nUnjoined: {} annotated samples without scores, {} scored samples without annotations.\n",
                           r.annotated_without_scores.size(), r.scored_without_annotations.size());
    }
    return out;
}

} // namespace recreason::agreestats
