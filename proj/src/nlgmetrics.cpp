#include "recreason/nlgmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

#include "recreason/hashing.hpp"
#include "recreason/rng.hpp"

namespace recreason::nlg {

namespace {

constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts ngram_counts(const TokenSeq& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (std::size_t t = 0; t < n; ++t) {
            if (t) key += '\x1f';
            key += tokens[i + t];
        }
        ++counts[key];
    }
    return counts;
}

std::size_t clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
    std::size_t total = 0;
    for (const auto& [gram, count] : cand) {
        if (auto it = ref.find(gram); it != ref.end()) total += std::min(count, it->second);
    }
    return total;
}

// ---------------------------------------------------------------------------
// METEOR alignment

struct AlignProblem {
    const TokenSeq& cand;
    const TokenSeq& ref;
    std::vector<std::string> cand_stem;
    std::vector<std::string> ref_stem;
    // Per-word exact quota and per-stem quota for the second stage.
    std::map<std::string, std::size_t> exact_quota;
    std::map<std::string, std::size_t> stem_quota;
    // Residual capacity per word available to the stem stage.
    std::map<std::string, std::size_t> cand_stem_capacity;
    std::map<std::string, std::size_t> ref_stem_capacity;
    std::size_t total_matches = 0;
};

AlignProblem make_problem(const TokenSeq& cand, const TokenSeq& ref) {
    AlignProblem p{cand, ref, {}, {}, {}, {}, {}, {}, 0};
    for (const auto& t : cand) p.cand_stem.push_back(porter_stem(t));
    for (const auto& t : ref) p.ref_stem.push_back(porter_stem(t));

    std::map<std::string, std::size_t> cand_words, ref_words;
    for (const auto& t : cand) ++cand_words[t];
    for (const auto& t : ref) ++ref_words[t];
    std::map<std::string, std::size_t> cand_residual_by_stem, ref_residual_by_stem;
    for (const auto& [w, c] : cand_words) {
        const auto r = ref_words.count(w) ? ref_words[w] : 0;
        const auto e = std::min(c, r);
        if (e) p.exact_quota[w] = e;
        p.cand_stem_capacity[w] = c - e;
        cand_residual_by_stem[porter_stem(w)] += c - e;
        p.total_matches += e;
    }
    for (const auto& [w, r] : ref_words) {
        const auto c = cand_words.count(w) ? cand_words[w] : 0;
        const auto e = std::min(c, r);
        p.ref_stem_capacity[w] = r - e;
        ref_residual_by_stem[porter_stem(w)] += r - e;
    }
    for (const auto& [s, c] : cand_residual_by_stem) {
        const auto r = ref_residual_by_stem.count(s) ? ref_residual_by_stem[s] : 0;
        if (std::min(c, r)) p.stem_quota[s] = std::min(c, r);
        p.total_matches += std::min(c, r);
    }
    return p;
}

std::size_t count_chunks(const std::vector<std::size_t>& links) {
    std::size_t chunks = 0;
    for (std::size_t i = 0; i < links.size(); ++i) {
        if (links[i] == npos) continue;
        const bool continues = i > 0 && links[i - 1] != npos && links[i - 1] + 1 == links[i];
        if (!continues) ++chunks;
    }
    return chunks;
}

// Repeatedly links the longest run of unmatched, pairwise-equal positions.
void greedy_stage(const std::vector<std::string>& a, const std::vector<std::string>& b,
                  std::vector<std::size_t>& links, std::vector<bool>& ref_used) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<std::size_t> run((n + 1) * (m + 1));
    for (;;) {
        std::fill(run.begin(), run.end(), 0);
        std::size_t best = 0, bi = 0, bj = 0;
        for (std::size_t i = n; i-- > 0;) {
            for (std::size_t j = m; j-- > 0;) {
                if (links[i] != npos || ref_used[j] || a[i] != b[j]) continue;
                const auto len = run[(i + 1) * (m + 1) + j + 1] + 1;
                run[i * (m + 1) + j] = len;
                if (len > best || (len == best && (i < bi || (i == bi && j < bj)))) {
                    best = len;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (best == 0) return;
        for (std::size_t t = 0; t < best; ++t) {
            links[bi + t] = bj + t;
            ref_used[bj + t] = true;
        }
    }
}

class ChunkSearch {
public:
    ChunkSearch(const AlignProblem& p, std::size_t budget, std::vector<std::size_t> incumbent)
        : p_(p), budget_(budget), best_links_(std::move(incumbent)) {
        best_chunks_ = count_chunks(best_links_);
        intern(p.cand, p.ref, cand_word_, ref_word_, word_count_);
        intern(p.cand_stem, p.ref_stem, cand_stem_, ref_stem_, stem_count_);
        std::map<std::string, int> word_ids;
        for (std::size_t i = 0; i < p.cand.size(); ++i) word_ids.emplace(p.cand[i], cand_word_[i]);
        for (std::size_t j = 0; j < p.ref.size(); ++j) word_ids.emplace(p.ref[j], ref_word_[j]);
        std::map<std::string, int> stem_ids;
        for (std::size_t i = 0; i < p.cand.size(); ++i) stem_ids.emplace(p.cand_stem[i], cand_stem_[i]);

        exact_quota_.assign(word_count_, 0);
        cand_capacity_.assign(word_count_, 0);
        ref_capacity_.assign(word_count_, 0);
        stem_quota_.assign(stem_count_, 0);
        for (const auto& [w, q] : p.exact_quota) exact_quota_[word_ids.at(w)] = q;
        for (const auto& [w, q] : p.cand_stem_capacity) cand_capacity_[word_ids.at(w)] = q;
        for (const auto& [w, q] : p.ref_stem_capacity) ref_capacity_[word_ids.at(w)] = q;
        for (const auto& [s, q] : p.stem_quota) stem_quota_[stem_ids.at(s)] = q;

        exact_used_.assign(word_count_, 0);
        cand_stem_used_.assign(word_count_, 0);
        ref_stem_used_.assign(word_count_, 0);
        stem_used_.assign(stem_count_, 0);

        // Occurrences of the same word / stem strictly after each position.
        const auto n = p.cand.size();
        words_after_.assign(n, 0);
        stems_after_.assign(n, 0);
        std::vector<std::size_t> seen_w(word_count_, 0), seen_s(stem_count_, 0);
        for (std::size_t i = n; i-- > 0;) {
            words_after_[i] = seen_w[cand_word_[i]]++;
            stems_after_[i] = seen_s[cand_stem_[i]]++;
        }
        links_.assign(n, npos);
        ref_used_.assign(p.ref.size(), false);
    }

    void run() {
        if (best_chunks_ <= 1) return;
        dfs(0, 0, 0);
    }

    bool exhaustive() const { return nodes_ <= budget_; }
    const std::vector<std::size_t>& best() const { return best_links_; }

private:
    static void intern(const std::vector<std::string>& a, const std::vector<std::string>& b, std::vector<int>& ia,
                       std::vector<int>& ib, std::size_t& count) {
        std::map<std::string, int> ids;
        auto id = [&](const std::string& s) {
            auto [it, fresh] = ids.emplace(s, static_cast<int>(ids.size()));
            return it->second;
        };
        for (const auto& s : a) ia.push_back(id(s));
        for (const auto& s : b) ib.push_back(id(s));
        count = ids.size();
    }

    // Leaving position i must keep the quotas of its word and stem reachable.
    bool still_feasible(std::size_t i) const {
        const int w = cand_word_[i];
        const int s = cand_stem_[i];
        return exact_used_[w] + words_after_[i] >= exact_quota_[w] && stem_used_[s] + stems_after_[i] >= stem_quota_[s];
    }

    void dfs(std::size_t i, std::size_t matched, std::size_t chunks) {
        if (++nodes_ > budget_) return;
        if (chunks >= best_chunks_) return;
        if (i == p_.cand.size()) {
            if (matched == p_.total_matches) {
                best_chunks_ = chunks;
                best_links_ = links_;
            }
            return;
        }
        const int w = cand_word_[i];
        const int s = cand_stem_[i];
        const std::size_t prev = i > 0 ? links_[i - 1] : npos;

        std::vector<std::pair<std::size_t, bool>> options;  // (ref position, exact?)
        for (std::size_t j = 0; j < p_.ref.size(); ++j) {
            if (ref_used_[j]) continue;
            const int rw = ref_word_[j];
            if (rw == w && exact_used_[w] < exact_quota_[w]) {
                options.emplace_back(j, true);
            } else if (ref_stem_[j] == s && stem_used_[s] < stem_quota_[s] && cand_stem_used_[w] < cand_capacity_[w] &&
                       ref_stem_used_[rw] < ref_capacity_[rw]) {
                options.emplace_back(j, false);
            }
        }
        std::stable_sort(options.begin(), options.end(), [&](const auto& a, const auto& b) {
            const bool ea = prev != npos && a.first == prev + 1;
            const bool eb = prev != npos && b.first == prev + 1;
            if (ea != eb) return ea;
            return a.second && !b.second;
        });

        for (const auto& [j, exact] : options) {
            const int rw = ref_word_[j];
            links_[i] = j;
            ref_used_[j] = true;
            if (exact) {
                ++exact_used_[w];
            } else {
                ++stem_used_[s];
                ++cand_stem_used_[w];
                ++ref_stem_used_[rw];
            }
            if (still_feasible(i)) dfs(i + 1, matched + 1, chunks + (prev != npos && j == prev + 1 ? 0 : 1));
            if (exact) {
                --exact_used_[w];
            } else {
                --stem_used_[s];
                --cand_stem_used_[w];
                --ref_stem_used_[rw];
            }
            ref_used_[j] = false;
            links_[i] = npos;
            if (nodes_ > budget_) return;
        }
        if (still_feasible(i)) dfs(i + 1, matched, chunks);
    }

    const AlignProblem& p_;
    std::size_t budget_;
    std::size_t nodes_ = 0;
    std::vector<std::size_t> best_links_;
    std::size_t best_chunks_;
    std::vector<std::size_t> links_;
    std::vector<bool> ref_used_;
    std::vector<int> cand_word_, ref_word_, cand_stem_, ref_stem_;
    std::size_t word_count_ = 0, stem_count_ = 0;
    std::vector<std::size_t> exact_quota_, cand_capacity_, ref_capacity_, stem_quota_;
    std::vector<std::size_t> exact_used_, cand_stem_used_, ref_stem_used_, stem_used_;
    std::vector<std::size_t> words_after_, stems_after_;
};

} // namespace

TokenSeq tokenize(std::string_view text) {
    TokenSeq tokens;
    std::size_t i = 0;
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) ++j;
        std::size_t a = i, b = j;
        while (a < b && is_punct(text[a])) ++a;
        while (b > a && is_punct(text[b - 1])) --b;
        if (a < b) {
            std::string token(text.substr(a, b - a));
            for (auto& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            tokens.push_back(std::move(token));
        }
        i = j;
    }
    return tokens;
}

double bleu(const TokenSeq& candidate, const TokenSeq& reference, std::size_t max_n) {
    if (candidate.empty() || max_n == 0) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        const auto cand = ngram_counts(candidate, n);
        const auto ref = ngram_counts(reference, n);
        const double matches = static_cast<double>(clipped_overlap(cand, ref));
        const double total = candidate.size() >= n ? static_cast<double>(candidate.size() - n + 1) : 0.0;
        double precision;
        if (n == 1) {
            if (matches == 0.0) return 0.0;
            precision = matches / total;
        } else {
            precision = (matches + 1.0) / (total + 1.0);
        }
        log_sum += std::log(precision);
    }
    const double ratio = static_cast<double>(reference.size()) / static_cast<double>(candidate.size());
    const double bp = std::exp(std::min(0.0, 1.0 - ratio));
    return bp * std::exp(log_sum / static_cast<double>(max_n));
}

double rouge1_f1(const TokenSeq& candidate, const TokenSeq& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const double overlap = static_cast<double>(clipped_overlap(ngram_counts(candidate, 1), ngram_counts(reference, 1)));
    if (overlap == 0.0) return 0.0;
    const double p = overlap / static_cast<double>(candidate.size());
    const double r = overlap / static_cast<double>(reference.size());
    return 2.0 * p * r / (p + r);
}

MeteorAlignment meteor_align(const TokenSeq& candidate, const TokenSeq& reference, const MeteorParams& params) {
    const auto problem = make_problem(candidate, reference);
    MeteorAlignment out;
    out.links.assign(candidate.size(), npos);
    if (problem.total_matches == 0) return out;

    std::vector<bool> ref_used(reference.size(), false);
    greedy_stage(candidate, reference, out.links, ref_used);
    // Second stage runs on residual positions only; equal words left over
    // here have exhausted their exact class on one side.
    greedy_stage(problem.cand_stem, problem.ref_stem, out.links, ref_used);

    ChunkSearch search(problem, params.max_search_nodes, out.links);
    search.run();
    out.links = search.best();
    out.exhaustive = search.exhaustive();
    out.matches = static_cast<std::size_t>(std::count_if(out.links.begin(), out.links.end(),
                                                         [](std::size_t l) { return l != npos; }));
    out.chunks = count_chunks(out.links);
    return out;
}

double meteor(const TokenSeq& candidate, const TokenSeq& reference, const MeteorParams& params) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const auto align = meteor_align(candidate, reference, params);
    if (align.matches == 0) return 0.0;
    const double m = static_cast<double>(align.matches);
    const double p = m / static_cast<double>(candidate.size());
    const double r = m / static_cast<double>(reference.size());
    const double f_mean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
    const double penalty = params.gamma * std::pow(static_cast<double>(align.chunks) / m, params.beta);
    return f_mean * (1.0 - penalty);
}

HashedEmbeddingScorer::HashedEmbeddingScorer(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw ConfigError("embedding dimension must be positive");
}

std::vector<std::vector<double>> HashedEmbeddingScorer::embed(std::span<const std::string> tokens) const {
    std::vector<std::vector<double>> out;
    out.reserve(tokens.size());
    for (const auto& token : tokens) {
        Rng rng(fnv1a64(token) ^ (seed_ * 0x9e3779b97f4a7c15ULL));
        std::vector<double> v(dim_);
        double norm = 0.0;
        for (auto& x : v) {
            x = standard_normal(rng);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (auto& x : v) x /= norm;
        out.push_back(std::move(v));
    }
    return out;
}

double greedy_match_f1(const std::vector<std::vector<double>>& similarity) {
    if (similarity.empty() || similarity.front().empty()) return 0.0;
    const std::size_t rows = similarity.size();
    const std::size_t cols = similarity.front().size();
    std::vector<double> col_best(cols, 0.0);
    double precision = 0.0;
    for (const auto& row : similarity) {
        if (row.size() != cols) throw InvalidInput("ShapeMismatch", "ragged similarity matrix");
        double best = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const double s = std::max(0.0, row[j]);
            best = std::max(best, s);
            col_best[j] = std::max(col_best[j], s);
        }
        precision += best;
    }
    precision /= static_cast<double>(rows);
    double recall = 0.0;
    for (double b : col_best) recall += b;
    recall /= static_cast<double>(cols);
    if (precision + recall == 0.0) return 0.0;
    return std::min(1.0, 2.0 * precision * recall / (precision + recall));
}

double embed_score(const TokenSeq& candidate, const TokenSeq& reference, const EmbeddingScorer& scorer) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const auto cv = scorer.embed(candidate);
    const auto rv = scorer.embed(reference);
    if (cv.size() != candidate.size() || rv.size() != reference.size()) {
        throw InvalidInput("ScorerContract", "embedding count does not match token count");
    }
    auto norm = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };
    std::vector<std::vector<double>> sim(cv.size(), std::vector<double>(rv.size(), 0.0));
    for (std::size_t i = 0; i < cv.size(); ++i) {
        for (std::size_t j = 0; j < rv.size(); ++j) {
            if (cv[i].size() != rv[j].size()) throw InvalidInput("ScorerContract", "embedding dimensions differ");
            double dot = 0.0;
            for (std::size_t d = 0; d < cv[i].size(); ++d) dot += cv[i][d] * rv[j][d];
            const double denom = norm(cv[i]) * norm(rv[j]);
            sim[i][j] = denom > 0.0 ? std::clamp(dot / denom, -1.0, 1.0) : 0.0;
        }
    }
    return greedy_match_f1(sim);
}

} // namespace recreason::nlg
