#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "recreason/error.hpp"

namespace recreason::nlg {

/// Lowercased tokens, none empty.
using TokenSeq = std::vector<std::string>;

/// Lowercase, split on whitespace, strip leading/trailing ASCII punctuation.
TokenSeq tokenize(std::string_view text);

/// Porter (1980) suffix stripper. Tokens that are not purely a-z are returned unchanged.
std::string porter_stem(std::string_view word);

/// Sentence BLEU: geometric mean of modified n-gram precisions for
/// n = 1..max_n, add-one smoothing on orders >= 2 only, times the brevity
/// penalty exp(min(0, 1 - |ref|/|cand|)). Zero unigram precision or an
/// empty candidate scores 0.
double bleu(const TokenSeq& candidate, const TokenSeq& reference, std::size_t max_n = 4);

/// Clipped unigram overlap F1; 0 when either side is empty.
double rouge1_f1(const TokenSeq& candidate, const TokenSeq& reference);

struct MeteorParams {
    double alpha = 0.9;
    double beta = 3.0;
    double gamma = 0.5;
    // Search budget for chunk minimisation; beyond it the best alignment found so far is kept.
    std::size_t max_search_nodes = 20'000;
};

struct MeteorAlignment {
    std::size_t matches = 0;
    std::size_t chunks = 0;
    // candidate position -> reference position, or npos when unmatched
    std::vector<std::size_t> links;
    bool exhaustive = true;  // false when the search budget ran out
};

/// Exact-then-stem alignment. Both stages take a maximum matching; among
/// those, the alignment with the fewest chunks is chosen.
MeteorAlignment meteor_align(const TokenSeq& candidate, const TokenSeq& reference,
                             const MeteorParams& params = {});

/// F_mean * (1 - gamma * (chunks/matches)^beta), F_mean = P*R / (alpha*P + (1-alpha)*R).
double meteor(const TokenSeq& candidate, const TokenSeq& reference, const MeteorParams& params = {});

/// Maps tokens to unit-norm vectors of a fixed dimension.
class EmbeddingScorer {
public:
    virtual ~EmbeddingScorer() = default;
    virtual std::vector<std::vector<double>> embed(std::span<const std::string> tokens) const = 0;
};

/// Deterministic per-token Gaussian vectors, normalised. Identical tokens
/// share a vector; distinct tokens are nearly orthogonal in high dimension.
class HashedEmbeddingScorer : public EmbeddingScorer {
public:
    explicit HashedEmbeddingScorer(std::size_t dim = 64, std::uint64_t seed = 0x5eed);
    std::vector<std::vector<double>> embed(std::span<const std::string> tokens) const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Remote scorer: POST {"tokens": [...]} -> {"vectors": [[...]]}. Vectors are
/// checked for count, equal dimension and unit norm (within 1e-6).
class HttpEmbeddingScorer : public EmbeddingScorer {
public:
    explicit HttpEmbeddingScorer(std::string endpoint, double timeout_seconds = 30.0);
    std::vector<std::vector<double>> embed(std::span<const std::string> tokens) const override;

private:
    std::string endpoint_;
    double timeout_seconds_;
};

/// Greedy-match F1 over a candidate x reference cosine matrix (rows =
/// candidate tokens). Negative similarities count as 0.
double greedy_match_f1(const std::vector<std::vector<double>>& similarity);

/// BERTScore-style F1 using `scorer` vectors; 0 when either side is empty.
double embed_score(const TokenSeq& candidate, const TokenSeq& reference, const EmbeddingScorer& scorer);

} // namespace recreason::nlg
