#include <doctest.h>

#include <cmath>

#include "recreason/nlgmetrics.hpp"
#include "recreason/rng.hpp"

using namespace recreason;
using namespace recreason::nlg;

namespace {

TokenSeq toks(std::string_view s) { return tokenize(s); }

// Frozen from tests/oracles/nlg_oracle.py (nltk, rouge-score, brute-force METEOR).
struct PairOracle {
    const char* candidate;
    const char* reference;
    double bleu;
    double rouge1;
    std::size_t matches;
    std::size_t chunks;
    double meteor;
};

constexpr PairOracle kPairs[] = {
    {"the cat sat", "the cat sat down", 0.7165313105737893, 0.8571428571428571, 3, 1, 0.754985754985755},
    {"the user will enjoy this gentle moisturizing cream",
     "this user will likely enjoy the gentle cream because of past purchases", 0.1629399024140731,
     0.7000000000000001, 7, 6, 0.41344123856439136},
    {"she loved the shampoo and conditioner", "the conditioner was loved by her more than the shampoo",
     0.16669006580554238, 0.5, 4, 3, 0.32877604166666663},
    {"products are nice", "nice product selection overall", 0.3478700554542393, 0.28571428571428575, 2, 2,
     0.25641025641025644},
    {"running shoes run well", "the runner runs in running shoes", 0.2740311596835683, 0.4, 3, 2,
     0.4406130268199233},
    {"a b c a b", "b a c b a", 0.35930411196308426, 1.0, 5, 5, 0.5},
};

constexpr std::pair<const char*, const char*> kStems[] = {
    {"caresses", "caress"}, {"ponies", "poni"}, {"ties", "ti"}, {"caress", "caress"}, {"cats", "cat"},
    {"feed", "feed"}, {"agreed", "agre"}, {"plastered", "plaster"}, {"bled", "bled"}, {"motoring", "motor"},
    {"sing", "sing"}, {"conflated", "conflat"}, {"troubled", "troubl"}, {"sized", "size"}, {"hopping", "hop"},
    {"tanned", "tan"}, {"falling", "fall"}, {"hissing", "hiss"}, {"fizzed", "fizz"}, {"failing", "fail"},
    {"filing", "file"}, {"happy", "happi"}, {"sky", "sky"}, {"relational", "relat"}, {"conditional", "condit"},
    {"rational", "ration"}, {"valenci", "valenc"}, {"hesitanci", "hesit"}, {"digitizer", "digit"},
    {"conformabli", "conform"}, {"radicalli", "radic"}, {"differentli", "differ"}, {"vileli", "vile"},
    {"analogousli", "analog"}, {"vietnamization", "vietnam"}, {"predication", "predic"}, {"operator", "oper"},
    {"feudalism", "feudal"}, {"decisiveness", "decis"}, {"hopefulness", "hope"}, {"callousness", "callous"},
    {"formaliti", "formal"}, {"sensitiviti", "sensit"}, {"sensibiliti", "sensibl"}, {"triplicate", "triplic"},
    {"formative", "form"}, {"formalize", "formal"}, {"electriciti", "electr"}, {"electrical", "electr"},
    {"hopeful", "hope"}, {"goodness", "good"}, {"revival", "reviv"}, {"allowance", "allow"},
    {"inference", "infer"}, {"airliner", "airlin"}, {"gyroscopic", "gyroscop"}, {"adjustable", "adjust"},
    {"defensible", "defens"}, {"irritant", "irrit"}, {"replacement", "replac"}, {"adjustment", "adjust"},
    {"dependent", "depend"}, {"adoption", "adopt"}, {"homologou", "homolog"}, {"communism", "commun"},
    {"activate", "activ"}, {"angulariti", "angular"}, {"homologous", "homolog"}, {"effective", "effect"},
    {"bowdlerize", "bowdler"}, {"probate", "probat"}, {"rate", "rate"}, {"cease", "ceas"},
    {"controll", "control"}, {"roll", "roll"}, {"generalizations", "gener"}, {"oscillators", "oscil"},
    {"recommendations", "recommend"}, {"moisturizing", "moistur"},
};

} // namespace

TEST_SUITE("nlgmetrics") {

TEST_CASE("tokenizer lowercases and strips edge punctuation") {
    CHECK(tokenize("Hello, World!  It's \"fine\".") == TokenSeq{"hello", "world", "it's", "fine"});
    CHECK(tokenize(" ... ").empty());
}

TEST_CASE("porter stems match the reference stemmer") {
    for (const auto& [word, stem] : kStems) {
        CAPTURE(word);
        CHECK(porter_stem(word) == stem);
    }
    CHECK(porter_stem("b2b") == "b2b");
}

TEST_CASE("metric values match the oracle pairs") {
    for (const auto& p : kPairs) {
        CAPTURE(p.candidate);
        const auto c = toks(p.candidate);
        const auto r = toks(p.reference);
        CHECK(std::abs(bleu(c, r) - p.bleu) < 1e-9);
        CHECK(std::abs(rouge1_f1(c, r) - p.rouge1) < 1e-9);
        const auto a = meteor_align(c, r);
        CHECK(a.matches == p.matches);
        CHECK(a.chunks == p.chunks);
        CHECK(a.exhaustive);
        CHECK(std::abs(meteor(c, r) - p.meteor) < 1e-9);
    }
}

TEST_CASE("hand-computed cases") {
    CHECK(std::abs(bleu(toks("the cat sat"), toks("the cat sat down")) - std::exp(-1.0 / 3.0)) < 1e-12);
    CHECK(std::abs(rouge1_f1(toks("a b c"), toks("a b d")) - 2.0 / 3.0) < 1e-12);
    const auto six = toks("she really loves this gentle cream");
    CHECK(std::abs(meteor(six, six) - (1.0 - 0.5 / 216.0)) < 1e-12);
    CHECK(std::abs(greedy_match_f1({{1, 0}, {0, 0.5}}) - 0.75) < 1e-12);
}

TEST_CASE("identity and disjoint cases") {
    HashedEmbeddingScorer scorer;
    const auto s = toks("the user loves lightweight serums from this brand");
    CHECK(bleu(s, s) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rouge1_f1(s, s) == 1.0);
    CHECK(embed_score(s, s, scorer) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(meteor(s, s) >= 0.99);
    const auto d = toks("xylophone quartz");
    CHECK(bleu(s, d) == 0.0);
    CHECK(rouge1_f1(s, d) == 0.0);
    CHECK(meteor(s, d) == 0.0);
    CHECK(bleu({}, s) == 0.0);
    CHECK(embed_score({}, s, scorer) == 0.0);
}

TEST_CASE("stem-stage matches join inflected forms") {
    const auto a = meteor_align(toks("runs quickly"), toks("running quick"));
    CHECK(a.matches == 1);  // "runs"/"running" share "run"; "quickly"/"quick" stem differently
    const auto b = meteor_align(toks("shoes"), toks("shoe"));
    CHECK(b.matches == 1);
}

TEST_CASE("chunk search budget keeps a valid alignment") {
    TokenSeq a, b;
    for (int i = 0; i < 40; ++i) {
        a.push_back(i % 2 ? "x" : "y");
        b.push_back(i % 3 ? "x" : "y");
    }
    MeteorParams tight;
    tight.max_search_nodes = 50;
    const auto al = meteor_align(a, b, tight);
    CHECK(al.matches == meteor_align(a, b).matches);
    CHECK(al.chunks >= meteor_align(a, b).chunks);
    const double m = meteor(a, b, tight);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
}

TEST_CASE("hashed embeddings are unit norm and deterministic") {
    HashedEmbeddingScorer scorer(32, 1);
    const std::vector<std::string> t = {"alpha", "beta", "alpha"};
    const auto v = scorer.embed(t);
    for (const auto& x : v) {
        double n = 0;
        for (double c : x) n += c * c;
        CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(v[0] == v[2]);
    CHECK(v[0] != v[1]);
    CHECK_THROWS_AS(HashedEmbeddingScorer(0), ConfigError);
}

TEST_CASE("greedy match ignores negative similarity") {
    CHECK(greedy_match_f1({{-1.0}}) == 0.0);
    CHECK(greedy_match_f1({{1.0, 0.2}}) == doctest::Approx(2 * 1.0 * 0.6 / 1.6));
}

TEST_CASE("metrics stay within [0, 1] on random text") {
    Rng rng(13);
    HashedEmbeddingScorer scorer;
    const std::vector<std::string> vocab = {"good", "goods", "bad", "user", "users", "like", "liked", "brand", "a", "the"};
    for (int i = 0; i < 200; ++i) {
        TokenSeq c, r;
        for (auto k = uniform_below(rng, 12); k > 0; --k) c.push_back(vocab[uniform_below(rng, vocab.size())]);
        for (auto k = uniform_below(rng, 12); k > 0; --k) r.push_back(vocab[uniform_below(rng, vocab.size())]);
        for (double v : {bleu(c, r), rouge1_f1(c, r), meteor(c, r), embed_score(c, r, scorer)}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("tokenizer rule examples") {
    CHECK(tokenize("The user, happily.") == TokenSeq{"the", "user", "happily"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("5-star item") == TokenSeq{"5-star", "item"});
}

TEST_CASE("stem stage links running to run") {
    CHECK(meteor(toks("running"), toks("run")) > 0.0);
}

// alpha, beta and gamma map to distinct basis vectors.
class OneHotScorer : public EmbeddingScorer {
public:
    std::vector<std::vector<double>> embed(std::span<const std::string> tokens) const override {
        std::vector<std::vector<double>> out;
        for (const auto& t : tokens) {
            std::vector<double> v(4, 0.0);
            v[t == "alpha" ? 0 : t == "beta" ? 1 : t == "gamma" ? 2 : 3] = 1.0;
            out.push_back(std::move(v));
        }
        return out;
    }
};

TEST_CASE("orthogonal embeddings of disjoint text score zero") {
    OneHotScorer scorer;
    CHECK(embed_score(toks("alpha beta"), toks("gamma"), scorer) == 0.0);
    CHECK(embed_score(toks("alpha beta"), toks("alpha beta"), scorer) == 1.0);
}

TEST_CASE("symmetry and order sensitivity") {
    const auto a = toks("the user loves this gentle serum");
    const auto b = toks("the serum is gentle");
    CHECK(rouge1_f1(a, b) == rouge1_f1(b, a));
    CHECK(bleu(a, b) != bleu(b, a));
    const auto shuffled = toks("serum gentle this loves user the");
    CHECK(rouge1_f1(shuffled, a) == rouge1_f1(a, a));
    CHECK(bleu(shuffled, a) < bleu(a, a));
}

}
