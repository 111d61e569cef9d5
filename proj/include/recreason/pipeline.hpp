#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "recreason/agreestats.hpp"
#include "recreason/corpus.hpp"
#include "recreason/ftexport.hpp"
#include "recreason/genbackend.hpp"
#include "recreason/recsaver.hpp"
#include "recreason/runstore.hpp"
#include "recreason/taskmetrics.hpp"

namespace recreason::pipeline {

namespace fs = std::filesystem;

// Stage names as recorded in run manifests.
inline constexpr const char* kIngest = "ingest";
inline constexpr const char* kSplit = "split";
inline constexpr const char* kPredict = "predict";
inline constexpr const char* kRefsGenerate = "refs_generate";
inline constexpr const char* kRefsVerify = "refs_verify";
inline constexpr const char* kScoreReasoning = "score_reasoning";
inline constexpr const char* kExportFt = "export_ft";
inline constexpr const char* kAlign = "align";
inline constexpr const char* kReport = "report";

/// Mode name that selects the historical-average predictor instead of a prompt.
inline constexpr const char* kNaiveBaselineMode = "naive_baseline";

inline constexpr std::array<std::string_view, 11> kReportColumns = {
    "binary_acc", "binary_f1", "binary_auc", "multi_acc", "multi_auc", "mae",
    "rmse",       "rouge1_f1", "meteor",     "bleu",      "embed_score"};

struct PathSettings {
    std::string reviews;
    std::string metadata;
    std::string runs = "runs";
    std::string annotations;  // empty: align is unavailable
};

struct CorpusSettings {
    std::string domain = "beauty";
    std::size_t min_history = 4;
    std::size_t max_history = 10;
};

struct BackendSettings {
    std::string kind = "mock";  // mock | http | replay
    std::size_t parallelism = 4;
    std::size_t chunk_size = 64;
    genbackend::MockOptions mock;
    std::string script;      // optional scripted responses for the mock
    std::string replay_log;  // recorded cache for the replay backend
    genbackend::BackendConfig http;
};

struct PredictSettings {
    std::string split = "test";
    std::vector<std::string> modes = {"cot"};
    double temperature = 0.0;
    std::uint64_t seed = 0;
    taskmetrics::Rounding rounding = taskmetrics::Rounding::HalfAwayFromZero;
    std::string exemplar_id;  // empty: first train example by id
    std::string exemplar_reasoning;
};

struct RefsSettings {
    std::string split = "test";
    recsaver::Settings generation;
};

struct ScoringSettings {
    std::string embedding = "hashed";  // hashed | http
    std::size_t embedding_dim = 64;
    std::uint64_t embedding_seed = 0x5eed;
    std::string embedding_endpoint;
    std::size_t meteor_search_nodes = 20'000;
    bool compare_unverified = true;
    std::size_t threads = 1;
};

struct ExportSettings {
    std::string split = "train";
    std::size_t m = 8;
    double temperature = 0.7;
    std::uint64_t seed = 0;
    std::vector<ftexport::FilterPolicy> policies = {ftexport::kAllPolicies.begin(), ftexport::kAllPolicies.end()};
};

struct AlignSettings {
    std::string mode = "cot";
    agreestats::PValueRule p_value = agreestats::PValueRule::Fisher;
};

struct ReportSettings {
    std::vector<std::string> columns = {kReportColumns.begin(), kReportColumns.end()};
};

struct PipelineConfig {
    PathSettings paths;
    CorpusSettings corpus;
    corpus::SplitSpec split;
    BackendSettings backend;
    PredictSettings predict;
    RefsSettings refs;
    ScoringSettings scoring;
    ExportSettings exporting;
    AlignSettings align;
    ReportSettings report;
};

/// Validates and fills defaults. Unknown keys and bad values raise ConfigError.
PipelineConfig config_from_json(const json& j);
PipelineConfig load_config(const fs::path& path);
/// Canonical form with every default spelled out; frozen into run manifests.
json to_json(const PipelineConfig& config);

std::unique_ptr<genbackend::Backend> make_backend(const BackendSettings& settings);
std::unique_ptr<nlg::EmbeddingScorer> make_scorer(const ScoringSettings& settings);

/// Runs stages against one run directory. Each stage returns false when it
/// was already complete for the current inputs and nothing was done.
class Pipeline {
public:
    /// `backend` overrides the configured backend (tests inject scripted mocks).
    Pipeline(runstore::Run& run, PipelineConfig config, std::shared_ptr<genbackend::Backend> backend = nullptr);

    bool ingest();
    bool split();
    bool predict();
    bool generate_refs();
    bool verify_refs();
    bool score_reasoning();
    bool export_ft();
    bool align();
    bool report();

    /// ingest through report, plus align when annotations are configured.
    void run_all();

    /// Backend requests issued by this pipeline (cache hits excluded).
    std::size_t backend_calls() const noexcept;

private:
    genbackend::GenerationClient& client();
    std::vector<corpus::Example> load_split(const std::string& which) const;

    runstore::Run& run_;
    PipelineConfig config_;
    std::shared_ptr<genbackend::Backend> backend_;
    std::unique_ptr<genbackend::ResponseCache> cache_;
    std::unique_ptr<genbackend::GenerationClient> client_;
};

} // namespace recreason::pipeline
