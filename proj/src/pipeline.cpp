#include "recreason/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "recreason/hashing.hpp"
#include "recreason/outparse.hpp"
#include "recreason/promptkit.hpp"

namespace recreason::pipeline {

// ---------------------------------------------------------------------------
// Config

namespace {

// Reads one JSON object, rejecting unknown keys and mistyped values.
class Section {
public:
    Section(const json& j, std::string name) : name_(std::move(name)) {
        if (j.is_null()) return;
        if (!j.is_object()) throw ConfigError(name_ + " must be an object");
        j_ = &j;
    }

    Section sub(const char* key) {
        used_.insert(key);
        static const json null_json;
        return Section(j_ && j_->contains(key) ? j_->at(key) : null_json, path(key));
    }

    void get(const char* key, std::string& out) {
        if (const auto* v = find(key)) {
            if (!v->is_string()) throw ConfigError(path(key) + " must be a string");
            out = v->get<std::string>();
        }
    }
    void get(const char* key, bool& out) {
        if (const auto* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError(path(key) + " must be a boolean");
            out = v->get<bool>();
        }
    }
    void get(const char* key, double& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number()) throw ConfigError(path(key) + " must be a number");
            out = v->get<double>();
            if (!std::isfinite(out)) throw ConfigError(path(key) + " must be finite");
        }
    }
    void get(const char* key, std::uint64_t& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0)) throw ConfigError(path(key) + " must be a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void get(const char* key, std::vector<std::string>& out) {
        if (const auto* v = find(key)) {
            if (!v->is_array()) throw ConfigError(path(key) + " must be a list of strings");
            out.clear();
            for (const auto& e : *v) {
                if (!e.is_string()) throw ConfigError(path(key) + " must be a list of strings");
                out.push_back(e.get<std::string>());
            }
        }
    }
    template <typename Rep, typename Period>
    void get_ms(const char* key, std::chrono::duration<Rep, Period>& out) {
        std::uint64_t ms = static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(out).count());
        get(key, ms);
        out = std::chrono::milliseconds(ms);
    }

    void finish() const {
        if (!j_) return;
        for (const auto& [key, _] : j_->items()) {
            if (!used_.count(key)) throw ConfigError("unknown config key " + path(key.c_str()));
        }
    }

    std::string path(const char* key) const { return name_.empty() ? key : name_ + "." + key; }

private:
    const json* find(const char* key) {
        used_.insert(key);
        if (!j_ || !j_->contains(key) || j_->at(key).is_null()) return nullptr;
        return &j_->at(key);
    }

    const json* j_ = nullptr;
    std::string name_;
    std::set<std::string> used_;
};

void get_size(Section& s, const char* key, std::size_t& out) {
    std::uint64_t v = out;
    s.get(key, v);
    out = static_cast<std::size_t>(v);
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

bool is_split_name(const std::string& s) { return s == "train" || s == "test"; }

bool is_reasoning_mode(const std::string& name) {
    const auto m = promptkit::mode_from_name(name);
    return m && m->reasoning;
}

} // namespace

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    Section root(j, "");

    auto paths = root.sub("paths");
    paths.get("reviews", c.paths.reviews);
    paths.get("metadata", c.paths.metadata);
    paths.get("runs", c.paths.runs);
    paths.get("annotations", c.paths.annotations);
    paths.finish();
    require(!c.paths.reviews.empty() && !c.paths.metadata.empty(), "paths.reviews and paths.metadata are required");
    require(!c.paths.runs.empty(), "paths.runs must be non-empty");

    auto corpus = root.sub("corpus");
    corpus.get("domain", c.corpus.domain);
    get_size(corpus, "min_history", c.corpus.min_history);
    get_size(corpus, "max_history", c.corpus.max_history);
    corpus.finish();
    require(c.corpus.min_history >= 1, "corpus.min_history must be >= 1");
    require(c.corpus.min_history <= c.corpus.max_history, "corpus.min_history must not exceed corpus.max_history");

    auto split = root.sub("split");
    get_size(split, "per_label_train", c.split.per_label_train);
    get_size(split, "per_label_test", c.split.per_label_test);
    split.get("seed", c.split.seed);
    split.finish();
    require(c.split.per_label_train > 0 && c.split.per_label_test > 0, "split counts must be positive");

    auto backend = root.sub("backend");
    backend.get("kind", c.backend.kind);
    get_size(backend, "parallelism", c.backend.parallelism);
    get_size(backend, "chunk_size", c.backend.chunk_size);
    backend.get("mock_seed", c.backend.mock.seed);
    backend.get("malformed_rate", c.backend.mock.malformed_rate);
    backend.get("script", c.backend.script);
    backend.get("replay_log", c.backend.replay_log);
    backend.get("endpoint", c.backend.http.endpoint);
    backend.get("auth_env", c.backend.http.auth_env);
    backend.get_ms("timeout_ms", c.backend.http.timeout);
    get_size(backend, "max_retries", c.backend.http.max_retries);
    backend.get_ms("retry_backoff_ms", c.backend.http.retry_backoff);
    backend.finish();
    c.backend.http.parallelism = c.backend.parallelism;
    require(c.backend.kind == "mock" || c.backend.kind == "http" || c.backend.kind == "replay",
            "backend.kind must be mock, http or replay");
    require(c.backend.parallelism >= 1 && c.backend.chunk_size >= 1, "backend parallelism and chunk_size must be >= 1");
    require(c.backend.mock.malformed_rate >= 0 && c.backend.mock.malformed_rate <= 1,
            "backend.malformed_rate must lie in [0, 1]");
    require(c.backend.kind != "http" || !c.backend.http.endpoint.empty(), "backend.endpoint is required for http");
    require(c.backend.kind != "replay" || !c.backend.replay_log.empty(), "backend.replay_log is required for replay");

    auto predict = root.sub("predict");
    predict.get("split", c.predict.split);
    predict.get("modes", c.predict.modes);
    predict.get("temperature", c.predict.temperature);
    predict.get("seed", c.predict.seed);
    std::string rounding = "half_away_from_zero";
    predict.get("rounding", rounding);
    predict.get("exemplar_id", c.predict.exemplar_id);
    predict.get("exemplar_reasoning", c.predict.exemplar_reasoning);
    predict.finish();
    require(is_split_name(c.predict.split), "predict.split must be train or test");
    require(!c.predict.modes.empty(), "predict.modes must not be empty");
    std::set<std::string> seen;
    for (const auto& m : c.predict.modes) {
        require(m == kNaiveBaselineMode || promptkit::mode_from_name(m).has_value(), "unknown predict mode " + m);
        require(seen.insert(m).second, "duplicate predict mode " + m);
        if (m == "one_shot") {
            require(!c.predict.exemplar_reasoning.empty(), "one_shot mode needs predict.exemplar_reasoning");
        }
    }
    require(c.predict.temperature >= 0, "predict.temperature must be >= 0");
    const auto r = taskmetrics::rounding_from_name(rounding);
    require(r.has_value(), "predict.rounding must be half_away_from_zero, half_to_even or half_down");
    c.predict.rounding = *r;

    auto refs = root.sub("refs");
    refs.get("split", c.refs.split);
    get_size(refs, "n", c.refs.generation.n);
    refs.get("temperature", c.refs.generation.temperature);
    refs.get("seed", c.refs.generation.seed);
    get_size(refs, "max_tokens", c.refs.generation.max_tokens);
    refs.finish();
    require(is_split_name(c.refs.split), "refs.split must be train or test");
    require(c.refs.generation.n >= 1, "refs.n must be >= 1");
    require(c.refs.generation.temperature >= 0, "refs.temperature must be >= 0");

    auto scoring = root.sub("scoring");
    scoring.get("embedding", c.scoring.embedding);
    get_size(scoring, "embedding_dim", c.scoring.embedding_dim);
    scoring.get("embedding_seed", c.scoring.embedding_seed);
    scoring.get("embedding_endpoint", c.scoring.embedding_endpoint);
    get_size(scoring, "meteor_search_nodes", c.scoring.meteor_search_nodes);
    scoring.get("compare_unverified", c.scoring.compare_unverified);
    get_size(scoring, "threads", c.scoring.threads);
    scoring.finish();
    require(c.scoring.embedding == "hashed" || c.scoring.embedding == "http", "scoring.embedding must be hashed or http");
    require(c.scoring.embedding != "http" || !c.scoring.embedding_endpoint.empty(),
            "scoring.embedding_endpoint is required for http embeddings");
    require(c.scoring.embedding_dim >= 1 && c.scoring.meteor_search_nodes >= 1 && c.scoring.threads >= 1,
            "scoring sizes must be >= 1");

    auto exporting = root.sub("export");
    exporting.get("split", c.exporting.split);
    get_size(exporting, "m", c.exporting.m);
    exporting.get("temperature", c.exporting.temperature);
    exporting.get("seed", c.exporting.seed);
    std::vector<std::string> policies;
    for (auto p : c.exporting.policies) policies.emplace_back(ftexport::to_string(p));
    exporting.get("policies", policies);
    exporting.finish();
    require(is_split_name(c.exporting.split), "export.split must be train or test");
    require(c.exporting.m >= 1, "export.m must be >= 1");
    require(c.exporting.m == 1 || c.exporting.temperature > 0, "export.temperature must be > 0 when m > 1");
    require(!policies.empty(), "export.policies must not be empty");
    c.exporting.policies.clear();
    for (const auto& name : policies) {
        const auto p = ftexport::policy_from_name(name);
        require(p.has_value(), "unknown export policy " + name);
        require(std::find(c.exporting.policies.begin(), c.exporting.policies.end(), *p) == c.exporting.policies.end(),
                "duplicate export policy " + name);
        c.exporting.policies.push_back(*p);
    }

    auto align = root.sub("align");
    align.get("mode", c.align.mode);
    std::string rule = "fisher";
    align.get("p_value", rule);
    align.finish();
    require(is_reasoning_mode(c.align.mode), "align.mode must be a reasoning prompt mode");
    const auto pr = agreestats::p_value_rule_from_name(rule);
    require(pr.has_value(), "align.p_value must be fisher or max_pairwise");
    c.align.p_value = *pr;

    auto report = root.sub("report");
    report.get("columns", c.report.columns);
    report.finish();
    for (const auto& col : c.report.columns) {
        require(std::find(kReportColumns.begin(), kReportColumns.end(), col) != kReportColumns.end(),
                "unknown report column " + col);
    }

    root.finish();
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    } catch (const Error& e) {
        throw ConfigError("cannot read config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

json to_json(const PipelineConfig& c) {
    auto rounding_name = [](taskmetrics::Rounding r) {
        switch (r) {
        case taskmetrics::Rounding::HalfAwayFromZero: return "half_away_from_zero";
        case taskmetrics::Rounding::HalfToEven: return "half_to_even";
        case taskmetrics::Rounding::HalfDown: return "half_down";
        }
        return "half_away_from_zero";
    };
    json policies = json::array();
    for (auto p : c.exporting.policies) policies.push_back(ftexport::to_string(p));
    return {
        {"paths",
         {{"reviews", c.paths.reviews},
          {"metadata", c.paths.metadata},
          {"runs", c.paths.runs},
          {"annotations", c.paths.annotations}}},
        {"corpus",
         {{"domain", c.corpus.domain}, {"min_history", c.corpus.min_history}, {"max_history", c.corpus.max_history}}},
        {"split",
         {{"per_label_train", c.split.per_label_train},
          {"per_label_test", c.split.per_label_test},
          {"seed", c.split.seed}}},
        {"backend",
         {{"kind", c.backend.kind},
          {"parallelism", c.backend.parallelism},
          {"chunk_size", c.backend.chunk_size},
          {"mock_seed", c.backend.mock.seed},
          {"malformed_rate", c.backend.mock.malformed_rate},
          {"script", c.backend.script},
          {"replay_log", c.backend.replay_log},
          {"endpoint", c.backend.http.endpoint},
          {"auth_env", c.backend.http.auth_env},
          {"timeout_ms", c.backend.http.timeout.count()},
          {"max_retries", c.backend.http.max_retries},
          {"retry_backoff_ms", c.backend.http.retry_backoff.count()}}},
        {"predict",
         {{"split", c.predict.split},
          {"modes", c.predict.modes},
          {"temperature", c.predict.temperature},
          {"seed", c.predict.seed},
          {"rounding", rounding_name(c.predict.rounding)},
          {"exemplar_id", c.predict.exemplar_id},
          {"exemplar_reasoning", c.predict.exemplar_reasoning}}},
        {"refs",
         {{"split", c.refs.split},
          {"n", c.refs.generation.n},
          {"temperature", c.refs.generation.temperature},
          {"seed", c.refs.generation.seed},
          {"max_tokens", c.refs.generation.max_tokens}}},
        {"scoring",
         {{"embedding", c.scoring.embedding},
          {"embedding_dim", c.scoring.embedding_dim},
          {"embedding_seed", c.scoring.embedding_seed},
          {"embedding_endpoint", c.scoring.embedding_endpoint},
          {"meteor_search_nodes", c.scoring.meteor_search_nodes},
          {"compare_unverified", c.scoring.compare_unverified},
          {"threads", c.scoring.threads}}},
        {"export",
         {{"split", c.exporting.split},
          {"m", c.exporting.m},
          {"temperature", c.exporting.temperature},
          {"seed", c.exporting.seed},
          {"policies", policies}}},
        {"align", {{"mode", c.align.mode}, {"p_value", agreestats::to_string(c.align.p_value)}}},
        {"report", {{"columns", c.report.columns}}},
    };
}

std::unique_ptr<genbackend::Backend> make_backend(const BackendSettings& s) {
    if (s.kind == "mock") {
        auto mock = std::make_unique<genbackend::MockBackend>(s.mock);
        if (!s.script.empty()) mock->load_script(s.script);
        return mock;
    }
    if (s.kind == "http") return std::make_unique<genbackend::HttpBackend>(s.http);
    if (s.kind == "replay") {
        if (!fs::exists(s.replay_log)) throw ConfigError("replay log " + s.replay_log + " does not exist");
        return std::make_unique<genbackend::ReplayBackend>(s.replay_log);
    }
    throw ConfigError("unknown backend kind " + s.kind);
}

std::unique_ptr<nlg::EmbeddingScorer> make_scorer(const ScoringSettings& s) {
    if (s.embedding == "http") return std::make_unique<nlg::HttpEmbeddingScorer>(s.embedding_endpoint);
    return std::make_unique<nlg::HashedEmbeddingScorer>(s.embedding_dim, s.embedding_seed);
}

// ---------------------------------------------------------------------------
// Stages

namespace {

constexpr const char* kExamplesFile = "examples.jsonl";
constexpr const char* kIngestReportFile = "ingest_report.json";
constexpr const char* kTrainFile = "train.jsonl";
constexpr const char* kTestFile = "test.jsonl";
constexpr const char* kSplitReportFile = "split_report.json";
constexpr const char* kPredictionsFile = "predictions.jsonl";
constexpr const char* kMetricsFile = "metrics.jsonl";
constexpr const char* kExplanationsFile = "explanations.jsonl";
constexpr const char* kVerifiedFile = "explanations_verified.jsonl";
constexpr const char* kPoolFile = "reference_pool.jsonl";
constexpr const char* kCoverageFile = "coverage.json";
constexpr const char* kScoresFile = "reasoning_scores.jsonl";
constexpr const char* kScoreSummaryFile = "reasoning_summary.jsonl";
constexpr const char* kTeacherFile = "teacher_samples.jsonl";
constexpr const char* kExportSummaryFile = "export_summary.json";
constexpr const char* kAlignJsonFile = "alignment.json";
constexpr const char* kAlignMdFile = "alignment.md";
constexpr const char* kReportCsvFile = "report.csv";
constexpr const char* kReportMdFile = "report.md";

std::string finetune_file(ftexport::FilterPolicy p) { return fmt::format("finetune_{}.jsonl", ftexport::to_string(p)); }

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

std::vector<json> read_rows(const runstore::Run& run, const char* file) { return read_jsonl(run.path(file)); }

// Runs fn(i) for i in [0, n) on up to `threads` workers; results must be
// written to pre-sized slots so output order never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> workers;
        for (std::size_t t = 0; t < threads; ++t) {
            workers.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                        next.store(n);
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

json mean_or_null(double sum, std::size_t n) { return n == 0 ? json(nullptr) : json(sum / static_cast<double>(n)); }

} // namespace

Pipeline::Pipeline(runstore::Run& run, PipelineConfig config, std::shared_ptr<genbackend::Backend> backend)
    : run_(run), config_(std::move(config)), backend_(std::move(backend)) {}

std::size_t Pipeline::backend_calls() const noexcept { return client_ ? client_->backend_calls() : 0; }

genbackend::GenerationClient& Pipeline::client() {
    if (!client_) {
        if (!backend_) backend_ = make_backend(config_.backend);
        cache_ = std::make_unique<genbackend::ResponseCache>(run_.path(runstore::kCacheName));
        client_ = std::make_unique<genbackend::GenerationClient>(*backend_, cache_.get(), config_.backend.parallelism,
                                                                 config_.backend.chunk_size);
    }
    return *client_;
}

std::vector<corpus::Example> Pipeline::load_split(const std::string& which) const {
    return corpus::read_examples(run_.path(which == "train" ? kTrainFile : kTestFile));
}

bool Pipeline::ingest() {
    const json external = {{"reviews", sha256_file(config_.paths.reviews)},
                           {"metadata", sha256_file(config_.paths.metadata)}};
    if (run_.up_to_date(kIngest, {}, external)) return false;
    run_.start(kIngest);
    auto result = corpus::ingest_files(config_.paths.reviews, config_.paths.metadata, config_.corpus.domain);
    const auto kept = corpus::filter_by_history(result.examples, config_.corpus.min_history, config_.corpus.max_history);
    json report = corpus::to_json(result.report);
    report["history_filter"] = {config_.corpus.min_history, config_.corpus.max_history};
    report["examples_after_filter"] = kept.size();
    run_.write(kExamplesFile, corpus::to_jsonl(kept));
    run_.write(kIngestReportFile, dump_json(report));
    run_.finish(kIngest, {kExamplesFile, kIngestReportFile}, {}, external);
    spdlog::info("ingest: {} examples ({} before history filter)", kept.size(), result.examples.size());
    return true;
}

bool Pipeline::split() {
    run_.require(kIngest, kSplit);
    if (run_.up_to_date(kSplit, {kIngest})) return false;
    run_.start(kSplit);
    const auto examples = corpus::read_examples(run_.path(kExamplesFile));
    const auto [train, test] = corpus::balanced_split(examples, config_.split);
    auto label_counts = [](const std::vector<corpus::Example>& xs) {
        json counts = json::object();
        for (int label = 1; label <= 5; ++label) {
            counts[std::to_string(label)] = std::count_if(
                xs.begin(), xs.end(), [label](const corpus::Example& e) { return e.truth_rating == label; });
        }
        return counts;
    };
    run_.write(kTrainFile, corpus::to_jsonl(train));
    run_.write(kTestFile, corpus::to_jsonl(test));
    run_.write(kSplitReportFile, dump_json({{"train", label_counts(train)},
                                            {"test", label_counts(test)},
                                            {"seed", config_.split.seed}}));
    run_.finish(kSplit, {kTrainFile, kTestFile, kSplitReportFile}, {kIngest});
    spdlog::info("split: {} train, {} test", train.size(), test.size());
    return true;
}

bool Pipeline::predict() {
    run_.require(kSplit, kPredict);
    if (run_.up_to_date(kPredict, {kSplit})) return false;
    run_.start(kPredict);
    const auto data = load_split(config_.predict.split);
    const auto& cfg = config_.predict;

    std::optional<promptkit::Exemplar> exemplar;
    if (std::find(cfg.modes.begin(), cfg.modes.end(), "one_shot") != cfg.modes.end()) {
        const auto train = load_split("train");
        const corpus::Example* chosen = nullptr;
        for (const auto& ex : train) {
            if (cfg.exemplar_id.empty() ? (!chosen || ex.example_id < chosen->example_id)
                                        : ex.example_id == cfg.exemplar_id) {
                chosen = &ex;
            }
        }
        if (!chosen) throw ConfigError("one-shot exemplar not found in the train split");
        exemplar = promptkit::Exemplar{*chosen, cfg.exemplar_reasoning};
    }

    struct Job {
        std::size_t mode_index;
        std::size_t example_index;
    };
    std::vector<Job> jobs;
    std::vector<genbackend::GenerationRequest> requests;
    for (std::size_t m = 0; m < cfg.modes.size(); ++m) {
        if (cfg.modes[m] == kNaiveBaselineMode) continue;
        const auto mode = *promptkit::mode_from_name(cfg.modes[m]);
        for (std::size_t i = 0; i < data.size(); ++i) {
            genbackend::GenerationRequest req;
            req.prompt = promptkit::render_task_prompt(data[i], mode, mode.one_shot ? exemplar : std::nullopt).text;
            req.temperature = cfg.temperature;
            req.seed = cfg.seed;
            jobs.push_back({m, i});
            requests.push_back(std::move(req));
        }
    }
    const auto outcomes = client().run(requests);

    std::vector<json> rows;
    std::vector<json> metric_rows;
    std::size_t job = 0;
    for (std::size_t m = 0; m < cfg.modes.size(); ++m) {
        const auto& name = cfg.modes[m];
        taskmetrics::PredictionSet preds;
        outparse::FailureReport failures;
        std::size_t backend_failures = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& ex = data[i];
            json row = {{"mode", name},      {"example_id", ex.example_id}, {"truth", ex.truth_rating},
                        {"predicted", nullptr}, {"reasoning", ""},         {"raw", ""},
                        {"class_probs", nullptr}, {"request_id", ""},      {"failure", ""}};
            if (name == kNaiveBaselineMode) {
                const int r = taskmetrics::naive_baseline(ex, cfg.rounding);
                row["predicted"] = r;
                preds.push_back({ex.example_id, r, ex.truth_rating, std::nullopt});
                rows.push_back(std::move(row));
                continue;
            }
            const auto& outcome = outcomes[job++];
            row["request_id"] = outcome.request_id;
            if (!outcome.ok() || outcome.candidates.empty()) {
                row["failure"] = outcome.ok() ? "EmptyResponse" : outcome.error_code;
                ++backend_failures;
                rows.push_back(std::move(row));
                continue;
            }
            const auto& cand = outcome.candidates.front();
            row["raw"] = cand.text;
            const auto parsed = outparse::parse_prediction(cand.text, *promptkit::mode_from_name(name));
            failures.record(parsed);
            if (const auto* f = std::get_if<outparse::ParseFailure>(&parsed)) {
                row["failure"] = outparse::to_string(f->reason);
                rows.push_back(std::move(row));
                continue;
            }
            const auto& ok = std::get<outparse::ParsedOutput>(parsed);
            row["predicted"] = ok.rating;
            row["reasoning"] = ok.reasoning;
            std::optional<taskmetrics::ClassProbs> probs;
            if (cand.class_logits) {
                try {
                    probs = genbackend::normalize_class_scores(*cand.class_logits);
                    row["class_probs"] = *probs;
                } catch (const genbackend::InvalidLogits&) {
                    row["failure"] = "InvalidLogits";
                }
            }
            preds.push_back({ex.example_id, ok.rating, ex.truth_rating, probs});
            rows.push_back(std::move(row));
        }
        json mrow;
        if (preds.empty()) {
            taskmetrics::MetricReport empty;
            mrow = taskmetrics::to_json(empty);
            for (const char* k : {"binary_acc", "binary_f1", "multi_acc", "mae", "rmse"}) mrow[k] = nullptr;
        } else {
            mrow = taskmetrics::to_json(taskmetrics::evaluate(preds, failures.failures()));
        }
        mrow["n_parse_failures"] = failures.failures();
        mrow["n_backend_failures"] = backend_failures;
        mrow["mode"] = name;
        mrow["split"] = cfg.split;
        mrow["parse_failures"] = failures.to_json();
        metric_rows.push_back(std::move(mrow));
        spdlog::info("predict {}: {} evaluated, {} failures", name, preds.size(), failures.failures());
    }
    run_.write(kPredictionsFile, to_jsonl(rows));
    run_.write(kMetricsFile, to_jsonl(metric_rows));
    run_.finish(kPredict, {kPredictionsFile, kMetricsFile}, {kSplit});
    return true;
}

bool Pipeline::generate_refs() {
    run_.require(kSplit, kRefsGenerate);
    if (run_.up_to_date(kRefsGenerate, {kSplit})) return false;
    run_.start(kRefsGenerate);
    const auto data = load_split(config_.refs.split);
    const auto candidates = recsaver::generate_all(data, config_.refs.generation, client());
    std::vector<json> rows;
    for (const auto& c : candidates) rows.push_back(recsaver::to_json(c));
    run_.write(kExplanationsFile, to_jsonl(rows));
    run_.finish(kRefsGenerate, {kExplanationsFile}, {kSplit});
    spdlog::info("gen-refs: {} post hoc candidates", candidates.size());
    return true;
}

bool Pipeline::verify_refs() {
    run_.require(kRefsGenerate, kRefsVerify);
    if (run_.up_to_date(kRefsVerify, {kRefsGenerate})) return false;
    run_.start(kRefsVerify);
    const auto data = load_split(config_.refs.split);
    std::vector<recsaver::PostHocExplanation> candidates;
    for (const auto& row : read_rows(run_, kExplanationsFile)) candidates.push_back(recsaver::explanation_from_json(row));
    candidates = recsaver::verify_all(data, std::move(candidates), client());
    const auto pool = recsaver::assemble_pool(data, candidates);
    const auto cov = recsaver::coverage(data, candidates);
    std::vector<json> rows;
    for (const auto& c : candidates) rows.push_back(recsaver::to_json(c));
    run_.write(kVerifiedFile, to_jsonl(rows));
    run_.write(kPoolFile, recsaver::pool_to_jsonl(pool, data));
    run_.write(kCoverageFile, dump_json(recsaver::to_json(cov)));
    run_.finish(kRefsVerify, {kVerifiedFile, kPoolFile, kCoverageFile}, {kRefsGenerate});
    spdlog::info("gen-refs: {} verified of {}, {} examples without references", cov.verified, cov.candidates,
                 cov.empty_pools.size());
    return true;
}

bool Pipeline::score_reasoning() {
    run_.require(kPredict, kScoreReasoning);
    run_.require(kRefsVerify, kScoreReasoning);
    const std::vector<std::string> upstream = {kPredict, kRefsVerify};
    if (run_.up_to_date(kScoreReasoning, upstream)) return false;
    run_.start(kScoreReasoning);

    const auto ref_data = load_split(config_.refs.split);
    std::vector<recsaver::PostHocExplanation> candidates;
    for (const auto& row : read_rows(run_, kVerifiedFile)) candidates.push_back(recsaver::explanation_from_json(row));
    std::vector<std::pair<std::string, recsaver::ReferencePool>> pools;
    auto verified = recsaver::pool_from_jsonl(run_.path(kPoolFile));
    for (const auto& ex : ref_data) verified[ex.example_id];
    pools.emplace_back("verified", std::move(verified));
    if (config_.scoring.compare_unverified) {
        pools.emplace_back("unverified", recsaver::assemble_unverified_pool(ref_data, candidates));
    }

    struct Task {
        std::string mode;
        std::string pool;
        std::string example_id;
        const std::string* reasoning;
        const std::vector<std::string>* refs;
    };
    struct Tally {
        std::size_t empty_pool = 0;
        std::size_t missing_reasoning = 0;
    };
    const auto predictions = read_rows(run_, kPredictionsFile);
    std::vector<std::string> reasoning_text(predictions.size());
    std::vector<Task> tasks;
    std::map<std::pair<std::string, std::string>, Tally> tallies;
    std::vector<std::pair<std::string, std::string>> summary_keys;
    for (const auto& mode : config_.predict.modes) {
        if (!is_reasoning_mode(mode)) continue;
        for (const auto& [pool_name, _] : pools) summary_keys.emplace_back(mode, pool_name);
    }
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& row = predictions[i];
        const auto mode = row.at("mode").get<std::string>();
        if (!is_reasoning_mode(mode)) continue;
        reasoning_text[i] = row.at("reasoning").get<std::string>();
        const auto id = row.at("example_id").get<std::string>();
        for (const auto& [pool_name, pool] : pools) {
            auto& tally = tallies[{mode, pool_name}];
            if (row.at("predicted").is_null() || reasoning_text[i].empty()) {
                ++tally.missing_reasoning;
                continue;
            }
            const auto it = pool.find(id);
            if (it == pool.end() || it->second.empty()) {
                ++tally.empty_pool;
                continue;
            }
            tasks.push_back({mode, pool_name, id, &reasoning_text[i], &it->second});
        }
    }

    const auto scorer = make_scorer(config_.scoring);
    nlg::MeteorParams meteor;
    meteor.max_search_nodes = config_.scoring.meteor_search_nodes;
    std::vector<recsaver::ReasoningScore> scores(tasks.size());
    parallel_for(tasks.size(), config_.scoring.threads, [&](std::size_t i) {
        scores[i] = recsaver::evaluate_reasoning(*tasks[i].reasoning, *tasks[i].refs, *scorer, meteor);
        scores[i].example_id = tasks[i].example_id;
    });

    std::vector<json> rows;
    std::map<std::pair<std::string, std::string>, std::array<double, 5>> sums;  // 4 metrics + count
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        json row = recsaver::to_json(scores[i]);
        row["mode"] = tasks[i].mode;
        row["pool"] = tasks[i].pool;
        rows.push_back(std::move(row));
        auto& s = sums[{tasks[i].mode, tasks[i].pool}];
        s[0] += scores[i].bleu;
        s[1] += scores[i].rouge1_f1;
        s[2] += scores[i].meteor;
        s[3] += scores[i].embed_score;
        s[4] += 1;
    }
    std::vector<json> summary;
    for (const auto& key : summary_keys) {
        const auto s = sums[key];
        const auto n = static_cast<std::size_t>(s[4]);
        const auto& tally = tallies[key];
        summary.push_back({{"mode", key.first},
                           {"pool", key.second},
                           {"n_scored", n},
                           {"n_empty_pool", tally.empty_pool},
                           {"n_missing_reasoning", tally.missing_reasoning},
                           {"bleu", mean_or_null(s[0], n)},
                           {"rouge1_f1", mean_or_null(s[1], n)},
                           {"meteor", mean_or_null(s[2], n)},
                           {"embed_score", mean_or_null(s[3], n)}});
    }
    run_.write(kScoresFile, to_jsonl(rows));
    run_.write(kScoreSummaryFile, to_jsonl(summary));
    run_.finish(kScoreReasoning, {kScoresFile, kScoreSummaryFile}, upstream);
    spdlog::info("score-reasoning: {} scored pairs", rows.size());
    return true;
}

bool Pipeline::export_ft() {
    run_.require(kSplit, kExportFt);
    if (run_.up_to_date(kExportFt, {kSplit})) return false;
    run_.start(kExportFt);
    const auto& cfg = config_.exporting;
    const auto data = load_split(cfg.split);
    const auto collected = ftexport::collect_samples(data, cfg.m, cfg.temperature, cfg.seed, client());

    std::vector<json> sample_rows;
    for (const auto& s : collected.samples) sample_rows.push_back(ftexport::to_json(s));
    run_.write(kTeacherFile, to_jsonl(sample_rows));
    std::vector<std::string> files = {kTeacherFile};
    json survivors = json::object();
    for (auto policy : cfg.policies) {
        const auto kept = ftexport::apply_filter(collected.samples, policy);
        if (kept.empty()) spdlog::warn("export-ft: policy {} keeps no samples", ftexport::to_string(policy));
        std::vector<json> rows;
        for (const auto& r : ftexport::export_records(kept, data, policy)) rows.push_back(ftexport::to_json(r));
        const auto file = finetune_file(policy);
        run_.write(file, to_jsonl(rows));
        files.push_back(file);
        survivors[std::string(ftexport::to_string(policy))] = kept.size();
    }
    run_.write(kExportSummaryFile, dump_json({{"requested", collected.requested},
                                              {"collected", collected.samples.size()},
                                              {"shortfall", collected.shortfall()},
                                              {"backend_failures", collected.backend_failures},
                                              {"parse_failures", collected.parse_failures.to_json()},
                                              {"survivors", survivors}}));
    files.push_back(kExportSummaryFile);
    run_.finish(kExportFt, files, {kSplit});
    spdlog::info("export-ft: {} of {} samples collected", collected.samples.size(), collected.requested);
    return true;
}

bool Pipeline::align() {
    run_.require(kScoreReasoning, kAlign);
    if (config_.paths.annotations.empty()) throw ConfigError("align needs paths.annotations");
    const json external = {{"annotations", sha256_file(config_.paths.annotations)}};
    if (run_.up_to_date(kAlign, {kScoreReasoning}, external)) return false;
    run_.start(kAlign);
    const auto annotations = agreestats::read_annotations(config_.paths.annotations);
    std::vector<recsaver::ReasoningScore> verified, unverified;
    for (const auto& row : read_rows(run_, kScoresFile)) {
        if (row.at("mode").get<std::string>() != config_.align.mode) continue;
        (row.at("pool").get<std::string>() == "verified" ? verified : unverified).push_back(recsaver::score_from_json(row));
    }
    const auto report = agreestats::alignment_report(
        annotations, verified,
        config_.scoring.compare_unverified ? std::optional(unverified) : std::nullopt);
    run_.write(kAlignJsonFile, dump_json(agreestats::to_json(report, config_.align.p_value)));
    run_.write(kAlignMdFile, agreestats::to_markdown(report, config_.align.p_value));
    run_.finish(kAlign, {kAlignJsonFile, kAlignMdFile}, {kScoreReasoning}, external);
    spdlog::info("align: {} joined samples", report.joined_samples);
    return true;
}

bool Pipeline::report() {
    run_.require(kPredict, kReport);
    std::vector<std::string> upstream = {kPredict};
    for (const char* optional_stage : {kScoreReasoning, kExportFt}) {
        if (run_.complete(optional_stage)) upstream.emplace_back(optional_stage);
    }
    if (run_.up_to_date(kReport, upstream)) return false;
    run_.start(kReport);

    std::map<std::string, json> nlg_by_mode;
    if (run_.complete(kScoreReasoning)) {
        for (const auto& row : read_rows(run_, kScoreSummaryFile)) {
            if (row.at("pool") == "verified") nlg_by_mode[row.at("mode").get<std::string>()] = row;
        }
    }

    std::vector<std::pair<std::string, json>> rows;  // label -> values
    for (const auto& m : read_rows(run_, kMetricsFile)) {
        json values = m;
        const auto mode = m.at("mode").get<std::string>();
        if (auto it = nlg_by_mode.find(mode); it != nlg_by_mode.end()) {
            for (auto metric : agreestats::kMetricNames) values[std::string(metric)] = it->second.at(std::string(metric));
            values["n_scored"] = it->second.at("n_scored");
        }
        rows.emplace_back(mode, std::move(values));
    }
    if (run_.complete(kExportFt)) {
        std::vector<ftexport::ReasoningSample> samples;
        for (const auto& row : read_rows(run_, kTeacherFile)) samples.push_back(ftexport::sample_from_json(row));
        for (auto policy : config_.exporting.policies) {
            const auto kept = ftexport::apply_filter(samples, policy);
            taskmetrics::PredictionSet preds;
            for (const auto& s : kept) preds.push_back({s.example_id, s.predicted_rating, s.truth_rating, std::nullopt});
            json values = json::object();
            if (!preds.empty()) values = taskmetrics::to_json(taskmetrics::evaluate(preds, 0));
            values["n_evaluated"] = kept.size();
            rows.emplace_back(fmt::format("export:{}", ftexport::to_string(policy)), std::move(values));
        }
    }

    const auto& columns = config_.report.columns;
    auto value_cell = [](const json& values, const std::string& key, const char* missing) -> std::string {
        if (!values.contains(key) || values[key].is_null()) return missing;
        if (values[key].is_number_float()) return fmt::format("{:.6f}", values[key].get<double>());
        return values[key].dump();
    };
    std::string csv = "row";
    std::string md = "| Row |";
    std::string rule = "|---|";
    for (const auto& c : columns) {
        csv += "," + c;
        md += " " + c + " |";
        rule += "---|";
    }
    csv += ",n_evaluated,n_parse_failures,n_scored\n";
    md += " n_evaluated | n_parse_failures | n_scored |\n" + rule + "---|---|---|\n";
    for (const auto& [label, values] : rows) {
        csv += label;
        md += "| " + label + " |";
        for (const auto& c : columns) {
            csv += "," + value_cell(values, c, "");
            md += " " + value_cell(values, c, "-") + " |";
        }
        for (const char* k : {"n_evaluated", "n_parse_failures", "n_scored"}) {
            csv += "," + value_cell(values, k, "");
            md += " " + value_cell(values, k, "-") + " |";
        }
        csv += "\n";
        md += "\n";
    }
    run_.write(kReportCsvFile, csv);
    run_.write(kReportMdFile, md);
    run_.finish(kReport, {kReportCsvFile, kReportMdFile}, upstream);
    spdlog::info("report: {} rows", rows.size());
    return true;
}

void Pipeline::run_all() {
    ingest();
    split();
    predict();
    generate_refs();
    verify_refs();
    score_reasoning();
    export_ft();
    if (!config_.paths.annotations.empty()) align();
    report();
}

} // namespace recreason::pipeline
