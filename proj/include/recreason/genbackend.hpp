#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "recreason/error.hpp"
#include "recreason/jsonl.hpp"

namespace recreason::genbackend {

struct GenerationRequest {
    std::string prompt;
    double temperature = 0.0;
    std::size_t num_samples = 1;
    std::size_t max_tokens = 512;
    std::optional<std::uint64_t> seed;  // honoured by the mock only
};

using ClassLogits = std::array<double, 5>;

struct GenerationCandidate {
    std::string text;
    std::optional<ClassLogits> class_logits;  // scores for rating tokens 1..5

    bool operator==(const GenerationCandidate&) const = default;
};

struct BackendConfig {
    std::string endpoint;
    std::string auth_env;  // name of the env var holding the bearer token
    std::chrono::milliseconds timeout{60'000};
    std::size_t max_retries = 2;
    std::size_t parallelism = 4;
    std::chrono::milliseconds retry_backoff{250};
};

class BackendUnavailable : public Error {
public:
    BackendUnavailable(const std::string& message, std::size_t attempts)
        : Error("BackendUnavailable", message), attempts_(attempts) {}
    std::size_t attempts() const noexcept { return attempts_; }

private:
    std::size_t attempts_;
};

class ProtocolError : public Error {
public:
    explicit ProtocolError(const std::string& message) : Error("ProtocolError", message) {}
};

class InvalidLogits : public Error {
public:
    explicit InvalidLogits(const std::string& message) : Error("InvalidLogits", message) {}
};

/// Throws ConfigError on num_samples == 0 or a negative/non-finite temperature.
void validate(const GenerationRequest& request);

/// Wire body sent to live backends (seed omitted).
json wire_request(const GenerationRequest& request);
/// Canonical form including the seed; hashed for cache keys.
json to_json(const GenerationRequest& request);
GenerationRequest request_from_json(const json& j);
json to_json(const std::vector<GenerationCandidate>& candidates);
/// Parses a `{ "candidates": [...] }` body. Throws ProtocolError.
std::vector<GenerationCandidate> candidates_from_json(const json& body);

/// SHA-256 over the canonical request JSON; doubles as the request id.
std::string request_key(const GenerationRequest& request);

/// Softmax over the five rating-class scores.
ClassLogits normalize_class_scores(std::span<const double> logits);

class Backend {
public:
    virtual ~Backend() = default;
    /// Must be safe to call concurrently.
    virtual std::vector<GenerationCandidate> generate(const GenerationRequest& request) = 0;
};

struct MockOptions {
    std::uint64_t seed = 0;
    // Probability that a sampled (temperature > 0) task answer is unparseable.
    double malformed_rate = 0.0;
};

/// Deterministic offline backend.
///
/// Scripted prompts return their configured responses (cycled when more
/// samples are requested than scripted). Anything else goes to a fallback
/// generator that recognises the three prompt families (task, post hoc,
/// verification) and answers in the expected format. Output is a pure
/// function of (prompt, temperature, num_samples, seed); at temperature 0
/// the seed and sample index are ignored.
class MockBackend : public Backend {
public:
    explicit MockBackend(MockOptions options = {});

    void script(const std::string& prompt, std::vector<GenerationCandidate> responses);
    /// Lines of {"prompt": text, "responses": [text | {"text", "class_logits"}]}.
    void load_script(const std::filesystem::path& path);

    std::vector<GenerationCandidate> generate(const GenerationRequest& request) override;

    std::size_t calls() const noexcept { return calls_.load(); }

private:
    GenerationCandidate fallback(const GenerationRequest& request, std::size_t sample_index) const;

    MockOptions options_;
    std::unordered_map<std::string, std::vector<GenerationCandidate>> scripted_;
    std::atomic<std::size_t> calls_{0};
};

/// JSON-over-HTTP(S) backend. Transport failures, 429 and 5xx responses are
/// retried up to max_retries times; other statuses and malformed bodies
/// raise ProtocolError immediately.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendConfig config);
    std::vector<GenerationCandidate> generate(const GenerationRequest& request) override;

private:
    BackendConfig config_;
    std::string scheme_host_port_;
    std::string path_;
    std::optional<std::string> bearer_;
};

/// Append-only JSONL store of responses keyed by request hash.
class ResponseCache {
public:
    /// Loads existing entries. A truncated final line (interrupted write) is ignored.
    explicit ResponseCache(std::filesystem::path path);

    std::optional<std::vector<GenerationCandidate>> lookup(const std::string& key) const;
    void append(const GenerationRequest& request, const std::vector<GenerationCandidate>& candidates);

    std::size_t size() const;
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::vector<GenerationCandidate>> entries_;
};

/// Answers only from a recorded cache; a miss is a ProtocolError("ReplayMiss").
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(const std::filesystem::path& log);
    std::vector<GenerationCandidate> generate(const GenerationRequest& request) override;

private:
    ResponseCache log_;
};

struct Outcome {
    std::string request_id;
    std::vector<GenerationCandidate> candidates;
    std::string error_code;  // empty on success
    std::string error_message;
    bool from_cache = false;

    bool ok() const noexcept { return error_code.empty(); }
};

/// Runs batches of requests against a backend with bounded parallelism.
///
/// Cache hits skip the backend. Requests are processed in chunks; after each
/// chunk the new responses are appended to the cache in request order, so
/// the cache file is identical regardless of thread scheduling.
class GenerationClient {
public:
    GenerationClient(Backend& backend, ResponseCache* cache, std::size_t parallelism = 1,
                     std::size_t chunk_size = 64);

    std::vector<Outcome> run(const std::vector<GenerationRequest>& requests);
    Outcome run_one(const GenerationRequest& request);

    std::size_t backend_calls() const noexcept { return backend_calls_; }
    std::size_t cache_hits() const noexcept { return cache_hits_; }

private:
    Backend& backend_;
    ResponseCache* cache_;
    std::size_t parallelism_;
    std::size_t chunk_size_;
    std::size_t backend_calls_ = 0;
    std::size_t cache_hits_ = 0;
};

} // namespace recreason::genbackend
