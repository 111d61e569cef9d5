#include <httplib.h>

#include <cstdlib>
#include <thread>

#include <spdlog/spdlog.h>

#include "recreason/genbackend.hpp"

namespace recreason::genbackend {

namespace {

// "https://host:port/v1/generate" -> ("https://host:port", "/v1/generate")
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must include a scheme: " + endpoint);
    const auto scheme = endpoint.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ConfigError("unsupported endpoint scheme: " + scheme);
    const auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

} // namespace

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
    if (config_.parallelism == 0) throw ConfigError("backend parallelism must be >= 1");
    std::tie(scheme_host_port_, path_) = split_endpoint(config_.endpoint);
    if (!config_.auth_env.empty()) {
        const char* token = std::getenv(config_.auth_env.c_str());
        if (token == nullptr || *token == '\0') {
            throw ConfigError("credential environment variable " + config_.auth_env + " is not set");
        }
        bearer_ = token;
    }
}

std::vector<GenerationCandidate> HttpBackend::generate(const GenerationRequest& request) {
    validate(request);
    const auto body = wire_request(request).dump();
    httplib::Headers headers;
    if (bearer_) headers.emplace("Authorization", "Bearer " + *bearer_);

    const std::size_t attempts = config_.max_retries + 1;
    std::string last_error;
    for (std::size_t attempt = 1; attempt <= attempts; ++attempt) {
        httplib::Client client(scheme_host_port_);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());

        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
        } else if (retryable_status(res->status)) {
            last_error = "HTTP " + std::to_string(res->status);
        } else if (res->status != 200) {
            throw ProtocolError("HTTP " + std::to_string(res->status) + " from " + config_.endpoint);
        } else {
            json parsed;
            try {
                parsed = json::parse(res->body);
            } catch (const json::parse_error& e) {
                throw ProtocolError(std::string("response is not JSON: ") + e.what());
            }
            return candidates_from_json(parsed);
        }
        if (attempt < attempts) {
            spdlog::warn("generation attempt {}/{} failed ({}), retrying", attempt, attempts, last_error);
            std::this_thread::sleep_for(config_.retry_backoff * (1u << std::min<std::size_t>(attempt - 1, 6)));
        }
    }
    throw BackendUnavailable(config_.endpoint + ": " + last_error + " after " + std::to_string(attempts) + " attempts",
                             attempts);
}

} // namespace recreason::genbackend

#include "recreason/nlgmetrics.hpp"

namespace recreason::nlg {

HttpEmbeddingScorer::HttpEmbeddingScorer(std::string endpoint, double timeout_seconds)
    : endpoint_(std::move(endpoint)), timeout_seconds_(timeout_seconds) {}

std::vector<std::vector<double>> HttpEmbeddingScorer::embed(std::span<const std::string> tokens) const {
    const auto scheme_end = endpoint_.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("embedding endpoint must include a scheme");
    const auto path_start = endpoint_.find('/', scheme_end + 3);
    const auto base = path_start == std::string::npos ? endpoint_ : endpoint_.substr(0, path_start);
    const auto path = path_start == std::string::npos ? std::string("/") : endpoint_.substr(path_start);

    httplib::Client client(base);
    const auto secs = static_cast<time_t>(timeout_seconds_);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    const json body = {{"tokens", std::vector<std::string>(tokens.begin(), tokens.end())}};
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) throw genbackend::BackendUnavailable("embedding service: " + httplib::to_string(res.error()), 1);
    if (res->status != 200) throw genbackend::ProtocolError("embedding service HTTP " + std::to_string(res->status));

    json parsed;
    try {
        parsed = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw genbackend::ProtocolError(std::string("embedding response is not JSON: ") + e.what());
    }
    if (!parsed.contains("vectors") || !parsed["vectors"].is_array() || parsed["vectors"].size() != tokens.size()) {
        throw genbackend::ProtocolError("embedding response must carry one vector per token");
    }
    std::vector<std::vector<double>> out;
    std::size_t dim = 0;
    for (const auto& v : parsed["vectors"]) {
        auto vec = v.get<std::vector<double>>();
        if (out.empty()) dim = vec.size();
        if (vec.empty() || vec.size() != dim) throw genbackend::ProtocolError("embedding vectors differ in dimension");
        double norm = 0.0;
        for (double x : vec) norm += x * x;
        if (std::abs(std::sqrt(norm) - 1.0) > 1e-6) throw genbackend::ProtocolError("embedding vector is not unit-norm");
        out.push_back(std::move(vec));
    }
    return out;
}

} // namespace recreason::nlg
