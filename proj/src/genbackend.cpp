#include "recreason/genbackend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <thread>

#include "recreason/hashing.hpp"
#include "recreason/promptkit.hpp"
#include "recreason/rng.hpp"

namespace recreason::genbackend {

void validate(const GenerationRequest& request) {
    if (request.prompt.empty()) throw ConfigError("prompt must be non-empty");
    if (request.num_samples == 0) throw ConfigError("num_samples must be >= 1");
    if (!std::isfinite(request.temperature) || request.temperature < 0.0) {
        throw ConfigError("temperature must be finite and >= 0");
    }
}

json wire_request(const GenerationRequest& r) {
    return {{"prompt", r.prompt},
            {"temperature", r.temperature},
            {"num_samples", r.num_samples},
            {"max_tokens", r.max_tokens}};
}

json to_json(const GenerationRequest& r) {
    auto j = wire_request(r);
    j["seed"] = r.seed ? json(*r.seed) : json(nullptr);
    return j;
}

GenerationRequest request_from_json(const json& j) {
    GenerationRequest r;
    r.prompt = j.at("prompt").get<std::string>();
    r.temperature = j.at("temperature").get<double>();
    r.num_samples = j.at("num_samples").get<std::size_t>();
    r.max_tokens = j.value("max_tokens", std::size_t{512});
    if (auto it = j.find("seed"); it != j.end() && !it->is_null()) r.seed = it->get<std::uint64_t>();
    return r;
}

json to_json(const std::vector<GenerationCandidate>& candidates) {
    json list = json::array();
    for (const auto& c : candidates) {
        json item = {{"text", c.text}};
        if (c.class_logits) item["class_logits"] = *c.class_logits;
        list.push_back(std::move(item));
    }
    return {{"candidates", std::move(list)}};
}

std::vector<GenerationCandidate> candidates_from_json(const json& body) {
    if (!body.is_object() || !body.contains("candidates") || !body["candidates"].is_array()) {
        throw ProtocolError("response body lacks a \"candidates\" array");
    }
    std::vector<GenerationCandidate> out;
    for (const auto& item : body["candidates"]) {
        if (!item.is_object() || !item.contains("text") || !item["text"].is_string()) {
            throw ProtocolError("candidate without a text field");
        }
        GenerationCandidate c;
        c.text = item["text"].get<std::string>();
        if (auto it = item.find("class_logits"); it != item.end() && !it->is_null()) {
            if (!it->is_array() || it->size() != 5) throw ProtocolError("class_logits must have exactly 5 entries");
            ClassLogits logits{};
            for (std::size_t k = 0; k < 5; ++k) {
                if (!(*it)[k].is_number()) throw ProtocolError("class_logits entries must be numbers");
                logits[k] = (*it)[k].get<double>();
            }
            c.class_logits = logits;
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::string request_key(const GenerationRequest& request) {
    return sha256_hex(to_json(request).dump());
}

ClassLogits normalize_class_scores(std::span<const double> logits) {
    if (logits.size() != 5) throw InvalidLogits("expected 5 class scores, got " + std::to_string(logits.size()));
    for (double v : logits) {
        if (!std::isfinite(v)) throw InvalidLogits("non-finite class score");
    }
    const double peak = *std::max_element(logits.begin(), logits.end());
    ClassLogits probs{};
    double total = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
        probs[k] = std::exp(logits[k] - peak);
        total += probs[k];
    }
    for (auto& p : probs) p /= total;
    return probs;
}

// ---------------------------------------------------------------------------
// Mock backend

namespace {

constexpr std::array<std::string_view, 6> kCues = {
    "",
    "is likely to strongly dislike",
    "will probably be mostly disappointed by",
    "will likely feel lukewarm about",
    "should be quite satisfied with",
    "will be absolutely delighted with",
};

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string_view line_value(std::string_view text, std::string_view key, std::size_t from = 0) {
    auto pos = text.find(key, from);
    if (pos == std::string_view::npos) return {};
    pos += key.size();
    auto end = text.find('\n', pos);
    return text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
}

struct PromptFacts {
    std::vector<int> history_ratings;
    std::size_t history_items = 0;
    std::string title;
    std::string brand;
};

PromptFacts read_facts(std::string_view prompt) {
    // One-shot prompts carry an exemplar first; only the real task counts.
    if (auto end = prompt.find(promptkit::kExemplarEnd); end != std::string_view::npos) prompt = prompt.substr(end);
    PromptFacts facts;
    const auto new_item = prompt.find("### New Item Information: ###");
    const auto history = prompt.substr(0, new_item);
    for (std::size_t pos = 0; (pos = history.find(" Title: ", pos)) != std::string_view::npos; ++pos) {
        ++facts.history_items;
    }
    for (std::size_t pos = 0; (pos = history.find("User Rating: ", pos)) != std::string_view::npos;) {
        pos += 13;
        if (pos < history.size() && history[pos] >= '1' && history[pos] <= '5') {
            facts.history_ratings.push_back(history[pos] - '0');
        }
    }
    if (new_item != std::string_view::npos) {
        facts.title = std::string(line_value(prompt, " Title: ", new_item));
        facts.brand = std::string(line_value(prompt, "Brand: ", new_item));
    }
    if (facts.title.empty()) facts.title = "unknown";
    return facts;
}

int history_estimate(const PromptFacts& facts) {
    if (facts.history_ratings.empty()) return 3;
    double sum = 0;
    for (int r : facts.history_ratings) sum += r;
    return std::clamp(static_cast<int>(std::round(sum / static_cast<double>(facts.history_ratings.size()))), 1, 5);
}

int jitter(int rating, double change_probability, Rng& rng) {
    if (uniform_unit(rng) >= change_probability) return rating;
    const int step = uniform_below(rng, 2) == 0 ? -1 : 1;
    int moved = rating + step;
    if (moved < 1 || moved > 5) moved = rating - step;
    return moved;
}

ClassLogits peaked_logits(int rating, double temperature, Rng& rng) {
    ClassLogits logits{};
    for (int k = 1; k <= 5; ++k) {
        logits[k - 1] = -2.0 * std::abs(k - rating) + (temperature > 0 ? 0.3 * standard_normal(rng) : 0.0);
    }
    return logits;
}

std::string fmt_mean(const PromptFacts& facts) {
    if (facts.history_ratings.empty()) return "no visible ratings";
    double sum = 0;
    for (int r : facts.history_ratings) sum += r;
    char buf[64];
    std::snprintf(buf, sizeof buf, "an average rating of %.1f", sum / static_cast<double>(facts.history_ratings.size()));
    return buf;
}

} // namespace

MockBackend::MockBackend(MockOptions options) : options_(options) {}

void MockBackend::script(const std::string& prompt, std::vector<GenerationCandidate> responses) {
    if (responses.empty()) throw ConfigError("scripted prompt needs at least one response");
    scripted_[prompt] = std::move(responses);
}

void MockBackend::load_script(const std::filesystem::path& path) {
    for (const auto& row : read_jsonl(path)) {
        std::vector<GenerationCandidate> responses;
        for (const auto& r : row.at("responses")) {
            if (r.is_string()) {
                responses.push_back({r.get<std::string>(), std::nullopt});
            } else {
                auto parsed = candidates_from_json(json{{"candidates", json::array({r})}});
                responses.push_back(std::move(parsed.front()));
            }
        }
        script(row.at("prompt").get<std::string>(), std::move(responses));
    }
}

std::vector<GenerationCandidate> MockBackend::generate(const GenerationRequest& request) {
    validate(request);
    ++calls_;
    std::vector<GenerationCandidate> out;
    out.reserve(request.num_samples);
    if (auto it = scripted_.find(request.prompt); it != scripted_.end()) {
        for (std::size_t i = 0; i < request.num_samples; ++i) out.push_back(it->second[i % it->second.size()]);
        return out;
    }
    for (std::size_t i = 0; i < request.num_samples; ++i) out.push_back(fallback(request, i));
    return out;
}

GenerationCandidate MockBackend::fallback(const GenerationRequest& request, std::size_t sample_index) const {
    const std::string_view prompt = request.prompt;
    const bool sampled = request.temperature > 0.0;
    std::uint64_t state = fnv1a64(prompt);
    if (sampled) {
        std::uint64_t temp_bits = 0;
        std::memcpy(&temp_bits, &request.temperature, sizeof temp_bits);
        state ^= splitmix(request.seed.value_or(options_.seed));
        state ^= splitmix(sample_index + 0x51ed);
        state ^= splitmix(temp_bits);
    }
    Rng rng(state);
    const double change = sampled ? std::min(0.9, 0.5 * request.temperature) : 0.0;
    const auto facts = read_facts(prompt);

    if (auto at = prompt.find(promptkit::kExplanationHeader); at != std::string_view::npos) {
        auto block = prompt.substr(at);
        block = block.substr(0, block.find("\n######"));
        int rating = 0;
        for (int k = 1; k <= 5; ++k) {
            if (block.find(kCues[k]) != std::string_view::npos) rating = k;
        }
        if (rating == 0) rating = history_estimate(facts);
        rating = jitter(rating, change, rng);
        return {std::string(promptkit::kRatingMarker) + "\n" + std::to_string(rating) + "\n",
                peaked_logits(rating, request.temperature, rng)};
    }

    if (auto at = prompt.find(promptkit::kGroundTruthHeader); at != std::string_view::npos) {
        int truth = 3;
        const auto stated = line_value(prompt, " a rating of ", at);
        if (!stated.empty() && stated[0] >= '1' && stated[0] <= '5') truth = stated[0] - '0';
        const int conveyed = jitter(truth, change * 0.5, rng);
        const std::string subject = facts.brand.empty() || facts.brand == "unknown" ? "items like these" : facts.brand;
        std::string leak;
        switch (uniform_below(rng, 3)) {
        case 0: leak = "That is why the user gave a rating of " + std::to_string(truth) + "."; break;
        case 1: leak = "This item earns " + std::to_string(truth) + " Stars from the user."; break;
        default: leak = "Overall it scores " + std::to_string(truth) + " out of 5 for this user."; break;
        }
        if (sampled && uniform_unit(rng) < 0.1) return {leak, std::nullopt};
        std::string text = "The user has reviewed " + std::to_string(facts.history_items) +
                           " items before and cares about " + subject + ". ";
        if (!sampled || uniform_unit(rng) < 0.5) text += leak + " ";
        text += "Given this history the user " + std::string(kCues[conveyed]) + " the new item " + facts.title + ".";
        return {text, std::nullopt};
    }

    int rating = jitter(history_estimate(facts), change, rng);
    auto logits = peaked_logits(rating, request.temperature, rng);
    if (sampled && uniform_unit(rng) < options_.malformed_rate) {
        return {"I think the rating is about " + std::to_string(rating) + ".5 overall.", std::nullopt};
    }
    const bool wants_reason =
        prompt.rfind(std::string(promptkit::kReasonMarker) + "\nWrite your reasoning") != std::string_view::npos;
    std::string text;
    if (wants_reason) {
        text += std::string(promptkit::kReasonMarker) + "\n";
        text += "The user has reviewed " + std::to_string(facts.history_items) + " items with " + fmt_mean(facts) +
                ". Based on these preferences the user " + std::string(kCues[rating]) + " the new item " +
                facts.title + ".\n\n";
    }
    text += std::string(promptkit::kRatingMarker) + "\n" + std::to_string(rating) + "\n";
    return {text, logits};
}

// ---------------------------------------------------------------------------
// Cache and replay

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error&) {
            continue;  // interrupted append
        }
        entries_[row.at("key").get<std::string>()] = candidates_from_json(row.at("response"));
    }
}

std::optional<std::vector<GenerationCandidate>> ResponseCache::lookup(const std::string& key) const {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    return std::nullopt;
}

void ResponseCache::append(const GenerationRequest& request, const std::vector<GenerationCandidate>& candidates) {
    const auto key = request_key(request);
    std::lock_guard lock(mutex_);
    if (entries_.count(key)) return;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw Error("IoError", "cannot append to cache " + path_.string());
    json row = {{"key", key}, {"request", to_json(request)}, {"response", to_json(candidates)}};
    out << row.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    out.flush();
    entries_[key] = candidates;
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

ReplayBackend::ReplayBackend(const std::filesystem::path& log) : log_(log) {}

std::vector<GenerationCandidate> ReplayBackend::generate(const GenerationRequest& request) {
    validate(request);
    if (auto hit = log_.lookup(request_key(request))) return *hit;
    throw Error("ReplayMiss", "request " + request_key(request) + " not in replay log");
}

// ---------------------------------------------------------------------------
// Client

GenerationClient::GenerationClient(Backend& backend, ResponseCache* cache, std::size_t parallelism,
                                   std::size_t chunk_size)
    : backend_(backend), cache_(cache), parallelism_(std::max<std::size_t>(1, parallelism)),
      chunk_size_(std::max<std::size_t>(1, chunk_size)) {}

Outcome GenerationClient::run_one(const GenerationRequest& request) {
    return run({request}).front();
}

std::vector<Outcome> GenerationClient::run(const std::vector<GenerationRequest>& requests) {
    std::vector<Outcome> outcomes(requests.size());
    for (std::size_t begin = 0; begin < requests.size(); begin += chunk_size_) {
        const std::size_t end = std::min(requests.size(), begin + chunk_size_);

        // Unique cache misses of this chunk, in request order.
        std::vector<std::size_t> pending;
        std::map<std::string, std::size_t> first_seen;
        std::vector<std::pair<std::size_t, std::size_t>> duplicates;
        for (std::size_t i = begin; i < end; ++i) {
            auto& out = outcomes[i];
            out.request_id = request_key(requests[i]);
            if (cache_) {
                if (auto hit = cache_->lookup(out.request_id)) {
                    out.candidates = std::move(*hit);
                    out.from_cache = true;
                    ++cache_hits_;
                    continue;
                }
            }
            if (auto [it, fresh] = first_seen.emplace(out.request_id, i); !fresh) {
                duplicates.emplace_back(i, it->second);
                continue;
            }
            pending.push_back(i);
        }

        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t k = next++; k < pending.size(); k = next++) {
                const std::size_t i = pending[k];
                auto& out = outcomes[i];
                try {
                    validate(requests[i]);
                    out.candidates = backend_.generate(requests[i]);
                    if (out.candidates.size() != requests[i].num_samples) {
                        throw ProtocolError("expected " + std::to_string(requests[i].num_samples) +
                                            " candidates, got " + std::to_string(out.candidates.size()));
                    }
                } catch (const Error& e) {
                    out.candidates.clear();
                    out.error_code = e.code();
                    out.error_message = e.what();
                } catch (const std::exception& e) {
                    out.candidates.clear();
                    out.error_code = "BackendError";
                    out.error_message = e.what();
                }
            }
        };
        const std::size_t threads = std::min(parallelism_, pending.size());
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::jthread> pool;
            pool.reserve(threads);
            for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        }
        backend_calls_ += pending.size();

        for (std::size_t i : pending) {
            if (cache_ && outcomes[i].ok()) cache_->append(requests[i], outcomes[i].candidates);
        }
        for (auto [dup, original] : duplicates) {
            outcomes[dup] = outcomes[original];
            outcomes[dup].from_cache = false;
        }
    }
    return outcomes;
}

} // namespace recreason::genbackend
