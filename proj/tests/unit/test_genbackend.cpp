#include <doctest.h>

#include <atomic>
#include <numeric>
#include <thread>

#include <httplib.h>

#include "recreason/genbackend.hpp"
#include "recreason/promptkit.hpp"
#include "synth.hpp"

using namespace recreason;
using namespace recreason::genbackend;

namespace {

GenerationRequest request(std::string prompt, double t = 0.0, std::size_t n = 1, std::optional<std::uint64_t> seed = {}) {
    GenerationRequest r;
    r.prompt = std::move(prompt);
    r.temperature = t;
    r.num_samples = n;
    r.seed = seed;
    return r;
}

// Local HTTP server on an ephemeral port, stopped on destruction.
class TestServer {
public:
    explicit TestServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/generate", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~TestServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/generate"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

BackendConfig fast_config(std::string endpoint) {
    BackendConfig c;
    c.endpoint = std::move(endpoint);
    c.timeout = std::chrono::milliseconds(2000);
    c.retry_backoff = std::chrono::milliseconds(1);
    c.max_retries = 2;
    return c;
}

} // namespace

TEST_SUITE("genbackend") {

TEST_CASE("mock returns one candidate per requested sample") {
    MockBackend mock;
    const auto ex = testing::synthetic_examples(1)[0];
    const auto prompt = promptkit::render_task_prompt(ex, {}).text;
    CHECK(mock.generate(request(prompt, 0.7, 8, 1)).size() == 8);
}

TEST_CASE("mock is deterministic at temperature 0 and seed-sensitive when sampling") {
    MockBackend mock;
    const auto ex = testing::synthetic_examples(1)[0];
    const auto prompt = promptkit::render_task_prompt(ex, {}).text;
    CHECK(mock.generate(request(prompt)) == mock.generate(request(prompt)));
    CHECK(mock.generate(request(prompt, 0.0, 1, 1)) == mock.generate(request(prompt, 0.0, 1, 2)));
    CHECK(mock.generate(request(prompt, 0.9, 4, 1)) == mock.generate(request(prompt, 0.9, 4, 1)));
    CHECK(mock.generate(request(prompt, 0.9, 4, 1)) != mock.generate(request(prompt, 0.9, 4, 2)));
}

TEST_CASE("mock output parses in the format the prompt demands") {
    MockBackend mock;
    const auto ex = testing::synthetic_examples(1)[0];
    const auto cot = mock.generate(request(promptkit::render_task_prompt(ex, {}).text)).front();
    CHECK(cot.text.find(promptkit::kReasonMarker) != std::string::npos);
    REQUIRE(cot.class_logits.has_value());
    const auto plain = mock.generate(request(promptkit::render_task_prompt(ex, {.reasoning = false}).text)).front();
    CHECK(plain.text.find(promptkit::kReasonMarker) == std::string::npos);
    CHECK(plain.text.find(promptkit::kRatingMarker) != std::string::npos);
}

TEST_CASE("scripted prompts cycle their responses") {
    MockBackend mock;
    mock.script("p", {{"a", std::nullopt}, {"b", std::nullopt}});
    const auto out = mock.generate(request("p", 0.5, 3, 0));
    CHECK(out[0].text == "a");
    CHECK(out[1].text == "b");
    CHECK(out[2].text == "a");
    CHECK_THROWS_AS(mock.script("q", {}), ConfigError);
}

TEST_CASE("class score normalisation") {
    const std::array<double, 5> zeros{};
    for (double p : normalize_class_scores(zeros)) CHECK(p == doctest::Approx(0.2));
    const std::array<double, 5> peaked{100, 0, 0, 0, 0};
    CHECK(normalize_class_scores(peaked)[0] > 0.999);
    const std::array<double, 5> mixed{-3.5, 2.0, 710.0, 0.25, -800.0};
    const auto p = normalize_class_scores(mixed);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    const std::array<double, 5> bad{0, std::nan(""), 0, 0, 0};
    CHECK_THROWS_AS(normalize_class_scores(bad), InvalidLogits);
    const std::array<double, 5> inf{0, INFINITY, 0, 0, 0};
    CHECK_THROWS_AS(normalize_class_scores(inf), InvalidLogits);
}

TEST_CASE("request validation") {
    CHECK_THROWS(validate(request("", 0.0)));
    CHECK_THROWS(validate(request("p", -1.0)));
    CHECK_THROWS(validate(request("p", 0.0, 0)));
    CHECK_NOTHROW(validate(request("p", 0.7, 3, 1)));
}

TEST_CASE("request keys include the seed") {
    CHECK(request_key(request("p", 0.7, 2, 1)) != request_key(request("p", 0.7, 2, 2)));
    CHECK(request_key(request("p", 0.7, 2, 1)) == request_key(request("p", 0.7, 2, 1)));
    CHECK(request_from_json(to_json(request("p", 0.7, 2, 9))).seed == 9u);
}

TEST_CASE("http backend round trip and bearer token") {
    std::atomic<int> hits{0};
    std::string auth;
    TestServer server([&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        auth = req.get_header_value("Authorization");
        const auto body = json::parse(req.body);
        json cands = json::array();
        for (std::size_t i = 0; i < body.at("num_samples").get<std::size_t>(); ++i) {
            cands.push_back({{"text", "### Rating ###\n4"}, {"class_logits", {0, 0, 0, 1, 0}}});
        }
        res.set_content(json{{"candidates", cands}}.dump(), "application/json");
    });
    ::setenv("RECREASON_TEST_TOKEN", "sekrit", 1);
    auto cfg = fast_config(server.endpoint());
    cfg.auth_env = "RECREASON_TEST_TOKEN";
    HttpBackend backend(cfg);
    const auto out = backend.generate(request("hello", 0.5, 3, 1));
    CHECK(out.size() == 3);
    CHECK(out[0].class_logits.has_value());
    CHECK(hits == 1);
    CHECK(auth == "Bearer sekrit");
}

TEST_CASE("http backend retries server errors then gives up") {
    std::atomic<int> hits{0};
    TestServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
    });
    HttpBackend backend(fast_config(server.endpoint()));
    try {
        backend.generate(request("x"));
        FAIL("expected BackendUnavailable");
    } catch (const BackendUnavailable& e) {
        CHECK(e.attempts() == 3);
    }
    CHECK(hits == 3);
}

TEST_CASE("unreachable endpoint fails after max_retries + 1 attempts") {
    HttpBackend backend(fast_config("http://127.0.0.1:1/generate"));
    try {
        backend.generate(request("x"));
        FAIL("expected BackendUnavailable");
    } catch (const BackendUnavailable& e) {
        CHECK(e.attempts() == 3);
        CHECK(e.code() == "BackendUnavailable");
    }
}

TEST_CASE("schema mismatch is a protocol error") {
    TestServer server([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices": []})", "application/json");
    });
    HttpBackend backend(fast_config(server.endpoint()));
    CHECK_THROWS_AS(backend.generate(request("x")), ProtocolError);
}

TEST_CASE("client records failures per request without aborting the batch") {
    TestServer server([](const httplib::Request& req, httplib::Response& res) {
        if (json::parse(req.body).at("prompt") == "bad") {
            res.status = 400;
            return;
        }
        res.set_content(R"({"candidates": [{"text": "ok"}]})", "application/json");
    });
    HttpBackend backend(fast_config(server.endpoint()));
    GenerationClient client(backend, nullptr, 2, 8);
    const auto out = client.run({request("a"), request("bad"), request("c")});
    CHECK(out[0].ok());
    CHECK_FALSE(out[1].ok());
    CHECK(out[1].error_code == "ProtocolError");
    CHECK(out[1].request_id == request_key(request("bad")));
    CHECK(out[2].candidates.front().text == "ok");
}

TEST_CASE("cache hits skip the backend and the cache file is order-stable") {
    testing::TempDir dir;
    MockBackend mock;
    std::vector<GenerationRequest> reqs;
    for (int i = 0; i < 20; ++i) reqs.push_back(request("prompt " + std::to_string(i), 0.7, 2, 3));
    reqs.push_back(reqs[4]);  // in-batch duplicate
    std::string first_file;
    {
        ResponseCache cache(dir.path() / "a.jsonl");
        GenerationClient client(mock, &cache, 4, 6);
        const auto out = client.run(reqs);
        CHECK(client.backend_calls() == 20);
        CHECK(out[20].candidates == out[4].candidates);
        first_file = read_file(dir.path() / "a.jsonl");
    }
    {
        ResponseCache cache(dir.path() / "a.jsonl");
        CHECK(cache.size() == 20);
        GenerationClient client(mock, &cache, 4, 6);
        const auto out = client.run(reqs);
        CHECK(client.backend_calls() == 0);
        CHECK(out[0].from_cache);
    }
    {
        ResponseCache cache(dir.path() / "b.jsonl");
        GenerationClient client(mock, &cache, 1, 6);
        client.run(reqs);
    }
    CHECK(read_file(dir.path() / "b.jsonl") == first_file);
}

TEST_CASE("replay backend reproduces recorded responses and rejects unknown requests") {
    testing::TempDir dir;
    MockBackend mock;
    std::vector<GenerationRequest> reqs = {request("one", 0.7, 2, 1), request("two")};
    std::vector<Outcome> recorded;
    {
        ResponseCache cache(dir.path() / "log.jsonl");
        GenerationClient client(mock, &cache, 1, 4);
        recorded = client.run(reqs);
    }
    ReplayBackend replay(dir.path() / "log.jsonl");
    GenerationClient client(replay, nullptr, 1, 4);
    const auto again = client.run(reqs);
    CHECK(again[0].candidates == recorded[0].candidates);
    CHECK(again[1].candidates == recorded[1].candidates);
    const auto miss = client.run_one(request("three"));
    CHECK_FALSE(miss.ok());
}

}
