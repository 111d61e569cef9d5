#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "recreason/jsonl.hpp"
#include "synth.hpp"

using namespace recreason;

namespace {

struct Result {
    int exit_code = -1;
    std::string out;
    std::string err;
};

class CliFixture {
public:
    CliFixture() {
        testing::write_corpus(dir_.path(), 50);
        const json config = {{"paths",
                              {{"reviews", (dir_.path() / "reviews.jsonl").string()},
                               {"metadata", (dir_.path() / "meta.jsonl").string()},
                               {"runs", (dir_.path() / "runs").string()}}},
                             {"split", {{"per_label_train", 2}, {"per_label_test", 2}, {"seed", 1}}},
                             {"predict", {{"modes", {"cot"}}}}};
        write_file_atomic(config_path(), config.dump(2));
    }

    std::filesystem::path config_path() const { return dir_.path() / "config.json"; }
    const std::filesystem::path& dir() const { return dir_.path(); }

    Result run(const std::string& args) const {
        const auto out = dir_.path() / "stdout.txt";
        const auto err = dir_.path() / "stderr.txt";
        const std::string cmd = std::string(RECREASON_CLI_PATH) + " " + args + " > '" + out.string() + "' 2> '" +
                                err.string() + "'";
        const int status = std::system(cmd.c_str());
        Result r;
        r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = read_file(out);
        r.err = read_file(err);
        return r;
    }

    std::string common() const { return "--config '" + config_path().string() + "' --run-id r -q"; }

private:
    testing::TempDir dir_;
};

} // namespace

TEST_SUITE("cli") {

TEST_CASE("stages run in order and print the run directory") {
    CliFixture f;
    auto r = f.run("ingest " + f.common());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("runs/r") != std::string::npos);
    r = f.run("split " + f.common() + " --resume");
    REQUIRE(r.exit_code == 0);
    CHECK(read_jsonl(f.dir() / "runs" / "r" / "test.jsonl").size() == 10);
    r = f.run("predict " + f.common() + " --resume");
    REQUIRE(r.exit_code == 0);
    CHECK(read_jsonl(f.dir() / "runs" / "r" / "predictions.jsonl").size() == 10);
}

TEST_CASE("a missing upstream stage exits 3 and names the stage") {
    CliFixture f;
    REQUIRE(f.run("ingest " + f.common()).exit_code == 0);
    const auto r = f.run("score-reasoning " + f.common() + " --resume");
    CHECK(r.exit_code == 3);
    CHECK(r.err.find("error code=MissingStage stage=score_reasoning") != std::string::npos);
    CHECK(r.err.find("'predict'") != std::string::npos);
}

TEST_CASE("an existing run without --resume exits 2") {
    CliFixture f;
    REQUIRE(f.run("ingest " + f.common()).exit_code == 0);
    const auto r = f.run("ingest " + f.common());
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("code=RunExists") != std::string::npos);
}

TEST_CASE("a bad config exits 2") {
    CliFixture f;
    write_file_atomic(f.config_path(), R"({"paths": {"reviews": "x"}, "bogus": 1})");
    const auto r = f.run("ingest " + f.common());
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("code=ConfigError") != std::string::npos);
    CHECK(f.run("ingest").exit_code == 2);  // missing --config
}

TEST_CASE("a tampered artifact exits 4") {
    CliFixture f;
    REQUIRE(f.run("ingest " + f.common()).exit_code == 0);
    write_file_atomic(f.dir() / "runs" / "r" / "examples.jsonl", "{}\n");
    const auto r = f.run("split " + f.common() + " --resume");
    CHECK(r.exit_code == 4);
    CHECK(r.err.find("code=CorruptRun stage=ingest") != std::string::npos);
}

TEST_CASE("the default run id is derived from the config") {
    CliFixture f;
    const auto a = f.run("ingest --config '" + f.config_path().string() + "' -q");
    REQUIRE(a.exit_code == 0);
    const auto b = f.run("ingest --config '" + f.config_path().string() + "' -q --resume");
    CHECK(b.exit_code == 0);
    CHECK(a.out == b.out);
}

}
