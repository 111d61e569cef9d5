// Command-line driver: one subcommand per pipeline stage.
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure, 4 corrupt run.

#include <cstdio>
#include <functional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "recreason/pipeline.hpp"
#include "recreason/runstore.hpp"

namespace rr = recreason;
namespace pl = recreason::pipeline;

namespace {

enum Exit { kOk = 0, kConfigExit = 2, kStageExit = 3, kCorruptExit = 4 };

struct Options {
    std::string config;
    std::string run_id;
    std::string runs;
    bool resume = false;
    int verbose = 0;
    bool quiet = false;
};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out;
}

int fail(const std::string& code, const std::string& stage, const std::string& message, int exit_code) {
    std::fprintf(stderr, "error code=%s stage=%s message=\"%s\"\n", code.c_str(), stage.c_str(),
                 escape(message).c_str());
    return exit_code;
}

using StageFn = std::function<void(pl::Pipeline&)>;

int execute(const Options& opt, const std::string& stage, const StageFn& fn) {
    try {
        const auto config = pl::load_config(opt.config);
        const auto snapshot = pl::to_json(config);
        const auto run_id = opt.run_id.empty() ? rr::runstore::default_run_id(snapshot) : opt.run_id;
        const std::filesystem::path root = opt.runs.empty() ? config.paths.runs : opt.runs;

        auto run = [&] {
            if (opt.resume) {
                auto r = rr::runstore::Run::resume(root, run_id);
                if (r.config() != snapshot) {
                    throw rr::ConfigError("config differs from the snapshot frozen in run " + run_id);
                }
                return r;
            }
            return rr::runstore::Run::begin(root, snapshot, run_id);
        }();
        spdlog::info("run {} at {}", run_id, run.dir().string());

        pl::Pipeline pipeline(run, config);
        fn(pipeline);
        std::printf("%s\n", run.dir().string().c_str());
        return kOk;
    } catch (const rr::runstore::CorruptRun& e) {
        return fail(e.code(), e.stage(), e.what(), kCorruptExit);
    } catch (const rr::runstore::MissingStage& e) {
        return fail(e.code(), stage, e.what(), kStageExit);
    } catch (const rr::ConfigError& e) {
        return fail(e.code(), stage, e.what(), kConfigExit);
    } catch (const rr::runstore::RunExists& e) {
        return fail(e.code(), stage, std::string(e.what()) + "; pass --resume to continue it", kConfigExit);
    } catch (const rr::runstore::RunNotFound& e) {
        return fail(e.code(), stage, e.what(), kConfigExit);
    } catch (const rr::Error& e) {
        return fail(e.code(), stage, e.what(), kStageExit);
    } catch (const std::exception& e) {
        return fail("InternalError", stage, e.what(), kStageExit);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rating prediction and reasoning-quality pipeline"};
    app.require_subcommand(1);
    Options opt;

    struct Command {
        const char* name;
        const char* stage;
        const char* help;
        StageFn fn;
    };
    const std::vector<Command> commands = {
        {"ingest", pl::kIngest, "Parse review and metadata files into examples", [](pl::Pipeline& p) { p.ingest(); }},
        {"split", pl::kSplit, "Build the label-balanced, user-disjoint train/test split",
         [](pl::Pipeline& p) { p.split(); }},
        {"predict", pl::kPredict, "Predict ratings for every configured mode and compute task metrics",
         [](pl::Pipeline& p) { p.predict(); }},
        {"gen-refs", pl::kRefsGenerate, "Generate and self-verify post hoc reference explanations",
         [](pl::Pipeline& p) {
             p.generate_refs();
             p.verify_refs();
         }},
        {"score-reasoning", pl::kScoreReasoning, "Score predicted reasoning against the reference pools",
         [](pl::Pipeline& p) { p.score_reasoning(); }},
        {"export-ft", pl::kExportFt, "Collect teacher reasoning samples and export filtered fine-tuning records",
         [](pl::Pipeline& p) { p.export_ft(); }},
        {"align", pl::kAlign, "Relate human annotations to reasoning scores", [](pl::Pipeline& p) { p.align(); }},
        {"report", pl::kReport, "Assemble the summary table", [](pl::Pipeline& p) { p.report(); }},
        {"run-all", "run_all", "Run every stage in order", [](pl::Pipeline& p) { p.run_all(); }},
    };

    int exit_code = kOk;
    for (const auto& cmd : commands) {
        auto* sub = app.add_subcommand(cmd.name, cmd.help);
        sub->add_option("--config", opt.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--run-id", opt.run_id, "Run directory name (default: hash of the config)");
        sub->add_option("--runs", opt.runs, "Root directory for runs (overrides paths.runs)");
        sub->add_flag("--resume", opt.resume, "Continue an existing run");
        sub->add_flag("-v,--verbose", opt.verbose, "More logging");
        sub->add_flag("-q,--quiet", opt.quiet, "Errors only");
        sub->callback([&, cmd] {
            auto logger = spdlog::stderr_color_mt("recreason");
            spdlog::set_default_logger(logger);
            spdlog::set_pattern("[%l] %v");
            spdlog::set_level(opt.quiet ? spdlog::level::err
                                        : (opt.verbose > 0 ? spdlog::level::debug : spdlog::level::info));
            exit_code = execute(opt, cmd.stage, cmd.fn);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("UsageError", "cli", e.what(), kConfigExit);
    }
    return exit_code;
}
