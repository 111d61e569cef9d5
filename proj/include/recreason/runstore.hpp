#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "recreason/error.hpp"
#include "recreason/jsonl.hpp"

namespace recreason::runstore {

namespace fs = std::filesystem;

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kLockName = "run.lock";
inline constexpr const char* kCacheName = "cache.jsonl";

struct StageRecord {
    bool complete = false;
    std::map<std::string, std::string> files;  // file name -> sha256
    std::string inputs;                        // fingerprint of upstream files

    bool operator==(const StageRecord&) const = default;
};

struct RunManifest {
    std::string run_id;
    json config;
    std::map<std::string, StageRecord> stages;

    bool operator==(const RunManifest&) const = default;
};

json to_json(const RunManifest& m);
RunManifest manifest_from_json(const json& j);

class RunExists : public Error {
public:
    explicit RunExists(const std::string& run_id) : Error("RunExists", "run " + run_id + " already exists") {}
};

class RunNotFound : public Error {
public:
    explicit RunNotFound(const std::string& run_id) : Error("RunNotFound", "run " + run_id + " does not exist") {}
};

class CorruptRun : public Error {
public:
    CorruptRun(std::string stage, const std::string& message) : Error("CorruptRun", message), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

class RunLocked : public Error {
public:
    explicit RunLocked(const std::string& dir) : Error("RunLocked", "another process holds the lock on " + dir) {}
};

class MissingStage : public Error {
public:
    MissingStage(const std::string& stage, const std::string& needed_by)
        : Error("MissingStage", "stage '" + needed_by + "' requires stage '" + stage + "' to be complete"),
          stage_(stage) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Deterministic id derived from the config: first 12 hex digits of its hash.
std::string default_run_id(const json& config);

/// Exclusive advisory lock (flock) on <dir>/run.lock; released on destruction.
class RunLock {
public:
    explicit RunLock(const fs::path& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    int fd_ = -1;
};

/// One run directory: <root>/<run_id>/ holding manifest.json, cache.jsonl
/// and the stage files. All stage files are written atomically.
class Run {
public:
    /// Creates the directory and a manifest with no completed stages.
    static Run begin(const fs::path& root, const json& config, const std::string& run_id);
    /// Loads the manifest and re-hashes every file of every completed stage.
    static Run resume(const fs::path& root, const std::string& run_id);

    const RunManifest& manifest() const noexcept { return manifest_; }
    const json& config() const noexcept { return manifest_.config; }
    const fs::path& dir() const noexcept { return dir_; }
    fs::path path(const std::string& file) const { return dir_ / file; }

    bool complete(const std::string& stage) const;
    /// Throws MissingStage unless `stage` is complete.
    void require(const std::string& stage, const std::string& needed_by) const;

    /// Hash over the recorded file hashes of `upstream` stages plus `external`
    /// (e.g. hashes of input files living outside the run).
    std::string fingerprint(const std::vector<std::string>& upstream, const json& external = nullptr) const;
    /// True when the stage is complete and was built from the current inputs.
    bool up_to_date(const std::string& stage, const std::vector<std::string>& upstream,
                    const json& external = nullptr) const;

    /// Clears the completion flag before a stage (re)runs.
    void start(const std::string& stage);
    void write(const std::string& file, const std::string& content) const;
    std::string read(const std::string& file) const;
    /// Records hashes of `files` and marks the stage complete.
    void finish(const std::string& stage, const std::vector<std::string>& files,
                const std::vector<std::string>& upstream, const json& external = nullptr);

    /// Re-hashes completed stages; throws CorruptRun naming the first bad stage.
    void verify() const;

private:
    Run(fs::path dir, RunManifest manifest, std::unique_ptr<RunLock> lock);
    void save() const;

    fs::path dir_;
    RunManifest manifest_;
    std::unique_ptr<RunLock> lock_;
};

} // namespace recreason::runstore
