#include "recreason/runstore.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "recreason/hashing.hpp"

namespace recreason::runstore {

json to_json(const RunManifest& m) {
    json stages = json::object();
    for (const auto& [name, rec] : m.stages) {
        stages[name] = {{"complete", rec.complete}, {"files", rec.files}, {"inputs", rec.inputs}};
    }
    return {{"run_id", m.run_id}, {"config", m.config}, {"stages", stages}};
}

RunManifest manifest_from_json(const json& j) {
    try {
        RunManifest m;
        m.run_id = j.at("run_id").get<std::string>();
        m.config = j.at("config");
        for (const auto& [name, rec] : j.at("stages").items()) {
            StageRecord s;
            s.complete = rec.at("complete").get<bool>();
            s.files = rec.at("files").get<std::map<std::string, std::string>>();
            s.inputs = rec.at("inputs").get<std::string>();
            m.stages[name] = std::move(s);
        }
        return m;
    } catch (const json::exception& e) {
        throw CorruptRun("manifest", std::string("manifest is malformed: ") + e.what());
    }
}

std::string default_run_id(const json& config) { return sha256_hex(config.dump()).substr(0, 12); }

RunLock::RunLock(const fs::path& dir) {
    const auto file = dir / kLockName;
    fd_ = ::open(file.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("IoError", "cannot open lock file " + file.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw RunLocked(dir.string());
    }
}

RunLock::~RunLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

namespace {

void check_run_id(const std::string& run_id) {
    if (run_id.empty() || run_id == "." || run_id == ".." ||
        run_id.find_first_of("/\\") != std::string::npos) {
        throw ConfigError("invalid run id '" + run_id + "'");
    }
}

} // namespace

Run::Run(fs::path dir, RunManifest manifest, std::unique_ptr<RunLock> lock)
    : dir_(std::move(dir)), manifest_(std::move(manifest)), lock_(std::move(lock)) {}

Run Run::begin(const fs::path& root, const json& config, const std::string& run_id) {
    check_run_id(run_id);
    const auto dir = root / run_id;
    if (fs::exists(dir / kManifestName)) throw RunExists(run_id);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("IoError", "cannot create run directory " + dir.string() + ": " + ec.message());
    auto lock = std::make_unique<RunLock>(dir);
    // Re-check under the lock: a concurrent begin may have won the race.
    if (fs::exists(dir / kManifestName)) throw RunExists(run_id);
    RunManifest m;
    m.run_id = run_id;
    m.config = config;
    Run run(dir, std::move(m), std::move(lock));
    run.save();
    return run;
}

Run Run::resume(const fs::path& root, const std::string& run_id) {
    check_run_id(run_id);
    const auto dir = root / run_id;
    if (!fs::exists(dir / kManifestName)) throw RunNotFound(run_id);
    auto lock = std::make_unique<RunLock>(dir);
    json j;
    try {
        j = json::parse(read_file(dir / kManifestName));
    } catch (const json::parse_error& e) {
        throw CorruptRun("manifest", std::string("manifest is not valid JSON: ") + e.what());
    }
    auto manifest = manifest_from_json(j);
    if (manifest.run_id != run_id) throw CorruptRun("manifest", "manifest run id does not match directory");
    Run run(dir, std::move(manifest), std::move(lock));
    run.verify();
    return run;
}

bool Run::complete(const std::string& stage) const {
    const auto it = manifest_.stages.find(stage);
    return it != manifest_.stages.end() && it->second.complete;
}

void Run::require(const std::string& stage, const std::string& needed_by) const {
    if (!complete(stage)) throw MissingStage(stage, needed_by);
}

std::string Run::fingerprint(const std::vector<std::string>& upstream, const json& external) const {
    json j = json::object();
    j["$external"] = external;
    for (const auto& stage : upstream) {
        const auto it = manifest_.stages.find(stage);
        j[stage] = it == manifest_.stages.end() ? json(nullptr) : json(it->second.files);
    }
    return sha256_hex(j.dump());
}

bool Run::up_to_date(const std::string& stage, const std::vector<std::string>& upstream,
                     const json& external) const {
    return complete(stage) && manifest_.stages.at(stage).inputs == fingerprint(upstream, external);
}

void Run::start(const std::string& stage) {
    manifest_.stages[stage] = StageRecord{};
    save();
}

void Run::write(const std::string& file, const std::string& content) const { write_file_atomic(dir_ / file, content); }

std::string Run::read(const std::string& file) const { return read_file(dir_ / file); }

void Run::finish(const std::string& stage, const std::vector<std::string>& files,
                 const std::vector<std::string>& upstream, const json& external) {
    StageRecord rec;
    for (const auto& f : files) rec.files[f] = sha256_file(dir_ / f);
    rec.inputs = fingerprint(upstream, external);
    rec.complete = true;
    manifest_.stages[stage] = std::move(rec);
    save();
}

void Run::verify() const {
    for (const auto& [stage, rec] : manifest_.stages) {
        if (!rec.complete) continue;
        for (const auto& [file, hash] : rec.files) {
            const auto p = dir_ / file;
            if (!fs::exists(p)) throw CorruptRun(stage, "stage '" + stage + "' file " + file + " is missing");
            if (sha256_file(p) != hash) {
                throw CorruptRun(stage, "stage '" + stage + "' file " + file + " does not match its recorded hash");
            }
        }
    }
}

void Run::save() const { write_file_atomic(dir_ / kManifestName, to_json(manifest_).dump(2) + "\n"); }

} // namespace recreason::runstore
