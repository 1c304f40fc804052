#include "flowsr/cli/run_dir.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "flowsr/core/errors.hpp"

namespace flowsr::cli {

namespace fs = std::filesystem;

std::filesystem::path make_run_dir(const fs::path& root, const std::string& name) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);

  for (int suffix = 0; suffix < 10000; ++suffix) {
    fs::path candidate = root / (name + "-" + stamp +
                                 (suffix == 0 ? std::string() : "-" + std::to_string(suffix)));
    if (!fs::exists(candidate)) {
      fs::create_directories(candidate);
      return candidate;
    }
  }
  throw InputError("make_run_dir: cannot find a free run directory under " + root.string());
}

void claim_run_dir(const fs::path& dir) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir) || !fs::is_empty(dir)) {
      throw InputError("run directory already holds artifacts (append-only): " + dir.string());
    }
  } else {
    fs::create_directories(dir);
  }
}

std::string fnv1a_digest(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw InputError("fnv1a_digest: cannot open " + file.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 15];
  while (is) {
    is.read(buf, sizeof(buf));
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

bool is_volatile_artifact(const fs::path& rel) {
  // logs carry wall-clock timing; the exit summary includes its own digests
  const std::string name = rel.filename().string();
  return name == "exit_summary.json" || name.ends_with("_loss.jsonl") ||
         name.ends_with("_log.jsonl");
}

std::map<std::string, std::string> digest_artifacts(const fs::path& run_dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), run_dir);
    out[rel.string()] = is_volatile_artifact(rel) ? "volatile" : fnv1a_digest(entry.path());
  }
  return out;
}

void write_exit_summary(const fs::path& run_dir, const std::string& subcommand, bool ok,
                        const std::string& error_message) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["ok"] = ok;
  j["run_dir"] = run_dir.string();
  if (!error_message.empty()) j["error"] = error_message;
  nlohmann::json artifacts = nlohmann::json::object();
  for (const auto& [rel, digest] : digest_artifacts(run_dir)) artifacts[rel] = digest;
  j["artifacts"] = artifacts;
  std::ofstream os(run_dir / "exit_summary.json");
  os << j.dump(2) << "\n";
}

}  // namespace flowsr::cli
