#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

namespace flowsr::cli {

// Run directories are append-only: a fresh timestamped directory per
// invocation (or an explicit --run-dir that must not already hold artifacts),
// the effective config echoed into it, and an exit summary with content
// digests of every artifact. Logs carrying wall times are listed but marked
// volatile instead of digested, so reruns with the same seed produce
// identical digest maps.

std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& name);

// Refuses to reuse a non-empty directory.
void claim_run_dir(const std::filesystem::path& dir);

// FNV-1a 64-bit over the file bytes, hex-encoded. Provenance fingerprint,
// not a cryptographic hash.
std::string fnv1a_digest(const std::filesystem::path& file);

bool is_volatile_artifact(const std::filesystem::path& rel);

// Digest map over every regular file under the run dir.
std::map<std::string, std::string> digest_artifacts(const std::filesystem::path& run_dir);

void write_exit_summary(const std::filesystem::path& run_dir, const std::string& subcommand,
                        bool ok, const std::string& error_message = "");

}  // namespace flowsr::cli
