#ifndef DICHOGEO_PIPELINE_HPP
#define DICHOGEO_PIPELINE_HPP

#include "dichogeo/config.hpp"

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dichogeo {

/// Seed streams split from the top-level seed, one per consumer.
namespace seed_stream {
inline constexpr std::uint64_t simulate = 0;
inline constexpr std::uint64_t importance = 1;
inline constexpr std::uint64_t mcml = 2;
inline constexpr std::uint64_t predict = 3;
inline constexpr std::uint64_t info_curve = 4;
}  // namespace seed_stream

struct RunArtifacts {
  std::filesystem::path output_dir;
  std::vector<std::string> outputs;  // primary files, relative to output_dir
};

/// Runs one task and writes its outputs, manifest.json and run.log into
/// config.output_dir. Progress lines also go to `progress` when given.
/// Errors propagate.
RunArtifacts run_task(Task task, const RunConfig& config, std::ostream* progress = nullptr);

/// Process exit status for an error: 2 config, 3 input data, 4 numerical,
/// 1 anything else.
int exit_status(const std::exception& e);

/// Writes error.json (task, error type, message, row and column when known)
/// into `dir`, creating it if needed. Never throws.
void write_error_file(const std::filesystem::path& dir, const std::string& task, const std::exception& e);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace dichogeo

#endif  // DICHOGEO_PIPELINE_HPP
