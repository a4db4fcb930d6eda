#pragma once

#include "insertion/agent.hpp"
#include "insertion/control.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace insertion {

namespace fs = std::filesystem;

/// Library version recorded in every manifest.
std::string code_version();

/// Lower-case hex SHA-256 of a byte string / of a file's contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

/// Serialisation with sorted keys and no whitespace; equal documents give
/// equal strings.
std::string canonical_json(const nlohmann::json& j);

/// Fixed layout of a run directory.
struct RunPaths {
  fs::path root;

  fs::path config() const { return root / "config.json"; }
  fs::path manifest() const { return root / "manifest.json"; }
  fs::path metrics() const { return root / "metrics.csv"; }
  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path demos() const { return root / "demos.jsonl"; }
  fs::path curves() const { return root / "curves"; }
};

struct RunManifest {
  int version = 1;
  nlohmann::json spec;  // snapshot of the run configuration
  std::uint64_t seed = 0;
  std::string code_version;
  std::map<std::string, std::string> files;  // path relative to the run root -> sha256
  std::string created_at;                    // UTC, ISO 8601
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

/// Writes every network as checkpoints/<name>.ckpt plus checkpoints/agent.json
/// (algorithm, hyperparameters, scalar state).
void save_agent(const Agent& agent, const fs::path& dir);
std::unique_ptr<Agent> load_agent(const fs::path& dir);

/// Writes config.json and (if given) the agent checkpoints, then hashes every
/// regular file under the run root into manifest.json.
RunManifest save_run(const fs::path& root, const nlohmann::json& spec, std::uint64_t seed,
                     const Agent* agent = nullptr);

struct LoadedRun {
  RunManifest manifest;
  std::unique_ptr<Agent> agent;  // null when the run has no checkpoints
  std::vector<std::string> warnings;
};

/// Verifies every inventoried file (missing -> Error, hash mismatch ->
/// CorruptionError). A config that differs from `expected_spec`, or a
/// config.json that differs from the manifest snapshot, is reported as a
/// warning rather than an error.
LoadedRun load_run(const fs::path& root, const nlohmann::json* expected_spec = nullptr);

/// One row of metrics.csv. Absent losses are written as empty fields.
struct MetricsRow {
  long step = 0;
  int episode = 0;
  double ret = 0.0;
  double final_distance_m = 0.0;
  std::optional<double> critic_loss;
  std::optional<double> actor_loss;
  std::optional<double> temperature;

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr const char* kMetricsHeader =
    "step,episode,return,final_distance_m,critic_loss,actor_loss,temperature";

/// Appends rows to a metrics CSV. Each row is emitted by a single write(2) on
/// an O_APPEND descriptor, so a reader never sees a partial line from a
/// completed append. The header is written only if the file is empty; an
/// existing file with a different header is rejected.
class MetricsWriter {
 public:
  explicit MetricsWriter(const fs::path& path);
  ~MetricsWriter();
  MetricsWriter(const MetricsWriter&) = delete;
  MetricsWriter& operator=(const MetricsWriter&) = delete;

  void append(const MetricsRow& row);
  const fs::path& path() const { return path_; }

 private:
  void write_all(const std::string& line);

  fs::path path_;
  int fd_ = -1;
};

std::string format_metrics_row(const MetricsRow& row);
/// Parses a metrics CSV; throws Error on a bad header or malformed row. A
/// trailing line without a newline (an interrupted write) is ignored.
std::vector<MetricsRow> read_metrics(const fs::path& path);

/// demos.jsonl: a header line, then one transition per line.
void write_demos(const fs::path& path, const std::vector<Demonstration>& demos);
std::vector<Demonstration> read_demos(const fs::path& path);

nlohmann::json transition_to_json(const Transition& t);
Transition transition_from_json(const nlohmann::json& j);

void write_json_file(const fs::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const fs::path& path);

}  // namespace insertion
