#include "insertion/persist.hpp"

#include <openssl/evp.h>

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#ifndef INSERTION_VERSION
#define INSERTION_VERSION "0.0.0"
#endif

namespace insertion {

std::string code_version() { return std::string("insertion ") + INSERTION_VERSION; }

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

namespace {

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_bytes(path)); }

std::string canonical_json(const nlohmann::json& j) {
  // nlohmann objects are ordered maps, so dump() already sorts keys.
  return j.dump();
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

nlohmann::json read_json_file(const fs::path& path) {
  if (!fs::exists(path)) throw Error("missing file " + path.string());
  try {
    return nlohmann::json::parse(read_bytes(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptionError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const RunManifest& m) {
  j = nlohmann::json{{"format", "insertion-run"},
                     {"version", m.version},
                     {"spec", m.spec},
                     {"seed", m.seed},
                     {"code_version", m.code_version},
                     {"files", m.files},
                     {"created_at", m.created_at}};
}

void from_json(const nlohmann::json& j, RunManifest& m) {
  if (j.value("format", "") != "insertion-run") throw CorruptionError("not a run manifest");
  m.version = j.at("version").get<int>();
  if (m.version != 1) throw CorruptionError("unsupported manifest version");
  m.spec = j.at("spec");
  m.seed = j.at("seed").get<std::uint64_t>();
  m.code_version = j.at("code_version").get<std::string>();
  m.files = j.at("files").get<std::map<std::string, std::string>>();
  m.created_at = j.at("created_at").get<std::string>();
}

void save_agent(const Agent& agent, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json meta{{"format", "insertion-agent"},
                      {"version", 1},
                      {"algo", std::string(to_string(agent.algo()))},
                      {"config", agent.config()},
                      {"scalars", agent.scalar_state()},
                      {"networks", nlohmann::json::array()}};
  for (const auto& [name, params] : agent.networks()) {
    save_checkpoint(dir / (name + ".ckpt"), *params, agent.steps());
    meta["networks"].push_back(name);
  }
  write_json_file(dir / "agent.json", meta);
}

std::unique_ptr<Agent> load_agent(const fs::path& dir) {
  const nlohmann::json meta = read_json_file(dir / "agent.json");
  if (meta.value("format", "") != "insertion-agent" || meta.value("version", 0) != 1) {
    throw CorruptionError("unsupported agent description in " + dir.string());
  }
  const Algo algo = algo_from_string(meta.at("algo").get<std::string>());
  const AgentConfig config = meta.at("config").get<AgentConfig>();
  Rng rng(0);
  auto agent = make_agent(algo, config, rng);
  for (const auto& name : meta.at("networks")) {
    const auto n = name.get<std::string>();
    const fs::path file = dir / (n + ".ckpt");
    if (!fs::exists(file)) throw Error("missing checkpoint " + file.string());
    agent->load_network(n, load_checkpoint(file));
  }
  agent->load_scalar_state(meta.at("scalars"));
  return agent;
}

RunManifest save_run(const fs::path& root, const nlohmann::json& spec, std::uint64_t seed,
                     const Agent* agent) {
  const RunPaths paths{root};
  fs::create_directories(root);
  write_json_file(paths.config(), spec);
  if (agent != nullptr) save_agent(*agent, paths.checkpoints());

  RunManifest m;
  m.spec = spec;
  m.seed = seed;
  m.code_version = code_version();
  m.created_at = utc_now();
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), root);
    if (rel == "manifest.json") continue;
    m.files[rel.generic_string()] = sha256_file(entry.path());
  }
  write_json_file(paths.manifest(), m);
  return m;
}

LoadedRun load_run(const fs::path& root, const nlohmann::json* expected_spec) {
  const RunPaths paths{root};
  LoadedRun out;
  out.manifest = read_json_file(paths.manifest()).get<RunManifest>();
  for (const auto& [rel, hash] : out.manifest.files) {
    const fs::path file = root / rel;
    if (!fs::exists(file)) throw Error("run file listed in manifest is missing: " + file.string());
    if (sha256_file(file) != hash) throw CorruptionError("hash mismatch for " + file.string());
  }
  if (fs::exists(paths.config()) &&
      canonical_json(read_json_file(paths.config())) != canonical_json(out.manifest.spec)) {
    out.warnings.push_back("config.json differs from the manifest snapshot");
  }
  if (expected_spec != nullptr && canonical_json(*expected_spec) != canonical_json(out.manifest.spec)) {
    out.warnings.push_back("config mismatch: run was written with a different configuration");
  }
  if (fs::exists(paths.checkpoints() / "agent.json")) out.agent = load_agent(paths.checkpoints());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void append_number(std::string& s, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  s.append(buf, res.ptr);
}

void append_optional(std::string& s, const std::optional<double>& v) {
  if (v) append_number(s, *v);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const fs::path& path) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("malformed number '" + s + "' in " + path.string());
  }
  return v;
}

std::optional<double> parse_optional(const std::string& s, const fs::path& path) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, path);
}

}  // namespace

std::string format_metrics_row(const MetricsRow& row) {
  std::string s = std::to_string(row.step) + ',' + std::to_string(row.episode) + ',';
  append_number(s, row.ret);
  s += ',';
  append_number(s, row.final_distance_m);
  s += ',';
  append_optional(s, row.critic_loss);
  s += ',';
  append_optional(s, row.actor_loss);
  s += ',';
  append_optional(s, row.temperature);
  s += '\n';
  return s;
}

MetricsWriter::MetricsWriter(const fs::path& path) : path_(path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open " + path.string() + ": " + std::strerror(errno));
  if (fs::file_size(path) == 0) {
    write_all(std::string(kMetricsHeader) + '\n');
  } else {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    if (first != kMetricsHeader) {
      ::close(fd_);
      fd_ = -1;
      throw Error("schema mismatch: " + path.string() + " has header '" + first + "'");
    }
  }
}

MetricsWriter::~MetricsWriter() {
  if (fd_ >= 0) ::close(fd_);
}

void MetricsWriter::append(const MetricsRow& row) { write_all(format_metrics_row(row)); }

void MetricsWriter::write_all(const std::string& line) {
  const ssize_t n = ::write(fd_, line.data(), line.size());
  if (n != static_cast<ssize_t>(line.size())) {
    throw Error("short write to " + path_.string());
  }
}

std::vector<MetricsRow> read_metrics(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<MetricsRow> rows;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // interrupted final line
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (header) {
      if (line != kMetricsHeader) throw Error("unexpected metrics header in " + path.string());
      header = false;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != 7) throw Error("malformed metrics row in " + path.string() + ": " + line);
    MetricsRow r;
    r.step = static_cast<long>(parse_double(cells[0], path));
    r.episode = static_cast<int>(parse_double(cells[1], path));
    r.ret = parse_double(cells[2], path);
    r.final_distance_m = parse_double(cells[3], path);
    r.critic_loss = parse_optional(cells[4], path);
    r.actor_loss = parse_optional(cells[5], path);
    r.temperature = parse_optional(cells[6], path);
    rows.push_back(r);
  }
  if (header) throw Error("metrics file has no header: " + path.string());
  return rows;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json vec_to_json(const VecX& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VecX vec_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json transition_to_json(const Transition& t) {
  return {{"obs", vec_to_json(t.obs)},
          {"action", {t.action[0], t.action[1], t.action[2]}},
          {"reward", t.reward},
          {"next_obs", vec_to_json(t.next_obs)},
          {"done", t.done}};
}

Transition transition_from_json(const nlohmann::json& j) {
  Transition t;
  t.obs = vec_from(j.at("obs"));
  const VecX a = vec_from(j.at("action"));
  if (a.size() != 3) throw CorruptionError("demo action must have 3 components");
  t.action = a;
  t.reward = j.at("reward").get<double>();
  t.next_obs = vec_from(j.at("next_obs"));
  t.done = j.at("done").get<bool>();
  return t;
}

void write_demos(const fs::path& path, const std::vector<Demonstration>& demos) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  nlohmann::json header{{"format", "insertion-demos"}, {"version", 1}, {"demos", nlohmann::json::array()}};
  for (const auto& d : demos) {
    header["demos"].push_back({{"transitions", d.transitions.size()},
                               {"attempts", d.attempts},
                               {"steps_to_insert", d.steps_to_insert}});
  }
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < demos.size(); ++i) {
    for (const auto& t : demos[i].transitions) {
      nlohmann::json line = transition_to_json(t);
      line["demo"] = i;
      out << line.dump() << '\n';
    }
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<Demonstration> read_demos(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CorruptionError("empty demo file " + path.string());
  const auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "insertion-demos" ||
      header.value("version", 0) != 1) {
    throw CorruptionError("not a demo file: " + path.string());
  }
  std::vector<Demonstration> demos;
  for (const auto& d : header.at("demos")) {
    Demonstration demo;
    demo.attempts = d.at("attempts").get<int>();
    demo.steps_to_insert = d.at("steps_to_insert").get<int>();
    demos.push_back(std::move(demo));
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw CorruptionError("malformed demo line in " + path.string());
    const auto idx = j.at("demo").get<std::size_t>();
    if (idx >= demos.size()) throw CorruptionError("demo index out of range in " + path.string());
    demos[idx].transitions.push_back(transition_from_json(j));
  }
  std::size_t k = 0;
  for (const auto& d : header.at("demos")) {
    if (demos[k++].transitions.size() != d.at("transitions").get<std::size_t>()) {
      throw CorruptionError("demo file truncated: " + path.string());
    }
  }
  return demos;
}

}  // namespace insertion
