#pragma once

// Persistence: CSV tables, JSON documents, JSONL replica logs, and the
// environment binary with its JSON sidecar.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwre/env_model.hpp"
#include "rwre/kernel_dp.hpp"
#include "rwre/particle_sim.hpp"

namespace rwre {

using json = nlohmann::ordered_json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seventeen significant digits: enough for a double to round-trip.
inline std::string fmt_double(double x) {
  if (x == 0.0) return "0";  // no "-0"
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  std::ofstream f(path, mode);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  return f;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(open_out(path)) {
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }
  void row(const std::vector<double>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << fmt_double(cells[i]);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const json& j) {
  auto f = open_out(path);
  f << j.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

/// Appends one JSON object per line.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path) : out_(open_out(path)) {}
  void write(const json& j) { out_ << j.dump() << '\n'; }

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------------------

inline json to_json(const SpecParams& p) {
  json j;
  j["kind"] = to_string(p.kind);
  if (p.kind == EnvKind::uniform_interval) {
    j["bounds"] = p.atoms;
  } else {
    j["atoms"] = p.atoms;
    j["weights"] = p.weights;
  }
  j["kappa"] = p.kappa;
  return j;
}

inline void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw SpecError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw SpecError("unknown key '" + it.key() + "' in " + where);
}

inline SpecParams spec_params_from_json(const json& j) {
  reject_unknown_keys(j, {"kind", "atoms", "weights", "bounds", "kappa"}, "env block");
  SpecParams p;
  try {
    p.kind = env_kind_from_string(j.at("kind").get<std::string>());
    if (p.kind == EnvKind::uniform_interval) {
      p.atoms = j.at("bounds").get<std::vector<double>>();
    } else {
      p.atoms = j.at("atoms").get<std::vector<double>>();
      if (j.contains("weights"))
        p.weights = j.at("weights").get<std::vector<double>>();
      else
        p.weights.assign(p.atoms.size(), 1.0 / static_cast<double>(p.atoms.size()));
    }
    if (j.contains("kappa") && !j.at("kappa").is_null()) p.kappa = j.at("kappa").get<double>();
  } catch (const json::exception& e) {
    throw SpecError(std::string("env block: ") + e.what());
  }
  return p;
}

inline constexpr int kEnvFormatVersion = 1;

/// Writes omega as little-endian float64 to `stem`.bin and metadata to
/// `stem`.json.
inline void save_environment(const Environment& env, const std::filesystem::path& stem) {
  static_assert(sizeof(double) == 8);
  const auto bin = std::filesystem::path(stem.string() + ".bin");
  auto f = open_out(bin, std::ios::out | std::ios::binary);
  for (double w : env.omega()) {
    std::uint64_t bits;
    std::memcpy(&bits, &w, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    f.write(reinterpret_cast<const char*>(b), 8);
  }
  json side;
  side["format_version"] = kEnvFormatVersion;
  side["dtype"] = "float64-le";
  side["spec"] = to_json(env.spec().params());
  side["window"] = {env.window().lo, env.window().hi};
  side["seed"] = env.seed();
  side["count"] = env.omega().size();
  side["data"] = bin.filename().string();
  write_json(stem.string() + ".json", side);
}

inline Environment load_environment(const std::filesystem::path& stem) {
  const json side = read_json(stem.string() + ".json");
  if (side.value("format_version", 0) != kEnvFormatVersion) throw IoError("unsupported environment format version");
  if (side.value("dtype", "") != "float64-le") throw IoError("unsupported environment dtype");
  const EnvSpec spec(spec_params_from_json(side.at("spec")));
  const Window w{side.at("window").at(0).get<std::int64_t>(), side.at("window").at(1).get<std::int64_t>()};
  const auto count = side.at("count").get<std::size_t>();
  if (static_cast<std::int64_t>(count) != w.size()) throw IoError("environment sidecar count does not match window");
  const auto bin = stem.parent_path() / side.at("data").get<std::string>();
  std::ifstream f(bin, std::ios::binary);
  if (!f) throw IoError("cannot open " + bin.string());
  std::vector<double> omega(count);
  for (auto& w8 : omega) {
    unsigned char b[8];
    if (!f.read(reinterpret_cast<char*>(b), 8)) throw IoError("environment binary is truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&w8, &bits, 8);
  }
  return Environment(spec, w, side.at("seed").get<std::uint64_t>(), std::move(omega));
}

inline void write_field_csv(const SiteField& g, Window range, const std::filesystem::path& path) {
  CsvWriter csv(path, {"site", "value"});
  for (std::int64_t x = range.lo; x <= range.hi; ++x) csv.row({std::to_string(x), fmt_double(g.at(x))});
}

inline json matrix_json(const std::vector<double>& m, std::size_t k) {
  json rows = json::array();
  for (std::size_t i = 0; i < k; ++i) {
    json r = json::array();
    for (std::size_t j = 0; j < k; ++j) r.push_back(m[i * k + j]);
    rows.push_back(r);
  }
  return rows;
}

inline json grid_json(const std::vector<GridPoint>& grid) {
  json g = json::array();
  for (const auto& p : grid) g.push_back({{"t", p.t}, {"r", p.r}});
  return g;
}

inline void write_matrix_csv(const std::vector<double>& m, std::size_t k, const std::filesystem::path& path) {
  std::vector<std::string> header{"row"};
  for (std::size_t j = 0; j < k; ++j) header.push_back("c" + std::to_string(j));
  CsvWriter csv(path, header);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<std::string> cells{std::to_string(i)};
    for (std::size_t j = 0; j < k; ++j) cells.push_back(fmt_double(m[i * k + j]));
    csv.row(cells);
  }
}

/// One JSONL record per grid point of a replica observation.
inline void append_observation(JsonlWriter& log, const CurrentObservation& o, std::uint64_t environment,
                               std::int64_t n) {
  for (std::size_t i = 0; i < o.grid.size(); ++i) {
    json j;
    j["environment"] = environment;
    j["replica"] = o.replica;
    j["seed"] = o.seed;
    j["n"] = n;
    j["t"] = o.grid[i].t;
    j["r"] = o.grid[i].r;
    j["Y"] = o.Y[i];
    j["V"] = o.V[i];
    if (!o.Yq.empty()) {
      j["Yq"] = o.Yq[i];
      j["Vq"] = o.Vq[i];
    }
    j["Z_over_sqrt_n"] = o.Z_over_sqrt_n[i];
    log.write(j);
  }
}

}  // namespace rwre
