// Copyright 2026 The qcontrol Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "qcontrol/coherent.hpp"
#include "qcontrol/filter.hpp"
#include "qcontrol/hjb.hpp"
#include "qcontrol/hybrid.hpp"
#include "qcontrol/io.hpp"
#include "qcontrol/slh.hpp"

#ifndef QCONTROL_VERSION
#define QCONTROL_VERSION "0.0.0"
#endif

namespace qcontrol::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

/// Invalid configuration; the message starts with the failing field.
class ConfigError : public InvalidArgument {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : InvalidArgument(field + ": " + what) {}
};

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// ---------------------------------------------------------------------------
// Config access. Every reader names the field it failed on.

const Json& child(const Json& obj, const std::string& key) {
  static const Json missing;
  if (obj.is_object() && obj.contains(key)) return obj.at(key);
  return missing;
}

void check_keys(const Json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (obj.is_null()) return;
  if (!obj.is_object()) throw ConfigError(path.empty() ? "config" : path, "expected an object");
  for (const auto& item : obj.items()) {
    const std::string& key = item.key();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError(join(path, key), "unknown field");
  }
}

enum class Range { kAny, kPositive, kNonNegative };

double number(const Json& obj, const std::string& path, const char* key, Range range,
              std::optional<double> fallback = {}) {
  const std::string field = join(path, key);
  const Json& v = child(obj, key);
  if (v.is_null()) {
    if (!fallback) throw ConfigError(field, "missing");
    return *fallback;
  }
  if (!v.is_number()) throw ConfigError(field, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(field, "must be finite");
  if (range == Range::kPositive && !(x > 0.0)) throw ConfigError(field, "must be > 0");
  if (range == Range::kNonNegative && !(x >= 0.0)) throw ConfigError(field, "must be >= 0");
  return x;
}

long integer(const Json& obj, const std::string& path, const char* key, long min, long fallback) {
  const std::string field = join(path, key);
  const Json& v = child(obj, key);
  if (v.is_null()) return fallback;
  if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
  const long x = v.get<long>();
  if (x < min) throw ConfigError(field, "must be >= " + std::to_string(min));
  return x;
}

bool boolean(const Json& obj, const std::string& path, const char* key, bool fallback) {
  const Json& v = child(obj, key);
  if (v.is_null()) return fallback;
  if (!v.is_boolean()) throw ConfigError(join(path, key), "expected true or false");
  return v.get<bool>();
}

std::string choice(const Json& obj, const std::string& path, const char* key,
                   std::initializer_list<const char*> options, const char* fallback) {
  const Json& v = child(obj, key);
  if (v.is_null()) return fallback;
  std::string list;
  for (const char* o : options) list += std::string(list.empty() ? "" : ", ") + o;
  if (!v.is_string()) throw ConfigError(join(path, key), "expected one of " + list);
  const std::string s = v.get<std::string>();
  if (std::none_of(options.begin(), options.end(), [&](const char* o) { return s == o; }))
    throw ConfigError(join(path, key), "expected one of " + list + ", got \"" + s + "\"");
  return s;
}

BlochVector vector3(const Json& obj, const std::string& path, const char* key,
                    const BlochVector& fallback, double max_norm = 1.0) {
  const std::string field = join(path, key);
  const Json& v = child(obj, key);
  if (v.is_null()) return fallback;
  if (!v.is_array() || v.size() != 3 ||
      !std::all_of(v.begin(), v.end(), [](const Json& e) { return e.is_number(); }))
    throw ConfigError(field, "expected [x, y, z]");
  const BlochVector r{v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  if (!(r.norm() <= max_norm + kBlochNormTolerance))
    throw ConfigError(field, "lies outside the ball of radius " + std::to_string(max_norm));
  return r;
}

// ---------------------------------------------------------------------------
// Run context and output

struct Context {
  std::string command;
  Json config;
  std::uint64_t seed = 1;
  fs::path out_dir;
  std::optional<double> dt;
  std::optional<double> tol;
  std::optional<long> paths;
  bool residual_report = false;
  std::string config_sha;
  std::ostream* log = nullptr;
};

/// Top-level keys of a command config; "seed" is accepted everywhere.
void check_top(const Context& c, std::initializer_list<const char*> allowed) {
  if (!c.config.is_object()) throw ConfigError("config", "expected an object");
  for (const auto& item : c.config.items()) {
    const std::string& key = item.key();
    if (key == "seed") continue;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError(key, "unknown field");
  }
}

long read_paths(const Context& c, const Json& obj, const std::string& path, long fallback,
                long min) {
  if (c.paths) {
    if (*c.paths < min) throw ConfigError("--paths", "must be >= " + std::to_string(min));
    return *c.paths;
  }
  return integer(obj, path, "paths", min, fallback);
}

double read_tol(const Context& c, const Json& obj, const std::string& path, double fallback) {
  if (c.tol) {
    if (!(*c.tol > 0.0)) throw ConfigError("--tol", "must be > 0");
    return *c.tol;
  }
  return number(obj, path, "tol", Range::kPositive, fallback);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string header_line(const Context& c) {
  return "# qcontrol " + std::string(version()) + " command=" + c.command +
         " config_sha256=" + c.config_sha + " seed=" + std::to_string(c.seed) + "\n";
}

Json meta(const Context& c) {
  return {{"version", version()},
          {"command", c.command},
          {"config_sha256", c.config_sha},
          {"seed", c.seed}};
}

class Csv {
 public:
  Csv(const Context& c, const std::vector<std::string>& columns) : text_(header_line(c)) {
    for (std::size_t k = 0; k < columns.size(); ++k) text_ += (k ? "," : "") + columns[k];
    text_ += "\n";
  }

  void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }
  void row(const std::vector<double>& values) {
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (k) text_ += ',';
      text_ += fmt(values[k]);
    }
    text_ += '\n';
  }

  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.close();
    if (!f) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

void emit(const Context& c, const std::string& name, const std::string& content) {
  const fs::path path = c.out_dir / name;
  write_atomic(path, content);
  *c.log << path.string() << "\n";
}

void emit_json(const Context& c, const std::string& name, Json body) {
  Json j = {{"meta", meta(c)}};
  j.update(body);
  emit(c, name, j.dump(2) + "\n");
}

Json to_json(const BlochVector& r) { return Json::array({r.x, r.y, r.z}); }

// ---------------------------------------------------------------------------
// Shared sections

SystemConfig read_system(const Context& c) {
  const Json& s = child(c.config, "system");
  check_keys(s, "system", {"omega", "kappa1", "kappa2", "dt"});
  SystemConfig cfg;
  cfg.omega = number(s, "system", "omega", Range::kAny, 0.0);
  cfg.kappa1 = number(s, "system", "kappa1", Range::kNonNegative, 0.0);
  cfg.kappa2 = number(s, "system", "kappa2", Range::kNonNegative, 0.0);
  cfg.dt = number(s, "system", "dt", Range::kPositive, 1e-3);
  if (c.dt) {
    if (!(*c.dt > 0.0) || !std::isfinite(*c.dt)) throw ConfigError("--dt", "must be > 0");
    cfg.dt = *c.dt;
  }
  return cfg;
}

ImpulseSchedule read_schedule(const Json& config) {
  const Json& s = child(config, "schedule");
  check_keys(s, "schedule", {"entries", "periodic"});
  std::vector<Impulse> entries;
  const Json& e = child(s, "entries");
  if (!e.is_null()) {
    if (!e.is_array()) throw ConfigError("schedule.entries", "expected an array of [time, angle]");
    for (std::size_t k = 0; k < e.size(); ++k) {
      const std::string field = "schedule.entries[" + std::to_string(k) + "]";
      const Json& p = e[k];
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
        throw ConfigError(field, "expected [time, angle]");
      const Impulse imp{p[0].get<double>(), p[1].get<double>()};
      if (!(imp.time >= 0.0)) throw ConfigError(field, "time must be >= 0");
      if (!entries.empty() && !(imp.time > entries.back().time))
        throw ConfigError(field, "times must be strictly increasing");
      entries.push_back(imp);
    }
  }
  std::optional<ImpulseSchedule::Periodic> periodic;
  const Json& p = child(s, "periodic");
  if (!p.is_null()) {
    const std::string path = "schedule.periodic";
    check_keys(p, path, {"period", "angle", "first"});
    periodic = ImpulseSchedule::Periodic{number(p, path, "period", Range::kPositive),
                                         number(p, path, "angle", Range::kAny),
                                         number(p, path, "first", Range::kNonNegative, 0.0)};
  }
  return ImpulseSchedule(std::move(entries), periodic);
}

FilterOptions read_filter_options(const Json& config) {
  FilterOptions opts;
  opts.scheme = choice(config, "", "scheme", {"euler-maruyama", "milstein"}, "euler-maruyama") ==
                        "milstein"
                    ? Scheme::kMilstein
                    : Scheme::kEulerMaruyama;
  opts.project = boolean(config, "", "project", true);
  return opts;
}

// ---------------------------------------------------------------------------
// simulate

void cmd_simulate(const Context& c) {
  check_top(c, {"system", "mode", "t_final", "r0", "control", "schedule", "steady_state"});
  const SystemConfig cfg = read_system(c);
  const Dynamics mode = choice(c.config, "", "mode", {"relaxing", "closed"}, "relaxing") == "closed"
                            ? Dynamics::kClosed
                            : Dynamics::kRelaxing;
  const double t_final = number(c.config, "", "t_final", Range::kPositive, 10.0);
  const BlochVector r0 = vector3(c.config, "", "r0", {0, 0, -1});
  const double u = number(c.config, "", "control", Range::kAny, 0.0);
  const ImpulseSchedule schedule = read_schedule(c.config);

  const Json& ss = child(c.config, "steady_state");
  check_keys(ss, "steady_state", {"tol", "max_iterations", "start"});
  if (!ss.is_null()) {
    if (!schedule.periodic_train()) throw ConfigError("steady_state", "needs schedule.periodic");
    if (mode != Dynamics::kRelaxing) throw ConfigError("steady_state", "needs mode \"relaxing\"");
  }

  const Trajectory traj = simulate_hybrid(cfg, schedule, constant_control(u), t_final, mode, r0);
  Csv csv(c, {"t", "x", "y", "z", "event"});
  std::size_t e = 0;
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const bool event = e < traj.events.size() && traj.events[e] == k;
    if (event) ++e;
    const BlochVector& r = traj.states[k];
    csv.row({traj.times[k], r.x, r.y, r.z, event ? 1.0 : 0.0});
  }
  emit(c, "simulate.csv", csv.str());

  if (ss.is_null()) return;
  const auto& train = *schedule.periodic_train();
  SteadyStateOptions opts;
  opts.tolerance = read_tol(c, ss, "steady_state", 1e-12);
  opts.max_iterations = integer(ss, "steady_state", "max_iterations", 1, 100000);
  opts.start = vector3(ss, "steady_state", "start", {0, 0, 0});
  const SteadyState it = periodic_steady_state(cfg, train.period, train.angle, opts);
  const BlochVector affine = periodic_fixed_point_affine(cfg, train.period, train.angle);
  emit_json(c, "steady_state.json",
            {{"iterated", to_json(it.state)}, {"iterations", it.iterations}, {"affine", to_json(affine)}});
}

// ---------------------------------------------------------------------------
// filter

MeasurementRecord read_record(const std::string& path, double dt) {
  std::ifstream f(path);
  if (!f) throw ConfigError("record", "cannot read " + path);
  std::string line;
  std::vector<std::string> columns;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) columns.push_back(col);
    break;
  }
  const auto t_col = std::find(columns.begin(), columns.end(), "t") - columns.begin();
  const auto dy_col = std::find(columns.begin(), columns.end(), "dY") - columns.begin();
  if (t_col == static_cast<long>(columns.size()) || dy_col == static_cast<long>(columns.size()))
    throw ConfigError("record", path + " needs columns t and dY");
  MeasurementRecord rec{dt, {}};
  double t_prev = 0.0;
  for (long row = 0; std::getline(f, line); ++row) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> v;
    std::stringstream ss(line);
    try {
      for (std::string cell; std::getline(ss, cell, ',');) v.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ConfigError("record", path + ": unreadable number in data row " + std::to_string(row));
    }
    if (v.size() != columns.size())
      throw ConfigError("record", path + ": data row " + std::to_string(row) + " has " +
                                      std::to_string(v.size()) + " cells");
    const double t = v[t_col];
    // Row 0 carries the initial state and no increment.
    if (row == 0) {
      if (t != 0.0) throw ConfigError("record", path + ": first row must be t = 0");
    } else {
      if (std::abs(t - t_prev - dt) > 1e-9 * std::max(1.0, t))
        throw ConfigError("record", path + ": time step does not match system.dt");
      rec.dY.push_back(v[dy_col]);
    }
    t_prev = t;
  }
  if (rec.dY.empty()) throw ConfigError("record", path + " holds no increments");
  return rec;
}

MeasurementRecord coarsen(const MeasurementRecord& fine) {
  MeasurementRecord c{2.0 * fine.dt, {}};
  for (std::size_t k = 0; k + 1 < fine.dY.size(); k += 2) c.dY.push_back(fine.dY[k] + fine.dY[k + 1]);
  return c;
}

/// Sup-norm gap between the normalized filter and the normalized
/// unnormalized filter on the same record.
double consistency_gap(const SystemConfig& cfg, const MeasurementRecord& rec, double u,
                       const BlochVector& r0, const FilterOptions& opts) {
  const auto norm = replay(cfg, rec, open_loop(constant_control(u)), r0, opts);
  const auto un = replay_unnormalized(cfg, rec, constant_control(u), extend(r0), opts);
  double gap = 0.0;
  for (std::size_t k = 0; k < un.size(); ++k)
    gap = std::max(gap, normalize(un[k]).r.max_abs_diff(norm.states[k]));
  return gap;
}

void filter_consistency(const Context& c, const SystemConfig& cfg, double t_final,
                        const BlochVector& r0, double u, const FilterOptions& opts) {
  const Json& cons = child(c.config, "consistency");
  check_keys(cons, "consistency", {"levels", "paths"});
  const long levels = integer(cons, "consistency", "levels", 2, 3);
  const long paths = integer(cons, "consistency", "paths", 1, 8);
  const long steps = step_count(t_final, cfg.dt);
  if (steps % (1L << (levels - 1)) != 0)
    throw ConfigError("consistency.levels", "t_final / dt must be divisible by 2^(levels - 1)");

  Json gaps = Json::array(), ratios = Json::array(), dts = Json::array();
  for (long l = 0; l < levels; ++l) dts.push_back(cfg.dt * static_cast<double>(1L << l));
  double ratio_sum = 0.0;
  for (long p = 0; p < paths; ++p) {
    NoiseSource noise(c.seed, static_cast<std::uint64_t>(p), cfg.dt);
    MeasurementRecord rec = simulate_record(cfg, constant_control(u), noise, t_final, r0, opts).record;
    std::vector<double> g;
    for (long l = 0; l < levels; ++l) {
      g.push_back(consistency_gap(cfg, rec, u, r0, opts));
      if (l + 1 < levels) rec = coarsen(rec);
    }
    for (long l = 0; l + 1 < levels; ++l) {
      const double ratio = g[l + 1] / g[l];
      ratios.push_back(ratio);
      ratio_sum += ratio;
    }
    gaps.push_back(g);
  }
  emit_json(c, "consistency.json",
            {{"levels", levels},
             {"paths", paths},
             {"dt", dts},
             {"gaps", gaps},
             {"ratios", ratios},
             {"mean_ratio", ratio_sum / static_cast<double>(ratios.size())}});
}

void cmd_filter(const Context& c) {
  check_top(c, {"system", "t_final", "r0", "control", "scheme", "project", "record", "unnormalized",
                "consistency", "paths"});
  const SystemConfig cfg = read_system(c);
  const double t_final = number(c.config, "", "t_final", Range::kPositive, 1.0);
  const BlochVector r0 = vector3(c.config, "", "r0", {0, 0, -1});
  const double u = number(c.config, "", "control", Range::kAny, 0.0);
  const FilterOptions opts = read_filter_options(c.config);
  const bool unnormalized = boolean(c.config, "", "unnormalized", false);
  const long paths = read_paths(c, c.config, "", 1, 1);

  FilterTrajectory traj;
  MeasurementRecord record;
  long projections = 0;
  double excursion = 0.0;
  const Json& rec_path = child(c.config, "record");
  if (!rec_path.is_null()) {
    if (!rec_path.is_string()) throw ConfigError("record", "expected a file path");
    if (paths != 1) throw ConfigError("paths", "a replayed record is a single path");
    record = read_record(rec_path.get<std::string>(), cfg.dt);
    traj = replay(cfg, record, open_loop(constant_control(u)), r0, opts);
    projections = traj.projections;
    for (const auto& s : traj.states) excursion = std::max(excursion, s.max_abs_diff(r0));
  } else {
    for (long p = 0; p < paths; ++p) {
      NoiseSource noise(c.seed, static_cast<std::uint64_t>(p), cfg.dt);
      FilterRun run = simulate_record(cfg, constant_control(u), noise, t_final, r0, opts);
      projections += run.trajectory.projections;
      for (const auto& s : run.trajectory.states) excursion = std::max(excursion, s.max_abs_diff(r0));
      if (p == 0) {
        traj = std::move(run.trajectory);
        record = std::move(run.record);
      }
    }
  }

  std::vector<std::string> columns{"t", "dY", "x", "y", "z"};
  std::vector<ExtendedBlochVector> un;
  if (unnormalized) {
    un = replay_unnormalized(cfg, record, constant_control(u), extend(r0), opts);
    columns.insert(columns.end(), {"n", "nx", "ny", "nz"});
  }
  Csv csv(c, columns);
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const BlochVector& r = traj.states[k];
    std::vector<double> row{traj.times[k], k == 0 ? 0.0 : record.dY[k - 1], r.x, r.y, r.z};
    if (unnormalized) row.insert(row.end(), {un[k].n, un[k].x, un[k].y, un[k].z});
    csv.row(row);
  }
  emit(c, "filter.csv", csv.str());
  emit_json(c, "summary.json",
            {{"paths", paths},
             {"steps", static_cast<long>(record.dY.size())},
             {"dt", cfg.dt},
             {"projections", projections},
             {"max_excursion", excursion},
             {"final", to_json(traj.states.back())}});

  if (!child(c.config, "consistency").is_null()) filter_consistency(c, cfg, t_final, r0, u, opts);
}

// ---------------------------------------------------------------------------
// montecarlo

void cmd_montecarlo(const Context& c) {
  check_top(c, {"system", "t_final", "r0", "control", "scheme", "project", "checkpoints",
                "unnormalized", "paths"});
  const SystemConfig cfg = read_system(c);
  const double t_final = number(c.config, "", "t_final", Range::kPositive, 1.0);
  const BlochVector r0 = vector3(c.config, "", "r0", {0, 0, -1});
  const double u = number(c.config, "", "control", Range::kAny, 0.0);
  const FilterOptions opts = read_filter_options(c.config);
  const long checkpoints = integer(c.config, "", "checkpoints", 1, 10);
  const long paths = read_paths(c, c.config, "", 1000, 2);
  std::vector<double> t_grid;
  for (long k = 1; k <= checkpoints; ++k)
    t_grid.push_back(t_final * static_cast<double>(k) / static_cast<double>(checkpoints));

  const auto n_paths = static_cast<std::size_t>(paths);
  if (!boolean(c.config, "", "unnormalized", false)) {
    const auto mc = monte_carlo_mean(cfg, open_loop(constant_control(u)), n_paths, t_grid, c.seed, r0, opts);
    const auto master = master_bloch_solution(cfg, constant_control(u), r0, mc.times);
    Csv csv(c, {"t", "mean_x", "se_x", "mean_y", "se_y", "mean_z", "se_z", "master_x", "master_y",
                "master_z"});
    double worst = 0.0;
    auto score = [](double mean, double se, double exact) {
      const double d = std::abs(mean - exact);
      return se > 0.0 ? d / se : (d == 0.0 ? 0.0 : std::numeric_limits<double>::max());
    };
    for (std::size_t k = 0; k < mc.times.size(); ++k) {
      const auto& m = mc.mean[k];
      const auto& s = mc.se[k];
      const auto& e = master[k];
      csv.row({mc.times[k], m.x, s.x, m.y, s.y, m.z, s.z, e.x, e.y, e.z});
      worst = std::max({worst, score(m.x, s.x, e.x), score(m.y, s.y, e.y), score(m.z, s.z, e.z)});
    }
    emit(c, "montecarlo.csv", csv.str());
    emit_json(c, "summary.json",
              {{"paths", paths},
               {"checkpoints", checkpoints},
               {"max_abs_z_score", worst},
               {"projections", mc.projections},
               {"steps", mc.steps}});
    return;
  }

  // Under the reference law the record is pure noise and n is a martingale.
  std::vector<long> marks;
  for (double t : t_grid) marks.push_back(std::lround(t / cfg.dt));
  const auto width = static_cast<std::size_t>(checkpoints);
  const auto table = run_paths(n_paths, width, [&](std::size_t p, double* out) {
    NoiseSource noise(c.seed, p, cfg.dt);
    ExtendedBlochVector s = extend(r0);
    std::size_t m = 0;
    for (long k = 1; k <= marks.back(); ++k) {
      s = filter_step_unnormalized(s, noise.increment(), cfg, u, opts);
      while (m < width && marks[m] == k) out[m++] = s.n;
    }
    while (m < width) out[m++] = s.n;
  });
  Csv csv(c, {"t", "mean_n", "se_n"});
  double worst = 0.0;
  for (std::size_t k = 0; k < width; ++k) {
    const Estimate e = column_estimate(table, width, k);
    csv.row({static_cast<double>(marks[k]) * cfg.dt, e.mean, e.se});
    worst = std::max(worst, std::abs(e.mean - 1.0) / e.se);
  }
  emit(c, "montecarlo.csv", csv.str());
  emit_json(c, "summary.json",
            {{"paths", paths}, {"checkpoints", checkpoints}, {"max_abs_z_score", worst}});
}

// ---------------------------------------------------------------------------
// hjb on the sphere

struct SphereSetup {
  PolarGrid grid;
  double omega;
  double theta_f;
  double phi_f;
};

SphereSetup read_sphere(const Context& c) {
  const Json& g = child(c.config, "grid");
  check_keys(g, "grid", {"n_theta", "n_phi"});
  const long n_theta = integer(g, "grid", "n_theta", 2, 40);
  const long n_phi = integer(g, "grid", "n_phi", 4, 80);
  if (n_phi % 2 != 0) throw ConfigError("grid.n_phi", "must be even");
  const PolarGrid grid(static_cast<int>(n_theta), static_cast<int>(n_phi));
  const double omega = number(c.config, "", "omega", Range::kAny, 1.0);
  const Json& t = child(c.config, "target");
  check_keys(t, "target", {"theta", "phi"});
  const double theta_f = number(t, "target", "theta", Range::kNonNegative,
                                std::numbers::pi / 2 + grid.dtheta() / 2);
  if (theta_f > std::numbers::pi) throw ConfigError("target.theta", "must lie in [0, pi]");
  const double phi_f = number(t, "target", "phi", Range::kAny, 0.0);
  return {grid, omega, theta_f, phi_f};
}

Json grid_json(const PolarGrid& g) {
  return {{"n_theta", g.n_theta()}, {"n_phi", g.n_phi()}, {"dtheta", g.dtheta()}, {"dphi", g.dphi()}};
}

void cmd_time_optimal(const Context& c) {
  check_top(c, {"grid", "omega", "target", "tol", "max_sweeps", "rollout"});
  const SphereSetup s = read_sphere(c);
  StationaryOptions opts;
  opts.tol = read_tol(c, c.config, "", 1e-6);
  opts.max_sweeps = integer(c.config, "", "max_sweeps", 1, 500000);
  const Json& ro = child(c.config, "rollout");
  check_keys(ro, "rollout", {"starts", "radius_cells", "slack", "dt"});

  const TimeOptimalSolution sol = solve_time_optimal(s.grid, s.omega, s.theta_f, s.phi_f, opts);
  const BangBangLaw law = extract_bang_bang(sol);
  const auto& g = sol.value.grid;
  Csv csv(c, {"i", "j", "theta", "phi", "x", "y", "z", "value", "control", "target"});
  for (int i = 0; i < g.n_theta(); ++i)
    for (int j = 0; j < g.n_phi(); ++j) {
      const std::size_t k = g.index(i, j);
      const BlochVector r = g.point(i, j);
      csv.row({double(i), double(j), g.theta(i), g.phi(j), r.x, r.y, r.z, sol.value.values[k],
               law.law.control[k], sol.target[k] ? 1.0 : 0.0});
    }
  emit(c, "value.csv", csv.str());
  emit_json(c, "hjb.json",
            {{"mode", "time-optimal"},
             {"grid", grid_json(g)},
             {"omega", s.omega},
             {"target_node", {sol.target_node.first, sol.target_node.second}},
             {"iterations", sol.value.iterations},
             {"residual", sol.value.residual},
             {"converged", sol.value.converged},
             {"min_increment", sol.min_increment}});

  if (!ro.is_null()) {
    const long starts = integer(ro, "rollout", "starts", 1, 20);
    const double radius = number(ro, "rollout", "radius_cells", Range::kPositive, 2.0) * g.dtheta();
    const double slack = number(ro, "rollout", "slack", Range::kPositive, 1.15);
    const double dt = number(ro, "rollout", "dt", Range::kPositive, 1e-3);
    const BlochVector target = g.point(sol.target_node.first, sol.target_node.second);
    std::mt19937_64 gen(c.seed);
    std::uniform_int_distribution<int> ri(0, g.n_theta() - 1), rj(0, g.n_phi() - 1);
    Json runs = Json::array();
    bool all = true;
    for (long n = 0; n < starts;) {
      const int i = ri(gen), j = rj(gen);
      if (sol.target[g.index(i, j)]) continue;
      ++n;
      const double v = sol.value.values[g.index(i, j)];
      const RolloutResult r = rollout_bang_bang(law, s.omega, g.point(i, j), target, radius, slack * v, dt);
      all = all && r.reached;
      runs.push_back({{"i", i}, {"j", j}, {"value", v}, {"time", r.time}, {"reached", r.reached}});
    }
    emit_json(c, "rollout.json",
              {{"radius", radius}, {"slack", slack}, {"dt", dt}, {"all_reached", all}, {"starts", runs}});
  }
  if (c.residual_report) {
    const ResidualReport rep = dpe_residual(sol);
    emit_json(c, "residual.json",
              {{"max_abs", rep.max_abs},
               {"mean_abs", rep.mean_abs},
               {"nodes", rep.nodes},
               {"target_max_abs", [&] {
                  double m = 0.0;
                  for (std::size_t k = 0; k < g.size(); ++k)
                    if (sol.target[k]) m = std::max(m, std::abs(sol.value.values[k]));
                  return m;
                }()}});
  }
}

void cmd_qvi(const Context& c) {
  check_top(c, {"grid", "omega", "target", "tol", "max_sweeps", "impulse_angles"});
  const SphereSetup s = read_sphere(c);
  QviOptions opts;
  opts.tol = read_tol(c, c.config, "", 1e-9);
  opts.max_sweeps = integer(c.config, "", "max_sweeps", 1, 500000);
  opts.impulse_angles = static_cast<int>(integer(c.config, "", "impulse_angles", 1, 64));

  const QviSolution sol = solve_qvi(s.grid, s.omega, s.theta_f, s.phi_f, opts);
  const auto& g = sol.value.grid;
  Csv csv(c, {"i", "j", "theta", "phi", "x", "y", "z", "value", "action", "angle", "target"});
  for (int i = 0; i < g.n_theta(); ++i)
    for (int j = 0; j < g.n_phi(); ++j) {
      const std::size_t k = g.index(i, j);
      const BlochVector r = g.point(i, j);
      const int a = sol.action.control[k];
      csv.row({double(i), double(j), g.theta(i), g.phi(j), r.x, r.y, r.z, sol.value.values[k],
               double(a), a < 0 ? 0.0 : sol.angles[static_cast<std::size_t>(a)],
               sol.target[k] ? 1.0 : 0.0});
    }
  emit(c, "value.csv", csv.str());
  emit_json(c, "hjb.json",
            {{"mode", "qvi"},
             {"grid", grid_json(g)},
             {"omega", s.omega},
             {"impulse_angles", sol.angles.size()},
             {"target_node", {sol.target_node.first, sol.target_node.second}},
             {"iterations", sol.value.iterations},
             {"residual", sol.value.residual},
             {"converged", sol.value.converged},
             {"min_increment", sol.min_increment}});
  if (c.residual_report) {
    const QviResiduals r = qvi_residuals(sol);
    emit_json(c, "residual.json",
              {{"min_drift", r.min_drift},
               {"min_impulse", r.min_impulse},
               {"max_complementarity", r.max_complementarity},
               {"min_impulse_interpolated", r.min_impulse_interpolated},
               {"max_abs", r.max_abs},
               {"mean_abs", r.mean_abs},
               {"nodes", r.nodes}});
  }
}

// ---------------------------------------------------------------------------
// hjb on the ball

void cmd_ball(const Context& c, bool risk_sensitive) {
  if (risk_sensitive)
    check_top(c, {"system", "h", "t_final", "nt", "c1", "c2", "umax", "cfl_safety", "mu", "n0",
                  "rollout"});
  else
    check_top(c, {"system", "h", "t_final", "nt", "c1", "c2", "umax", "cfl_safety", "rollout"});
  const SystemConfig cfg = read_system(c);
  const double h = number(c.config, "", "h", Range::kPositive, 0.1);
  const double t_final = number(c.config, "", "t_final", Range::kPositive, 1.0);
  const long nt = integer(c.config, "", "nt", 1, 100);
  const double c1 = number(c.config, "", "c1", Range::kPositive, 0.1);
  const double c2 = number(c.config, "", "c2", Range::kNonNegative, 1.0);
  BackwardOptions opts;
  opts.umax = number(c.config, "", "umax", Range::kNonNegative, 10.0);
  opts.cfl_safety = number(c.config, "", "cfl_safety", Range::kPositive, 0.5);
  if (opts.cfl_safety > 1.0) throw ConfigError("cfl_safety", "must lie in (0, 1]");
  const double mu = risk_sensitive ? number(c.config, "", "mu", Range::kPositive, 1.0) : 0.0;
  const double n0 = risk_sensitive ? number(c.config, "", "n0", Range::kPositive, 1.0) : 1.0;
  const Json& ro = child(c.config, "rollout");
  check_keys(ro, "rollout", {"r0", "paths"});

  std::optional<BallGrid> grid;
  try {
    grid.emplace(h, n0);
  } catch (const InvalidArgument& e) {
    throw ConfigError("h", e.what());
  }
  const SlicedSolution sol =
      risk_sensitive ? solve_risk_sensitive(*grid, cfg, mu, c1, c2, t_final, static_cast<int>(nt), opts)
                     : solve_risk_neutral(*grid, cfg, c1, c2, t_final, static_cast<int>(nt), opts);

  Csv csv(c, {"x", "y", "z", "value_0", "control_0", "value_T", "control_T"});
  for (std::size_t idx = 0; idx < sol.grid.size(); ++idx) {
    if (!sol.grid.inside(idx)) continue;
    const BlochVector r = sol.grid.point(idx);
    csv.row({r.x, r.y, r.z, sol.values.front()[idx], sol.controls.front()[idx],
             sol.values.back()[idx], sol.controls.back()[idx]});
  }
  emit(c, "value.csv", csv.str());
  const auto& rep = sol.refinement;
  Json info = {{"mode", risk_sensitive ? "risk-sensitive" : "risk-neutral"},
               {"h", h},
               {"t_final", t_final},
               {"nt", nt},
               {"c1", c1},
               {"c2", c2},
               {"umax", opts.umax},
               {"active_nodes", sol.grid.active()},
               {"refinement",
                {{"slice_dt", rep.slice_dt},
                 {"stable_dt", rep.stable_dt},
                 {"substeps_per_slice", rep.substeps_per_slice},
                 {"refined", rep.refined}}},
               {"guard_events", sol.guard_events}};
  if (risk_sensitive) {
    info["mu"] = mu;
    info["n0"] = n0;
  }
  emit_json(c, "hjb.json", info);

  if (ro.is_null()) return;
  const BlochVector r0 = vector3(ro, "rollout", "r0", {0, 0, 0});
  const auto paths = static_cast<std::size_t>(read_paths(c, ro, "rollout", 10000, 2));
  const CostWeights w{c1, c2};
  Estimate opt, zero;
  double predicted = 0.0;
  if (risk_sensitive) {
    const ExtendedFeedback k = [&](double t, const ExtendedBlochVector& s) {
      return feedback_rs(sol, s.n, {s.x, s.y, s.z}, t);
    };
    const ExtendedFeedback none = [](double, const ExtendedBlochVector&) { return 0.0; };
    opt = estimate_risk_sensitive_cost(cfg, k, mu, w, t_final, paths, c.seed, r0);
    zero = estimate_risk_sensitive_cost(cfg, none, mu, w, t_final, paths, c.seed, r0);
    predicted = risk_value(sol, 1.0, r0, 0.0);
  } else {
    const Feedback k = [&](double t, const BlochVector& r) { return feedback_rn(sol, r, t); };
    opt = estimate_risk_neutral_cost(cfg, k, w, t_final, paths, c.seed, r0);
    zero = estimate_risk_neutral_cost(cfg, zero_feedback(), w, t_final, paths, c.seed, r0);
    predicted = value_at(sol, r0, 0.0);
  }
  emit_json(c, "rollout.json",
            {{"r0", to_json(r0)},
             {"paths", paths},
             {"dt", cfg.dt},
             {"value", predicted},
             {"optimal", {{"mean", opt.mean}, {"se", opt.se}}},
             {"zero", {{"mean", zero.mean}, {"se", zero.se}}}});
}

// ---------------------------------------------------------------------------
// network

void cmd_network(const Context& c, const std::string& op) {
  Json result;
  if (op == "concat" || op == "series") {
    check_top(c, {"first", "second"});
    const SLH2 g1 = io::slh_from_json<2>(child(c.config, "first"), "first");
    const SLH2 g2 = io::slh_from_json<2>(child(c.config, "second"), "second");
    // In a series connection "first" feeds its output into "second".
    result = {{"result", io::to_json(op == "series" ? series(g2, g1) : concat(g1, g2))}};
  } else if (op == "atom") {
    check_top(c, {"kappa1", "kappa2", "omega", "u"});
    const SLH2 g = atom_params(number(c.config, "", "kappa1", Range::kNonNegative, 0.0),
                               number(c.config, "", "kappa2", Range::kNonNegative, 0.0),
                               number(c.config, "", "omega", Range::kAny, 0.0),
                               number(c.config, "", "u", Range::kAny, 0.0));
    result = {{"result", io::to_json(g)}};
  } else {
    check_top(c, {"slh", "rho"});
    const SLH2 g = io::slh_from_json<2>(child(c.config, "slh"), "slh");
    const Matrix2 rho = io::matrix_from_json<2>(child(c.config, "rho"), "rho");
    result = {{"drho", io::to_json(master_rhs(g, rho))}};
  }
  result["op"] = op;
  emit_json(c, "network.json", result);
}

// ---------------------------------------------------------------------------
// cnot-demo

Matrix4 kron(const Matrix2& a, const Matrix2& b) {
  Matrix4 m;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t l = 0; l < 2; ++l) m(2 * i + k, 2 * j + l) = a(i, j) * b(k, l);
  return m;
}

double expectation(const TwoQubitState& psi, const Matrix4& x) {
  Complex acc{};
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t col = 0; col < 4; ++col) acc += std::conj(psi[r]) * x(r, col) * psi[col];
  return acc.real();
}

void cmd_cnot(const Context& c) {
  check_top(c, {"states"});
  const long states = read_paths(c, c.config, "", 100, 1);
  if (child(c.config, "states").is_object()) throw ConfigError("states", "expected an integer");
  const long n = c.paths ? states : integer(c.config, "", "states", 1, 100);

  const auto schedule = transfer_schedule();
  const Matrix4 u = schedule_unitary(schedule);
  const Matrix2 paulis[4] = {pauli::kIdentity, pauli::kX, pauli::kY, pauli::kZ};
  std::mt19937_64 gen(c.seed);
  std::normal_distribution<double> normal;
  double min_fid = 1.0, max_err = 0.0, max_gap = 0.0;
  bool passed = true;
  for (long k = 0; k < n; ++k) {
    SingleQubitState plant{Complex{normal(gen), normal(gen)}, Complex{normal(gen), normal(gen)}};
    const double len = std::sqrt(std::norm(plant[0]) + std::norm(plant[1]));
    plant[0] /= len;
    plant[1] /= len;
    const TransferResult r = verify_transfer(plant);
    min_fid = std::min(min_fid, r.fidelity);
    max_err = std::max(max_err, std::abs(r.fidelity - 1.0));
    passed = passed && r.passed;

    const TwoQubitState psi = product_state(plant, kDown);
    const TwoQubitState out = apply_direct_schedule(psi, schedule);
    for (const auto& a : paulis)
      for (const auto& b : paulis) {
        const Matrix4 x = kron(a, b);
        max_gap = std::max(max_gap, std::abs(expectation(psi, heisenberg_conjugate(u, x)) -
                                             expectation(out, x)));
      }
  }
  passed = passed && max_gap <= kUnitNormTolerance;
  emit_json(c, "cnot.json",
            {{"states", n},
             {"min_fidelity", min_fid},
             {"max_fidelity_error", max_err},
             {"max_picture_gap", max_gap},
             {"passed", passed},
             {"unitary", io::to_json(u)}});
}

// ---------------------------------------------------------------------------

Json load_config(const std::string& path) {
  if (path.empty()) return Json::object();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("--config", "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    throw ConfigError("--config", path + " is not valid JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
  return j;
}

}  // namespace

const char* version() { return QCONTROL_VERSION; }

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* digits = "0123456789abcdef";
  std::string hex;
  for (unsigned int k = 0; k < len; ++k) {
    hex += digits[md[k] >> 4];
    hex += digits[md[k] & 15];
  }
  return hex;
}

std::string file_sha256(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return sha256_hex(ss.str());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Filtering and feedback control experiments for a monitored two-level atom",
               args.empty() ? "qcontrol" : args[0]};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", mode;
  std::uint64_t seed = 0;
  double dt = 0.0, tol = 0.0;
  long paths = 0;
  bool residual_report = false;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed, "Random seed (overrides the config)");
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
    sub->add_option("--dt", dt, "Integration step (overrides system.dt)");
    sub->add_option("--paths", paths, "Monte Carlo paths / sample count");
    sub->add_option("--tol", tol, "Solver tolerance");
    sub->add_flag("--residual-report", residual_report, "Write residual.json (hjb)");
    return sub;
  };
  common(app.add_subcommand("simulate", "Hybrid impulse/continuous Bloch simulation"));
  common(app.add_subcommand("filter", "Quantum filter on a generated or replayed record"));
  common(app.add_subcommand("montecarlo", "Ensemble averages of the filter"));
  common(app.add_subcommand("hjb", "Dynamic programming solvers"))
      ->add_option("mode", mode, "time-optimal | qvi | risk-neutral | risk-sensitive")
      ->required()
      ->check(CLI::IsMember({"time-optimal", "qvi", "risk-neutral", "risk-sensitive"}));
  common(app.add_subcommand("network", "SLH network algebra"))
      ->add_option("op", mode, "concat | series | atom | master")
      ->required()
      ->check(CLI::IsMember({"concat", "series", "atom", "master"}));
  common(app.add_subcommand("cnot-demo", "Coherent CNOT transfer of the plant to its ground state"));

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("qcontrol");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitInvalidConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  Context c;
  c.command = sub->get_name() + (mode.empty() ? "" : " " + mode);
  c.out_dir = out_dir;
  c.residual_report = residual_report;
  c.log = &out;
  if (sub->count("--dt")) c.dt = dt;
  if (sub->count("--tol")) c.tol = tol;
  if (sub->count("--paths")) c.paths = paths;

  try {
    c.config = load_config(config_path);
    if (sub->count("--seed"))
      c.seed = seed;
    else
      c.seed = static_cast<std::uint64_t>(integer(c.config, "", "seed", 0, 1));

    // The hash covers the config and every flag that changes the outputs.
    Json effective = c.config;
    effective["__cli"] = {{"command", c.command},
                          {"dt", c.dt ? Json(*c.dt) : Json()},
                          {"tol", c.tol ? Json(*c.tol) : Json()},
                          {"paths", c.paths ? Json(*c.paths) : Json()},
                          {"residual_report", c.residual_report}};
    c.config_sha = sha256_hex(effective.dump());
    fs::create_directories(c.out_dir);

    const std::string& name = sub->get_name();
    if (name == "simulate") {
      cmd_simulate(c);
    } else if (name == "filter") {
      cmd_filter(c);
    } else if (name == "montecarlo") {
      cmd_montecarlo(c);
    } else if (name == "hjb") {
      if (mode == "time-optimal") cmd_time_optimal(c);
      else if (mode == "qvi") cmd_qvi(c);
      else cmd_ball(c, mode == "risk-sensitive");
    } else if (name == "network") {
      cmd_network(c, mode);
    } else {
      cmd_cnot(c);
    }
  } catch (const ConvergenceError& e) {
    err << "not converged: " << e.what() << "\n";
    return kExitNotConverged;
  } catch (const InvalidArgument& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace qcontrol::cli
