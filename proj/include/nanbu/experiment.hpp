#pragma once

// Scenario runner: flat key=value configs, validation, replica orchestration,
// CSV tables and the JSON metadata sidecar.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nanbu/inequalities.hpp"
#include "nanbu/kernels.hpp"
#include "nanbu/observables.hpp"
#include "nanbu/particle_system.hpp"
#include "nanbu/random.hpp"

namespace nanbu {

inline constexpr const char* kVersion = "0.1.0";

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"decay",       "creation_rate", "n2_rate",       "fuzz_fundineq",
                                              "fuzz_holder", "counterexample", "kappa_wishart", "eps_sweep"};
  return names;
}

struct ExperimentConfig {
  std::string scenario = "decay";
  int n = 64;
  int d = 3;
  std::string kernel = "atoms([(pi/2, 1)])";
  double t_end = 1.0;
  double record_dt = 0.1;
  std::uint64_t record_every = 0;
  int replicas = 1;
  int threads = 0;  // 0: all available cores
  std::uint64_t seed = 1;
  std::string init = "independent";
  bool moments = true;
  bool renormalize = false;
  double h = 0.01;
  int states = 1000;
  std::vector<double> alpha_grid{0.5, 1.0, 2.0};
  std::vector<double> p1_grid{1.5, 2.0, 3.0};
  std::vector<int> n_grid{32, 128, 512, 2048};
  std::vector<double> eps_grid{0.4, 0.2, 0.1};
  std::string kind = "heavy_tail";
  std::vector<double> grid;  // heavy_tail: R values; radial: r−,r+ pairs flattened
  double q = 1.0;
  double p0 = 2.0;
  double p = 2.0;
  std::string out = "out";
};

// ---------------------------------------------------------------------------
// Parsing

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const char* first = v.data();
  const char* last = v.data() + v.size();
  auto [p, ec] = std::from_chars(first, last, x);
  if (ec != std::errc() || p != last) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

inline long long to_int(const std::string& key, const std::string& v) {
  long long x = 0;
  const char* last = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), last, x);
  if (ec != std::errc() || p != last) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const char* last = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), last, x);
  if (ec != std::errc() || p != last) throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return x;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !parts.empty()) parts.push_back(trim(cur));
  return parts;
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(key, s));
  return out;
}

inline std::vector<int> to_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(static_cast<int>(to_int(key, s)));
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  return os.str();
}

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace detail

/// Sets one field from its textual value. Throws ConfigError on an unknown
/// key or a malformed value.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "scenario") c.scenario = value;
  else if (key == "N") c.n = static_cast<int>(to_int(key, value));
  else if (key == "d") c.d = static_cast<int>(to_int(key, value));
  else if (key == "kernel") c.kernel = value;
  else if (key == "t_end") c.t_end = to_double(key, value);
  else if (key == "record_dt") c.record_dt = to_double(key, value);
  else if (key == "record_every") c.record_every = to_u64(key, value);
  else if (key == "replicas") c.replicas = static_cast<int>(to_int(key, value));
  else if (key == "threads") c.threads = static_cast<int>(to_int(key, value));
  else if (key == "seed") c.seed = to_u64(key, value);
  else if (key == "init") c.init = value;
  else if (key == "moments") c.moments = to_bool(key, value);
  else if (key == "renormalize") c.renormalize = to_bool(key, value);
  else if (key == "h") c.h = to_double(key, value);
  else if (key == "states") c.states = static_cast<int>(to_int(key, value));
  else if (key == "alpha_grid") c.alpha_grid = to_doubles(key, value);
  else if (key == "p1_grid") c.p1_grid = to_doubles(key, value);
  else if (key == "N_grid") c.n_grid = to_ints(key, value);
  else if (key == "eps_grid") c.eps_grid = to_doubles(key, value);
  else if (key == "kind") c.kind = value;
  else if (key == "grid") c.grid = to_doubles(key, value);
  else if (key == "q") c.q = to_double(key, value);
  else if (key == "p0") c.p0 = to_double(key, value);
  else if (key == "p") c.p = to_double(key, value);
  else if (key == "out") c.out = value;
  else throw ConfigError("unknown key '" + key + "'");
}

struct ParseResult {
  ExperimentConfig config;
  std::vector<std::string> errors;  // "line L: ..." diagnostics
};

/// key = value per line; '#' starts a comment.
inline ParseResult parse_config(std::string_view text) {
  ParseResult r;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      r.errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    try {
      apply_setting(r.config, key, value);
    } catch (const ConfigError& e) {
      r.errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return r;
}

inline ParseResult load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) return {{}, {"cannot open config file '" + path.string() + "'"}};
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

/// Every field in a stable order; the basis of the config hash.
inline std::map<std::string, std::string> canonical_fields(const ExperimentConfig& c) {
  using detail::fmt;
  using detail::join;
  return {{"scenario", c.scenario},
          {"N", std::to_string(c.n)},
          {"d", std::to_string(c.d)},
          {"kernel", c.kernel},
          {"t_end", fmt(c.t_end)},
          {"record_dt", fmt(c.record_dt)},
          {"record_every", std::to_string(c.record_every)},
          {"replicas", std::to_string(c.replicas)},
          {"seed", std::to_string(c.seed)},
          {"init", c.init},
          {"moments", c.moments ? "true" : "false"},
          {"renormalize", c.renormalize ? "true" : "false"},
          {"h", fmt(c.h)},
          {"states", std::to_string(c.states)},
          {"alpha_grid", join(c.alpha_grid)},
          {"p1_grid", join(c.p1_grid)},
          {"N_grid", join(c.n_grid)},
          {"eps_grid", join(c.eps_grid)},
          {"kind", c.kind},
          {"grid", join(c.grid)},
          {"q", fmt(c.q)},
          {"p0", fmt(c.p0)},
          {"p", fmt(c.p)}};
}

inline std::string canonical_text(const ExperimentConfig& c) {
  std::string s;
  for (const auto& [k, v] : canonical_fields(c)) s += k + "=" + v + "\n";
  return s;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_text(c))));
  return buf;
}

// ---------------------------------------------------------------------------
// Validation

inline std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> diag;
  const auto& names = scenario_names();
  const bool known = std::find(names.begin(), names.end(), c.scenario) != names.end();
  if (!known) diag.push_back("scenario: unknown scenario '" + c.scenario + "'");
  if (c.d < 3) diag.push_back("d: dimension must be ≥ 3");
  if (c.d > kMaxDim) diag.push_back("d: dimension must be ≤ " + std::to_string(kMaxDim));
  if (c.n < 2) diag.push_back("N: must be ≥ 2");
  if (c.replicas < 1) diag.push_back("replicas: must be ≥ 1");
  if (c.threads < 0) diag.push_back("threads: must be ≥ 0");
  if (!(c.t_end >= 0.0) || !std::isfinite(c.t_end)) diag.push_back("t_end: must be a finite number ≥ 0");
  if (!(c.record_dt >= 0.0) || !std::isfinite(c.record_dt)) diag.push_back("record_dt: must be ≥ 0");
  if (c.init != "independent" && c.init != "identity") diag.push_back("init: must be 'independent' or 'identity'");

  std::optional<AngularKernel> kernel;
  try {
    kernel = parse_kernel(c.kernel);
  } catch (const std::exception& e) {
    diag.push_back(std::string("kernel: ") + e.what());
  }
  const bool needs_run = c.scenario == "decay" || c.scenario == "creation_rate" || c.scenario == "n2_rate";
  if (kernel && needs_run && !kernel->finite_mass())
    diag.push_back("kernel: total mass is infinite; a power kernel needs eps > 0");
  if (kernel && needs_run && kernel->total_mass() <= 0.0) diag.push_back("kernel: total mass is zero");

  if (c.scenario == "creation_rate" && !(c.h > 0.0)) diag.push_back("h: must be > 0");
  if ((c.scenario == "fuzz_fundineq" || c.scenario == "fuzz_holder") && c.states < 1)
    diag.push_back("states: must be ≥ 1");
  if (c.scenario == "fuzz_holder") {
    if (c.alpha_grid.empty()) diag.push_back("alpha_grid: must not be empty");
    for (double a : c.alpha_grid)
      if (!(a > 0.0)) diag.push_back("alpha_grid: every alpha must be > 0");
    if (c.p1_grid.empty()) diag.push_back("p1_grid: must not be empty");
    for (double p : c.p1_grid)
      if (!(p > 1.0)) diag.push_back("p1_grid: every p1 must be > 1");
  }
  if (c.scenario == "kappa_wishart") {
    if (c.n_grid.empty()) diag.push_back("N_grid: must not be empty");
    for (int n : c.n_grid)
      if (n < 2) diag.push_back("N_grid: every N must be ≥ 2");
    if (!(c.p0 >= 1.0) || !(c.p >= 1.0)) diag.push_back("p0, p: must be ≥ 1");
  }
  if (c.scenario == "eps_sweep") {
    if (c.eps_grid.empty()) diag.push_back("eps_grid: must not be empty");
    for (double e : c.eps_grid)
      if (!(e > 0.0) || e > std::numbers::pi) diag.push_back("eps_grid: every eps must lie in (0, π]");
  }
  if (c.scenario == "counterexample") {
    if (c.kind != "heavy_tail" && c.kind != "radial") diag.push_back("kind: must be 'heavy_tail' or 'radial'");
    if (c.grid.empty()) diag.push_back("grid: must not be empty");
    if (c.kind == "heavy_tail") {
      for (double r : c.grid)
        if (!(r > 1.0)) diag.push_back("grid: every R must be > 1");
      if (!(c.q >= 1.0)) diag.push_back("q: must be ≥ 1");
    }
    if (c.kind == "radial") {
      if (c.grid.size() % 2 != 0) diag.push_back("grid: radial bands need r_minus,r_plus pairs");
      for (std::size_t i = 0; i + 1 < c.grid.size(); i += 2)
        if (!(c.grid[i] > 0.0 && c.grid[i] < c.grid[i + 1])) diag.push_back("grid: need 0 < r_minus < r_plus");
    }
  }
  return diag;
}

// ---------------------------------------------------------------------------
// Tables

inline const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> cols{"t",        "replica", "N",    "d",    "eps",  "coupling_dist", "creation",
                                             "parallelogram", "kappa_u", "kappa_v", "m3_u", "m4_u", "m3_v", "m4_v",
                                             "events"};
  return cols;
}

inline std::vector<std::string> extended_columns() {
  auto c = record_columns();
  c.insert(c.end(), {"param1", "param2", "ratio"});
  return c;
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t col(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw std::out_of_range("no column " + std::string(name));
  }
};

inline bool integer_column(std::string_view name) {
  return name == "replica" || name == "N" || name == "d" || name == "events";
}

inline std::string format_cell(double x, bool integral) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  if (integral) {
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(x));
  } else {
    std::snprintf(buf, sizeof buf, "%.17g", x);
  }
  return buf;
}

inline std::string to_csv(const Table& t) {
  std::string s;
  for (std::size_t i = 0; i < t.columns.size(); ++i) s += (i ? "," : "") + t.columns[i];
  s += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s += ',';
      s += format_cell(row[i], integer_column(t.columns[i]));
    }
    s += '\n';
  }
  return s;
}

/// Parses a CSV written by to_csv.
inline Table parse_csv(std::string_view text) {
  Table t;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) return t;
  t.columns = detail::split_list(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : detail::split_list(line)) {
      if (cell == "nan") row.push_back(std::numeric_limits<double>::quiet_NaN());
      else if (cell == "inf") row.push_back(std::numeric_limits<double>::infinity());
      else if (cell == "-inf") row.push_back(-std::numeric_limits<double>::infinity());
      else row.push_back(std::stod(cell));
    }
    if (row.size() != t.columns.size()) throw std::runtime_error("csv row width does not match the header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Scenarios

struct ScenarioResult {
  Table table;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  std::vector<std::uint64_t> replica_seeds;
  bool ok = true;
  std::string failure;  // first invariant violation, with the offending record
};

namespace detail {

/// Runs `job(i)` for i in [0, count) on `threads` workers. The first exception
/// (lowest index) is rethrown after all workers finish.
inline void parallel_for(int count, int threads, const std::function<void(int)>& job) {
  const int hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = std::max(1, std::min(count, threads > 0 ? threads : hw));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(count, 0)));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct ReplicaFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline std::vector<double> record_row(const CoupledState& cs, const AngularKernel& k, int replica, bool moments,
                                      std::uint64_t events) {
  const CoupledPairStats ps = coupled_pair_stats(cs);
  const double w = wallis_ratio(cs.u.d);
  double m3u = kNaN, m4u = kNaN, m3v = kNaN, m4v = kNaN;
  if (moments) {
    const double ps34[] = {3.0, 4.0};
    const auto mu = p_moments(cs.u, ps34);
    const auto mv = p_moments(cs.v, ps34);
    m3u = mu[0];
    m4u = mu[1];
    m3v = mv[0];
    m4v = mv[1];
  }
  return {cs.u.time,
          static_cast<double>(replica),
          static_cast<double>(cs.u.n),
          static_cast<double>(cs.u.d),
          k.cutoff(),
          coupling_distance(cs),
          k.levy_intensity() * w * ps.bracket.value,
          ps.parallelogram.value,
          kappa(cs.u),
          kappa(cs.v),
          m3u,
          m4u,
          m3v,
          m4v,
          static_cast<double>(events)};
}

inline CoupledState initial_coupling(const ExperimentConfig& c, int n, Engine& g) {
  CoupledState cs;
  cs.u = init_uniform(n, c.d, g);
  cs.v = c.init == "identity" ? cs.u : init_uniform(n, c.d, g);
  return cs;
}

/// One coupled trajectory; rows at the record times.
inline std::vector<std::vector<double>> coupled_replica(const ExperimentConfig& c, const AngularKernel& k, int n,
                                                        int replica, std::uint64_t seed, const RunOptions& opts) {
  Engine g(seed);
  CoupledState cs = initial_coupling(c, n, g);
  std::vector<std::vector<double>> rows;
  auto rec = [&](const CoupledState& s, std::uint64_t ev) { rows.push_back(record_row(s, k, replica, c.moments, ev)); };
  const RunStats st = run(cs, k, opts, g, rec);
  if (st.monotone_violations > 0) {
    throw ReplicaFailure("monotone coupling violated in replica " + std::to_string(replica) + " (" +
                         std::to_string(st.monotone_violations) + " jumps, max increase " +
                         fmt(st.max_monotone_excess) + ")");
  }
  return rows;
}

inline RunOptions run_options(const ExperimentConfig& c) {
  RunOptions o;
  o.t_end = c.t_end;
  o.record_dt = c.record_dt;
  o.record_every = c.record_every;
  o.renormalize = c.renormalize;
  return o;
}

inline std::uint64_t purpose_of(std::string_view scenario) { return fnv1a64(scenario); }

/// Runs coupled replicas and merges rows by replica index.
inline void run_coupled(const ExperimentConfig& c, const AngularKernel& k, int n, const RunOptions& opts,
                        std::uint64_t purpose, ScenarioResult& out) {
  std::vector<std::vector<std::vector<double>>> per(static_cast<std::size_t>(c.replicas));
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(c.replicas));
  for (int r = 0; r < c.replicas; ++r) seeds[static_cast<std::size_t>(r)] = derive_seed(c.seed, r, purpose);
  parallel_for(c.replicas, c.threads, [&](int r) {
    per[static_cast<std::size_t>(r)] = coupled_replica(c, k, n, r, seeds[static_cast<std::size_t>(r)], opts);
  });
  for (auto& rows : per)
    for (auto& row : rows) out.table.rows.push_back(std::move(row));
  out.replica_seeds.insert(out.replica_seeds.end(), seeds.begin(), seeds.end());
}

inline double mean_of(const std::vector<double>& xs) {
  return xs.empty() ? kNaN : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double se_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

/// Least-squares slope and intercept of y on x.
inline std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

/// Column values per distinct t (rows sorted by replica, then t).
inline std::map<double, std::vector<double>> by_time(const Table& t, std::string_view column) {
  std::map<double, std::vector<double>> m;
  const std::size_t ct = t.col("t"), cv = t.col(column);
  for (const auto& row : t.rows) m[row[ct]].push_back(row[cv]);
  return m;
}

inline void scenario_decay(const ExperimentConfig& c, ScenarioResult& out) {
  const AngularKernel k = parse_kernel(c.kernel);
  out.table.columns = record_columns();
  run_coupled(c, k, c.n, run_options(c), purpose_of(c.scenario), out);
  auto series = by_time(out.table, "coupling_dist");
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const auto& [t, xs] : series) curve.push_back({{"t", t}, {"mean", mean_of(xs)}, {"se", se_of(xs)}});
  out.summary["mean_coupling_dist"] = curve;
}

inline void scenario_eps_sweep(const ExperimentConfig& c, ScenarioResult& out) {
  const AngularKernel base = parse_kernel(c.kernel);
  out.table.columns = record_columns();
  nlohmann::ordered_json sweep = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < c.eps_grid.size(); ++i) {
    const AngularKernel k = grad_cutoff(base, c.eps_grid[i]);
    ScenarioResult part;
    part.table.columns = record_columns();
    run_coupled(c, k, c.n, run_options(c), purpose_of(c.scenario) + i, part);
    const auto series = by_time(part.table, "coupling_dist");
    for (auto& row : part.table.rows) out.table.rows.push_back(std::move(row));
    out.replica_seeds.insert(out.replica_seeds.end(), part.replica_seeds.begin(), part.replica_seeds.end());
    sweep.push_back({{"eps", c.eps_grid[i]},
                     {"total_mass", k.total_mass()},
                     {"levy_intensity", k.levy_intensity()},
                     {"final_mean_coupling_dist", mean_of(series.rbegin()->second)},
                     {"final_se", se_of(series.rbegin()->second)}});
  }
  out.summary["eps_sweep"] = sweep;
}

}  // namespace detail

struct CreationRateEstimate {
  double slope = 0.0;           // mean (D(h) − D(0))/h
  double slope_half = 0.0;      // mean (D(h/2) − D(0))/(h/2)
  double creation = 0.0;        // mean creation at t = 0
  double paired_mean = 0.0;     // mean of slope_i + creation_i
  double paired_se = 0.0;
  double bias_bound = 0.0;      // |slope − slope_half|
  std::size_t replicas = 0;
};

/// Finite-difference slope of E⟨|U−V|²⟩_N against −E creation at t = 0, from
/// the creation_rate table (records at 0, h/2, h).
inline CreationRateEstimate creation_rate_estimate(const Table& t, double h) {
  const std::size_t ct = t.col("t"), cr = t.col("replica"), cd = t.col("coupling_dist"), cc = t.col("creation");
  std::map<int, std::array<double, 4>> rep;  // D0, Dh/2, Dh, C0
  for (const auto& row : t.rows) {
    auto& a = rep[static_cast<int>(row[cr])];
    const double tt = row[ct];
    if (tt == 0.0) {
      a[0] = row[cd];
      a[3] = row[cc];
    } else if (std::abs(tt - 0.5 * h) < 1e-12 * std::max(1.0, h)) {
      a[1] = row[cd];
    } else if (std::abs(tt - h) < 1e-12 * std::max(1.0, h)) {
      a[2] = row[cd];
    }
  }
  std::vector<double> s, sh, cr0, paired;
  for (const auto& [r, a] : rep) {
    s.push_back((a[2] - a[0]) / h);
    sh.push_back((a[1] - a[0]) / (0.5 * h));
    cr0.push_back(a[3]);
    paired.push_back(s.back() + a[3]);
  }
  CreationRateEstimate e;
  e.slope = detail::mean_of(s);
  e.slope_half = detail::mean_of(sh);
  e.creation = detail::mean_of(cr0);
  e.paired_mean = detail::mean_of(paired);
  e.paired_se = detail::se_of(paired);
  e.bias_bound = std::abs(e.slope - e.slope_half);
  e.replicas = rep.size();
  return e;
}

struct RateFit {
  double rate = 0.0;       // −d/dt log E(distance)
  double predicted = 0.0;  // λ·c_{d−1}/c_{d−3}
  double stated = 0.0;     // predicted/4, the value displayed for the N=2 remark
};

inline RateFit n2_rate_fit(const Table& t, const AngularKernel& k, int d) {
  const auto series = detail::by_time(t, "coupling_dist");
  const double m0 = detail::mean_of(series.begin()->second);
  std::vector<double> xs, ys;
  for (const auto& [tt, v] : series) {
    const double m = detail::mean_of(v);
    if (m > 0.0) {
      xs.push_back(tt);
      ys.push_back(std::log(m / m0));
    }
  }
  RateFit f;
  f.rate = xs.size() >= 2 ? -detail::linear_fit(xs, ys).first : detail::kNaN;
  f.predicted = k.levy_intensity() * wallis_ratio(d);
  f.stated = 0.25 * f.predicted;
  return f;
}

namespace detail {

inline void scenario_creation_rate(const ExperimentConfig& c, ScenarioResult& out) {
  const AngularKernel k = parse_kernel(c.kernel);
  out.table.columns = record_columns();
  RunOptions o = run_options(c);
  o.t_end = c.h;
  o.record_dt = 0.5 * c.h;
  run_coupled(c, k, c.n, o, purpose_of(c.scenario), out);
  const CreationRateEstimate e = creation_rate_estimate(out.table, c.h);
  out.summary["h"] = c.h;
  out.summary["slope"] = e.slope;
  out.summary["slope_half_step"] = e.slope_half;
  out.summary["mean_creation_t0"] = e.creation;
  out.summary["paired_mean"] = e.paired_mean;
  out.summary["paired_se"] = e.paired_se;
  out.summary["bias_bound"] = e.bias_bound;
  out.summary["within_tolerance"] = std::abs(e.paired_mean) <= 3.0 * e.paired_se + e.bias_bound;
}

inline void scenario_n2_rate(const ExperimentConfig& c, ScenarioResult& out) {
  const AngularKernel k = parse_kernel(c.kernel);
  out.table.columns = record_columns();
  run_coupled(c, k, 2, run_options(c), purpose_of(c.scenario), out);
  const RateFit f = n2_rate_fit(out.table, k, c.d);
  out.summary["fitted_rate"] = f.rate;
  out.summary["predicted_rate"] = f.predicted;
  out.summary["displayed_rate"] = f.stated;
  out.summary["relative_error"] = std::abs(f.rate - f.predicted) / f.predicted;
}

inline std::vector<double> base_row(const CoupledState& cs, const AngularKernel& k, int replica, bool moments) {
  return record_row(cs, k, replica, moments, 0);
}

inline void scenario_fuzz_fundineq(const ExperimentConfig& c, ScenarioResult& out) {
  const AngularKernel k = parse_kernel(c.kernel);
  out.table.columns = extended_columns();
  out.table.rows.resize(static_cast<std::size_t>(c.states));
  std::vector<FundIneqCheck> checks(static_cast<std::size_t>(c.states));
  std::vector<int> kinds(static_cast<std::size_t>(c.states));
  const std::uint64_t purpose = purpose_of(c.scenario);
  parallel_for(c.states, c.threads, [&](int i) {
    const FuzzCase fc = fuzz_case(i, c.n, c.d, derive_seed(c.seed, i, purpose));
    const FundIneqCheck chk = fund_ineq_check(fc.state);
    auto row = base_row(fc.state, k, i, c.moments);
    row.push_back(static_cast<double>(static_cast<int>(fc.kind)));
    row.push_back(chk.lhs);
    row.push_back(safe_ratio(chk.lhs, chk.rhs));
    out.table.rows[static_cast<std::size_t>(i)] = std::move(row);
    checks[static_cast<std::size_t>(i)] = chk;
    kinds[static_cast<std::size_t>(i)] = static_cast<int>(fc.kind);
  });
  std::size_t viol = 0, viol_sharp = 0;
  double worst = 0.0;
  for (const auto& chk : checks) {
    viol += chk.holds ? 0 : 1;
    viol_sharp += chk.holds_sharp ? 0 : 1;
    if (chk.rhs_sharp > 0.0) worst = std::max(worst, chk.lhs / chk.rhs_sharp);
  }
  out.summary["states"] = c.states;
  out.summary["violations"] = viol;
  out.summary["violations_sharp"] = viol_sharp;
  out.summary["max_lhs_over_sharp_rhs"] = worst;
  if (viol > 0) {
    out.ok = false;
    for (std::size_t i = 0; i < checks.size(); ++i)
      if (!checks[i].holds) {
        out.failure = "parallelogram inequality violated at state " + std::to_string(i) + ": lhs " +
                      fmt(checks[i].lhs) + " > rhs " + fmt(checks[i].rhs);
        break;
      }
  }
}

inline void scenario_fuzz_holder(const ExperimentConfig& c, ScenarioResult& out) {
  const AngularKernel k = parse_kernel(c.kernel);
  out.table.columns = extended_columns();
  const std::size_t per = c.alpha_grid.size() * c.p1_grid.size();
  out.table.rows.resize(static_cast<std::size_t>(c.states) * per);
  std::vector<char> holds(out.table.rows.size(), 1);
  const std::uint64_t purpose = purpose_of(c.scenario);
  parallel_for(c.states, c.threads, [&](int i) {
    const FuzzCase fc = fuzz_case(i, c.n, c.d, derive_seed(c.seed, i, purpose));
    const auto base = base_row(fc.state, k, i, c.moments);
    std::size_t slot = static_cast<std::size_t>(i) * per;
    for (double a : c.alpha_grid)
      for (double p1 : c.p1_grid) {
        const HolderCheck h = holder_check(fc.state, a, p1);
        auto row = base;
        row.push_back(a);
        row.push_back(p1);
        row.push_back(safe_ratio(h.lhs, h.rhs));
        holds[slot] = h.holds ? 1 : 0;
        out.table.rows[slot++] = std::move(row);
      }
  });
  const std::size_t viol = static_cast<std::size_t>(std::count(holds.begin(), holds.end(), 0));
  double worst = 0.0;
  const std::size_t cr = out.table.col("ratio");
  for (const auto& row : out.table.rows)
    if (std::isfinite(row[cr])) worst = std::max(worst, row[cr]);
  out.summary["checks"] = out.table.rows.size();
  out.summary["violations"] = viol;
  out.summary["max_ratio"] = worst;
  if (viol > 0) {
    out.ok = false;
    const std::size_t i = static_cast<std::size_t>(std::find(holds.begin(), holds.end(), 0) - holds.begin());
    out.failure = "Hölder bound violated at row " + std::to_string(i);
  }
}

inline nlohmann::ordered_json row_json(const CounterexampleRow& r) {
  return {{"param1", r.param1},     {"param2", r.param2},         {"m_q", r.m_q},
          {"m_q_se", r.m_q_se},     {"distance", r.distance},     {"distance_se", r.distance_se},
          {"bracket", r.bracket},   {"bracket_se", r.bracket_se}, {"ratio", r.ratio},
          {"ratio_se", r.ratio_se}, {"replicas", r.replicas}};
}

inline void scenario_counterexample(const ExperimentConfig& c, ScenarioResult& out) {
  const AngularKernel k = parse_kernel(c.kernel);
  CounterexampleOptions o;
  o.n = c.n;
  o.d = c.d;
  o.replicas = static_cast<std::size_t>(c.replicas);
  o.seed = c.seed;
  o.q = c.q;
  std::vector<CounterexampleRow> rows;
  if (c.kind == "heavy_tail") {
    rows = heavy_tail_report(c.grid, o);
  } else {
    std::vector<std::pair<double, double>> bands;
    for (std::size_t i = 0; i + 1 < c.grid.size(); i += 2) bands.emplace_back(c.grid[i], c.grid[i + 1]);
    rows = radial_report(bands, o);
  }
  out.table.columns = extended_columns();
  const double w = k.levy_intensity() * wallis_ratio(c.d);
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out.table.rows.push_back({0.0, static_cast<double>(i), static_cast<double>(c.n), static_cast<double>(c.d),
                              k.cutoff(), r.distance, w * r.bracket, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, 0.0,
                              r.param1, r.param2, r.ratio});
    table.push_back(row_json(r));
  }
  out.summary["kind"] = c.kind;
  out.summary["table"] = table;
}

inline void scenario_kappa_wishart(const ExperimentConfig& c, ScenarioResult& out) {
  const AngularKernel k = parse_kernel(c.kernel);
  out.table.columns = extended_columns();
  nlohmann::ordered_json trend = nlohmann::ordered_json::array();
  for (std::size_t gi = 0; gi < c.n_grid.size(); ++gi) {
    const int n = c.n_grid[gi];
    std::vector<ParticleState> samples(static_cast<std::size_t>(c.replicas));
    const std::uint64_t purpose = purpose_of(c.scenario) + gi;
    parallel_for(c.replicas, c.threads, [&](int r) {
      Engine g(derive_seed(c.seed, r, purpose));
      samples[static_cast<std::size_t>(r)] = init_uniform(n, c.d, g);
    });
    for (int r = 0; r < c.replicas; ++r) {
      const ParticleState& s = samples[static_cast<std::size_t>(r)];
      const double kap = kappa(s);
      out.table.rows.push_back({0.0, static_cast<double>(r), static_cast<double>(n), static_cast<double>(c.d),
                                k.cutoff(), kNaN, kNaN, kNaN, kap, kNaN, kNaN, kNaN, kNaN, kNaN, 0.0, c.p0, c.p,
                                std::pow(kap, c.p0) * p_moment_power(s, c.p).value});
    }
    const ModifiedMoment mm = modified_moment(samples, c.p0, c.p);
    trend.push_back({{"N", n}, {"value", mm.value}, {"se", mm.std_error}, {"infinite", mm.infinite}});
  }
  out.summary["p0"] = c.p0;
  out.summary["p"] = c.p;
  out.summary["modified_moment"] = trend;
}

}  // namespace detail

/// Runs a validated config. Invariant violations (conservation drift,
/// monotonicity, inequality failures) set ok = false with a message.
inline ScenarioResult run_scenario(const ExperimentConfig& c) {
  const auto diag = validate(c);
  if (!diag.empty()) throw ConfigError("invalid config: " + diag.front());
  ScenarioResult out;
  try {
    if (c.scenario == "decay") detail::scenario_decay(c, out);
    else if (c.scenario == "eps_sweep") detail::scenario_eps_sweep(c, out);
    else if (c.scenario == "creation_rate") detail::scenario_creation_rate(c, out);
    else if (c.scenario == "n2_rate") detail::scenario_n2_rate(c, out);
    else if (c.scenario == "fuzz_fundineq") detail::scenario_fuzz_fundineq(c, out);
    else if (c.scenario == "fuzz_holder") detail::scenario_fuzz_holder(c, out);
    else if (c.scenario == "counterexample") detail::scenario_counterexample(c, out);
    else if (c.scenario == "kappa_wishart") detail::scenario_kappa_wishart(c, out);
  } catch (const InvariantDrift& e) {
    out.ok = false;
    out.failure = e.what();
  } catch (const detail::ReplicaFailure& e) {
    out.ok = false;
    out.failure = e.what();
  }
  return out;
}

inline nlohmann::ordered_json metadata(const ExperimentConfig& c, const ScenarioResult& r) {
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : canonical_fields(c)) cfg[k] = v;
  nlohmann::ordered_json m;
  m["version"] = kVersion;
  m["config"] = cfg;
  m["config_hash"] = config_hash(c);
  m["master_seed"] = c.seed;
  m["seed_derivation"] = "splitmix64 counter split: derive_seed(master_seed, replica, fnv1a64(scenario))";
  m["replica_seeds"] = r.replica_seeds;
  m["renormalize"] = c.renormalize;
  m["columns"] = r.table.columns;
  m["rows"] = r.table.rows.size();
  m["ok"] = r.ok;
  if (!r.ok) m["failure"] = r.failure;
  m["summary"] = r.summary;
  return m;
}

/// Writes results.csv and meta.json into `dir`.
inline void write_artifacts(const ExperimentConfig& c, const ScenarioResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "results.csv", std::ios::binary);
    f << to_csv(r.table);
  }
  {
    std::ofstream f(dir / "meta.json", std::ios::binary);
    f << metadata(c, r).dump(2) << '\n';
  }
}

}  // namespace nanbu
