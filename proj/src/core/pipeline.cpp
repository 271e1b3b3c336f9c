#include "core/pipeline.hpp"

#include "core/custom_problem.hpp"
#include "core/error.hpp"
#include "core/format.hpp"
#include "core/parallel.hpp"
#include "core/report_io.hpp"
#include "core/rng.hpp"
#include "core/simulate.hpp"
#include "core/verify.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>

namespace fbsde {

namespace {

[[noreturn]] void config_error(const std::string& key, const std::string& what) {
  fail(ErrorCode::Config, "config: '" + key + "' " + what);
}

template <class T>
T get(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    config_error(key, "has the wrong type");
  }
}

void check_keys(const YAML::Node& n, const std::string& where,
                const std::set<std::string>& allowed) {
  if (!n.IsMap()) config_error(where, "must be a mapping");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key))
      config_error(where.empty() ? key : where + "." + key, "is not a recognised key");
  }
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view list) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    const auto end = comma == std::string_view::npos ? list.size() : comma;
    out.push_back(trim(list.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::string> expand_checks(const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (const auto& n : names) {
    if (n.empty()) continue;
    if (n == "all") return known_checks();
    if (std::find(known_checks().begin(), known_checks().end(), n) == known_checks().end()) {
      std::string msg = "unknown check '" + n + "'; available: all";
      for (const auto& k : known_checks()) msg += ", " + k;
      fail(ErrorCode::Config, msg);
    }
    if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  }
  return out;
}

bool wants(const RunConfig& cfg, const char* check) {
  return std::find(cfg.checks.begin(), cfg.checks.end(), check) != cfg.checks.end();
}

}  // namespace

std::vector<std::string> parse_checks(std::string_view list) { return expand_checks(split(list)); }

std::vector<int> parse_levels(std::string_view list) {
  std::vector<int> out;
  for (const auto& item : split(list)) {
    int v = 0;
    const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || r.ec != std::errc{} || r.ptr != item.data() + item.size())
      fail(ErrorCode::Config, "invalid level '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<double> parse_numbers(std::string_view list) {
  std::vector<double> out;
  for (const auto& item : split(list)) {
    double v = 0.0;
    const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || r.ec != std::errc{} || r.ptr != item.data() + item.size())
      fail(ErrorCode::Config, "invalid number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

RunConfig parse_run_config(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::Config, std::string("config: YAML parse error: ") + e.what());
  }
  if (!root || root.IsNull()) fail(ErrorCode::Config, "config: missing required key 'problem'");
  check_keys(root, "",
             {"problem", "levels", "grid", "deltas", "simulation", "mollifier", "checks", "output",
              "jobs", "girsanov", "sobolev", "malliavin"});
  RunConfig cfg;
  const YAML::Node problem = root["problem"];
  if (!problem) fail(ErrorCode::Config, "config: missing required key 'problem'");
  if (problem.IsScalar()) {
    cfg.problem_name = get<std::string>(problem, "problem");
  } else {
    check_keys(problem, "problem", {"custom"});
    const YAML::Node custom = problem["custom"];
    if (!custom) fail(ErrorCode::Config, "config: missing required key 'problem.custom'");
    YAML::Emitter em;
    em << custom;
    cfg.custom_yaml = em.c_str();
  }
  if (const auto n = root["levels"]) cfg.levels = get<std::vector<int>>(n, "levels");
  if (const auto n = root["grid"]) {
    check_keys(n, "grid", {"L", "Nx", "Nt"});
    if (n["L"]) cfg.grid.L = get<double>(n["L"], "grid.L");
    if (n["Nx"]) cfg.grid.Nx = get<std::size_t>(n["Nx"], "grid.Nx");
    if (n["Nt"]) cfg.grid.Nt = get<std::size_t>(n["Nt"], "grid.Nt");
  }
  if (const auto n = root["deltas"]) cfg.grid.deltas = get<std::vector<double>>(n, "deltas");
  if (const auto n = root["simulation"]) {
    check_keys(n, "simulation", {"paths", "steps", "seed", "x0", "s"});
    if (n["paths"]) cfg.paths = get<std::size_t>(n["paths"], "simulation.paths");
    if (n["steps"]) cfg.steps = get<std::size_t>(n["steps"], "simulation.steps");
    if (n["seed"]) cfg.seed = get<std::uint64_t>(n["seed"], "simulation.seed");
    if (n["x0"]) {
      cfg.x0 = n["x0"].IsScalar() ? std::vector<double>{get<double>(n["x0"], "simulation.x0")}
                                  : get<std::vector<double>>(n["x0"], "simulation.x0");
    }
    if (n["s"]) cfg.s = get<double>(n["s"], "simulation.s");
  }
  if (const auto n = root["mollifier"]) {
    check_keys(n, "mollifier", {"quad_order", "cutoff_halfwidth"});
    if (n["quad_order"]) cfg.quad_order = get<int>(n["quad_order"], "mollifier.quad_order");
    if (n["cutoff_halfwidth"])
      cfg.cutoff_halfwidth = get<double>(n["cutoff_halfwidth"], "mollifier.cutoff_halfwidth");
  }
  if (const auto n = root["checks"]) {
    cfg.checks = n.IsScalar() ? parse_checks(get<std::string>(n, "checks"))
                              : expand_checks(get<std::vector<std::string>>(n, "checks"));
  }
  if (const auto n = root["output"]) cfg.output = get<std::string>(n, "output");
  if (const auto n = root["jobs"]) cfg.jobs = get<std::size_t>(n, "jobs");
  if (const auto n = root["girsanov"]) {
    check_keys(n, "girsanov", {"t"});
    if (n["t"]) cfg.girsanov_t = get<double>(n["t"], "girsanov.t");
  }
  if (const auto n = root["sobolev"]) {
    check_keys(n, "sobolev", {"paths", "points", "halfwidth", "p"});
    if (n["paths"]) cfg.sobolev_paths = get<std::size_t>(n["paths"], "sobolev.paths");
    if (n["points"]) cfg.sobolev_points = get<std::size_t>(n["points"], "sobolev.points");
    if (n["halfwidth"]) cfg.sobolev_halfwidth = get<double>(n["halfwidth"], "sobolev.halfwidth");
    if (n["p"]) cfg.sobolev_p = get<double>(n["p"], "sobolev.p");
  }
  if (const auto n = root["malliavin"]) {
    check_keys(n, "malliavin", {"paths", "s_points"});
    if (n["paths"]) cfg.malliavin_paths = get<std::size_t>(n["paths"], "malliavin.paths");
    if (n["s_points"]) cfg.malliavin_s_points = get<std::size_t>(n["s_points"], "malliavin.s_points");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Config, "config: cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void finalize_run_config(RunConfig& cfg) {
  if (!cfg.problem) {
    if (!cfg.custom_yaml.empty()) {
      auto p = std::make_shared<Problem>(custom_problem_from_yaml(cfg.custom_yaml));
      cfg.problem_name = p->name;
      cfg.problem = std::move(p);
    } else {
      if (cfg.problem_name.empty()) fail(ErrorCode::Config, "config: missing required key 'problem'");
      cfg.problem = std::make_shared<Problem>(builtin_problem(cfg.problem_name));
    }
  }
  const GrowthSpec& spec = cfg.problem->spec;
  if (cfg.levels.empty()) config_error("levels", "must not be empty");
  for (std::size_t i = 0; i < cfg.levels.size(); ++i) {
    if (cfg.levels[i] < 1) config_error("levels", "must be positive");
    if (i > 0 && cfg.levels[i] <= cfg.levels[i - 1]) config_error("levels", "must be strictly increasing");
  }
  if (cfg.quad_order < 1 || cfg.quad_order > 64) config_error("mollifier.quad_order", "must lie in [1, 64]");
  if (cfg.cutoff_halfwidth < 0.0) config_error("mollifier.cutoff_halfwidth", "must be >= 0");
  try {
    check_grid(cfg.grid, spec.T);
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("config: grid: ") + e.what());
  }
  if (cfg.paths < 2) config_error("simulation.paths", "must be >= 2");
  if (cfg.steps < 1) config_error("simulation.steps", "must be >= 1");
  if (cfg.x0.empty()) cfg.x0.assign(spec.d, 0.0);
  if (cfg.x0.size() != spec.d) config_error("simulation.x0", "must have d entries");
  if (!(cfg.s >= 0.0 && cfg.s < spec.T)) config_error("simulation.s", "must lie in [0, T)");
  if (cfg.output.empty()) config_error("output", "must not be empty");
  if (cfg.girsanov_t >= 0.0 && !(cfg.girsanov_t > 0.0 && cfg.girsanov_t <= spec.T))
    config_error("girsanov.t", "must lie in (0, T]");
  if (cfg.sobolev_paths < 1 || cfg.sobolev_points < 2) config_error("sobolev", "needs paths >= 1 and points >= 2");
  if (!(cfg.sobolev_halfwidth > 0.0 && cfg.sobolev_halfwidth < cfg.grid.L))
    config_error("sobolev.halfwidth", "must lie in (0, L)");
  if (cfg.malliavin_paths < 1 || cfg.malliavin_s_points < 4)
    config_error("malliavin", "needs paths >= 1 and s_points >= 4");
}

std::string canonical_config(const RunConfig& cfg) {
  Json j;
  j["problem"] = cfg.problem_name;
  j["custom"] = cfg.custom_yaml;
  j["levels"] = cfg.levels;
  j["quad_order"] = cfg.quad_order;
  j["cutoff_halfwidth"] = cfg.cutoff_halfwidth;
  j["grid"] = to_json(cfg.grid);
  j["simulation"] = {{"paths", cfg.paths}, {"steps", cfg.steps}, {"seed", cfg.seed},
                     {"x0", cfg.x0}, {"s", cfg.s}};
  j["checks"] = cfg.checks;
  j["girsanov"] = {{"t", cfg.girsanov_t}};
  j["sobolev"] = {{"paths", cfg.sobolev_paths}, {"points", cfg.sobolev_points},
                  {"halfwidth", cfg.sobolev_halfwidth}, {"p", cfg.sobolev_p}};
  j["malliavin"] = {{"paths", cfg.malliavin_paths}, {"s_points", cfg.malliavin_s_points}};
  return j.dump();
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a(canonical_config(cfg))); }

std::filesystem::path resolve_output_dir(const RunConfig& cfg) {
  const char* root = std::getenv(kOutputRootEnv);
  if (root && *root && cfg.output.is_relative()) return std::filesystem::path(root) / cfg.output;
  return cfg.output;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::UnknownProblem:
    case ErrorCode::InvalidArgument:
      return 2;
    case ErrorCode::Io:
      return 3;
    case ErrorCode::Invariant:
    case ErrorCode::Numeric:
    case ErrorCode::LinearSolve:
      return 1;
  }
  return 1;
}

namespace {

struct LevelState {
  int n = 0;
  MollifiedCoefficients mc;
  DecouplingField field;
  std::shared_ptr<PathEnsemble> ens;
  std::optional<MalliavinEnsemble> mall;
  double terminal_match = 0.0;
  double residual = 0.0;
  std::vector<std::string> failures;
  std::vector<std::string> warnings;
  std::optional<Error> error;
  bool done = false;
  Json report;
  std::string text;
};

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << content;
  out.close();
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

template <class Writer>
void write_stream(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  writer(out);
  out.close();
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

std::vector<double> sobolev_grid(const RunConfig& cfg, std::size_t d) {
  std::vector<double> axis(cfg.sobolev_points);
  const double a = cfg.sobolev_halfwidth;
  for (std::size_t k = 0; k < axis.size(); ++k)
    axis[k] = -a + 2.0 * a * static_cast<double>(k) / static_cast<double>(axis.size() - 1);
  std::vector<double> grid;
  if (d == 1) return axis;
  for (double x2 : axis)
    for (double x1 : axis) {
      grid.push_back(x1);
      grid.push_back(x2);
    }
  return grid;
}

enum class Stage { solve, simulate, verify, pipeline };

struct Stop {};  // ends a level early once its stage is complete

void run_level(const RunConfig& cfg, Stage stage, const std::string& hash, const Increments& dW,
               const std::filesystem::path& dir, std::size_t jobs, LevelState& st,
               std::ostream* log, std::mutex& log_mu) {
  const bool write_field = stage != Stage::verify;
  const bool write_ensemble = stage == Stage::simulate || stage == Stage::pipeline;
  const bool write_report = stage == Stage::pipeline;
  std::ostringstream text;
  const Problem& problem = *cfg.problem;
  const GrowthSpec& spec = problem.spec;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard<std::mutex> lock(log_mu);
    *log << "[n=" << st.n << "] " << msg << "\n";
  };
  Json report;
  report["schema"] = "fbsde.level-report/1";
  report["config_hash"] = hash;
  report["problem"] = cfg.problem_name;
  report["level"] = st.n;
  report["grid"] = to_json(cfg.grid);
  Json invariants = {{"r_bound", nullptr}, {"terminal_exact", nullptr}, {"weight_martingale", nullptr}};
  Json checks = Json::object();
  const std::string tag = std::to_string(st.n);

  try {
    st.mc = mollify_coefficients(cfg.problem, st.n, cfg.quad_order, cfg.cutoff_halfwidth);
    st.field = solve_decoupling_field(st.mc, spec, cfg.grid);
    say("field solved");
    const AprioriReport ap = check_apriori(st.field, spec, cfg.grid);
    report["apriori"] = to_json(ap);
    text << "a-priori:\n" << render_text(ap);
    invariants["r_bound"] = ap.bound_ok;
    if (!ap.bound_ok)
      st.failures.push_back("level " + tag + ": sup|v| = " + format_number(ap.sup_v) + " exceeds R = " +
                            format_number(ap.R));
    const bool texact = terminal_exact(st.field, st.mc.h);
    invariants["terminal_exact"] = texact;
    if (!texact) st.failures.push_back("level " + tag + ": terminal layer differs from h_n");
    text << "terminal layer equals h_n: " << (texact ? "yes" : "NO") << "\n";
    if (write_field)
      write_stream(dir / ("field_" + tag + ".csv"),
                   [&](std::ostream& os) { write_field_csv(st.field, os); });
    if (stage == Stage::solve) throw Stop{};

    SimulationOptions so;
    so.jobs = jobs;
    so.dW = dW;
    st.ens = std::make_shared<PathEnsemble>(
        simulate_forward(st.field, st.mc, spec, cfg.x0, cfg.s, cfg.steps, cfg.paths, cfg.seed, so));
    reconstruct_yz(*st.ens, st.field, spec, jobs);
    say("paths simulated");
    if (st.ens->exit_fraction > 0.01)
      st.warnings.push_back("level " + tag + ": " + format_number(100.0 * st.ens->exit_fraction) +
                            "% of path-steps left the PDE box");
    report["simulation"] = ensemble_summary_json(*st.ens);
    double max_y = 0.0;
    for (double y : st.ens->Y) max_y = std::max(max_y, std::abs(y));
    report["simulation"]["max_abs_y"] = max_y;
    text << "simulation: M = " << st.ens->M << ", N = " << st.ens->N
         << ", exit fraction = " << format_number(st.ens->exit_fraction)
         << ", max |b~| = " << format_number(st.ens->max_drift) << " (bound "
         << format_number(st.ens->drift_bound) << "), max |Y| = " << format_number(max_y) << "\n";
    if (write_ensemble)
      write_stream(dir / ("ensemble_" + tag + ".csv"),
                   [&](std::ostream& os) { write_ensemble_csv(*st.ens, st.field, os); });

    if (stage == Stage::simulate) throw Stop{};
    st.terminal_match = terminal_match(*st.ens, problem.coeffs.h);
    checks["terminal_match"] = {
        {"value", st.terminal_match},
        {"approach", {{"deltas", cfg.grid.deltas},
                      {"values", terminal_approach(*st.ens, problem.coeffs.h, cfg.grid.deltas)}}}};
    text << "terminal match |Y_T - h(X_T)|_2 = " << format_number(st.terminal_match) << "\n";

    if (wants(cfg, "residual")) {
      st.residual = bsde_residual(*st.ens, st.mc.g, 0.0);
      Json by_delta = Json::array();
      for (double dl : cfg.grid.deltas)
        if (dl < spec.T - cfg.s) by_delta.push_back({{"delta", dl}, {"value", bsde_residual(*st.ens, st.mc.g, dl)}});
      checks["residual"] = {{"value", st.residual}, {"by_delta", by_delta}};
      text << "bsde residual (delta = 0) = " << format_number(st.residual) << "\n";
    }
    if (wants(cfg, "girsanov")) {
      GirsanovOptions go;
      go.N = cfg.steps;
      go.jobs = jobs;
      const double t = cfg.girsanov_t > 0.0 ? cfg.girsanov_t : 0.5 * spec.T;
      const GirsanovReport gr = girsanov_law_check(st.mc, st.field, spec, cfg.x0, t, cfg.paths, cfg.seed, go);
      checks["girsanov"] = to_json(gr);
      text << "girsanov:\n" << render_text(gr);
      invariants["weight_martingale"] = gr.martingale_ok;
      if (!gr.martingale_ok)
        st.failures.push_back("level " + tag + ": Girsanov weight mean " + format_number(gr.weight_mean) +
                              " not within 5 SE of 1");
      if (!gr.reliable) st.warnings.push_back("level " + tag + ": Girsanov ESS below 100");
      say("girsanov done");
    }
    if (wants(cfg, "sobolev")) {
      SobolevOptions opts;
      opts.N = cfg.steps;
      opts.jobs = jobs;
      opts.y_check = spec.l == 1;
      opts.u_halfwidth = 0.5 * cfg.sobolev_halfwidth;
      const RegularityReport rr =
          sobolev_flow_check(st.mc, st.field, spec, cfg.s, spec.T, sobolev_grid(cfg, spec.d),
                             2.0 * cfg.grid.dx(), cfg.sobolev_paths, cfg.seed, cfg.sobolev_p, opts);
      checks["sobolev"] = to_json(rr);
      text << "sobolev flow: weighted norm = " << format_number(rr.weighted_norm)
           << (rr.y_norm ? ", Y W1,1(U) norm = " + format_number(*rr.y_norm) : std::string()) << "\n";
      say("sobolev done");
    }
    if (wants(cfg, "malliavin")) {
      SimulationOptions mo;
      mo.jobs = jobs;
      const std::size_t Mm = std::min(cfg.malliavin_paths, cfg.paths);
      auto mens = std::make_shared<PathEnsemble>(
          simulate_forward(st.field, st.mc, spec, cfg.x0, cfg.s, cfg.steps, Mm, cfg.seed, mo));
      std::vector<double> s_grid;
      for (std::size_t k = 0; k < cfg.malliavin_s_points; ++k)
        s_grid.push_back(cfg.s + (spec.T - cfg.s) * static_cast<double>(k) /
                                     static_cast<double>(cfg.malliavin_s_points));
      st.mall = simulate_malliavin(mens, st.mc, st.field, spec, s_grid, jobs);
      const MalliavinSummary ms = malliavin_regularity_summary({{&*st.mall, &st.field}},
                                                               problem.coeffs.flags, spec,
                                                               cfg.grid.deltas.front());
      checks["malliavin"] = to_json(ms);
      text << "malliavin:\n" << render_text(ms);
      say("malliavin done");
    }
  } catch (const Stop&) {
  } catch (const Error& e) {
    st.error = e;
    if (e.code() != ErrorCode::Io)
      st.failures.push_back("level " + tag + ": " + e.what());
  }
  report["checks"] = checks;
  report["invariants"] = invariants;
  report["failures"] = st.failures;
  report["warnings"] = st.warnings;
  report["error"] = st.error ? Json(st.error->what()) : Json(nullptr);
  if (st.error) text << "error: " << st.error->what() << "\n";
  st.report = report;
  st.text = text.str();
  if (st.error && st.error->code() == ErrorCode::Io) return;
  if (write_report) {
    try {
      write_file(dir / ("report_" + tag + ".json"), report.dump(2) + "\n");
    } catch (const Error& e) {
      st.error = e;
      return;
    }
  }
  st.done = !st.error;
}

}  // namespace

namespace {

PipelineResult execute(const RunConfig& input, Stage stage, std::ostream* log) {
  PipelineResult res;
  RunConfig cfg = input;
  try {
    finalize_run_config(cfg);
  } catch (const Error& e) {
    res.exit_code = exit_code_for(e.code() == ErrorCode::InvalidArgument ? ErrorCode::Config : e.code());
    res.failures.push_back(e.what());
    res.text = std::string("FAILED: ") + e.what() + "\n";
    return res;
  }
  try {
    if (stage != Stage::verify) {
      res.output_dir = resolve_output_dir(cfg);
      std::error_code ec;
      std::filesystem::create_directories(res.output_dir, ec);
      if (ec || !std::filesystem::is_directory(res.output_dir))
        fail(ErrorCode::Io, "cannot create output directory " + res.output_dir.string());
    }

    const std::string hash = config_hash(cfg);
    const GrowthSpec& spec = cfg.problem->spec;
    const double dt = (spec.T - cfg.s) / static_cast<double>(cfg.steps);
    const Increments dW = brownian_increments(cfg.paths, cfg.steps, spec.d, dt, cfg.seed,
                                              kForwardStream, cfg.jobs);

    std::vector<LevelState> states(cfg.levels.size());
    for (std::size_t i = 0; i < states.size(); ++i) states[i].n = cfg.levels[i];
    const std::size_t level_jobs = std::max<std::size_t>(1, std::min(cfg.jobs, states.size()));
    const std::size_t inner_jobs = std::max<std::size_t>(1, cfg.jobs / level_jobs);
    std::mutex log_mu;
    parallel_for(states.size(), level_jobs, [&](std::size_t lo, std::size_t hi, std::size_t) {
      for (std::size_t i = lo; i < hi; ++i)
        run_level(cfg, stage, hash, dW, res.output_dir, inner_jobs, states[i], log, log_mu);
    });

    bool io_error = false;
    for (const auto& st : states) {
      const std::string tag = std::to_string(st.n);
      if (st.error && st.error->code() == ErrorCode::Io) {
        io_error = true;
        res.failures.push_back(st.error->what());
      }
      for (const char* stem : {"field_", "ensemble_", "report_"}) {
        const std::string name = std::string(stem) + tag + (std::string(stem) == "report_" ? ".json" : ".csv");
        if (!res.output_dir.empty() && std::filesystem::exists(res.output_dir / name))
          res.files.push_back(name);
      }
      res.failures.insert(res.failures.end(), st.failures.begin(), st.failures.end());
      res.warnings.insert(res.warnings.end(), st.warnings.begin(), st.warnings.end());
    }

    Json conv;
    conv["schema"] = "fbsde.convergence/1";
    conv["config_hash"] = hash;
    conv["problem"] = cfg.problem_name;
    conv["levels"] = cfg.levels;
    Json tm = Json::array(), rs = Json::array();
    for (const auto& st : states) {
      tm.push_back(st.done ? Json(st.terminal_match) : Json(nullptr));
      rs.push_back(st.done && wants(cfg, "residual") ? Json(st.residual) : Json(nullptr));
    }
    conv["terminal_match"] = tm;
    conv["residual"] = rs;
    conv["cauchy"] = nullptr;
    conv["compactness"] = nullptr;
    std::optional<ConvergenceReport> cauchy;
    std::optional<CompactnessReport> compact;
    const bool all_done =
        (stage == Stage::verify || stage == Stage::pipeline) &&
        std::all_of(states.begin(), states.end(), [](const LevelState& s) { return s.done; });
    if (all_done && wants(cfg, "cauchy") && states.size() >= 2) {
      std::vector<LevelRun> runs;
      for (const auto& st : states) runs.push_back({st.n, &st.field, st.ens.get()});
      const double delta = std::min(0.05, 0.5 * (spec.T - cfg.s));
      std::vector<double> t_list;
      for (double f : {0.25, 0.5, 0.75}) t_list.push_back(cfg.s + f * (spec.T - cfg.s));
      cauchy = cauchy_convergence(runs, delta, t_list);
      conv["cauchy"] = to_json(*cauchy);
      if (!cauchy->finite) res.warnings.push_back("cauchy: non-finite gap");
    }
    if (all_done && wants(cfg, "malliavin")) {
      std::vector<const MalliavinEnsemble*> malls;
      for (const auto& st : states) malls.push_back(&*st.mall);
      try {
        compact = compactness_statistics(malls);
        conv["compactness"] = to_json(*compact);
      } catch (const Error& e) {
        res.warnings.push_back(std::string("compactness: ") + e.what());
      }
    }
    conv["failures"] = res.failures;
    conv["warnings"] = res.warnings;
    if (stage == Stage::pipeline) {
      write_file(res.output_dir / "convergence.json", conv.dump(2) + "\n");
      res.files.push_back("convergence.json");
    }

    std::ostringstream text;
    text << "problem " << cfg.problem_name << " (config " << hash << ")\n";
    Json levels = Json::array();
    for (const auto& st : states) {
      text << "\n== level n = " << st.n << " ==\n" << st.text;
      levels.push_back(st.report);
    }
    if (cauchy) text << "\n== cauchy gaps ==\n" << render_text(*cauchy);
    if (compact) text << "\n== compactness ==\n" << render_text(*compact);
    for (const auto& w : res.warnings) text << "warning: " << w << "\n";
    for (const auto& f : res.failures) text << "FAILED: " << f << "\n";
    res.text = text.str();
    res.json = Json{{"levels", levels}, {"convergence", conv}}.dump(2);

    if (io_error)
      res.exit_code = 3;
    else if (!res.failures.empty())
      res.exit_code = 1;
  } catch (const Error& e) {
    res.exit_code = exit_code_for(e.code());
    res.failures.push_back(e.what());
    res.text += std::string("FAILED: ") + e.what() + "\n";
  }
  return res;
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, std::ostream* log) {
  return execute(cfg, Stage::pipeline, log);
}
PipelineResult run_solve(const RunConfig& cfg, std::ostream* log) {
  return execute(cfg, Stage::solve, log);
}
PipelineResult run_simulate(const RunConfig& cfg, std::ostream* log) {
  return execute(cfg, Stage::simulate, log);
}
PipelineResult run_verify(const RunConfig& cfg, std::ostream* log) {
  return execute(cfg, Stage::verify, log);
}

}  // namespace fbsde
