// Command-line front end. Talks to the library only through the C API.
#include "fbsde/fbsde.h"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Common {
  std::string config;
  std::string problem;
  std::string custom;
  std::string levels;
  std::optional<int> moll_level;
  std::optional<int> quad_order;
  std::string grid;
  std::string deltas;
  std::optional<std::size_t> paths;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::string x0;
  std::optional<double> s;
  std::optional<std::size_t> jobs;
  std::string out;
  bool json = false;
};

void add_common(CLI::App* app, Common& c, bool with_sim) {
  app->add_option("--config", c.config, "YAML run config");
  app->add_option("--problem", c.problem, "catalog problem name");
  app->add_option("--custom", c.custom, "YAML file with a custom problem");
  app->add_option("--levels", c.levels, "comma-separated mollification levels, e.g. 4,8,16");
  app->add_option("--moll-level", c.moll_level, "single mollification level");
  app->add_option("--moll-quad-order", c.quad_order, "Gauss-Legendre nodes per axis (default 16)");
  app->add_option("--grid", c.grid, "L,Nx,Nt (default 6,401,200)");
  app->add_option("--deltas", c.deltas, "terminal offsets (default 0.2,0.1,0.05,0.025)");
  if (with_sim) {
    app->add_option("--paths", c.paths, "Monte Carlo paths M");
    app->add_option("--steps", c.steps, "Euler steps N");
    app->add_option("--seed", c.seed, "master seed");
    app->add_option("--x0", c.x0, "initial point, comma-separated");
    app->add_option("--s", c.s, "start time");
  }
  app->add_option("--jobs", c.jobs, "worker threads");
  app->add_option("--out", c.out, "output directory");
  app->add_flag("--json", c.json, "print the JSON report instead of text");
}

int status_exit(fbsde_status st) {
  switch (st) {
    case FBSDE_OK: return 0;
    case FBSDE_ERR_CONFIG:
    case FBSDE_ERR_UNKNOWN_PROBLEM:
    case FBSDE_ERR_INVALID_ARGUMENT: return 2;
    case FBSDE_ERR_IO: return 3;
    default: return 1;
  }
}

int report_error(fbsde_status st) {
  std::cerr << "error: " << fbsde_last_error() << "\n";
  return status_exit(st);
}

class Config {
 public:
  ~Config() { fbsde_config_free(cfg_); }
  fbsde_config* get() { return cfg_; }
  fbsde_config** out() { return &cfg_; }

 private:
  fbsde_config* cfg_ = nullptr;
};

fbsde_status set(fbsde_config* c, const char* key, const std::string& v) {
  return fbsde_config_set(c, key, v.c_str());
}

int run(const Common& c, fbsde_command cmd, const std::string& checks) {
  Config cfg;
  fbsde_status st = c.config.empty() ? fbsde_config_new(cfg.out())
                                     : fbsde_config_load(c.config.c_str(), cfg.out());
  if (st != FBSDE_OK) return report_error(st);
  std::vector<std::pair<const char*, std::string>> kv;
  if (!c.problem.empty()) kv.emplace_back("problem", c.problem);
  if (!c.custom.empty()) kv.emplace_back("custom-file", c.custom);
  if (!c.levels.empty()) kv.emplace_back("levels", c.levels);
  if (c.moll_level) kv.emplace_back("levels", std::to_string(*c.moll_level));
  if (c.quad_order) kv.emplace_back("moll-quad-order", std::to_string(*c.quad_order));
  if (!c.grid.empty()) kv.emplace_back("grid", c.grid);
  if (!c.deltas.empty()) kv.emplace_back("deltas", c.deltas);
  if (c.paths) kv.emplace_back("paths", std::to_string(*c.paths));
  if (c.steps) kv.emplace_back("steps", std::to_string(*c.steps));
  if (c.seed) kv.emplace_back("seed", std::to_string(*c.seed));
  if (!c.x0.empty()) kv.emplace_back("x0", c.x0);
  if (c.s) kv.emplace_back("s", std::to_string(*c.s));
  if (c.jobs) kv.emplace_back("jobs", std::to_string(*c.jobs));
  if (!c.out.empty()) kv.emplace_back("output", c.out);
  if (!checks.empty()) kv.emplace_back("checks", checks);
  for (const auto& [k, v] : kv)
    if ((st = set(cfg.get(), k, v)) != FBSDE_OK) return report_error(st);

  int code = 0;
  char* text = nullptr;
  char* json = nullptr;
  st = fbsde_config_run(cfg.get(), cmd, &code, &text, &json);
  if (st != FBSDE_OK) return report_error(st);
  std::cout << (c.json ? json : text);
  if (c.json) std::cout << "\n";
  if (cmd != FBSDE_CMD_VERIFY && code != 2) {
    char* dir = nullptr;
    if (fbsde_config_output_dir(cfg.get(), &dir) == FBSDE_OK) {
      std::cerr << "output: " << dir << "\n";
      fbsde_string_free(dir);
    }
  }
  if (code != 0) std::cerr << "error: " << fbsde_last_error() << "\n";
  fbsde_string_free(text);
  fbsde_string_free(json);
  return code;
}

int describe(const std::string& name, const std::string& custom, bool list) {
  if (list) {
    for (std::size_t i = 0; i < fbsde_catalog_size(); ++i) std::cout << fbsde_catalog_name(i) << "\n";
    return 0;
  }
  fbsde_problem* p = nullptr;
  fbsde_status st;
  if (!custom.empty()) {
    std::FILE* f = std::fopen(custom.c_str(), "rb");
    if (!f) {
      std::cerr << "error: cannot read " << custom << "\n";
      return 2;
    }
    std::string text;
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, got);
    std::fclose(f);
    st = fbsde_problem_from_yaml(text.c_str(), &p);
  } else {
    st = fbsde_problem_builtin(name.c_str(), &p);
  }
  if (st != FBSDE_OK) return report_error(st);
  char* out = nullptr;
  st = fbsde_problem_describe(p, &out);
  fbsde_problem_free(p);
  if (st != FBSDE_OK) return report_error(st);
  std::cout << out;
  fbsde_string_free(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Solver and verification harness for coupled forward-backward SDEs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fbsde_version()));

  Common solve_opts, sim_opts, verify_opts, pipe_opts;
  auto* solve = app.add_subcommand("solve", "mollify and solve the decoupling field; writes field_n.csv");
  add_common(solve, solve_opts, false);
  auto* simulate = app.add_subcommand("simulate", "solve, then simulate paths; writes field_n.csv and ensemble_n.csv");
  add_common(simulate, sim_opts, true);
  auto* verify = app.add_subcommand("verify", "run verification checks and print the reports");
  add_common(verify, verify_opts, true);
  std::string check = "all";
  verify->add_option("--check", check, "girsanov|residual|cauchy|sobolev|malliavin|all (comma-separated)");
  auto* pipeline = app.add_subcommand("pipeline", "full run: CSV fields, ensembles, JSON reports");
  add_common(pipeline, pipe_opts, true);
  std::string pipe_checks;
  pipeline->add_option("--checks", pipe_checks, "checks to run (default from config, else residual)");
  auto* desc = app.add_subcommand("describe", "print constants, flags, R and applicable results");
  std::string name, custom;
  bool list = false;
  desc->add_option("name", name, "catalog problem name");
  desc->add_option("--problem", name, "catalog problem name");
  desc->add_option("--custom", custom, "YAML file with a custom problem");
  desc->add_flag("--list", list, "list catalog problems");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*solve) return run(solve_opts, FBSDE_CMD_SOLVE, "");
  if (*simulate) return run(sim_opts, FBSDE_CMD_SIMULATE, "");
  if (*verify) return run(verify_opts, FBSDE_CMD_VERIFY, check);
  if (*pipeline) return run(pipe_opts, FBSDE_CMD_PIPELINE, pipe_checks);
  if (*desc) {
    if (name.empty() && custom.empty() && !list) {
      std::cerr << "error: describe needs a problem name, --custom or --list\n";
      return 2;
    }
    return describe(name, custom, list);
  }
  return 2;
}
