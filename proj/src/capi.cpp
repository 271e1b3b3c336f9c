#include "fbsde/fbsde.h"

#include "core/coefficients.hpp"
#include "core/custom_problem.hpp"
#include "core/error.hpp"
#include "core/format.hpp"
#include "core/mollifier.hpp"
#include "core/pde.hpp"
#include "core/pipeline.hpp"
#include "core/simulate.hpp"
#include "core/verify.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

struct FieldState {
  std::shared_ptr<const fbsde::Problem> problem;
  fbsde::MollifiedCoefficients mc;
  fbsde::DecouplingField field;
};

struct fbsde_problem {
  std::shared_ptr<const fbsde::Problem> problem;
};

struct fbsde_field {
  std::shared_ptr<const FieldState> state;
};

struct fbsde_ensemble {
  std::shared_ptr<const FieldState> state;
  fbsde::PathEnsemble ens;
};

struct fbsde_config {
  fbsde::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

fbsde_status to_status(fbsde::ErrorCode code) {
  using fbsde::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return FBSDE_ERR_INVALID_ARGUMENT;
    case ErrorCode::UnknownProblem: return FBSDE_ERR_UNKNOWN_PROBLEM;
    case ErrorCode::Config: return FBSDE_ERR_CONFIG;
    case ErrorCode::Io: return FBSDE_ERR_IO;
    case ErrorCode::Invariant: return FBSDE_ERR_INVARIANT;
    case ErrorCode::Numeric: return FBSDE_ERR_NUMERIC;
    case ErrorCode::LinearSolve: return FBSDE_ERR_LINEAR_SOLVE;
  }
  return FBSDE_ERR_INTERNAL;
}

template <class F>
fbsde_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return FBSDE_OK;
  } catch (const fbsde::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FBSDE_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FBSDE_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return FBSDE_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) fbsde::fail(fbsde::ErrorCode::InvalidArgument, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) fbsde::fail(fbsde::ErrorCode::Config, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  const auto nums = fbsde::parse_numbers(v);
  if (nums.size() != 1 || nums[0] < 0 || nums[0] != static_cast<double>(static_cast<std::size_t>(nums[0])))
    fbsde::fail(fbsde::ErrorCode::Config, "'" + key + "' expects a nonnegative integer, got '" + v + "'");
  return static_cast<std::size_t>(nums[0]);
}

template <class Get>
fbsde_status copy_row(const fbsde_ensemble* e, size_t m, size_t i, double* out, Get get) {
  return guarded([&] {
    need(e, "ensemble");
    need(out, "out");
    fbsde::require(m < e->ens.M && i <= e->ens.N, "path or step index out of range");
    const auto row = get(e->ens, m, i);
    std::copy(row.begin(), row.end(), out);
  });
}

}  // namespace

extern "C" {

const char* fbsde_version(void) { return "0.1.0"; }

const char* fbsde_last_error(void) { return g_last_error.c_str(); }

const char* fbsde_status_name(fbsde_status s) {
  switch (s) {
    case FBSDE_OK: return "ok";
    case FBSDE_ERR_INVALID_ARGUMENT: return "invalid argument";
    case FBSDE_ERR_UNKNOWN_PROBLEM: return "unknown problem";
    case FBSDE_ERR_CONFIG: return "config error";
    case FBSDE_ERR_IO: return "i/o error";
    case FBSDE_ERR_INVARIANT: return "invariant violated";
    case FBSDE_ERR_NUMERIC: return "numerical failure";
    case FBSDE_ERR_LINEAR_SOLVE: return "linear solve failed";
    case FBSDE_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void fbsde_string_free(char* s) { std::free(s); }

size_t fbsde_catalog_size(void) { return fbsde::catalog_names().size(); }

const char* fbsde_catalog_name(size_t i) {
  static const std::vector<std::string> names = fbsde::catalog_names();
  return i < names.size() ? names[i].c_str() : nullptr;
}

fbsde_status fbsde_problem_builtin(const char* name, fbsde_problem** out) {
  return guarded([&] {
    need(name, "name");
    need(out, "out");
    *out = nullptr;
    auto p = std::make_shared<const fbsde::Problem>(fbsde::builtin_problem(name));
    *out = new fbsde_problem{std::move(p)};
  });
}

fbsde_status fbsde_problem_from_yaml(const char* yaml, fbsde_problem** out) {
  return guarded([&] {
    need(yaml, "yaml");
    need(out, "out");
    *out = nullptr;
    auto p = std::make_shared<const fbsde::Problem>(fbsde::custom_problem_from_yaml(yaml));
    *out = new fbsde_problem{std::move(p)};
  });
}

void fbsde_problem_free(fbsde_problem* p) { delete p; }

fbsde_status fbsde_problem_get_info(const fbsde_problem* p, fbsde_problem_info* out) {
  return guarded([&] {
    need(p, "problem");
    need(out, "out");
    const auto& s = p->problem->spec;
    const auto& f = p->problem->coeffs.flags;
    *out = fbsde_problem_info{s.d,      s.l,      s.T,         s.lambda,    s.k1,
                              s.k2,     s.k3,     s.R,         f.b1 ? 1 : 0, f.b2 ? 1 : 0,
                              f.g_no_z ? 1 : 0, f.g_no_x ? 1 : 0, p->problem->oracle ? 1 : 0};
  });
}

fbsde_status fbsde_problem_describe(const fbsde_problem* p, char** out) {
  return guarded([&] {
    need(p, "problem");
    need(out, "out");
    *out = dup_string(fbsde::describe_problem(*p->problem));
  });
}

fbsde_status fbsde_problem_validate(const fbsde_problem* p, size_t budget, uint64_t seed, int* pass) {
  return guarded([&] {
    need(p, "problem");
    need(pass, "pass");
    const auto rep = fbsde::validate_growth(p->problem->coeffs, p->problem->spec, budget, seed);
    *pass = rep.pass ? 1 : 0;
  });
}

fbsde_status fbsde_problem_oracle(const fbsde_problem* p, double t, const double* x, double* v) {
  return guarded([&] {
    need(p, "problem");
    need(x, "x");
    need(v, "v");
    const auto& pr = *p->problem;
    if (!pr.oracle) fbsde::fail(fbsde::ErrorCode::InvalidArgument, "problem '" + pr.name + "' has no oracle");
    pr.oracle->v_exact(t, {x, pr.spec.d}, {v, pr.spec.l});
  });
}

fbsde_grid fbsde_grid_default(void) {
  const fbsde::GridSpec g;
  return fbsde_grid{g.L, g.Nx, g.Nt};
}

fbsde_status fbsde_solve(const fbsde_problem* p, int level, int quad_order, const fbsde_grid* grid,
                         fbsde_field** out) {
  return guarded([&] {
    need(p, "problem");
    need(out, "out");
    *out = nullptr;
    fbsde::require(level >= 1, "level must be >= 1");
    fbsde::require(quad_order >= 1 && quad_order <= 64, "quad_order must lie in [1, 64]");
    fbsde::GridSpec g;
    if (grid) {
      g.L = grid->L;
      g.Nx = grid->Nx;
      g.Nt = grid->Nt;
    }
    auto st = std::make_shared<FieldState>();
    st->problem = p->problem;
    st->mc = fbsde::mollify_coefficients(p->problem, level, quad_order);
    st->field = fbsde::solve_decoupling_field(st->mc, p->problem->spec, g);
    *out = new fbsde_field{std::move(st)};
  });
}

void fbsde_field_free(fbsde_field* f) { delete f; }

fbsde_status fbsde_field_value(const fbsde_field* f, double t, const double* x, double* v) {
  return guarded([&] {
    need(f, "field");
    need(x, "x");
    need(v, "v");
    const auto& fl = f->state->field;
    fl.value(t, {x, fl.d()}, {v, fl.l()});
  });
}

fbsde_status fbsde_field_gradient(const fbsde_field* f, double t, const double* x, double* w) {
  return guarded([&] {
    need(f, "field");
    need(x, "x");
    need(w, "w");
    const auto& fl = f->state->field;
    fl.gradient_at(t, {x, fl.d()}, {w, fl.l() * fl.d()});
  });
}

fbsde_status fbsde_field_apriori(const fbsde_field* f, fbsde_apriori* out) {
  return guarded([&] {
    need(f, "field");
    need(out, "out");
    const auto& st = *f->state;
    const auto rep = fbsde::check_apriori(st.field, st.problem->spec, st.field.grid());
    *out = fbsde_apriori{rep.sup_v,          rep.R,           rep.bound_ok ? 1 : 0,
                         fbsde::terminal_exact(st.field, st.mc.h) ? 1 : 0,
                         rep.holder_alpha,   rep.holder_c};
  });
}

fbsde_status fbsde_field_write_csv(const fbsde_field* f, const char* path) {
  return guarded([&] {
    need(f, "field");
    need(path, "path");
    std::ofstream os(path, std::ios::binary);
    if (!os) fbsde::fail(fbsde::ErrorCode::Io, std::string("cannot write ") + path);
    fbsde::write_field_csv(f->state->field, os);
    if (!os) fbsde::fail(fbsde::ErrorCode::Io, std::string("write failed for ") + path);
  });
}

fbsde_status fbsde_simulate(const fbsde_field* f, const fbsde_sim_params* params, fbsde_ensemble** out) {
  return guarded([&] {
    need(f, "field");
    need(params, "params");
    need(out, "out");
    *out = nullptr;
    const auto& st = *f->state;
    const auto& spec = st.problem->spec;
    std::vector<double> x0(spec.d, 0.0);
    if (params->x0) x0.assign(params->x0, params->x0 + spec.d);
    fbsde::SimulationOptions opts;
    opts.jobs = params->jobs;
    auto e = std::make_unique<fbsde_ensemble>();
    e->state = f->state;
    e->ens = fbsde::simulate_forward(st.field, st.mc, spec, x0, params->s, params->steps, params->paths,
                                     params->seed, opts);
    fbsde::reconstruct_yz(e->ens, st.field, spec, params->jobs);
    *out = e.release();
  });
}

void fbsde_ensemble_free(fbsde_ensemble* e) { delete e; }

fbsde_status fbsde_ensemble_shape(const fbsde_ensemble* e, size_t* M, size_t* N, size_t* d, size_t* l) {
  return guarded([&] {
    need(e, "ensemble");
    if (M) *M = e->ens.M;
    if (N) *N = e->ens.N;
    if (d) *d = e->ens.d;
    if (l) *l = e->ens.l;
  });
}

fbsde_status fbsde_ensemble_x(const fbsde_ensemble* e, size_t m, size_t i, double* out) {
  return copy_row(e, m, i, out, [](const fbsde::PathEnsemble& p, size_t a, size_t b) { return p.x(a, b); });
}

fbsde_status fbsde_ensemble_y(const fbsde_ensemble* e, size_t m, size_t i, double* out) {
  return copy_row(e, m, i, out, [](const fbsde::PathEnsemble& p, size_t a, size_t b) { return p.y(a, b); });
}

fbsde_status fbsde_ensemble_z(const fbsde_ensemble* e, size_t m, size_t i, double* out) {
  return copy_row(e, m, i, out, [](const fbsde::PathEnsemble& p, size_t a, size_t b) { return p.z(a, b); });
}

fbsde_status fbsde_ensemble_get_stats(const fbsde_ensemble* e, fbsde_ensemble_stats* out) {
  return guarded([&] {
    need(e, "ensemble");
    need(out, "out");
    *out = fbsde_ensemble_stats{e->ens.exit_fraction, e->ens.max_drift, e->ens.drift_bound};
  });
}

fbsde_status fbsde_ensemble_write_csv(const fbsde_ensemble* e, const char* path) {
  return guarded([&] {
    need(e, "ensemble");
    need(path, "path");
    std::ofstream os(path, std::ios::binary);
    if (!os) fbsde::fail(fbsde::ErrorCode::Io, std::string("cannot write ") + path);
    fbsde::write_ensemble_csv(e->ens, e->state->field, os);
    if (!os) fbsde::fail(fbsde::ErrorCode::Io, std::string("write failed for ") + path);
  });
}

fbsde_status fbsde_bsde_residual(const fbsde_ensemble* e, double delta, double* out) {
  return guarded([&] {
    need(e, "ensemble");
    need(out, "out");
    *out = fbsde::bsde_residual(e->ens, e->state->mc.g, delta);
  });
}

fbsde_status fbsde_terminal_match(const fbsde_ensemble* e, double* out) {
  return guarded([&] {
    need(e, "ensemble");
    need(out, "out");
    *out = fbsde::terminal_match(e->ens, e->state->problem->coeffs.h);
  });
}

fbsde_status fbsde_config_new(fbsde_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new fbsde_config{};
  });
}

fbsde_status fbsde_config_load(const char* path, fbsde_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new fbsde_config{fbsde::load_run_config(path)};
  });
}

fbsde_status fbsde_config_parse(const char* yaml, fbsde_config** out) {
  return guarded([&] {
    need(yaml, "yaml");
    need(out, "out");
    *out = nullptr;
    *out = new fbsde_config{fbsde::parse_run_config(yaml)};
  });
}

void fbsde_config_free(fbsde_config* c) { delete c; }

fbsde_status fbsde_config_set(fbsde_config* c, const char* key, const char* value) {
  return guarded([&] {
    need(c, "config");
    need(key, "key");
    need(value, "value");
    auto& cfg = c->cfg;
    const std::string k = key, v = value;
    cfg.problem.reset();
    if (k == "problem") {
      cfg.problem_name = v;
      cfg.custom_yaml.clear();
    } else if (k == "custom-file") {
      cfg.custom_yaml = read_text(v);
      cfg.problem_name.clear();
    } else if (k == "levels") {
      cfg.levels = fbsde::parse_levels(v);
    } else if (k == "grid") {
      const auto g = fbsde::parse_numbers(v);
      if (g.size() != 3) fbsde::fail(fbsde::ErrorCode::Config, "'grid' expects L,Nx,Nt");
      cfg.grid.L = g[0];
      cfg.grid.Nx = parse_size("grid Nx", fbsde::format_number(g[1]));
      cfg.grid.Nt = parse_size("grid Nt", fbsde::format_number(g[2]));
    } else if (k == "deltas") {
      cfg.grid.deltas = fbsde::parse_numbers(v);
    } else if (k == "paths") {
      cfg.paths = parse_size(k, v);
    } else if (k == "steps") {
      cfg.steps = parse_size(k, v);
    } else if (k == "seed") {
      const char* end = v.c_str() + v.size();
      std::uint64_t s = 0;
      const auto r = std::from_chars(v.c_str(), end, s);
      if (v.empty() || r.ec != std::errc{} || r.ptr != end)
        fbsde::fail(fbsde::ErrorCode::Config, "'seed' expects an unsigned integer, got '" + v + "'");
      cfg.seed = s;
    } else if (k == "x0") {
      cfg.x0 = fbsde::parse_numbers(v);
    } else if (k == "s") {
      cfg.s = fbsde::parse_numbers(v).at(0);
    } else if (k == "checks") {
      cfg.checks = fbsde::parse_checks(v);
    } else if (k == "output") {
      cfg.output = v;
    } else if (k == "jobs") {
      cfg.jobs = parse_size(k, v);
    } else if (k == "moll-quad-order") {
      cfg.quad_order = static_cast<int>(parse_size(k, v));
    } else {
      fbsde::fail(fbsde::ErrorCode::Config, "unknown config key '" + k + "'");
    }
  });
}

fbsde_status fbsde_config_output_dir(const fbsde_config* c, char** out) {
  return guarded([&] {
    need(c, "config");
    need(out, "out");
    *out = dup_string(fbsde::resolve_output_dir(c->cfg).string());
  });
}

fbsde_status fbsde_config_hash(const fbsde_config* c, char** out) {
  return guarded([&] {
    need(c, "config");
    need(out, "out");
    fbsde::RunConfig cfg = c->cfg;
    fbsde::finalize_run_config(cfg);
    *out = dup_string(fbsde::config_hash(cfg));
  });
}

fbsde_status fbsde_config_run(const fbsde_config* c, fbsde_command cmd, int* exit_code, char** text,
                              char** json) {
  return guarded([&] {
    need(c, "config");
    need(exit_code, "exit_code");
    if (text) *text = nullptr;
    if (json) *json = nullptr;
    fbsde::PipelineResult res;
    switch (cmd) {
      case FBSDE_CMD_SOLVE: res = fbsde::run_solve(c->cfg); break;
      case FBSDE_CMD_SIMULATE: res = fbsde::run_simulate(c->cfg); break;
      case FBSDE_CMD_VERIFY: res = fbsde::run_verify(c->cfg); break;
      case FBSDE_CMD_PIPELINE: res = fbsde::run_pipeline(c->cfg); break;
      default: fbsde::fail(fbsde::ErrorCode::InvalidArgument, "unknown command");
    }
    *exit_code = res.exit_code;
    if (!res.failures.empty()) g_last_error = res.failures.front();
    if (text) *text = dup_string(res.text);
    if (json) *json = dup_string(res.json);
  });
}

}  // extern "C"
