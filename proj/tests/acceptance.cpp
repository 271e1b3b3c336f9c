// Acceptance suite: one PASS/FAIL line per criterion, each under its time
// budget. Exit status is the number of failed criteria.
#include "core/coefficients.hpp"
#include "core/custom_problem.hpp"
#include "core/error.hpp"
#include "core/format.hpp"
#include "core/mollifier.hpp"
#include "core/pde.hpp"
#include "core/pipeline.hpp"
#include "core/simulate.hpp"
#include "core/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

using namespace fbsde;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

std::shared_ptr<const Problem> problem(const std::string& name) {
  return std::make_shared<const Problem>(builtin_problem(name));
}

struct Solved {
  MollifiedCoefficients mc;
  DecouplingField field;
};

Solved solve(const std::shared_ptr<const Problem>& p, int n, const GridSpec& grid = {}) {
  Solved s;
  s.mc = mollify_coefficients(p, n);
  s.field = solve_decoupling_field(s.mc, p->spec, grid);
  return s;
}

double ratio(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi / *lo;
}

// 1. Heat: v(0,.) against the Gaussian-convolution oracle.
Outcome heat_oracle_check() {
  auto p = problem("heat");
  const Solved s = solve(p, 128);
  const auto& f = s.field;
  double err_v = 0.0, err_w = 0.0;
  const double h = 1e-4;
  for (std::size_t node = 0; node < f.nodes(); ++node) {
    const double x = f.coord(node, 0);
    double exact = 0.0;
    p->oracle->v_exact(0.0, {&x, 1}, {&exact, 1});
    err_v = std::max(err_v, std::abs(f.v_layer(0)[node] - exact));
    if (std::abs(x) <= 3.0) {
      double vp = 0.0, vm = 0.0;
      const double xp = x + h, xm = x - h;
      p->oracle->v_exact(0.0, {&xp, 1}, {&vp, 1});
      p->oracle->v_exact(0.0, {&xm, 1}, {&vm, 1});
      err_w = std::max(err_w, std::abs(f.w_layer(0)[node] - (vp - vm) / (2 * h)));
    }
  }
  return {err_v <= 1e-2 && err_w <= 5e-2,
          "max |v - oracle| = " + num(err_v) + " (<= 1e-2), max grad error on |x|<=3 = " + num(err_w) +
              " (<= 5e-2)"};
}

// 2. Linear ODE driver: closed form and BSDE residual.
Outcome linear_ode_check() {
  auto p = problem("linear-ode");
  const Solved s = solve(p, 8);
  const auto& f = s.field;
  const double exact = std::exp(-1.0 * p->spec.T) * 1.0;
  double err = 0.0;
  for (std::size_t node = 0; node < f.nodes(); ++node)
    err = std::max(err, std::abs(f.v_layer(0)[node] - exact));
  const std::vector<double> x0{0.0};
  PathEnsemble ens = simulate_forward(f, s.mc, p->spec, x0, 0.0, 256, 10000, 7);
  reconstruct_yz(ens, f, p->spec);
  const double res = bsde_residual(ens, s.mc.g, 0.0);
  return {err <= 2e-3 && res <= 3e-2,
          "sup |v(0,.) - c e^{-rate T}| = " + num(err) + " (<= 2e-3), residual = " + num(res) + " (<= 3e-2)"};
}

// 3. Maximum-principle bound and exact terminal layer on the whole catalog.
Outcome apriori_suite() {
  bool ok = true;
  double worst = 0.0;
  std::string bad;
  for (const auto& name : catalog_names()) {
    auto p = problem(name);
    for (int n : {4, 8, 16, 32}) {
      const Solved s = solve(p, n);
      const double sup = s.field.sup_abs_v();
      const bool bound = sup <= p->spec.R * (1.0 + 1e-6);
      const bool term = terminal_exact(s.field, s.mc.h);
      worst = std::max(worst, sup / p->spec.R);
      if (!bound || !term) {
        ok = false;
        bad += " " + name + "@" + std::to_string(n);
      }
    }
  }
  return {ok, "max sup|v|/R = " + num(worst) + " over 4 problems x n in {4,8,16,32}; terminal layers exact" +
                  (bad.empty() ? "" : "; failing:" + bad)};
}

// 4. Gradient bounds: n-uniform under B2; under B1 only away from T.
Outcome gradient_dichotomy() {
  std::vector<double> lip, sign_away;
  auto cl = problem("coupled-lip");
  auto sd = problem("sign-drift");
  for (int n : {4, 8, 16, 32}) {
    lip.push_back(solve(cl, n).field.sup_abs_w(cl->spec.T));
    sign_away.push_back(solve(sd, n).field.sup_abs_w(sd->spec.T - 0.1));
  }
  std::vector<double> terminal;
  for (std::size_t nx : {101, 201, 401}) {
    GridSpec g;
    g.Nx = nx;
    const Solved s = solve(sd, 32, g);
    double sup = 0.0;
    for (double w : s.field.w_layer(s.field.layers() - 1)) sup = std::max(sup, std::abs(w));
    terminal.push_back(sup);
  }
  const bool grows = terminal[0] < terminal[1] && terminal[1] < terminal[2];
  const bool ok = ratio(lip) <= 2.0 && ratio(sign_away) <= 2.0 && grows;
  return {ok, "coupled-lip sup|Dv| ratio = " + num(ratio(lip)) + ", sign-drift on [0,T-0.1] ratio = " +
                  num(ratio(sign_away)) + " (<= 2); sign-drift terminal sup|Dv| at Nx=101,201,401: " +
                  num(terminal[0]) + ", " + num(terminal[1]) + ", " + num(terminal[2])};
}

// 5. Strong Cauchy property on sign-drift with shared increments.
Outcome cauchy_check() {
  auto p = problem("sign-drift");
  const std::vector<int> levels{4, 8, 16, 32, 64};
  const std::size_t M = 10000, N = 200;
  const std::vector<double> x0{0.0};
  const Increments dW = brownian_increments(M, N, 1, p->spec.T / N, 11, 0);
  std::vector<Solved> solved;
  std::vector<PathEnsemble> ens;
  for (int n : levels) {
    solved.push_back(solve(p, n));
    SimulationOptions so;
    so.dW = dW;
    ens.push_back(simulate_forward(solved.back().field, solved.back().mc, p->spec, x0, 0.0, N, M, 11, so));
    reconstruct_yz(ens.back(), solved.back().field, p->spec);
  }
  std::vector<LevelRun> runs;
  for (std::size_t i = 0; i < levels.size(); ++i) runs.push_back({levels[i], &solved[i].field, &ens[i]});
  const ConvergenceReport rep = cauchy_convergence(runs, 0.05, {0.5 * p->spec.T});
  const LevelGap& g4 = rep.gaps.front();
  const LevelGap& g32 = rep.gaps.back();
  const bool ok = rep.finite && g32.v_sup < g4.v_sup && g32.x_l2[0] < g4.x_l2[0] && g32.y_h2 < g4.y_h2;
  return {ok, "gap(4) -> gap(32): v_sup " + num(g4.v_sup) + " -> " + num(g32.v_sup) + ", X_L2(T/2) " +
                  num(g4.x_l2[0]) + " -> " + num(g32.x_l2[0]) + ", Y_H2 " + num(g4.y_h2) + " -> " +
                  num(g32.y_h2)};
}

// 6. Girsanov law identity on sign-drift.
Outcome girsanov_check() {
  auto p = problem("sign-drift");
  const Solved s = solve(p, 8);
  const std::vector<double> x0{0.0};
  const GirsanovReport r = girsanov_law_check(s.mc, s.field, p->spec, x0, 0.5, 20000, 3);
  const bool ok = r.max_abs_z <= 4.0 && r.ks_statistic && *r.ks_statistic < *r.ks_critical &&
                  r.martingale_ok && r.reliable;
  return {ok, "max|z| = " + num(r.max_abs_z) + " (<= 4), KS = " + num(*r.ks_statistic) + " < " +
                  num(*r.ks_critical) + ", weight mean = " + num(r.weight_mean) + " +- " + num(r.weight_se) +
                  ", ESS = " + num(r.ess)};
}

// 7. Terminal condition Y_T = h(X_T).
Outcome terminal_check() {
  const std::vector<double> x0{0.0};
  bool ok = true;
  std::string detail;
  for (const char* name : {"coupled-lip", "heat", "linear-ode"}) {
    auto p = problem(name);
    const Solved s = solve(p, 16);
    PathEnsemble e = simulate_forward(s.field, s.mc, p->spec, x0, 0.0, 200, 10000, 5);
    reconstruct_yz(e, s.field, p->spec);
    const double tm = terminal_match(e, p->coeffs.h);
    const double bound = 2.0 * p->spec.k3 * s.field.dx();
    ok = ok && tm <= bound;
    detail += std::string(name) + " " + num(tm) + " (<= " + num(bound) + "), ";
  }
  auto sd = problem("sign-drift");
  const Increments dW = brownian_increments(10000, 200, 1, sd->spec.T / 200, 5, 0);
  std::vector<double> seq;
  for (int n : {4, 8, 16, 32}) {
    const Solved s = solve(sd, n);
    SimulationOptions so;
    so.dW = dW;
    PathEnsemble e = simulate_forward(s.field, s.mc, sd->spec, x0, 0.0, 200, 10000, 5, so);
    reconstruct_yz(e, s.field, sd->spec);
    seq.push_back(terminal_match(e, sd->coeffs.h));
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < seq.size(); ++i) decreasing = decreasing && seq[i] < seq[i - 1];
  ok = ok && decreasing;
  detail += "sign-drift n=4..32: " + num(seq[0]) + ", " + num(seq[1]) + ", " + num(seq[2]) + ", " + num(seq[3]);
  return {ok, detail};
}

// 8. Malliavin derivative bounds on coupled-lip.
Outcome malliavin_check() {
  auto p = problem("coupled-lip");
  const std::vector<double> x0{0.0};
  std::vector<double> sups;
  std::vector<Solved> solved;
  std::vector<MalliavinEnsemble> malls;
  std::vector<double> s_grid;
  for (int k = 0; k < 8; ++k) s_grid.push_back(p->spec.T * k / 8.0);
  for (int n : {4, 8, 16, 32}) {
    solved.push_back(solve(p, n));
    auto e = std::make_shared<PathEnsemble>(
        simulate_forward(solved.back().field, solved.back().mc, p->spec, x0, 0.0, 128, 4000, 9));
    malls.push_back(simulate_malliavin(e, solved.back().mc, solved.back().field, p->spec, s_grid));
    sups.push_back(malls.back().sup_mean_square());
  }
  std::vector<const MalliavinEnsemble*> ptrs;
  for (const auto& m : malls) ptrs.push_back(&m);
  const CompactnessReport cr = compactness_statistics(ptrs);
  bool alpha_ok = true;
  std::string alphas;
  for (const auto& f : cr.fits) {
    alpha_ok = alpha_ok && !f.zero_modulus && f.lags >= 2 && f.alpha > 0.0;
    alphas += (alphas.empty() ? "" : ", ") + num(f.alpha);
  }
  return {ratio(sups) <= 2.0 && alpha_ok,
          "sup E|D X|^2 ratio across n = " + num(ratio(sups)) + " (<= 2); alpha_n = " + alphas + " (> 0)"};
}

// 9. Sobolev flow.
Outcome sobolev_check() {
  std::vector<double> grid;
  for (int k = -10; k <= 10; ++k) grid.push_back(0.2 * k);
  // b = 0: identity flow on every path.
  auto heat = problem("heat");
  const Solved hs = solve(heat, 8);
  const RegularityReport id = sobolev_flow_check(hs.mc, hs.field, heat->spec, 0.0, 1.0, grid,
                                                 2.0 * hs.field.dx(), 200, 1, 2.0);
  // sign-drift weighted norm across n.
  auto sd = problem("sign-drift");
  std::vector<double> norms;
  for (int n : {8, 16, 32}) {
    const Solved s = solve(sd, n);
    const RegularityReport r = sobolev_flow_check(s.mc, s.field, sd->spec, 0.0, 1.0, grid,
                                                  2.0 * s.field.dx(), 500, 1, 2.0);
    norms.push_back(r.weighted_norm);
  }
  // l = 2: the Y-check must refuse.
  bool refused = false;
  std::string msg;
  try {
    const Problem two = custom_problem_from_yaml(R"(
name: two-component
d: 1
l: 2
T: 1.0
k1: 0
k2: 0
k3: 2
flags: [B1, B2, A5, A6]
b: zero
g: zero
h:
  - constant: 1.0
  - constant: 0.5
)");
    auto tp = std::make_shared<const Problem>(two);
    const Solved ts = solve(tp, 4);
    SobolevOptions opts;
    opts.y_check = true;
    (void)sobolev_flow_check(ts.mc, ts.field, tp->spec, 0.0, 1.0, grid, 2.0 * ts.field.dx(), 10, 1, 2.0,
                             opts);
  } catch (const Error& e) {
    refused = e.code() == ErrorCode::InvalidArgument && std::string(e.what()).find("l = 1") != std::string::npos;
    msg = e.what();
  }
  const bool ok = id.identity_exact && ratio(norms) <= 2.0 && refused;
  return {ok, std::string("identity flow exact: ") + (id.identity_exact ? "yes" : "no") +
                  "; sign-drift weighted norms n=8,16,32: " + num(norms[0]) + ", " + num(norms[1]) + ", " +
                  num(norms[2]) + " (ratio " + num(ratio(norms)) + " <= 2); l=2 Y-check refused: " +
                  (refused ? "yes" : "no (" + msg + ")")};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 10. Two identical pipeline runs give bitwise-identical CSVs.
Outcome reproducibility_check() {
  const auto base = std::filesystem::temp_directory_path() /
                    ("fbsde-accept-" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
  RunConfig cfg;
  cfg.problem_name = "sign-drift";
  cfg.levels = {4, 8};
  cfg.paths = 2000;
  cfg.steps = 100;
  cfg.seed = 42;
  cfg.checks = {"residual", "cauchy"};
  std::vector<std::string> names;
  bool ok = true;
  for (const char* run : {"a", "b"}) {
    cfg.output = base / run;
    const PipelineResult r = run_pipeline(cfg);
    ok = ok && r.exit_code == 0;
    if (names.empty()) names = r.files;
  }
  std::size_t csvs = 0;
  for (const auto& n : names) {
    if (n.size() < 4 || n.substr(n.size() - 4) != ".csv") continue;
    ++csvs;
    const std::string a = slurp(base / "a" / n), b = slurp(base / "b" / n);
    ok = ok && !a.empty() && a == b;
  }
  std::filesystem::remove_all(base);
  ok = ok && csvs == 4;
  return {ok, std::to_string(csvs) + " CSV files compared byte for byte"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "heat oracle equivalence", 10, heat_oracle_check},
      {2, "linear-ode oracle and residual", 30, linear_ode_check},
      {3, "a-priori bound suite", 60, apriori_suite},
      {4, "gradient-bound dichotomy", 60, gradient_dichotomy},
      {5, "strong Cauchy convergence", 120, cauchy_check},
      {6, "Girsanov law identity", 60, girsanov_check},
      {7, "terminal condition", 60, terminal_check},
      {8, "Malliavin uniformity", 60, malliavin_check},
      {9, "Sobolev flow", 60, sobolev_check},
      {10, "reproducibility", 60, reproducibility_check},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ["
              << num(secs) << " s, budget " << c.budget_s << " s" << (in_time ? "" : ", OVER BUDGET") << "]"
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed;
}
