#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/error.hpp"
#include "core/simulate.hpp"
#include "core/stats.hpp"
#include "core/verify.hpp"
#include "support.hpp"

#include <algorithm>

using namespace fbsde;
using namespace fbsde::testing;

namespace {

struct Setup {
  std::shared_ptr<const Problem> p;
  MollifiedCoefficients mc;
  DecouplingField field;
};

Setup setup(std::shared_ptr<const Problem> p, int n = 4) {
  Setup s{p, mollify_coefficients(p, n), {}};
  s.field = solve_decoupling_field(s.mc, p->spec, small_grid());
  return s;
}

// Two-sample KS by direct evaluation of both CDFs at every sample point.
double brute_ks(std::vector<double> a, std::vector<double> b) {
  std::vector<double> pts = a;
  pts.insert(pts.end(), b.begin(), b.end());
  double best = 0.0;
  for (double x : pts) {
    const double fa = std::count_if(a.begin(), a.end(), [&](double v) { return v <= x; }) / double(a.size());
    const double fb = std::count_if(b.begin(), b.end(), [&](double v) { return v <= x; }) / double(b.size());
    best = std::max(best, std::abs(fa - fb));
  }
  return best;
}

}  // namespace

TEST_CASE("weighted statistics reduce to plain ones for equal weights") {
  const std::vector<double> f{1.0, 2.0, 4.0, 7.0};
  const std::vector<double> w(4, 3.0);
  const Estimate plain = sample_mean(f);
  const Estimate weighted = weighted_mean(f, w);
  CHECK(plain.mean == doctest::Approx(3.5));
  CHECK(weighted.mean == doctest::Approx(3.5));
  CHECK(effective_sample_size(w) == doctest::Approx(4.0));
  const std::vector<double> skew{1.0, 0.0, 0.0, 0.0};
  CHECK(effective_sample_size(skew) == doctest::Approx(1.0));
}

TEST_CASE("weighted KS agrees with a brute-force two-sample statistic") {
  const std::vector<double> a{0.1, -0.4, 1.3, 0.7, 0.2, -1.1};
  const std::vector<double> b{0.0, 0.5, -0.2, 2.0, 0.9};
  const std::vector<double> ones(a.size(), 1.0);
  CHECK(weighted_ks_statistic(a, ones, b) == doctest::Approx(brute_ks(a, b)));
}

TEST_CASE("KS critical value") {
  const double c = std::sqrt(-0.5 * std::log(0.5e-3));
  CHECK(ks_critical_value(1e-3, 100, 400) == doctest::Approx(c * std::sqrt(500.0 / 40000.0)));
}

TEST_CASE("least squares on an exact line") {
  const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
  const LineFit f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
}

TEST_CASE("linear-ode BSDE residual and terminal match") {
  const Setup s = setup(builtin("linear-ode"));
  const std::vector<double> x0{0.0};
  PathEnsemble e = simulate_forward(s.field, s.mc, s.p->spec, x0, 0.0, 100, 500, 1);
  reconstruct_yz(e, s.field, s.p->spec);
  CHECK(bsde_residual(e, s.mc.g, 0.0) < 1e-2);
  CHECK(terminal_match(e, s.p->coeffs.h) == doctest::Approx(0.0).epsilon(1e-12));
  const auto approach = terminal_approach(e, s.p->coeffs.h, {0.2, 0.1});
  REQUIRE(approach.size() == 2);
  CHECK(approach[1] < approach[0]);
}

TEST_CASE("BSDE residual needs reconstructed Y and Z") {
  const Setup s = setup(builtin("heat"));
  const std::vector<double> x0{0.0};
  const PathEnsemble e = simulate_forward(s.field, s.mc, s.p->spec, x0, 0.0, 10, 10, 1);
  CHECK_THROWS_AS(bsde_residual(e, s.mc.g, 0.0), Error);
}

TEST_CASE("Girsanov reweighting under a constant drift") {
  const Setup s = setup(shared(custom_problem_from_yaml(kConstantDrift)));
  const std::vector<double> x0{0.0};
  const GirsanovReport r = girsanov_law_check(s.mc, s.field, s.p->spec, x0, 0.5, 20000, 4,
                                              GirsanovOptions{50, 4});
  CHECK(r.max_abs_z < 4.0);
  CHECK(r.martingale_ok);
  CHECK(r.weights_nonnegative);
  CHECK(r.reliable);
  REQUIRE(r.ks_statistic);
  CHECK(*r.ks_statistic < *r.ks_critical);
  REQUIRE(!r.moments.empty());
  CHECK(r.moments[0].weighted == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("Girsanov weights are identically one without drift") {
  const Setup s = setup(builtin("heat"));
  const std::vector<double> x0{0.0};
  const GirsanovReport r = girsanov_law_check(s.mc, s.field, s.p->spec, x0, 0.5, 2000, 4,
                                              GirsanovOptions{20, 1});
  CHECK(r.weight_mean == 1.0);
  CHECK(r.ess == doctest::Approx(2000.0));
}

TEST_CASE("flow derivative of a translation is the identity") {
  for (const char* yaml : {static_cast<const char*>(nullptr), kConstantDrift}) {
    const Setup s = setup(yaml ? shared(custom_problem_from_yaml(yaml)) : builtin("heat"));
    const double x = 0.4;
    const auto d = flow_derivative(s.mc, s.field, s.p->spec, 0.0, 1.0, {&x, 1}, 2.0 * s.field.dx(), 100, 3, 50);
    REQUIRE(d.size() == 1);
    CHECK(d[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("Sobolev flow check on the driftless problem") {
  const Setup s = setup(builtin("heat"));
  std::vector<double> grid;
  for (int k = -5; k <= 5; ++k) grid.push_back(0.2 * k);
  SobolevOptions opts;
  opts.y_check = true;
  const RegularityReport r =
      sobolev_flow_check(s.mc, s.field, s.p->spec, 0.0, 1.0, grid, 2.0 * s.field.dx(), 200, 2, 2.0, opts);
  CHECK(r.identity_exact);
  REQUIRE(r.points.size() == grid.size());
  // E|x + W_1|^2 = x^2 + 1 and the derivative is 1.
  double ref = 0.0;
  for (double x : grid) ref += (x * x + 1.0 + 1.0) * std::exp(-x * x) * 0.2;
  CHECK(r.weighted_norm == doctest::Approx(ref).epsilon(0.1));
  REQUIRE(r.y_norm);
  CHECK(*r.y_norm > 0.0);
}

TEST_CASE("Sobolev flow argument checks") {
  const Setup s = setup(builtin("heat"));
  const std::vector<double> grid{-0.2, 0.0, 0.2};
  CHECK_THROWS_AS(sobolev_flow_check(s.mc, s.field, s.p->spec, 0.0, 1.0, grid, 0.5 * s.field.dx(), 10, 1, 2.0),
                  Error);
  const std::vector<double> far{-20.0, 0.0, 20.0};
  CHECK_THROWS_AS(sobolev_flow_check(s.mc, s.field, s.p->spec, 0.0, 1.0, far, 2.0 * s.field.dx(), 10, 1, 2.0),
                  Error);
}

TEST_CASE("Cauchy gaps vanish between identical levels and need shared seeds") {
  const Setup s = setup(builtin("sign-drift"), 8);
  const std::vector<double> x0{0.0};
  PathEnsemble a = simulate_forward(s.field, s.mc, s.p->spec, x0, 0.0, 50, 200, 6);
  reconstruct_yz(a, s.field, s.p->spec);
  PathEnsemble b = a;
  const ConvergenceReport r = cauchy_convergence({{8, &s.field, &a}, {8, &s.field, &b}}, 0.05, {0.5});
  REQUIRE(r.gaps.size() == 1);
  CHECK(r.gaps[0].v_sup == 0.0);
  CHECK(r.gaps[0].x_l2[0] == 0.0);
  CHECK(r.gaps[0].y_h2 == 0.0);
  CHECK(r.gaps[0].stoch_int == 0.0);
  PathEnsemble c = simulate_forward(s.field, s.mc, s.p->spec, x0, 0.0, 50, 200, 7);
  reconstruct_yz(c, s.field, s.p->spec);
  CHECK_THROWS_AS(cauchy_convergence({{8, &s.field, &a}, {8, &s.field, &c}}, 0.05, {0.5}), Error);
}

TEST_CASE("Malliavin summary follows the structural flags") {
  const Setup s = setup(builtin("sign-drift"), 8);
  const std::vector<double> x0{0.0};
  auto e = std::make_shared<PathEnsemble>(simulate_forward(s.field, s.mc, s.p->spec, x0, 0.0, 40, 100, 3));
  const MalliavinEnsemble mall = simulate_malliavin(e, s.mc, s.field, s.p->spec, {0.0, 0.25, 0.5, 0.75});
  const MalliavinSummary sum =
      malliavin_regularity_summary({{&mall, &s.field}}, s.p->coeffs.flags, s.p->spec, 0.1);
  REQUIRE(sum.levels.size() == 1);
  CHECK(sum.levels[0].x_sup == doctest::Approx(mall.sup_mean_square()));
  CHECK(sum.levels[0].y_sup.has_value());
  CHECK_FALSE(sum.levels[0].z_sup.has_value());
  CHECK(!sum.claims.empty());
}

TEST_CASE("Girsanov weights are a martingale on every catalog problem") {
  for (const auto& name : catalog_names()) {
    const Setup s = setup(builtin(name), 8);
    const std::vector<double> x0{0.0};
    const GirsanovReport r = girsanov_law_check(s.mc, s.field, s.p->spec, x0, 0.5, 10000, 12,
                                                GirsanovOptions{100, 4});
    CHECK_MESSAGE(r.martingale_ok, name << ": " << r.weight_mean << " +- " << r.weight_se);
    CHECK_MESSAGE(r.max_abs_z <= 4.0, name);
  }
}

TEST_CASE("BSDE residual does not grow as the step count doubles") {
  for (const auto& name : catalog_names()) {
    const Setup s = setup(builtin(name), 8);
    const std::vector<double> x0{0.0};
    double prev = 0.0;
    for (std::size_t N : {50u, 100u, 200u}) {
      PathEnsemble e = simulate_forward(s.field, s.mc, s.p->spec, x0, 0.0, N, 3000, 8,
                                        SimulationOptions{4, nullptr});
      reconstruct_yz(e, s.field, s.p->spec);
      const double r = bsde_residual(e, s.mc.g, 0.0);
      if (N > 50) CHECK_MESSAGE(r <= 1.1 * prev, name << " N=" << N << ": " << prev << " -> " << r);
      prev = r;
    }
  }
}

TEST_CASE("gradients on nested terminal layers agree on the overlap") {
  const Setup s = setup(builtin("sign-drift"), 16);
  const auto& deltas = s.field.grid().deltas;
  for (std::size_t k = 0; k + 1 < deltas.size(); ++k) {
    const double t_short = s.p->spec.T - deltas[k];
    for (double t = 0.0; t <= t_short; t += 0.05) {
      for (double x : {-1.0, 0.0, 0.37}) {
        double a = 0.0, b = 0.0;
        s.field.gradient_at(std::min(t, t_short), {&x, 1}, {&a, 1});
        s.field.gradient_at(std::min(t, s.p->spec.T - deltas[k + 1]), {&x, 1}, {&b, 1});
        CHECK(std::abs(a - b) <= 1e-12);
      }
    }
    CHECK(s.field.sup_abs_w(t_short) <= s.field.sup_abs_w(s.p->spec.T - deltas[k + 1]));
  }
}

TEST_CASE("flow derivative bump refinement follows the Richardson prediction") {
  const Setup s = setup(builtin("coupled-lip"), 8);
  const double x = 0.3;
  const double h = 4.0 * s.field.dx();
  std::vector<double> d;
  for (double bump : {h, h / 2, h / 4})
    d.push_back(flow_derivative(s.mc, s.field, s.p->spec, 0.0, 1.0, {&x, 1}, bump, 2000, 5, 100)[0]);
  // Second-order central differences: the error of d(h/2) is about |d(h) - d(h/2)| / 3.
  const double predicted = std::abs(d[0] - d[1]) / 3.0;
  CHECK_MESSAGE(std::abs(d[1] - d[2]) <= 4.0 * predicted + 1e-12, d[0] << " " << d[1] << " " << d[2]);
}
