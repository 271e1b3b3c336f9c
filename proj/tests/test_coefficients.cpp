#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/error.hpp"
#include "support.hpp"

#include <algorithm>
#include <random>

using namespace fbsde;
using namespace fbsde::testing;

TEST_CASE("catalog lists the four built-in problems") {
  const auto names = catalog_names();
  for (const char* n : {"heat", "linear-ode", "sign-drift", "coupled-lip"})
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
}

TEST_CASE("unknown problem names are rejected") {
  try {
    (void)builtin_problem("no-such-problem");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownProblem);
  }
}

TEST_CASE("R is k3 exp(T k2)") {
  CHECK(bound_r(0.0, 2.0, 1.0) == 2.0);
  CHECK(bound_r(5.0, 0.0, 1.0) == 0.0);
  CHECK(bound_r(1.0, 1.0, 1.0) == doctest::Approx(2.718281828459045).epsilon(1e-15));
  CHECK(bound_r(0.0, 1.0, 1.0) == doctest::Approx(1.0));
  CHECK(bound_r(1.0, 2.0, 0.5) == doctest::Approx(2.0 * std::exp(0.5)));
  for (const auto& n : catalog_names()) {
    const Problem p = builtin_problem(n);
    CHECK(p.spec.R == doctest::Approx(p.spec.k3 * std::exp(p.spec.T * p.spec.k2)));
  }
}

TEST_CASE("growth spec rejects bad records") {
  CHECK_THROWS_AS(make_growth_spec(3, 1, 1.0, Matrix::Identity(3, 3), 1.0, 0, 0, 1), Error);
  CHECK_THROWS_AS(make_growth_spec(1, 1, -1.0, Matrix::Identity(1, 1), 1.0, 0, 0, 1), Error);
  CHECK_THROWS_AS(make_growth_spec(1, 1, 1.0, Matrix::Identity(1, 1), 2.0, 0, 0, 1), Error);
  CHECK_NOTHROW(make_growth_spec(2, 1, 1.0, Matrix::Identity(2, 2), 1.0, 0, 0, 1));
}

TEST_CASE("ellipticity is the smallest eigenvalue of sigma sigma^*") {
  Matrix s(2, 2);
  s << 2.0, 0.0, 0.0, 0.5;
  CHECK(min_ellipticity(s) == doctest::Approx(0.25));
}

TEST_CASE("catalog problems satisfy their growth bounds") {
  for (const auto& n : catalog_names()) {
    const Problem p = builtin_problem(n);
    const ValidationReport r = validate_growth(p.coeffs, p.spec, 4096, 3);
    CHECK_MESSAGE(r.pass, n);
    CHECK_NOTHROW(check_coefficients(p.coeffs, p.spec));
  }
}

TEST_CASE("sign-drift terminal condition is right-continuous") {
  const Problem p = builtin_problem("sign-drift");
  const double zero = 0.0, minus = -1e-12;
  CHECK(p.coeffs.h(std::span<const double>(&zero, 1))[0] == 1.0);
  CHECK(p.coeffs.h(std::span<const double>(&minus, 1))[0] == 0.0);
}

TEST_CASE("heat oracle matches an independent Simpson convolution") {
  const auto h = [](double x) { return std::tanh(x); };
  for (double tau : {0.25, 1.0}) {
    for (double x : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
      const double ref = simpson(
          [&](double z) { return h(x + std::sqrt(tau) * z) * gauss_density(z); }, -12.0, 12.0, 4000);
      CHECK(heat_oracle(h, tau, x) == doctest::Approx(ref).epsilon(1e-9));
    }
  }
  CHECK(heat_oracle(h, 0.0, 0.4) == doctest::Approx(std::tanh(0.4)));
}

TEST_CASE("heat and linear-ode expose closed forms") {
  const Problem heat = builtin_problem("heat");
  REQUIRE(heat.oracle);
  const double x = 0.5;
  double v = 0.0;
  heat.oracle->v_exact(heat.spec.T, {&x, 1}, {&v, 1});
  CHECK(v == doctest::Approx(std::tanh(0.5)));

  const Problem lin = builtin_problem("linear-ode");
  REQUIRE(lin.oracle);
  lin.oracle->v_exact(0.0, {&x, 1}, {&v, 1});
  CHECK(v == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("applicable claims follow the structural flags") {
  StructuralFlags none;
  StructuralFlags all{true, true, true, true};
  CHECK(applicable_claims(all, 1).size() > applicable_claims(none, 1).size());
  const std::string text = describe_problem(builtin_problem("coupled-lip"));
  CHECK(text.find("coupled-lip") != std::string::npos);
  const std::string heat = describe_problem(builtin_problem("heat"));
  for (const char* part : {"k1 = 0, k2 = 0, k3 = 1", "R = k3*exp(T*k2) = 1", "B1=yes B2=yes A5=yes A6=yes"})
    CHECK_MESSAGE(heat.find(part) != std::string::npos, part);
}

TEST_CASE("custom problems parse and validate") {
  const Problem p = custom_problem_from_yaml(kConstantDrift);
  CHECK(p.name == "constant-drift");
  CHECK(p.spec.d == 1);
  CHECK(p.coeffs.b.is_constant());
  const std::vector<double> args(p.spec.layout().size(), 0.3);
  CHECK(p.coeffs.b(args)[0] == 0.5);
}

TEST_CASE("custom problem errors name the problem") {
  auto config_error = [](const std::string& yaml, const std::string& needle) {
    try {
      (void)custom_problem_from_yaml(yaml);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Config);
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
      return;
    }
    FAIL("expected a config error for " << needle);
  };
  const std::string head = "d: 1\nl: 1\nT: 1\nk1: 1\nk2: 1\nk3: 1\n";
  config_error(head + "flags: [B1, B9]\nb: zero\ng: zero\nh: zero\n", "unknown flag");
  config_error(head +
                   "flags: [B1, A5]\nb: zero\nh: zero\ng:\n  - polynomial: [{coef: 0.5, powers: {z1_1: 1}}]\n",
               "A5");
  config_error(head + "flags: [B1]\nb: zero\ng: zero\nh:\n  - constant: 5\n", "growth");
  config_error("d: 1\nl: 1\n", "T");
}

TEST_CASE("piecewise components are right-continuous") {
  const Problem p = custom_problem_from_yaml(R"(
d: 1
l: 1
T: 1
k1: 1
k2: 0
k3: 1
flags: [B1]
b:
  - piecewise: {arg: x1, breaks: [0.0], values: [-1.0, 1.0]}
g: zero
h: zero
)");
  std::vector<double> args(p.spec.layout().size(), 0.0);
  CHECK(p.coeffs.b(args)[0] == 1.0);
  args[1] = -1e-9;
  CHECK(p.coeffs.b(args)[0] == -1.0);
}

TEST_CASE("R is nondecreasing in k2, k3 and T") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 3.0), step(0.0, 0.5);
  for (int trial = 0; trial < 2000; ++trial) {
    const double k2 = u(rng), k3 = u(rng), T = u(rng) + 0.01;
    const double r = bound_r(k2, k3, T);
    CHECK(bound_r(k2 + step(rng), k3, T) >= r);
    CHECK(bound_r(k2, k3 + step(rng), T) >= r);
    CHECK(bound_r(k2, k3, T + step(rng)) >= r);
  }
}

TEST_CASE("catalog volatilities meet their ellipticity constant") {
  for (const auto& n : catalog_names()) {
    const Problem p = builtin_problem(n);
    CHECK(min_ellipticity(p.spec.sigma) >= p.spec.lambda - 1e-10);
  }
}
