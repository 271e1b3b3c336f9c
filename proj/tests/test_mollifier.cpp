#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include <numeric>
#include <random>

using namespace fbsde;
using namespace fbsde::testing;

namespace {

double bump(double u) { return std::abs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0; }

// Second moment of the normalised 1-d bump at radius r, by Simpson.
double bump_second_moment(double r) {
  const double mass = simpson(bump, -1.0, 1.0, 20000);
  const double m2 = simpson([](double u) { return u * u * bump(u); }, -1.0, 1.0, 20000);
  return r * r * m2 / mass;
}

}  // namespace

TEST_CASE("Gauss-Legendre rule integrates polynomials exactly") {
  std::vector<double> x, w;
  gauss_legendre(16, x, w);
  REQUIRE(x.size() == 16);
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(2.0).epsilon(1e-14));
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += w[k] * std::pow(x[k], 30);
  CHECK(s == doctest::Approx(2.0 / 31.0).epsilon(1e-12));
}

TEST_CASE("kernel has unit mass, zero mean and support in the ball") {
  for (std::size_t dim : {1u, 2u, 3u}) {
    const MollifierKernel k(8, dim, 12);
    const QuadratureRule r = k.rule();
    double mass = 0.0, mean = 0.0;
    for (std::size_t q = 0; q < r.size(); ++q) {
      mass += r.weights[q];
      double n2 = 0.0;
      for (double c : r.node(q)) n2 += c * c;
      CHECK(std::sqrt(n2) <= k.radius() + 1e-15);
      mean += r.weights[q] * r.node(q)[0];
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(std::abs(mean) < 1e-15);
  }
}

TEST_CASE("marginal rule reproduces moments of the full rule") {
  const MollifierKernel k(4, 3, 12);
  const QuadratureRule full = k.rule();
  const QuadratureRule marg = k.marginal({true, false, true});
  REQUIRE(marg.dim == 2);
  double f = 0.0, m = 0.0;
  for (std::size_t q = 0; q < full.size(); ++q)
    f += full.weights[q] * full.node(q)[0] * full.node(q)[0] * full.node(q)[2] * full.node(q)[2];
  for (std::size_t q = 0; q < marg.size(); ++q)
    m += marg.weights[q] * marg.node(q)[0] * marg.node(q)[0] * marg.node(q)[1] * marg.node(q)[1];
  CHECK(m == doctest::Approx(f).epsilon(1e-12));
}

TEST_CASE("mollified x^2 is x^2 plus the kernel second moment") {
  const VectorFunction sq(1, 1, {true}, [](std::span<const double> in, std::span<double> out) {
    out[0] = in[0] * in[0];
  });
  for (int n : {2, 8}) {
    const VectorFunction s_n = mollify(sq, make_kernel(n, 1), {true});
    const double m2 = bump_second_moment(1.0 / n);
    for (double x : {-1.0, 0.0, 0.3}) CHECK(s_n(std::span<const double>(&x, 1))[0] == doctest::Approx(x * x + m2).epsilon(1e-3));
  }
}

TEST_CASE("mollified step is one half at the jump") {
  const auto p = builtin("sign-drift");
  for (int n : {4, 32}) {
    const MollifiedCoefficients mc = mollify_coefficients(p, n);
    const double zero = 0.0;
    CHECK(mc.h(std::span<const double>(&zero, 1))[0] == doctest::Approx(0.5).epsilon(1e-12));
    const double far = 2.0 / n;
    CHECK(mc.h(std::span<const double>(&far, 1))[0] == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("uniform gap shrinks with the level for a smooth function") {
  const auto p = builtin("heat");
  const SampleBox box{{-3.0}, {3.0}, 601};
  double prev = 1.0;
  for (int n : {2, 4, 8, 16}) {
    const MollifiedCoefficients mc = mollify_coefficients(p, n);
    const double gap = uniform_gap(p->coeffs.h, mc.h, box);
    CHECK(gap < prev);
    CHECK(gap <= 1.0 / (n * n));
    prev = gap;
  }
}

TEST_CASE("mollification leaves constant and unread arguments alone") {
  const auto p = builtin("linear-ode");
  const MollifiedCoefficients mc = mollify_coefficients(p, 4);
  CHECK(mc.g.depends() == p->coeffs.g.depends());
  std::vector<double> args(p->spec.layout().size(), 0.0);
  args[p->spec.layout().y_offset()] = 0.7;
  CHECK(mc.g(args)[0] == doctest::Approx(p->coeffs.g(args)[0]).epsilon(1e-12));
}

TEST_CASE("box cutoff is a smooth switch") {
  double prev = 1.0;
  for (double x = 0.0; x <= 5.0; x += 0.05) {
    const double c = box_cutoff(std::span<const double>(&x, 1), 2.0);
    CHECK(c >= 0.0);
    CHECK(c <= prev + 1e-15);
    if (x <= 2.0) CHECK(c == 1.0);
    if (x >= 4.0) CHECK(c == 0.0);
    prev = c;
  }
}

TEST_CASE("mollified terminal conditions keep the k3 bound") {
  for (const auto& name : catalog_names()) {
    const auto p = builtin(name);
    for (int n : {2, 8, 32}) {
      const MollifiedCoefficients mc = mollify_coefficients(p, n);
      for (double x = -8.0; x <= 8.0; x += 0.013)
        CHECK(std::abs(mc.h(std::span<const double>(&x, 1))[0]) <= p->spec.k3 * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("mollified Lipschitz terminal conditions keep their constant") {
  for (const auto& name : catalog_names()) {
    const auto p = builtin(name);
    if (!p->coeffs.flags.b2) continue;
    const double k = p->coeffs.lipschitz_h.value_or(p->spec.k3);
    for (int n : {2, 8, 32}) {
      const MollifiedCoefficients mc = mollify_coefficients(p, n);
      double worst = 0.0;
      for (double x = -4.0; x <= 4.0; x += 0.0137) {
        const double a = x, b = x + 1e-3;
        const double q = std::abs(mc.h(std::span<const double>(&b, 1))[0] - mc.h(std::span<const double>(&a, 1))[0]) / 1e-3;
        worst = std::max(worst, q);
      }
      CHECK_MESSAGE(worst <= k * (1.0 + 1e-6), name << " n=" << n << " quotient " << worst);
    }
  }
}

TEST_CASE("mollification converges at continuity points") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const auto heat = builtin("heat");
  const auto sign = builtin("sign-drift");
  std::vector<MollifiedCoefficients> hm, sm;
  const std::vector<int> levels{4, 16, 64};
  for (int n : levels) {
    hm.push_back(mollify_coefficients(heat, n));
    sm.push_back(mollify_coefficients(sign, n));
  }
  for (int k = 0; k < 100; ++k) {
    const double x = u(rng);
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const double r = 1.0 / levels[i];
      // tanh is 1-Lipschitz, so the gap is at most the kernel radius.
      CHECK(std::abs(hm[i].h(std::span<const double>(&x, 1))[0] - std::tanh(x)) <= r);
      if (std::abs(x) > r)
        CHECK(sm[i].h(std::span<const double>(&x, 1))[0] ==
              doctest::Approx(sign->coeffs.h(std::span<const double>(&x, 1))[0]).epsilon(1e-12));
    }
  }
}
