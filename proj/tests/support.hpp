#pragma once

#include "core/coefficients.hpp"
#include "core/custom_problem.hpp"
#include "core/mollifier.hpp"
#include "core/pde.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <string>

namespace fbsde::testing {

// dX = a dt + dW, Y = 0.
inline const char* kConstantDrift = R"(
name: constant-drift
d: 1
l: 1
T: 1.0
k1: 0.5
k2: 0
k3: 1
flags: [B1, B2, A5, A6]
b:
  - constant: 0.5
g: zero
h:
  - constant: 0.25
)";

inline std::shared_ptr<const Problem> shared(Problem p) {
  return std::make_shared<const Problem>(std::move(p));
}

inline std::shared_ptr<const Problem> builtin(const std::string& name) {
  return shared(builtin_problem(name));
}

inline GridSpec small_grid() {
  GridSpec g;
  g.Nx = 121;
  g.Nt = 100;
  return g;
}

// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

inline double gauss_density(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

}  // namespace fbsde::testing
