#pragma once

#include "core/coefficients.hpp"
#include "core/mollifier.hpp"
#include "core/pde.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fbsde {

// Brownian increments dW[m][i][j], generated from the counter-based stream
// (seed, stream, path m, step i). Path m is the same for every M > m.
using Increments = std::shared_ptr<const std::vector<double>>;
Increments brownian_increments(std::size_t M, std::size_t N, std::size_t d,
                               double dt, std::uint64_t seed,
                               std::uint32_t stream, std::size_t jobs = 1);

struct PathEnsemble {
  std::size_t M = 0;
  std::size_t N = 0;
  std::size_t d = 1;
  std::size_t l = 1;
  double s = 0.0;
  double T = 1.0;
  std::uint64_t seed = 0;
  int level = 0;
  std::vector<double> x0;
  std::vector<double> times;  // N + 1 points, times[N] = T
  Increments dW;              // [M][N][d]
  std::vector<double> X;      // [M][N+1][d]
  std::vector<double> Y;      // [M][N+1][l], empty until reconstruct_yz
  std::vector<double> Z;      // [M][N+1][l][d]

  // Diagnostics recorded by simulate_forward.
  double exit_fraction = 0.0;  // share of drift evaluations outside the box
  double max_drift = 0.0;      // max |b~_n| over evaluated points
  double drift_bound = 0.0;    // the bound max_drift was checked against

  double dt() const { return (T - s) / static_cast<double>(N); }
  std::span<const double> dw(std::size_t m, std::size_t i) const {
    return {dW->data() + (m * N + i) * d, d};
  }
  std::span<const double> x(std::size_t m, std::size_t i) const {
    return {X.data() + (m * (N + 1) + i) * d, d};
  }
  std::span<const double> y(std::size_t m, std::size_t i) const {
    return {Y.data() + (m * (N + 1) + i) * l, l};
  }
  std::span<const double> z(std::size_t m, std::size_t i) const {
    return {Z.data() + (m * (N + 1) + i) * l * d, l * d};
  }
  bool has_yz() const { return !Y.empty(); }
};

// b~_n(t,x) = b_n(t, x, v_n(t,x), D_x v_n(t,x) sigma).
class FeedbackDrift {
 public:
  FeedbackDrift(const MollifiedCoefficients& mc, const DecouplingField& field,
                const GrowthSpec& spec);

  void operator()(double t, std::span<const double> x,
                  std::span<double> out) const;
  // Jacobian d b~ / dx by central differences with step `step`, row-major.
  void jacobian(double t, std::span<const double> x, double step,
                std::span<double> out) const;
  // Fills the full argument vector (t, x, v, w sigma).
  void arguments(double t, std::span<const double> x,
                 std::span<double> args) const;

 private:
  const MollifiedCoefficients* mc_;
  const DecouplingField* field_;
  const GrowthSpec* spec_;
};

// Runtime bound on |b~_n|: k1 (1 + R) under B1, k1 (1 + R + |w|_inf |sigma|)
// under B2 alone. Mollification may move y by up to 1/n, which is added to R.
double drift_bound(const GrowthSpec& spec, const StructuralFlags& flags,
                   const DecouplingField& field, int level);

struct SimulationOptions {
  std::size_t jobs = 1;
  Increments dW;  // reuse these increments instead of generating them
};

PathEnsemble simulate_forward(const DecouplingField& field,
                              const MollifiedCoefficients& mc,
                              const GrowthSpec& spec, std::span<const double> x0,
                              double s, std::size_t N, std::size_t M,
                              std::uint64_t seed,
                              const SimulationOptions& opts = {});

// Y = v(t_i, X_i), Z = w(t_i, X_i) sigma.
void reconstruct_yz(PathEnsemble& ens, const DecouplingField& field,
                    const GrowthSpec& spec, std::size_t jobs = 1);

// Per-time mean and variance of X, Y, Z and the share of paths outside the
// PDE box.
void write_ensemble_csv(const PathEnsemble& ens, const DecouplingField& field,
                        std::ostream& os);

struct MalliavinEnsemble {
  std::size_t M = 0;
  std::size_t N = 0;
  std::size_t d = 1;
  int level = 0;
  std::vector<double> s_grid;         // snapped differentiation times
  std::vector<std::size_t> s_index;   // their indices on the time grid
  std::vector<double> times;
  std::vector<double> D;              // [M][Ns][N+1][d][d]
  std::shared_ptr<const PathEnsemble> source;

  std::size_t Ns() const { return s_grid.size(); }
  std::span<const double> at(std::size_t m, std::size_t j, std::size_t i) const {
    return {D.data() + ((m * Ns() + j) * (N + 1) + i) * d * d, d * d};
  }
  // E |D_{s_j} X_{t_i}|^2 (Frobenius).
  double mean_square(std::size_t j, std::size_t i) const;
  // sup over (s_j, t_i) of E |D_{s_j} X_{t_i}|^2.
  double sup_mean_square() const;
};

// Euler scheme for D_{i+1} = (I + J(t_i, X_i) dt) D_i with D at s = sigma and
// zero before s. J is the central-difference Jacobian of b~_n with step dx.
MalliavinEnsemble simulate_malliavin(std::shared_ptr<const PathEnsemble> ens,
                                     const MollifiedCoefficients& mc,
                                     const DecouplingField& field,
                                     const GrowthSpec& spec,
                                     std::vector<double> s_grid,
                                     std::size_t jobs = 1);

struct ModulusFit {
  int level = 0;
  double alpha = 0.0;      // fitted slope on log-log axes
  double intercept = 0.0;  // exp of the fitted intercept
  std::size_t lags = 0;    // distinct lags with positive modulus
  bool zero_modulus = false;
  std::string note;
};

struct CompactnessReport {
  std::vector<ModulusFit> fits;
  double max_alpha = 0.0;
  double max_intercept = 0.0;
};

// Fits E|D_{t'} X_r - D_t X_r|^2 ~ C |t - t'|^alpha at r = T for each level.
// Throws when a level offers fewer than 3 distinct lags.
CompactnessReport compactness_statistics(
    const std::vector<const MalliavinEnsemble*>& malls);

}  // namespace fbsde
