#pragma once

#include "core/coefficients.hpp"
#include "core/mollifier.hpp"
#include "core/pde.hpp"
#include "core/simulate.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fbsde {

// ---------------------------------------------------------------- Girsanov

struct MomentRow {
  std::string name;        // "E[x1]", "E[x1*x2]", ...
  double weighted = 0.0;   // reweighted driftless paths
  double weighted_se = 0.0;
  double direct = 0.0;     // simulated X^n_t
  double direct_se = 0.0;
  double z = 0.0;
};

struct GirsanovReport {
  double t = 0.0;
  std::size_t M = 0;
  std::size_t N = 0;
  std::vector<MomentRow> moments;  // first moments, then second moments
  double max_abs_z = 0.0;
  double ess = 0.0;
  bool reliable = true;  // ess >= 100
  double weight_mean = 0.0;
  double weight_se = 0.0;
  bool weights_nonnegative = true;
  bool martingale_ok = true;  // |weight_mean - 1| <= 5 weight_se
  std::optional<double> ks_statistic;  // d = 1 only
  std::optional<double> ks_critical;   // 1e-3 level, n replaced by the ESS
};

struct GirsanovOptions {
  std::size_t N = 200;  // Euler steps on [0, T]; t is snapped to this grid
  std::size_t jobs = 1;
};

GirsanovReport girsanov_law_check(const MollifiedCoefficients& mc,
                                  const DecouplingField& field,
                                  const GrowthSpec& spec,
                                  std::span<const double> x0, double t,
                                  std::size_t M, std::uint64_t seed,
                                  const GirsanovOptions& opts = {});

// ------------------------------------------------------- BSDE identities

// RMS over paths of Y_s - Y_{T-delta} - sum g dt + sum Z dW, left-point sums
// over [s, T - delta].
double bsde_residual(const PathEnsemble& ens, const VectorFunction& g,
                     double delta);

// RMS over paths of Y_T - h(X_T).
double terminal_match(const PathEnsemble& ens, const VectorFunction& h);

// RMS of Y_{T - delta} - h(X_T) for each delta.
std::vector<double> terminal_approach(const PathEnsemble& ens,
                                      const VectorFunction& h,
                                      const std::vector<double>& deltas);

// ----------------------------------------------------- Cauchy convergence

struct LevelRun {
  int n = 0;
  const DecouplingField* field = nullptr;
  const PathEnsemble* ens = nullptr;
};

struct LevelGap {
  int n = 0;
  int next = 0;
  double v_sup = 0.0;  // sup over [0, T - delta] x box of |v_n - v_next|
  double w_sup = 0.0;  // same for D_x v
  std::vector<double> x_l2;  // |X^n_t - X^next_t|_{L2} per entry of t_list
  double y_h2 = 0.0;   // (E int_s^{T-delta} |Y^n - Y^next|^2 dt)^{1/2}
  double z_h2 = 0.0;
  double stoch_int = 0.0;  // |int (Z^n - Z^next) dW|_{L2} over [s, T - delta]
};

struct ConvergenceReport {
  double delta = 0.0;
  std::vector<double> t_list;
  std::vector<LevelGap> gaps;  // consecutive pairs in the given order
  bool finite = true;
};

ConvergenceReport cauchy_convergence(const std::vector<LevelRun>& levels,
                                     double delta,
                                     const std::vector<double>& t_list);

// -------------------------------------------------------- Sobolev flow

struct SobolevOptions {
  std::size_t N = 100;  // Euler steps on [s, T]; t is snapped to this grid
  std::size_t jobs = 1;
  std::function<double(std::span<const double>)> rho;  // default exp(-|x|^2)
  bool y_check = false;
  double u_halfwidth = 1.0;  // U = (-a, a)^d for the Y-check
};

struct FlowPoint {
  std::vector<double> x;
  std::vector<double> mean_derivative;  // d x d, row-major
  double mean_abs_x_p = 0.0;            // E |X_t^{s,x}|^p
  double mean_abs_dx_p = 0.0;           // E |d X_t^{s,x} / dx|^p
};

struct RegularityReport {
  double s = 0.0;
  double t = 0.0;
  double bump = 0.0;
  double p = 2.0;
  std::size_t M = 0;
  std::vector<FlowPoint> points;
  double weighted_norm = 0.0;          // sum (E|X|^p + E|dX|^p) rho dx^d
  bool identity_exact = false;         // every path derivative is exactly I
  std::optional<double> y_norm;        // W^1_1(U) estimate of Y_t^{s,.}
  std::vector<std::pair<int, double>> malliavin;  // level -> sup E|D X|^2
};

// x_grid holds grid points back to back (d entries each).
RegularityReport sobolev_flow_check(const MollifiedCoefficients& mc,
                                    const DecouplingField& field,
                                    const GrowthSpec& spec, double s, double t,
                                    const std::vector<double>& x_grid,
                                    double bump, std::size_t M,
                                    std::uint64_t seed, double p,
                                    const SobolevOptions& opts = {});

// Path-averaged central-difference flow derivative at a single point.
std::vector<double> flow_derivative(const MollifiedCoefficients& mc,
                                    const DecouplingField& field,
                                    const GrowthSpec& spec, double s, double t,
                                    std::span<const double> x, double bump,
                                    std::size_t M, std::uint64_t seed,
                                    std::size_t N = 100);

// ------------------------------------------------ Malliavin regularity

struct MalliavinLevel {
  int n = 0;
  double x_sup = 0.0;                 // sup_{s,t} E|D_s X_t|^2
  std::vector<double> x_by_time;      // max_s E|D_s X_{t_i}|^2 per t_i
  std::optional<double> y_sup;        // sup E|D_x v D_s X_t|^2 where claimed
  std::optional<double> z_sup;        // sup E|D_xx v D_s X_t sigma|^2 where claimed
};

struct MalliavinSummary {
  std::vector<std::string> claims;
  double delta = 0.0;  // Y table horizon T - delta when only B1 holds
  std::vector<MalliavinLevel> levels;
};

struct MalliavinRun {
  const MalliavinEnsemble* mall = nullptr;
  const DecouplingField* field = nullptr;
};

MalliavinSummary malliavin_regularity_summary(const std::vector<MalliavinRun>& runs,
                                              const StructuralFlags& flags,
                                              const GrowthSpec& spec,
                                              double delta);

}  // namespace fbsde
