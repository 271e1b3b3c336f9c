#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fbsde {

using Matrix = Eigen::MatrixXd;

// Flat argument layout shared by b and g: [t, x(d), y(l), z(l x d, row-major)].
struct ArgLayout {
  std::size_t d = 1;
  std::size_t l = 1;

  std::size_t size() const { return 1 + d + l + l * d; }
  static constexpr std::size_t t_index() { return 0; }
  std::size_t x_offset() const { return 1; }
  std::size_t y_offset() const { return 1 + d; }
  std::size_t z_offset() const { return 1 + d + l; }
};

// A vector-valued function of a flat argument vector together with the set of
// arguments it actually reads. Bodies must be pure: they are called
// concurrently from many workers.
class VectorFunction {
 public:
  using Body = std::function<void(std::span<const double>, std::span<double>)>;

  VectorFunction() = default;
  VectorFunction(std::size_t in_dim, std::size_t out_dim,
                 std::vector<bool> depends, Body body);

  static VectorFunction constant(std::size_t in_dim, std::vector<double> value);
  static VectorFunction zero(std::size_t in_dim, std::size_t out_dim) {
    return constant(in_dim, std::vector<double>(out_dim, 0.0));
  }

  void operator()(std::span<const double> in, std::span<double> out) const {
    body_(in, out);
  }
  std::vector<double> operator()(std::span<const double> in) const;

  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  const std::vector<bool>& depends() const { return depends_; }
  bool depends_on(std::size_t i) const { return depends_[i]; }
  bool is_constant() const;
  explicit operator bool() const { return static_cast<bool>(body_); }

 private:
  std::size_t in_dim_ = 0;
  std::size_t out_dim_ = 0;
  std::vector<bool> depends_;
  Body body_;
};

// Dimensions, horizon, volatility and growth constants of a problem.
struct GrowthSpec {
  std::size_t d = 1;
  std::size_t l = 1;
  double T = 1.0;
  Matrix sigma = Matrix::Identity(1, 1);
  double lambda = 1.0;  // ellipticity: min eig(sigma sigma^*) >= lambda
  double k1 = 0.0;
  double k2 = 0.0;
  double k3 = 0.0;
  double R = 0.0;       // k3 * exp(T * k2), filled by make_growth_spec

  ArgLayout layout() const { return {d, l}; }
};

inline constexpr std::size_t kMaxForwardDim = 2;

double bound_r(double k2, double k3, double T);
double bound_r(const GrowthSpec& spec);

// Smallest eigenvalue of sigma sigma^*.
double min_ellipticity(const Matrix& sigma);

// Validates the record and fills R. Throws fbsde::Error on any violation,
// including d > 2.
GrowthSpec make_growth_spec(std::size_t d, std::size_t l, double T,
                            Matrix sigma, double lambda, double k1, double k2,
                            double k3);
void check_growth_spec(const GrowthSpec& spec);

struct StructuralFlags {
  bool b1 = false;      // b and g bounded in z
  bool b2 = false;      // h Lipschitz with constant k3
  bool g_no_z = false;  // g = g(t,x,y), Lipschitz in (x,y)
  bool g_no_x = false;  // g = g(t,y,z), C^1 and Lipschitz in (y,z)
};

struct CoefficientSet {
  VectorFunction b;  // ArgLayout -> R^d
  VectorFunction g;  // ArgLayout -> R^l
  VectorFunction h;  // R^d -> R^l
  StructuralFlags flags;
  std::optional<double> lipschitz_h;
};

// Dimension consistency plus the B1-or-B2 admission rule.
void check_coefficients(const CoefficientSet& coeffs, const GrowthSpec& spec);

struct ClosedFormOracle {
  std::function<void(double t, std::span<const double> x, std::span<double> v)>
      v_exact;
  std::string description;
};

struct Problem {
  std::string name;
  std::string description;
  CoefficientSet coeffs;
  GrowthSpec spec;
  std::optional<ClosedFormOracle> oracle;
};

struct FunctionCheck {
  std::string function;  // "b", "g" or "h"
  double max_ratio = 0.0;
  std::vector<double> witness;  // argument vector attaining max_ratio
  bool pass = true;
};

struct ValidationReport {
  std::size_t samples = 0;
  double box_halfwidth = 0.0;
  std::vector<FunctionCheck> checks;
  bool pass = true;
};

// Quasi-random (shifted Sobol) sampling of the growth inequalities over
// [0,T] x [-L,L]^{d+l+l*d}. Never throws on a violation; the report carries
// the witnessing point.
ValidationReport validate_growth(const CoefficientSet& coeffs,
                                 const GrowthSpec& spec, std::size_t budget,
                                 std::uint64_t seed,
                                 double box_halfwidth = 10.0);

// Built-in catalog.
std::vector<std::string> catalog_names();
Problem builtin_problem(std::string_view name);

Problem make_heat_problem(double T = 1.0);
Problem make_linear_ode_problem(double rate = 1.0, double c = 1.0,
                                double T = 1.0);
Problem make_sign_drift_problem(double T = 1.0);
Problem make_coupled_lip_problem(double T = 1.0);

// Gaussian convolution of h with variance (T - t), by adaptive quadrature.
double heat_oracle(const std::function<double(double)>& h, double tau,
                   double x);

// Which regularity statements apply to a problem, as human-readable lines.
std::vector<std::string> applicable_claims(const StructuralFlags& flags,
                                           std::size_t l);

std::string describe_problem(const Problem& problem);

}  // namespace fbsde
