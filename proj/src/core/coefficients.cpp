#include "core/coefficients.hpp"

#include "core/error.hpp"
#include "core/format.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/random/sobol.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace fbsde {

VectorFunction::VectorFunction(std::size_t in_dim, std::size_t out_dim,
                               std::vector<bool> depends, Body body)
    : in_dim_(in_dim),
      out_dim_(out_dim),
      depends_(std::move(depends)),
      body_(std::move(body)) {
  require(depends_.size() == in_dim_,
          "VectorFunction: dependency mask length must equal input dimension");
  require(static_cast<bool>(body_), "VectorFunction: empty body");
}

VectorFunction VectorFunction::constant(std::size_t in_dim,
                                        std::vector<double> value) {
  const std::size_t out_dim = value.size();
  return VectorFunction(in_dim, out_dim, std::vector<bool>(in_dim, false),
                        [value = std::move(value)](std::span<const double>,
                                                   std::span<double> out) {
                          std::copy(value.begin(), value.end(), out.begin());
                        });
}

std::vector<double> VectorFunction::operator()(
    std::span<const double> in) const {
  std::vector<double> out(out_dim_);
  body_(in, out);
  return out;
}

bool VectorFunction::is_constant() const {
  return std::none_of(depends_.begin(), depends_.end(),
                      [](bool b) { return b; });
}

double bound_r(double k2, double k3, double T) { return k3 * std::exp(T * k2); }

double bound_r(const GrowthSpec& spec) {
  return bound_r(spec.k2, spec.k3, spec.T);
}

double min_ellipticity(const Matrix& sigma) {
  const Matrix a = sigma * sigma.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

void check_growth_spec(const GrowthSpec& spec) {
  if (spec.d == 0 || spec.l == 0)
    fail(ErrorCode::InvalidArgument, "dimensions d and l must be positive");
  if (spec.d > kMaxForwardDim)
    fail(ErrorCode::InvalidArgument,
         "forward dimension d = " + std::to_string(spec.d) +
             " is not supported (desk-scale solver accepts d in {1, 2})");
  if (!(spec.T > 0.0) || !std::isfinite(spec.T))
    fail(ErrorCode::InvalidArgument, "horizon T must be positive and finite");
  if (static_cast<std::size_t>(spec.sigma.rows()) != spec.d ||
      static_cast<std::size_t>(spec.sigma.cols()) != spec.d)
    fail(ErrorCode::InvalidArgument, "sigma must be a d x d matrix");
  if (!spec.sigma.allFinite())
    fail(ErrorCode::InvalidArgument, "sigma has non-finite entries");
  if (!(spec.lambda > 0.0))
    fail(ErrorCode::InvalidArgument, "ellipticity constant must be positive");
  if (spec.k1 < 0.0 || spec.k2 < 0.0 || spec.k3 < 0.0)
    fail(ErrorCode::InvalidArgument, "growth constants must be nonnegative");
  const double min_eig = min_ellipticity(spec.sigma);
  if (min_eig < spec.lambda - 1e-10)
    fail(ErrorCode::InvalidArgument,
         "ellipticity violated: min eig(sigma sigma^*) = " +
             format_number(min_eig) + " < lambda = " +
             format_number(spec.lambda));
}

GrowthSpec make_growth_spec(std::size_t d, std::size_t l, double T,
                            Matrix sigma, double lambda, double k1, double k2,
                            double k3) {
  GrowthSpec spec;
  spec.d = d;
  spec.l = l;
  spec.T = T;
  spec.sigma = std::move(sigma);
  spec.lambda = lambda;
  spec.k1 = k1;
  spec.k2 = k2;
  spec.k3 = k3;
  check_growth_spec(spec);
  spec.R = bound_r(spec);
  return spec;
}

void check_coefficients(const CoefficientSet& coeffs, const GrowthSpec& spec) {
  const ArgLayout lay = spec.layout();
  auto check_fn = [](const VectorFunction& f, std::size_t in, std::size_t out,
                     const char* name) {
    if (!f) fail(ErrorCode::InvalidArgument, std::string(name) + " is missing");
    if (f.in_dim() != in || f.out_dim() != out)
      fail(ErrorCode::InvalidArgument,
           std::string(name) + " has dimensions " + std::to_string(f.in_dim()) +
               " -> " + std::to_string(f.out_dim()) + ", expected " +
               std::to_string(in) + " -> " + std::to_string(out));
  };
  check_fn(coeffs.b, lay.size(), spec.d, "b");
  check_fn(coeffs.g, lay.size(), spec.l, "g");
  check_fn(coeffs.h, spec.d, spec.l, "h");
  if (!coeffs.flags.b1 && !coeffs.flags.b2)
    fail(ErrorCode::InvalidArgument,
         "problem admits neither B1 (b, g bounded in z) nor B2 (Lipschitz h)");
}

namespace {

double norm_range(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

double growth_ratio(double num, double den) {
  if (den > 0.0) return num / den;
  return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

}  // namespace

ValidationReport validate_growth(const CoefficientSet& coeffs,
                                 const GrowthSpec& spec, std::size_t budget,
                                 std::uint64_t seed, double box_halfwidth) {
  require(budget >= 1, "validate_growth: budget must be at least 1");
  check_coefficients(coeffs, spec);
  const ArgLayout lay = spec.layout();
  const std::size_t dim = lay.size();

  boost::random::sobol qrng(dim);
  const double qmin = static_cast<double>(qrng.min());
  const double qspan = static_cast<double>(qrng.max()) - qmin + 1.0;
  std::mt19937_64 shift_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> shift(dim);
  for (auto& s : shift) s = unif(shift_rng);

  ValidationReport rep;
  rep.samples = budget;
  rep.box_halfwidth = box_halfwidth;
  FunctionCheck cb{"b", 0.0, {}, true};
  FunctionCheck cg{"g", 0.0, {}, true};
  FunctionCheck ch{"h", 0.0, {}, true};

  std::vector<double> args(dim), bval(spec.d), gval(spec.l), hval(spec.l);
  for (std::size_t k = 0; k < budget; ++k) {
    for (std::size_t i = 0; i < dim; ++i) {
      double u = (static_cast<double>(qrng()) - qmin) / qspan + shift[i];
      u -= std::floor(u);
      args[i] = i == 0 ? u * spec.T : (2.0 * u - 1.0) * box_halfwidth;
    }
    std::span<const double> a(args);
    const double ynorm = norm_range(a.subspan(lay.y_offset(), spec.l));
    const double znorm = norm_range(a.subspan(lay.z_offset(), spec.l * spec.d));
    const double growth = 1.0 + ynorm + znorm;

    coeffs.b(a, bval);
    coeffs.g(a, gval);
    coeffs.h(a.subspan(lay.x_offset(), spec.d), hval);

    const double rb = growth_ratio(norm_range(bval), spec.k1 * growth);
    const double rg = growth_ratio(norm_range(gval), spec.k2 * growth);
    const double rh = growth_ratio(norm_range(hval), spec.k3);
    if (k == 0 || rb > cb.max_ratio) {
      cb.max_ratio = rb;
      cb.witness = args;
    }
    if (k == 0 || rg > cg.max_ratio) {
      cg.max_ratio = rg;
      cg.witness = args;
    }
    if (k == 0 || rh > ch.max_ratio) {
      ch.max_ratio = rh;
      ch.witness.assign(args.begin() + lay.x_offset(),
                        args.begin() + lay.x_offset() + spec.d);
    }
  }
  constexpr double kTol = 1.0 + 1e-9;
  for (auto* c : {&cb, &cg, &ch}) {
    c->pass = c->max_ratio <= kTol;
    rep.pass = rep.pass && c->pass;
    rep.checks.push_back(*c);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Catalog

namespace {

constexpr double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

std::vector<bool> mask_for(const ArgLayout& lay, bool t, bool x, bool y,
                           bool z) {
  std::vector<bool> m(lay.size(), false);
  m[0] = t;
  for (std::size_t i = 0; i < lay.d; ++i) m[lay.x_offset() + i] = x;
  for (std::size_t i = 0; i < lay.l; ++i) m[lay.y_offset() + i] = y;
  for (std::size_t i = 0; i < lay.l * lay.d; ++i) m[lay.z_offset() + i] = z;
  return m;
}

Matrix scalar_matrix(double s) {
  Matrix m(1, 1);
  m(0, 0) = s;
  return m;
}

void ensure_valid(const Problem& p) {
  check_coefficients(p.coeffs, p.spec);
  const ValidationReport rep = validate_growth(p.coeffs, p.spec, 4096, 0);
  if (!rep.pass)
    fail(ErrorCode::Invariant,
         "catalog problem '" + p.name + "' fails its growth bounds");
}

}  // namespace

double heat_oracle(const std::function<double(double)>& h, double tau,
                   double x) {
  if (tau <= 0.0) return h(x);
  const double s = std::sqrt(tau);
  auto integrand = [&](double z) {
    return h(x + s * z) * std::exp(-0.5 * z * z) *
           (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  };
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, -12.0, 12.0, 20, 1e-13);
}

Problem make_heat_problem(double T) {
  Problem p;
  p.name = "heat";
  p.description =
      "b = 0, g = 0, h(x) = tanh(x): pure heat equation with a smooth terminal "
      "condition";
  p.spec = make_growth_spec(1, 1, T, scalar_matrix(1.0), 1.0, 0.0, 0.0, 1.0);
  const ArgLayout lay = p.spec.layout();
  p.coeffs.b = VectorFunction::zero(lay.size(), 1);
  p.coeffs.g = VectorFunction::zero(lay.size(), 1);
  p.coeffs.h = VectorFunction(1, 1, {true},
                              [](std::span<const double> x,
                                 std::span<double> out) {
                                out[0] = std::tanh(x[0]);
                              });
  p.coeffs.flags = {true, true, true, true};
  p.coeffs.lipschitz_h = 1.0;
  const double horizon = T;
  p.oracle = ClosedFormOracle{
      [horizon](double t, std::span<const double> x, std::span<double> v) {
        v[0] = heat_oracle([](double u) { return std::tanh(u); }, horizon - t,
                           x[0]);
      },
      "Gaussian convolution of tanh with variance T - t (adaptive "
      "Gauss-Kronrod quadrature)"};
  ensure_valid(p);
  return p;
}

Problem make_linear_ode_problem(double rate, double c, double T) {
  require(rate >= 0.0, "linear-ode: rate must be nonnegative");
  Problem p;
  p.name = "linear-ode";
  p.description =
      "b = 0, g(t,x,y,z) = -rate*y, h = c: the decoupling field solves a "
      "linear ODE in time";
  p.spec = make_growth_spec(1, 1, T, scalar_matrix(1.0), 1.0, 0.0, rate,
                            std::abs(c));
  const ArgLayout lay = p.spec.layout();
  p.coeffs.b = VectorFunction::zero(lay.size(), 1);
  const std::size_t yo = lay.y_offset();
  p.coeffs.g = VectorFunction(lay.size(), 1, mask_for(lay, false, false, true, false),
                              [rate, yo](std::span<const double> a,
                                         std::span<double> out) {
                                out[0] = -rate * a[yo];
                              });
  p.coeffs.h = VectorFunction::constant(1, {c});
  p.coeffs.flags = {true, true, true, true};
  p.coeffs.lipschitz_h = 0.0;
  const double horizon = T;
  p.oracle = ClosedFormOracle{
      [rate, c, horizon](double t, std::span<const double>,
                         std::span<double> v) {
        v[0] = c * std::exp(-rate * (horizon - t));
      },
      "v(t,x) = c * exp(-rate * (T - t))"};
  ensure_valid(p);
  return p;
}

Problem make_sign_drift_problem(double T) {
  Problem p;
  p.name = "sign-drift";
  p.description =
      "b(t,x,y,z) = sign(x)*(1+|y|), g = 0, h(x) = 1{x >= 0}: measurable drift "
      "in x and a discontinuous terminal condition (sign(0) = 0, indicator "
      "right-continuous)";
  p.spec = make_growth_spec(1, 1, T, scalar_matrix(1.0), 1.0, 1.0, 0.0, 1.0);
  const ArgLayout lay = p.spec.layout();
  const std::size_t yo = lay.y_offset();
  p.coeffs.b = VectorFunction(lay.size(), 1, mask_for(lay, false, true, true, false),
                              [yo](std::span<const double> a,
                                   std::span<double> out) {
                                out[0] = sign(a[1]) * (1.0 + std::abs(a[yo]));
                              });
  p.coeffs.g = VectorFunction::zero(lay.size(), 1);
  p.coeffs.h = VectorFunction(1, 1, {true},
                              [](std::span<const double> x,
                                 std::span<double> out) {
                                out[0] = x[0] >= 0.0 ? 1.0 : 0.0;
                              });
  p.coeffs.flags = {true, false, true, true};
  ensure_valid(p);
  return p;
}

Problem make_coupled_lip_problem(double T) {
  Problem p;
  p.name = "coupled-lip";
  p.description =
      "b(t,x,y,z) = arctan(y), g(t,x,y,z) = cos(z_1), h(x) = clamp(x, -1, 1): "
      "fully coupled with a Lipschitz terminal condition";
  p.spec = make_growth_spec(1, 1, T, scalar_matrix(1.0), 1.0, 1.0, 1.0, 1.0);
  const ArgLayout lay = p.spec.layout();
  const std::size_t yo = lay.y_offset();
  const std::size_t zo = lay.z_offset();
  p.coeffs.b = VectorFunction(lay.size(), 1, mask_for(lay, false, false, true, false),
                              [yo](std::span<const double> a,
                                   std::span<double> out) {
                                out[0] = std::atan(a[yo]);
                              });
  std::vector<bool> gmask(lay.size(), false);
  gmask[zo] = true;
  p.coeffs.g = VectorFunction(lay.size(), 1, gmask,
                              [zo](std::span<const double> a,
                                   std::span<double> out) {
                                out[0] = std::cos(a[zo]);
                              });
  p.coeffs.h = VectorFunction(1, 1, {true},
                              [](std::span<const double> x,
                                 std::span<double> out) {
                                out[0] = std::clamp(x[0], -1.0, 1.0);
                              });
  // b and g are bounded, so B1 holds as well; g is C^1 and Lipschitz in z
  // and does not read x.
  p.coeffs.flags = {true, true, false, true};
  p.coeffs.lipschitz_h = 1.0;
  ensure_valid(p);
  return p;
}

std::vector<std::string> catalog_names() {
  return {"heat", "sign-drift", "linear-ode", "coupled-lip"};
}

Problem builtin_problem(std::string_view name) {
  if (name == "heat") return make_heat_problem();
  if (name == "sign-drift") return make_sign_drift_problem();
  if (name == "linear-ode") return make_linear_ode_problem();
  if (name == "coupled-lip") return make_coupled_lip_problem();
  std::string msg = "unknown problem '" + std::string(name) + "'; available:";
  for (const auto& n : catalog_names()) msg += " " + n;
  fail(ErrorCode::UnknownProblem, msg);
}

std::vector<std::string> applicable_claims(const StructuralFlags& f,
                                           std::size_t l) {
  std::vector<std::string> out;
  if (f.b1 || f.b2)
    out.emplace_back(
        "existence: strong solution with Y = v(t,X), Z = w(t,X) sigma");
  if (f.b2 && (f.g_no_z || f.g_no_x))
    out.emplace_back("malliavin: (X_t, Y_t, Z_t) differentiable for all t");
  else if (f.b2)
    out.emplace_back("malliavin: (X_t, Y_t) differentiable for all t");
  else if (f.b1)
    out.emplace_back(
        "malliavin: X_t differentiable for all t, Y_t on [0, T - delta]");
  if (f.b1 || f.b2)
    out.emplace_back("sobolev flow: X^{s,x}_t in L2(Omega; W^1_p(R^d, rho))");
  if (l == 1) {
    if (f.b2)
      out.emplace_back("sobolev flow: Y^{s,x}_t in L2(Omega; W^1_1(U)) for all t");
    else if (f.b1)
      out.emplace_back(
          "sobolev flow: Y^{s,x}_t in L2(Omega; W^1_1(U)) on [0, T - delta]");
  }
  return out;
}

std::string describe_problem(const Problem& p) {
  std::ostringstream os;
  const GrowthSpec& s = p.spec;
  os << "problem: " << p.name << "\n";
  if (!p.description.empty()) os << "  " << p.description << "\n";
  os << "  d = " << s.d << ", l = " << s.l << ", T = " << format_number(s.T)
     << "\n";
  os << "  sigma = [";
  for (Eigen::Index i = 0; i < s.sigma.rows(); ++i) {
    os << (i ? ", [" : "[");
    for (Eigen::Index j = 0; j < s.sigma.cols(); ++j)
      os << (j ? ", " : "") << format_number(s.sigma(i, j));
    os << "]";
  }
  os << "]\n";
  os << "  lambda = " << format_number(s.lambda) << "\n";
  os << "  k1 = " << format_number(s.k1) << ", k2 = " << format_number(s.k2)
     << ", k3 = " << format_number(s.k3) << "\n";
  os << "  R = k3*exp(T*k2) = " << format_number(bound_r(s)) << "\n";
  const auto& f = p.coeffs.flags;
  os << "  flags: B1=" << (f.b1 ? "yes" : "no")
     << " B2=" << (f.b2 ? "yes" : "no")
     << " A5=" << (f.g_no_z ? "yes" : "no")
     << " A6=" << (f.g_no_x ? "yes" : "no") << "\n";
  if (p.coeffs.lipschitz_h)
    os << "  Lipschitz constant of h: " << format_number(*p.coeffs.lipschitz_h)
       << "\n";
  os << "  oracle: " << (p.oracle ? p.oracle->description : "none") << "\n";
  os << "  applicable results:\n";
  for (const auto& c : applicable_claims(f, s.l)) os << "    - " << c << "\n";
  return os.str();
}

}  // namespace fbsde
