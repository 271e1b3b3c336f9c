#include "core/mollifier.hpp"

#include "core/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace fbsde {

void gauss_legendre(int order, std::vector<double>& nodes,
                    std::vector<double>& weights) {
  require(order >= 1, "Gauss-Legendre order must be positive");
  const auto n = static_cast<std::size_t>(order);
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  if (n == 1) {
    weights[0] = 2.0;
    return;
  }
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
}

MollifierKernel::MollifierKernel(int level, std::size_t dim, int order)
    : level_(level), dim_(dim), order_(order) {
  require(level >= 1, "mollifier level must be >= 1");
  require(dim >= 1, "mollifier dimension must be >= 1");
  require(order >= 2, "mollifier quadrature order must be >= 2");
  gauss_legendre(order, gl_nodes_, gl_weights_);
}

MollifierKernel make_kernel(int level, std::size_t dim, int order) {
  return MollifierKernel(level, dim, order);
}

QuadratureRule MollifierKernel::rule() const {
  const double full = std::pow(static_cast<double>(order_),
                               static_cast<double>(dim_));
  require(full <= 4.2e6, "full mollifier rule too large; use marginal()");
  return marginal(std::vector<bool>(dim_, true));
}

QuadratureRule MollifierKernel::marginal(const std::vector<bool>& keep) const {
  require(keep.size() == dim_, "marginal: keep mask has wrong length");
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < dim_; ++i)
    if (keep[i]) kept.push_back(i);
  const auto q = static_cast<std::size_t>(order_);
  std::size_t kept_count = 1;
  for (std::size_t i = 0; i < kept.size(); ++i) kept_count *= q;

  // Odometer over all tensor multi-indices; bump weight depends on |xi|^2.
  std::vector<double> acc(kept_count, 0.0);
  std::vector<std::size_t> idx(dim_, 0);
  double total = 0.0;
  while (true) {
    double r2 = 0.0;
    double w = 1.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      const double xi = gl_nodes_[idx[i]];
      r2 += xi * xi;
      w *= gl_weights_[idx[i]];
    }
    if (r2 < 1.0) {
      const double bump = w * std::exp(-1.0 / (1.0 - r2));
      std::size_t flat = 0;
      for (std::size_t k : kept) flat = flat * q + idx[k];
      acc[flat] += bump;
      total += bump;
    }
    std::size_t pos = dim_;
    while (pos > 0) {
      --pos;
      if (++idx[pos] < q) break;
      idx[pos] = 0;
      if (pos == 0) {
        pos = dim_ + 1;
        break;
      }
    }
    if (pos == dim_ + 1) break;
  }

  QuadratureRule rule;
  rule.dim = kept.size();
  const double r = radius();
  std::vector<std::size_t> digits(kept.size());
  for (std::size_t flat = 0; flat < kept_count; ++flat) {
    if (acc[flat] == 0.0) continue;
    std::size_t rem = flat;
    for (std::size_t k = kept.size(); k > 0; --k) {
      digits[k - 1] = rem % q;
      rem /= q;
    }
    for (std::size_t k = 0; k < kept.size(); ++k)
      rule.nodes.push_back(r * gl_nodes_[digits[k]]);
    rule.weights.push_back(acc[flat] / total);
  }
  if (kept.empty()) {
    rule.weights.assign(1, 1.0);
  }
  return rule;
}

namespace {

constexpr std::size_t kStackArgs = 32;

struct ArgBuffer {
  std::array<double, kStackArgs> small{};
  std::vector<double> large;
  std::span<double> view(std::size_t n) {
    if (n <= kStackArgs) return {small.data(), n};
    large.resize(n);
    return {large.data(), n};
  }
};

}  // namespace

VectorFunction mollify(const VectorFunction& f, const MollifierKernel& kernel,
                       const std::vector<bool>& mask,
                       std::optional<TimeClamp> clamp) {
  require(mask.size() == f.in_dim(), "mollify: mask length != input dimension");
  const auto masked = static_cast<std::size_t>(
      std::count(mask.begin(), mask.end(), true));
  require(masked == kernel.dim(),
          "mollify: kernel dimension must equal the number of masked arguments");

  // Coordinates of the kernel that f actually reads.
  std::vector<bool> keep(kernel.dim(), false);
  std::vector<std::size_t> arg_of;  // argument index per kept coordinate
  for (std::size_t i = 0, k = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    if (f.depends_on(i)) {
      keep[k] = true;
      arg_of.push_back(i);
    }
    ++k;
  }
  if (arg_of.empty()) return f;

  auto rule = std::make_shared<const QuadratureRule>(kernel.marginal(keep));
  const std::size_t in_dim = f.in_dim();
  const std::size_t out_dim = f.out_dim();
  std::optional<TimeClamp> tc;
  if (clamp && std::find(arg_of.begin(), arg_of.end(), clamp->index) != arg_of.end())
    tc = clamp;

  auto body = [f, rule, arg_of, in_dim, out_dim, tc](std::span<const double> in,
                                                      std::span<double> out) {
    ArgBuffer abuf, obuf;
    std::span<double> shifted = abuf.view(in_dim);
    std::span<double> val = obuf.view(out_dim);
    std::copy(in.begin(), in.end(), shifted.begin());
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t kd = arg_of.size();
    const double* node = rule->nodes.data();
    for (std::size_t k = 0; k < rule->size(); ++k, node += kd) {
      for (std::size_t j = 0; j < kd; ++j) shifted[arg_of[j]] = in[arg_of[j]] - node[j];
      if (tc) shifted[tc->index] = std::clamp(shifted[tc->index], tc->lo, tc->hi);
      f(shifted, val);
      const double w = rule->weights[k];
      for (std::size_t o = 0; o < out_dim; ++o) out[o] += w * val[o];
    }
  };
  return VectorFunction(in_dim, out_dim, f.depends(), std::move(body));
}

double uniform_gap(const VectorFunction& f, const VectorFunction& f_n,
                   const SampleBox& box) {
  const std::size_t dim = f.in_dim();
  require(f_n.in_dim() == dim && f_n.out_dim() == f.out_dim(),
          "uniform_gap: functions have different shapes");
  require(box.lo.size() == dim && box.hi.size() == dim,
          "uniform_gap: box dimension mismatch");
  require(box.points >= 1, "uniform_gap: need at least one sample per axis");
  std::vector<std::size_t> idx(dim, 0);
  std::vector<double> p(dim), a(f.out_dim()), b(f.out_dim());
  double gap = 0.0;
  const std::size_t n = box.points;
  while (true) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double frac =
          n == 1 ? 0.5 : static_cast<double>(idx[i]) / static_cast<double>(n - 1);
      p[i] = box.lo[i] + frac * (box.hi[i] - box.lo[i]);
    }
    f(p, a);
    f_n(p, b);
    double s = 0.0;
    for (std::size_t o = 0; o < a.size(); ++o) s += (a[o] - b[o]) * (a[o] - b[o]);
    gap = std::max(gap, std::sqrt(s));
    std::size_t pos = 0;
    while (pos < dim && ++idx[pos] == n) idx[pos++] = 0;
    if (pos == dim) break;
  }
  return gap;
}

namespace {

// C-infinity step: 0 for s <= 0, 1 for s >= 1.
double smooth_step(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / s);
  const double b = std::exp(-1.0 / (1.0 - s));
  return a / (a + b);
}

VectorFunction with_cutoff(const VectorFunction& f, std::size_t x_offset,
                           std::size_t d, double halfwidth) {
  if (halfwidth <= 0.0) return f;
  if (f.is_constant()) {
    std::vector<double> probe(f.in_dim(), 0.0);
    const auto v = f(probe);
    if (std::all_of(v.begin(), v.end(), [](double e) { return e == 0.0; }))
      return f;
  }
  std::vector<bool> deps = f.depends();
  for (std::size_t i = 0; i < d; ++i) deps[x_offset + i] = true;
  return VectorFunction(
      f.in_dim(), f.out_dim(), std::move(deps),
      [f, x_offset, d, halfwidth](std::span<const double> in,
                                  std::span<double> out) {
        f(in, out);
        const double c = box_cutoff(in.subspan(x_offset, d), halfwidth);
        if (c != 1.0)
          for (double& o : out) o *= c;
      });
}

}  // namespace

double box_cutoff(std::span<const double> x, double halfwidth) {
  double c = 1.0;
  for (double xi : x) {
    const double r = std::abs(xi);
    if (r <= halfwidth) continue;
    c *= smooth_step((2.0 * halfwidth - r) / halfwidth);
  }
  return c;
}

MollifiedCoefficients mollify_coefficients(std::shared_ptr<const Problem> problem,
                                           int level, int quad_order,
                                           double cutoff_halfwidth,
                                           std::vector<bool> mask) {
  require(problem != nullptr, "mollify_coefficients: null problem");
  const GrowthSpec& spec = problem->spec;
  const ArgLayout lay = spec.layout();
  if (mask.empty()) mask.assign(lay.size(), true);
  require(mask.size() == lay.size(), "mollify_coefficients: mask length mismatch");

  MollifiedCoefficients mc;
  mc.level = level;
  mc.quad_order = quad_order;
  mc.mask = mask;
  mc.cutoff_halfwidth = cutoff_halfwidth;
  mc.source = problem;

  const auto joint_dim =
      static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  const TimeClamp clamp{ArgLayout::t_index(), 0.0, spec.T};
  if (joint_dim > 0) {
    const MollifierKernel joint(level, joint_dim, quad_order);
    mc.b = mollify(problem->coeffs.b, joint, mask, clamp);
    mc.g = mollify(problem->coeffs.g, joint, mask, clamp);
  } else {
    mc.b = problem->coeffs.b;
    mc.g = problem->coeffs.g;
  }
  std::vector<bool> hmask(mask.begin() + static_cast<long>(lay.x_offset()),
                          mask.begin() + static_cast<long>(lay.x_offset() + spec.d));
  const auto hdim =
      static_cast<std::size_t>(std::count(hmask.begin(), hmask.end(), true));
  if (hdim > 0) {
    mc.h = mollify(problem->coeffs.h, MollifierKernel(level, hdim, quad_order), hmask);
  } else {
    mc.h = problem->coeffs.h;
  }

  mc.b = with_cutoff(mc.b, lay.x_offset(), spec.d, cutoff_halfwidth);
  mc.g = with_cutoff(mc.g, lay.x_offset(), spec.d, cutoff_halfwidth);
  mc.h = with_cutoff(mc.h, 0, spec.d, cutoff_halfwidth);
  return mc;
}

}  // namespace fbsde
