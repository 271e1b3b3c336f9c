#pragma once

#include "core/coefficients.hpp"

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace fbsde {

// Nodes are stored point-major: node k occupies nodes[k*dim, (k+1)*dim).
struct QuadratureRule {
  std::size_t dim = 0;
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  std::span<const double> node(std::size_t k) const {
    return {nodes.data() + k * dim, dim};
  }
};

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int order, std::vector<double>& nodes,
                    std::vector<double>& weights);

// Standard bump exp(-1/(1-|u|^2)) rescaled to the ball of radius 1/n,
// discretised with a tensor Gauss-Legendre rule over the support cube and
// masked to the ball. Weights are normalised to unit mass.
class MollifierKernel {
 public:
  MollifierKernel(int level, std::size_t dim, int order = 16);

  int level() const { return level_; }
  std::size_t dim() const { return dim_; }
  int order() const { return order_; }
  double radius() const { return 1.0 / level_; }

  // The full rule; only available while order^dim stays below ~4e6 nodes.
  QuadratureRule rule() const;

  // Rule for the push-forward of the kernel onto the kept coordinates. It
  // integrates any function of those coordinates exactly as the full rule
  // would, with order^|keep| nodes instead of order^dim.
  QuadratureRule marginal(const std::vector<bool>& keep) const;

 private:
  int level_;
  std::size_t dim_;
  int order_;
  std::vector<double> gl_nodes_;
  std::vector<double> gl_weights_;
};

MollifierKernel make_kernel(int level, std::size_t dim, int order = 16);

struct TimeClamp {
  std::size_t index = 0;
  double lo = 0.0;
  double hi = 1.0;
};

// u -> sum_k w_k f(u - alpha_k) over the masked arguments. mask must have
// f.in_dim() entries with exactly kernel.dim() of them set.
VectorFunction mollify(const VectorFunction& f, const MollifierKernel& kernel,
                       const std::vector<bool>& mask,
                       std::optional<TimeClamp> clamp = std::nullopt);

// Axis-aligned box with a tensor sample grid of `points` nodes per axis.
struct SampleBox {
  std::vector<double> lo;
  std::vector<double> hi;
  std::size_t points = 101;
};

// max over the grid of |f_n - f| (Euclidean norm over outputs).
double uniform_gap(const VectorFunction& f, const VectorFunction& f_n,
                   const SampleBox& box);

// Smooth cutoff equal to 1 on [-L, L]^d and 0 outside [-2L, 2L]^d.
double box_cutoff(std::span<const double> x, double halfwidth);

struct MollifiedCoefficients {
  int level = 1;
  int quad_order = 16;
  VectorFunction b;
  VectorFunction g;
  VectorFunction h;
  std::vector<bool> mask;        // over ArgLayout; h uses its x part
  double cutoff_halfwidth = 0.0; // 0 disables the cutoff
  std::shared_ptr<const Problem> source;
};

// Mollifies b, g (jointly over the masked (t,x,y,z) arguments, time clamped
// to [0,T]) and h (over x) at bandwidth 1/level, then applies the smooth
// cutoff in x. An empty mask means all arguments.
MollifiedCoefficients mollify_coefficients(std::shared_ptr<const Problem> problem,
                                           int level, int quad_order = 16,
                                           double cutoff_halfwidth = 0.0,
                                           std::vector<bool> mask = {});

}  // namespace fbsde
