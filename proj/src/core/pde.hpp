#pragma once

#include "core/coefficients.hpp"
#include "core/mollifier.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace fbsde {

struct GridSpec {
  double L = 6.0;        // spatial box is [-L, L]^d
  std::size_t Nx = 401;  // nodes per axis, odd so the origin is a node
  std::size_t Nt = 200;  // time steps
  std::vector<double> deltas{0.2, 0.1, 0.05, 0.025};

  double dx() const { return 2.0 * L / static_cast<double>(Nx - 1); }
};

void check_grid(const GridSpec& grid, double T);

// Values v[k][node][c] and gradients w[k][node][c][axis] of the decoupling
// field on a uniform grid. Interpolation is multilinear in x with constant
// extrapolation outside the box, and piecewise constant (left) in t.
class DecouplingField {
 public:
  DecouplingField() = default;
  DecouplingField(GridSpec grid, std::size_t d, std::size_t l, double T);

  const GridSpec& grid() const { return grid_; }
  std::size_t d() const { return d_; }
  std::size_t l() const { return l_; }
  double T() const { return T_; }
  double dt() const { return T_ / static_cast<double>(grid_.Nt); }
  double dx() const { return grid_.dx(); }
  std::size_t nodes() const { return nodes_; }
  std::size_t layers() const { return grid_.Nt + 1; }
  double time(std::size_t k) const {
    return k == grid_.Nt ? T_ : static_cast<double>(k) * dt();
  }
  int level = 0;  // mollification level the field was built from

  double coord(std::size_t node, std::size_t axis) const;
  void node_point(std::size_t node, std::span<double> x) const;

  std::span<double> v_layer(std::size_t k) {
    return {v_.data() + k * nodes_ * l_, nodes_ * l_};
  }
  std::span<const double> v_layer(std::size_t k) const {
    return {v_.data() + k * nodes_ * l_, nodes_ * l_};
  }
  std::span<double> w_layer(std::size_t k) {
    return {w_.data() + k * nodes_ * l_ * d_, nodes_ * l_ * d_};
  }
  std::span<const double> w_layer(std::size_t k) const {
    return {w_.data() + k * nodes_ * l_ * d_, nodes_ * l_ * d_};
  }

  std::size_t layer_at(double t) const;
  bool inside(std::span<const double> x) const;
  void value(double t, std::span<const double> x, std::span<double> out) const;
  // out has l*d entries, row-major (component, axis).
  void gradient_at(double t, std::span<const double> x,
                   std::span<double> out) const;

  double sup_abs_v() const;
  double sup_abs_w(double t_max) const;

 private:
  void interpolate(std::span<const double> layer, std::size_t width,
                   std::span<const double> x, std::span<double> out) const;

  GridSpec grid_;
  std::size_t d_ = 1;
  std::size_t l_ = 1;
  double T_ = 1.0;
  std::size_t nodes_ = 0;
  std::vector<double> v_;
  std::vector<double> w_;
};

// Central differences at interior nodes, one-sided at the boundary.
void compute_gradient(const GridSpec& grid, std::size_t d, std::size_t l,
                      std::span<const double> v_layer,
                      std::span<double> w_layer);
void gradient(DecouplingField& field);

// Backward IMEX stepping of
//   d_t v + b_n(t,x,v,D_x v sigma) D_x v + 1/2 tr(sigma sigma^* D_xx v)
//         + g_n(t,x,v,D_x v sigma) = 0,   v(T,.) = h_n,
// with implicit diffusion, explicit upwind transport and explicit source, both
// lagged from the later layer, and homogeneous Neumann conditions.
DecouplingField solve_decoupling_field(const MollifiedCoefficients& mc,
                                       const GrowthSpec& spec,
                                       const GridSpec& grid);

// Whether the terminal layer equals h_n at every node, bit for bit.
bool terminal_exact(const DecouplingField& field, const VectorFunction& h_n);

struct AprioriReport {
  double sup_v = 0.0;
  double R = 0.0;
  bool bound_ok = true;  // sup_v <= R (1 + 1e-6)
  std::vector<std::pair<double, double>> grad_bound;     // delta -> sup |D_x v|
  double holder_alpha = 1.0;
  double holder_c = 0.0;
  std::size_t holder_pairs = 0;                          // pairs used in the fit
  double sobolev_p = 2.0;
  double sobolev_halfwidth = 0.0;                        // box O = [-a, a]^d
  std::vector<std::pair<double, double>> sobolev_local;  // delta -> integral
};

AprioriReport check_apriori(const DecouplingField& field, const GrowthSpec& spec,
                            const GridSpec& grid, double p = 2.0,
                            std::uint64_t seed = 0,
                            double sobolev_halfwidth = -1.0);

// CSV with header t,x1..,v1..,w1_1.. and one row per (layer, node).
void write_field_csv(const DecouplingField& field, std::ostream& os);

}  // namespace fbsde
