#include "core/pde.hpp"

#include "core/error.hpp"
#include "core/format.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

namespace fbsde {

void check_grid(const GridSpec& grid, double T) {
  if (!(grid.L > 0.0) || !std::isfinite(grid.L))
    fail(ErrorCode::InvalidArgument, "grid half-width L must be positive");
  if (grid.Nx < 3 || grid.Nx % 2 == 0)
    fail(ErrorCode::InvalidArgument, "grid Nx must be odd and at least 3");
  if (grid.Nt < 1) fail(ErrorCode::InvalidArgument, "grid Nt must be >= 1");
  for (std::size_t i = 0; i < grid.deltas.size(); ++i) {
    const double dl = grid.deltas[i];
    if (!(dl > 0.0) || !(dl < T))
      fail(ErrorCode::InvalidArgument, "each delta must lie in (0, T)");
    if (i > 0 && !(dl < grid.deltas[i - 1]))
      fail(ErrorCode::InvalidArgument, "deltas must be strictly decreasing");
  }
}

namespace {

std::size_t ipow(std::size_t base, std::size_t e) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < e; ++i) r *= base;
  return r;
}

struct NodeIndexer {
  std::size_t n;  // nodes per axis
  std::size_t d;

  std::size_t stride(std::size_t axis) const { return ipow(n, axis); }
  std::size_t index(std::size_t node, std::size_t axis) const {
    return (node / stride(axis)) % n;
  }
  // Neighbour along an axis, reflected at the boundary (ghost node mirror).
  std::size_t reflect(std::size_t node, std::size_t axis, int dir) const {
    const std::size_t j = index(node, axis);
    const std::size_t s = stride(axis);
    if (dir > 0) return j + 1 < n ? node + s : node - s;
    return j > 0 ? node - s : node + s;
  }
  bool interior(std::size_t node) const {
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t j = index(node, a);
      if (j == 0 || j + 1 == n) return false;
    }
    return true;
  }
};

}  // namespace

DecouplingField::DecouplingField(GridSpec grid, std::size_t d, std::size_t l,
                                 double T)
    : grid_(std::move(grid)), d_(d), l_(l), T_(T) {
  require(d >= 1 && d <= kMaxForwardDim, "field dimension d must be 1 or 2");
  require(l >= 1, "field dimension l must be positive");
  check_grid(grid_, T);
  nodes_ = ipow(grid_.Nx, d_);
  v_.assign(layers() * nodes_ * l_, 0.0);
  w_.assign(layers() * nodes_ * l_ * d_, 0.0);
}

double DecouplingField::coord(std::size_t node, std::size_t axis) const {
  const NodeIndexer ix{grid_.Nx, d_};
  const double j = static_cast<double>(ix.index(node, axis));
  const double m = static_cast<double>(grid_.Nx - 1);
  return grid_.L * (2.0 * j - m) / m;
}

void DecouplingField::node_point(std::size_t node, std::span<double> x) const {
  for (std::size_t a = 0; a < d_; ++a) x[a] = coord(node, a);
}

std::size_t DecouplingField::layer_at(double t) const {
  const double s = t / dt();
  if (!(s > 0.0)) return 0;
  const auto k = static_cast<std::size_t>(std::floor(s + 1e-9));
  return std::min(k, grid_.Nt);
}

bool DecouplingField::inside(std::span<const double> x) const {
  for (std::size_t a = 0; a < d_; ++a)
    if (std::abs(x[a]) > grid_.L) return false;
  return true;
}

void DecouplingField::interpolate(std::span<const double> layer,
                                  std::size_t width, std::span<const double> x,
                                  std::span<double> out) const {
  const std::size_t n = grid_.Nx;
  const double h = dx();
  std::size_t base = 0;
  double frac[kMaxForwardDim] = {0.0, 0.0};
  std::size_t stride[kMaxForwardDim] = {1, n};
  for (std::size_t a = 0; a < d_; ++a) {
    double s = (x[a] + grid_.L) / h;
    s = std::clamp(s, 0.0, static_cast<double>(n - 1));
    auto i0 = static_cast<std::size_t>(s);
    if (i0 > n - 2) i0 = n - 2;
    frac[a] = s - static_cast<double>(i0);
    base += i0 * stride[a];
  }
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t corners = std::size_t{1} << d_;
  for (std::size_t c = 0; c < corners; ++c) {
    double wgt = 1.0;
    std::size_t node = base;
    for (std::size_t a = 0; a < d_; ++a) {
      if (c & (std::size_t{1} << a)) {
        wgt *= frac[a];
        node += stride[a];
      } else {
        wgt *= 1.0 - frac[a];
      }
    }
    if (wgt == 0.0) continue;
    const double* src = layer.data() + node * width;
    for (std::size_t o = 0; o < width; ++o) out[o] += wgt * src[o];
  }
}

void DecouplingField::value(double t, std::span<const double> x,
                            std::span<double> out) const {
  interpolate(v_layer(layer_at(t)), l_, x, out);
}

void DecouplingField::gradient_at(double t, std::span<const double> x,
                                  std::span<double> out) const {
  interpolate(w_layer(layer_at(t)), l_ * d_, x, out);
}

double DecouplingField::sup_abs_v() const {
  double m = 0.0;
  for (std::size_t i = 0; i < v_.size(); i += l_) {
    double s = 0.0;
    for (std::size_t c = 0; c < l_; ++c) s += v_[i + c] * v_[i + c];
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

double DecouplingField::sup_abs_w(double t_max) const {
  double m = 0.0;
  const std::size_t width = l_ * d_;
  for (std::size_t k = 0; k < layers(); ++k) {
    if (time(k) > t_max + 1e-12) break;
    const auto w = w_layer(k);
    for (std::size_t i = 0; i < w.size(); i += width) {
      double s = 0.0;
      for (std::size_t c = 0; c < width; ++c) s += w[i + c] * w[i + c];
      m = std::max(m, std::sqrt(s));
    }
  }
  return m;
}

void compute_gradient(const GridSpec& grid, std::size_t d, std::size_t l,
                      std::span<const double> v, std::span<double> w) {
  const NodeIndexer ix{grid.Nx, d};
  const std::size_t nodes = ipow(grid.Nx, d);
  require(v.size() == nodes * l && w.size() == nodes * l * d,
          "compute_gradient: layer size mismatch");
  const double h = grid.dx();
  for (std::size_t node = 0; node < nodes; ++node) {
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t j = ix.index(node, a);
      const std::size_t s = ix.stride(a);
      std::size_t lo = node, hi = node;
      double span = h;
      if (j == 0) {
        hi = node + s;
      } else if (j + 1 == grid.Nx) {
        lo = node - s;
      } else {
        lo = node - s;
        hi = node + s;
        span = 2.0 * h;
      }
      for (std::size_t c = 0; c < l; ++c)
        w[(node * l + c) * d + a] = (v[hi * l + c] - v[lo * l + c]) / span;
    }
  }
}

void gradient(DecouplingField& field) {
  for (std::size_t k = 0; k < field.layers(); ++k)
    compute_gradient(field.grid(), field.d(), field.l(), field.v_layer(k),
                     field.w_layer(k));
}

DecouplingField solve_decoupling_field(const MollifiedCoefficients& mc,
                                       const GrowthSpec& spec,
                                       const GridSpec& grid) {
  check_growth_spec(spec);
  check_grid(grid, spec.T);
  require(mc.b.in_dim() == spec.layout().size() && mc.b.out_dim() == spec.d,
          "solve_decoupling_field: b does not match the growth spec");
  require(mc.g.out_dim() == spec.l && mc.h.in_dim() == spec.d &&
              mc.h.out_dim() == spec.l,
          "solve_decoupling_field: g or h does not match the growth spec");

  const std::size_t d = spec.d;
  const std::size_t l = spec.l;
  DecouplingField field(grid, d, l, spec.T);
  field.level = mc.level;
  const std::size_t nodes = field.nodes();
  const std::size_t last = grid.Nt;
  const double dt = field.dt();
  const double h = field.dx();
  const NodeIndexer ix{grid.Nx, d};

  std::vector<double> x(d);
  {
    auto vT = field.v_layer(last);
    for (std::size_t node = 0; node < nodes; ++node) {
      field.node_point(node, x);
      mc.h(x, vT.subspan(node * l, l));
    }
    compute_gradient(grid, d, l, vT, field.w_layer(last));
  }

  // Implicit diffusion matrix I - dt * 1/2 tr(a D_xx) with reflected ghosts.
  const Matrix a = spec.sigma * spec.sigma.transpose();
  using SpMat = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(nodes * (1 + 2 * d + 4 * d * d));
  for (std::size_t node = 0; node < nodes; ++node) {
    const auto r = static_cast<int>(node);
    trip.emplace_back(r, r, 1.0);
    for (std::size_t i = 0; i < d; ++i) {
      const double c = 0.5 * a(i, i) * dt / (h * h);
      trip.emplace_back(r, r, 2.0 * c);
      trip.emplace_back(r, static_cast<int>(ix.reflect(node, i, +1)), -c);
      trip.emplace_back(r, static_cast<int>(ix.reflect(node, i, -1)), -c);
      for (std::size_t j = i + 1; j < d; ++j) {
        const double cc = a(i, j) * dt / (4.0 * h * h);
        if (cc == 0.0) continue;
        const std::size_t ip = ix.reflect(node, i, +1);
        const std::size_t im = ix.reflect(node, i, -1);
        trip.emplace_back(r, static_cast<int>(ix.reflect(ip, j, +1)), -cc);
        trip.emplace_back(r, static_cast<int>(ix.reflect(ip, j, -1)), cc);
        trip.emplace_back(r, static_cast<int>(ix.reflect(im, j, +1)), cc);
        trip.emplace_back(r, static_cast<int>(ix.reflect(im, j, -1)), -cc);
      }
    }
  }
  SpMat A(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(nodes));
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success)
    fail(ErrorCode::LinearSolve,
         "diffusion matrix factorisation failed (check grid and sigma)");

  const ArgLayout lay = spec.layout();
  std::vector<double> args(lay.size()), bval(d), gval(l);
  std::vector<Eigen::VectorXd> rhs(l, Eigen::VectorXd(static_cast<Eigen::Index>(nodes)));

  for (std::size_t k = last; k-- > 0;) {
    const double t_next = field.time(k + 1);
    const auto vn = field.v_layer(k + 1);
    const auto wn = field.w_layer(k + 1);
    args[0] = t_next;
    for (std::size_t node = 0; node < nodes; ++node) {
      for (std::size_t i = 0; i < d; ++i) args[lay.x_offset() + i] = field.coord(node, i);
      for (std::size_t c = 0; c < l; ++c) args[lay.y_offset() + c] = vn[node * l + c];
      for (std::size_t c = 0; c < l; ++c)
        for (std::size_t j = 0; j < d; ++j) {
          double z = 0.0;
          for (std::size_t i = 0; i < d; ++i)
            z += wn[(node * l + c) * d + i] * spec.sigma(static_cast<Eigen::Index>(i),
                                                         static_cast<Eigen::Index>(j));
          args[lay.z_offset() + c * d + j] = z;
        }
      mc.b(args, bval);
      mc.g(args, gval);
      for (std::size_t c = 0; c < l; ++c) {
        const double vc = vn[node * l + c];
        double adv = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          if (bval[i] > 0.0)
            adv += bval[i] * (vn[ix.reflect(node, i, +1) * l + c] - vc) / h;
          else if (bval[i] < 0.0)
            adv += bval[i] * (vc - vn[ix.reflect(node, i, -1) * l + c]) / h;
        }
        rhs[c][static_cast<Eigen::Index>(node)] = vc + dt * (adv + gval[c]);
      }
    }
    auto vk = field.v_layer(k);
    for (std::size_t c = 0; c < l; ++c) {
      const Eigen::VectorXd sol = lu.solve(rhs[c]);
      for (std::size_t node = 0; node < nodes; ++node) {
        const double val = sol[static_cast<Eigen::Index>(node)];
        if (!std::isfinite(val))
          fail(ErrorCode::Numeric,
               "non-finite value in decoupling field at layer " + std::to_string(k));
        vk[node * l + c] = val;
      }
    }
    compute_gradient(grid, d, l, vk, field.w_layer(k));
  }
  return field;
}

bool terminal_exact(const DecouplingField& field, const VectorFunction& h_n) {
  const std::size_t l = field.l();
  std::vector<double> x(field.d()), hv(l);
  const auto vT = field.v_layer(field.layers() - 1);
  for (std::size_t node = 0; node < field.nodes(); ++node) {
    field.node_point(node, x);
    h_n(x, hv);
    for (std::size_t c = 0; c < l; ++c)
      if (vT[node * l + c] != hv[c]) return false;
  }
  return true;
}

AprioriReport check_apriori(const DecouplingField& field, const GrowthSpec& spec,
                            const GridSpec& grid, double p, std::uint64_t seed,
                            double sobolev_halfwidth) {
  require(p >= 2.0, "check_apriori: exponent p must be >= 2");
  AprioriReport rep;
  rep.R = bound_r(spec);
  rep.sup_v = field.sup_abs_v();
  rep.bound_ok = rep.sup_v <= rep.R * (1.0 + 1e-6);
  rep.sobolev_p = p;
  rep.sobolev_halfwidth = sobolev_halfwidth > 0.0 ? sobolev_halfwidth : 0.5 * grid.L;

  std::vector<double> deltas{0.0};
  deltas.insert(deltas.end(), grid.deltas.begin(), grid.deltas.end());
  for (double dl : deltas)
    rep.grad_bound.emplace_back(dl, field.sup_abs_w(field.T() - dl));

  // Holder fit: modulus of continuity on log-spaced distance bins, nodes in
  // |x|_inf <= L/2, distance |x - x'| + |t - t'|^{1/2}.
  {
    const std::size_t d = field.d();
    const std::size_t l = field.l();
    std::vector<std::size_t> inner;
    for (std::size_t node = 0; node < field.nodes(); ++node) {
      bool in = true;
      for (std::size_t a = 0; a < d; ++a) in = in && std::abs(field.coord(node, a)) <= 0.5 * grid.L;
      if (in) inner.push_back(node);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_k(0, field.layers() - 1);
    std::uniform_int_distribution<std::size_t> pick_n(0, inner.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_axis(0, d - 1);
    const double lo = field.dx();
    const double hi = 0.5 * grid.L;
    const double dt = field.layers() > 1 ? field.time(1) - field.time(0) : 1.0;
    constexpr int kBins = 8;
    constexpr int kPerBin = 400;
    std::vector<double> modulus(kBins, 0.0);
    std::vector<std::size_t> count(kBins, 0);
    std::size_t used = 0;
    const std::size_t nx = grid.Nx;
    for (int target = 0; target < kBins; ++target) {
      const double r = lo * std::pow(hi / lo, (target + unit(rng)) / kBins);
      for (int pair = 0; pair < kPerBin; ++pair) {
        // Split the target distance between space and time at random.
        const double u = unit(rng);
        const auto jump = static_cast<std::size_t>(std::llround(u * r / lo));
        const auto lag = static_cast<std::size_t>(std::llround((1.0 - u) * (1.0 - u) * r * r / dt));
        const std::size_t n1 = inner[pick_n(rng)];
        const std::size_t axis = pick_axis(rng);
        std::size_t stride = 1;
        for (std::size_t a = 0; a < axis; ++a) stride *= nx;
        const std::size_t idx = (n1 / stride) % nx;
        const bool up = unit(rng) < 0.5;
        std::size_t idx2;
        if (up && idx + jump < nx) idx2 = idx + jump;
        else if (idx >= jump) idx2 = idx - jump;
        else continue;
        const std::size_t n2 = n1 + (idx2 - idx) * stride;
        const std::size_t k1 = pick_k(rng);
        std::size_t k2;
        if (k1 + lag < field.layers()) k2 = k1 + lag;
        else if (k1 >= lag) k2 = k1 - lag;
        else continue;
        double dxn = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
          const double e = field.coord(n1, a) - field.coord(n2, a);
          dxn += e * e;
        }
        const double dist =
            std::sqrt(dxn) + std::sqrt(std::abs(field.time(k1) - field.time(k2)));
        if (dist < lo || dist > hi) continue;
        double dv = 0.0;
        const auto v1 = field.v_layer(k1), v2 = field.v_layer(k2);
        for (std::size_t c = 0; c < l; ++c) {
          const double e = v1[n1 * l + c] - v2[n2 * l + c];
          dv += e * e;
        }
        const int bin =
            std::min(kBins - 1, static_cast<int>(kBins * std::log(dist / lo) / std::log(hi / lo)));
        modulus[bin] = std::max(modulus[bin], std::sqrt(dv));
        ++count[bin];
        ++used;
      }
    }
    rep.holder_pairs = used;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int fitted = 0;
    // Differences at rounding level carry no information.
    const double floor = 1e-12 * std::max(1.0, rep.sup_v);
    for (int bin = 0; bin < kBins; ++bin) {
      if (count[bin] == 0 || modulus[bin] <= floor) continue;
      const double r = lo * std::pow(hi / lo, (bin + 0.5) / kBins);
      const double lx = std::log(r), ly = std::log(modulus[bin]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++fitted;
    }
    const double nn = fitted;
    const double den = nn * sxx - sx * sx;
    if (fitted >= 2 && den > 0.0) {
      rep.holder_alpha = (nn * sxy - sx * sy) / den;
      rep.holder_c = std::exp((sy - rep.holder_alpha * sx) / nn);
    } else {
      rep.holder_alpha = 1.0;
      rep.holder_c = 0.0;
    }
  }

  // Local Sobolev integral of |D_x v|^p + |D_xx v|^p over [0, T - delta] x O.
  {
    const std::size_t d = field.d();
    const std::size_t l = field.l();
    const double h = field.dx();
    const NodeIndexer ix{grid.Nx, d};
    const double cell = std::pow(h, static_cast<double>(d)) * field.dt();
    std::vector<double> per_layer(field.layers(), 0.0);
    for (std::size_t k = 0; k < field.layers(); ++k) {
      const auto v = field.v_layer(k);
      const auto w = field.w_layer(k);
      double acc = 0.0;
      for (std::size_t node = 0; node < field.nodes(); ++node) {
        if (!ix.interior(node)) continue;
        bool in_box = true;
        for (std::size_t a = 0; a < d; ++a)
          in_box = in_box && std::abs(field.coord(node, a)) <= rep.sobolev_halfwidth + 1e-12;
        if (!in_box) continue;
        double g2 = 0.0;
        for (std::size_t e = 0; e < l * d; ++e) g2 += w[node * l * d + e] * w[node * l * d + e];
        double h2 = 0.0;
        for (std::size_t c = 0; c < l; ++c) {
          for (std::size_t i = 0; i < d; ++i) {
            const double vp = v[ix.reflect(node, i, +1) * l + c];
            const double vm = v[ix.reflect(node, i, -1) * l + c];
            const double hii = (vp - 2.0 * v[node * l + c] + vm) / (h * h);
            h2 += hii * hii;
            for (std::size_t j = i + 1; j < d; ++j) {
              const std::size_t ip = ix.reflect(node, i, +1), im = ix.reflect(node, i, -1);
              const double hij = (v[ix.reflect(ip, j, +1) * l + c] - v[ix.reflect(ip, j, -1) * l + c] -
                                  v[ix.reflect(im, j, +1) * l + c] + v[ix.reflect(im, j, -1) * l + c]) /
                                 (4.0 * h * h);
              h2 += 2.0 * hij * hij;
            }
          }
        }
        acc += std::pow(std::sqrt(g2), p) + std::pow(std::sqrt(h2), p);
      }
      per_layer[k] = acc * cell;
    }
    for (double dl : deltas) {
      double total = 0.0;
      for (std::size_t k = 0; k < field.layers(); ++k) {
        if (field.time(k) > field.T() - dl + 1e-12) break;
        total += per_layer[k];
      }
      rep.sobolev_local.emplace_back(dl, total);
    }
  }
  return rep;
}

void write_field_csv(const DecouplingField& field, std::ostream& os) {
  const std::size_t d = field.d(), l = field.l();
  std::string line = "t";
  for (std::size_t a = 0; a < d; ++a) line += ",x" + std::to_string(a + 1);
  for (std::size_t c = 0; c < l; ++c) line += ",v" + std::to_string(c + 1);
  for (std::size_t c = 0; c < l; ++c)
    for (std::size_t a = 0; a < d; ++a)
      line += ",w" + std::to_string(c + 1) + "_" + std::to_string(a + 1);
  line += '\n';
  os << line;
  std::string row;
  for (std::size_t k = 0; k < field.layers(); ++k) {
    const auto v = field.v_layer(k);
    const auto w = field.w_layer(k);
    const std::string t = format_number(field.time(k));
    for (std::size_t node = 0; node < field.nodes(); ++node) {
      row = t;
      for (std::size_t a = 0; a < d; ++a) {
        row += ',';
        append_number(row, field.coord(node, a));
      }
      for (std::size_t c = 0; c < l; ++c) {
        row += ',';
        append_number(row, v[node * l + c]);
      }
      for (std::size_t e = 0; e < l * d; ++e) {
        row += ',';
        append_number(row, w[node * l * d + e]);
      }
      row += '\n';
      os << row;
    }
  }
}

}  // namespace fbsde
