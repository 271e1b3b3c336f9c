#include "core/verify.hpp"

#include "core/error.hpp"
#include "core/format.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"
#include "core/stats.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace fbsde {

namespace {

std::size_t snap_index(double t, double s, double dt, std::size_t N,
                       const char* what) {
  const double r = (t - s) / dt;
  require(r > -1e-9 && r < static_cast<double>(N) + 1e-9,
          std::string(what) + ": time outside the simulation grid");
  return std::min<std::size_t>(N, static_cast<std::size_t>(std::llround(std::max(0.0, r))));
}

double frob2(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

}  // namespace

GirsanovReport girsanov_law_check(const MollifiedCoefficients& mc,
                                  const DecouplingField& field,
                                  const GrowthSpec& spec,
                                  std::span<const double> x0, double t,
                                  std::size_t M, std::uint64_t seed,
                                  const GirsanovOptions& opts) {
  require(M >= 2, "girsanov_law_check: need at least 2 paths");
  const std::size_t d = spec.d, N = opts.N;
  const double dt = spec.T / static_cast<double>(N);
  const std::size_t it = snap_index(t, 0.0, dt, N, "girsanov_law_check");
  require(it >= 1, "girsanov_law_check: t must be positive");

  SimulationOptions sim;
  sim.jobs = opts.jobs;
  const PathEnsemble direct = simulate_forward(field, mc, spec, x0, 0.0, N, M, seed, sim);

  const FeedbackDrift drift(mc, field, spec);
  const double bound = direct.drift_bound;
  const Matrix sinv =
      spec.sigma.transpose() * (spec.sigma * spec.sigma.transpose()).inverse();
  const Increments dW = brownian_increments(M, N, d, dt, seed, kGirsanovStream, opts.jobs);

  std::vector<double> B(M * d), weight(M);
  std::vector<double> worst(std::max<std::size_t>(1, opts.jobs), 0.0);
  parallel_for(M, opts.jobs, [&](std::size_t lo, std::size_t hi, std::size_t w) {
    double x[kMaxForwardDim], b[kMaxForwardDim], u[kMaxForwardDim];
    for (std::size_t m = lo; m < hi; ++m) {
      for (std::size_t j = 0; j < d; ++j) x[j] = x0[j];
      double logw = 0.0;
      for (std::size_t i = 0; i < it; ++i) {
        const double ti = static_cast<double>(i) * dt;
        drift(ti, {x, d}, {b, d});
        double bn = 0.0;
        for (std::size_t j = 0; j < d; ++j) bn += b[j] * b[j];
        worst[w] = std::max(worst[w], std::sqrt(bn));
        const double* dw = dW->data() + (m * N + i) * d;
        double u2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          u[j] = 0.0;
          for (std::size_t k = 0; k < d; ++k)
            u[j] += sinv(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * b[k];
          logw += u[j] * dw[j];
          u2 += u[j] * u[j];
        }
        logw -= 0.5 * u2 * dt;
        for (std::size_t j = 0; j < d; ++j) {
          double noise = 0.0;
          for (std::size_t k = 0; k < d; ++k)
            noise += spec.sigma(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * dw[k];
          x[j] += noise;
        }
      }
      for (std::size_t j = 0; j < d; ++j) B[m * d + j] = x[j];
      weight[m] = std::exp(logw);
    }
  });
  const double max_b = *std::max_element(worst.begin(), worst.end());
  if (max_b > bound)
    fail(ErrorCode::Invariant, "drift bound violated on driftless paths: " +
                                   format_number(max_b) + " > " + format_number(bound));

  GirsanovReport rep;
  rep.t = static_cast<double>(it) * dt;
  rep.M = M;
  rep.N = N;
  rep.ess = effective_sample_size(weight);
  rep.reliable = rep.ess >= 100.0;
  const Estimate wm = sample_mean(weight);
  rep.weight_mean = wm.mean;
  rep.weight_se = wm.se;
  rep.weights_nonnegative =
      std::all_of(weight.begin(), weight.end(), [](double w) { return w >= 0.0; });
  rep.martingale_ok = std::abs(wm.mean - 1.0) <= 5.0 * wm.se;

  std::vector<double> fb(M), fx(M);
  auto add_row = [&](std::string name, auto feature) {
    for (std::size_t m = 0; m < M; ++m) {
      fb[m] = feature(std::span<const double>(B.data() + m * d, d));
      fx[m] = feature(direct.x(m, it));
    }
    const Estimate ew = weighted_mean(fb, weight);
    const Estimate ed = sample_mean(fx);
    MomentRow row{std::move(name), ew.mean, ew.se, ed.mean, ed.se, 0.0};
    const double se = std::hypot(ew.se, ed.se);
    row.z = se > 0.0 ? (ew.mean - ed.mean) / se : 0.0;
    rep.max_abs_z = std::max(rep.max_abs_z, std::abs(row.z));
    rep.moments.push_back(std::move(row));
  };
  for (std::size_t j = 0; j < d; ++j)
    add_row("E[x" + std::to_string(j + 1) + "]",
            [j](std::span<const double> x) { return x[j]; });
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = j; k < d; ++k)
      add_row("E[x" + std::to_string(j + 1) + "*x" + std::to_string(k + 1) + "]",
              [j, k](std::span<const double> x) { return x[j] * x[k]; });

  if (d == 1) {
    for (std::size_t m = 0; m < M; ++m) fx[m] = direct.x(m, it)[0];
    rep.ks_statistic = weighted_ks_statistic(B, weight, fx);
    rep.ks_critical = ks_critical_value(1e-3, std::max(rep.ess, 1.0), static_cast<double>(M));
  }
  return rep;
}

double bsde_residual(const PathEnsemble& ens, const VectorFunction& g, double delta) {
  require(ens.has_yz(), "bsde_residual: ensemble has no Y, Z");
  require(delta >= 0.0 && delta < ens.T - ens.s, "bsde_residual: delta out of range");
  const std::size_t d = ens.d, l = ens.l, N = ens.N;
  const double dt = ens.dt();
  const std::size_t iend = snap_index(ens.T - delta, ens.s, dt, N, "bsde_residual");
  const ArgLayout lay{d, l};
  require(g.in_dim() == lay.size() && g.out_dim() == l, "bsde_residual: driver has the wrong shape");
  std::vector<double> args(lay.size()), gv(l), r(l);
  double acc = 0.0;
  for (std::size_t m = 0; m < ens.M; ++m) {
    const auto y0 = ens.y(m, 0), ye = ens.y(m, iend);
    for (std::size_t c = 0; c < l; ++c) r[c] = y0[c] - ye[c];
    for (std::size_t i = 0; i < iend; ++i) {
      args[0] = ens.times[i];
      const auto x = ens.x(m, i), y = ens.y(m, i), z = ens.z(m, i);
      std::copy(x.begin(), x.end(), args.begin() + lay.x_offset());
      std::copy(y.begin(), y.end(), args.begin() + lay.y_offset());
      std::copy(z.begin(), z.end(), args.begin() + lay.z_offset());
      g(args, gv);
      const auto dw = ens.dw(m, i);
      for (std::size_t c = 0; c < l; ++c) {
        double zdw = 0.0;
        for (std::size_t j = 0; j < d; ++j) zdw += z[c * d + j] * dw[j];
        r[c] += -gv[c] * dt + zdw;
      }
    }
    acc += frob2(r);
  }
  return std::sqrt(acc / static_cast<double>(ens.M));
}

std::vector<double> terminal_approach(const PathEnsemble& ens, const VectorFunction& h,
                                      const std::vector<double>& deltas) {
  require(ens.has_yz(), "terminal_match: ensemble has no Y");
  require(h.in_dim() == ens.d && h.out_dim() == ens.l, "terminal_match: h has the wrong shape");
  std::vector<double> out;
  std::vector<double> hv(ens.l);
  for (double dl : deltas) {
    const std::size_t i = snap_index(ens.T - dl, ens.s, ens.dt(), ens.N, "terminal_match");
    double acc = 0.0;
    for (std::size_t m = 0; m < ens.M; ++m) {
      h(ens.x(m, ens.N), hv);
      const auto y = ens.y(m, i);
      for (std::size_t c = 0; c < ens.l; ++c) acc += (y[c] - hv[c]) * (y[c] - hv[c]);
    }
    out.push_back(std::sqrt(acc / static_cast<double>(ens.M)));
  }
  return out;
}

double terminal_match(const PathEnsemble& ens, const VectorFunction& h) {
  return terminal_approach(ens, h, {0.0}).front();
}

ConvergenceReport cauchy_convergence(const std::vector<LevelRun>& levels, double delta,
                                     const std::vector<double>& t_list) {
  require(levels.size() >= 2, "cauchy_convergence: need at least two levels");
  for (const auto& lv : levels)
    require(lv.field && lv.ens && lv.ens->has_yz(),
            "cauchy_convergence: each level needs a field and a reconstructed ensemble");
  const auto& f0 = *levels.front().field;
  const auto& e0 = *levels.front().ens;
  require(delta >= 0.0 && delta < e0.T - e0.s, "cauchy_convergence: delta out of range");
  for (const auto& lv : levels) {
    const auto& g = lv.field->grid();
    if (g.L != f0.grid().L || g.Nx != f0.grid().Nx || g.Nt != f0.grid().Nt ||
        lv.field->d() != f0.d() || lv.field->l() != f0.l())
      fail(ErrorCode::InvalidArgument, "cauchy_convergence: mismatched grids");
    const auto& e = *lv.ens;
    if (e.seed != e0.seed || e.M != e0.M || e.N != e0.N || e.s != e0.s || e.x0 != e0.x0 ||
        !(e.dW == e0.dW || *e.dW == *e0.dW))
      fail(ErrorCode::InvalidArgument, "cauchy_convergence: mismatched seeds or path grids");
  }

  ConvergenceReport rep;
  rep.delta = delta;
  rep.t_list = t_list;
  const std::size_t d = e0.d, l = e0.l, N = e0.N, M = e0.M;
  const double dt = e0.dt();
  const std::size_t iend = snap_index(e0.T - delta, e0.s, dt, N, "cauchy_convergence");
  std::vector<std::size_t> tidx;
  for (double t : t_list) tidx.push_back(snap_index(t, e0.s, dt, N, "cauchy_convergence"));

  for (std::size_t k = 0; k + 1 < levels.size(); ++k) {
    const auto& a = levels[k];
    const auto& b = levels[k + 1];
    LevelGap gap;
    gap.n = a.n;
    gap.next = b.n;
    for (std::size_t layer = 0; layer < f0.layers(); ++layer) {
      if (f0.time(layer) > f0.T() - delta + 1e-12) break;
      const auto va = a.field->v_layer(layer), vb = b.field->v_layer(layer);
      for (std::size_t node = 0; node < f0.nodes(); ++node) {
        double s = 0.0;
        for (std::size_t c = 0; c < l; ++c) {
          const double e = va[node * l + c] - vb[node * l + c];
          s += e * e;
        }
        gap.v_sup = std::max(gap.v_sup, std::sqrt(s));
      }
      const auto wa = a.field->w_layer(layer), wb = b.field->w_layer(layer);
      for (std::size_t node = 0; node < f0.nodes(); ++node) {
        double s = 0.0;
        for (std::size_t c = 0; c < l * d; ++c) {
          const double e = wa[node * l * d + c] - wb[node * l * d + c];
          s += e * e;
        }
        gap.w_sup = std::max(gap.w_sup, std::sqrt(s));
      }
    }
    for (std::size_t ti : tidx) {
      double acc = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        const auto xa = a.ens->x(m, ti), xb = b.ens->x(m, ti);
        for (std::size_t j = 0; j < d; ++j) acc += (xa[j] - xb[j]) * (xa[j] - xb[j]);
      }
      gap.x_l2.push_back(std::sqrt(acc / static_cast<double>(M)));
    }
    double ya = 0.0, za = 0.0, ia = 0.0;
    std::vector<double> integral(l);
    for (std::size_t m = 0; m < M; ++m) {
      std::fill(integral.begin(), integral.end(), 0.0);
      for (std::size_t i = 0; i < iend; ++i) {
        const auto y1 = a.ens->y(m, i), y2 = b.ens->y(m, i);
        for (std::size_t c = 0; c < l; ++c) ya += (y1[c] - y2[c]) * (y1[c] - y2[c]) * dt;
        const auto z1 = a.ens->z(m, i), z2 = b.ens->z(m, i);
        const auto dw = e0.dw(m, i);
        for (std::size_t c = 0; c < l; ++c)
          for (std::size_t j = 0; j < d; ++j) {
            const double e = z1[c * d + j] - z2[c * d + j];
            za += e * e * dt;
            integral[c] += e * dw[j];
          }
      }
      ia += frob2(integral);
    }
    const double Mf = static_cast<double>(M);
    gap.y_h2 = std::sqrt(ya / Mf);
    gap.z_h2 = std::sqrt(za / Mf);
    gap.stoch_int = std::sqrt(ia / Mf);
    auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
    rep.finite = rep.finite && ok(gap.v_sup) && ok(gap.w_sup) && ok(gap.y_h2) &&
                 ok(gap.z_h2) && ok(gap.stoch_int) &&
                 std::all_of(gap.x_l2.begin(), gap.x_l2.end(), ok);
    rep.gaps.push_back(std::move(gap));
  }
  return rep;
}

namespace {

struct FlowSample {
  std::vector<double> center;      // [M][d] X_t^{s,x}
  std::vector<double> derivative;  // [M][d][d] central differences
  bool identity = true;
  double max_drift = 0.0;
};

// Simulates X^{s,x} and X^{s,x +- bump e_k} on shared increments. The coupled
// difference X^+ - X^- is integrated directly so that zero drift leaves it at
// exactly 2 bump e_k.
FlowSample simulate_flow(const FeedbackDrift& drift, const GrowthSpec& spec,
                         const Increments& dW, std::size_t M, std::size_t N,
                         double s, double dt, std::size_t it,
                         std::span<const double> x, double bump, std::size_t jobs) {
  const std::size_t d = spec.d;
  FlowSample out;
  out.center.resize(M * d);
  out.derivative.resize(M * d * d);
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs == 0 ? default_jobs() : jobs, M));
  std::vector<char> ident(workers, 1);
  std::vector<double> worst(workers, 0.0);
  parallel_for(M, workers, [&](std::size_t lo, std::size_t hi, std::size_t w) {
    double xc[kMaxForwardDim], xp[kMaxForwardDim], xm[kMaxForwardDim], diff[kMaxForwardDim];
    double bc[kMaxForwardDim], bp[kMaxForwardDim], bm[kMaxForwardDim], noise[kMaxForwardDim];
    auto note = [&](const double* b) {
      double n2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) n2 += b[j] * b[j];
      worst[w] = std::max(worst[w], std::sqrt(n2));
    };
    for (std::size_t m = lo; m < hi; ++m) {
      for (std::size_t k = 0; k <= d; ++k) {
        // k == d is the unbumped path.
        for (std::size_t j = 0; j < d; ++j) {
          xc[j] = x[j];
          xp[j] = x[j];
          xm[j] = x[j];
          diff[j] = 0.0;
        }
        if (k < d) {
          xp[k] += bump;
          xm[k] -= bump;
          diff[k] = 2.0 * bump;
        }
        for (std::size_t i = 0; i < it; ++i) {
          const double ti = s + static_cast<double>(i) * dt;
          const double* dw = dW->data() + (m * N + i) * d;
          for (std::size_t j = 0; j < d; ++j) {
            noise[j] = 0.0;
            for (std::size_t q = 0; q < d; ++q)
              noise[j] += spec.sigma(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(q)) * dw[q];
          }
          if (k == d) {
            drift(ti, {xc, d}, {bc, d});
            note(bc);
            for (std::size_t j = 0; j < d; ++j) xc[j] += bc[j] * dt + noise[j];
          } else {
            drift(ti, {xp, d}, {bp, d});
            drift(ti, {xm, d}, {bm, d});
            note(bp);
            note(bm);
            for (std::size_t j = 0; j < d; ++j) {
              xp[j] += bp[j] * dt + noise[j];
              xm[j] += bm[j] * dt + noise[j];
              diff[j] += (bp[j] - bm[j]) * dt;
            }
          }
        }
        if (k == d) {
          for (std::size_t j = 0; j < d; ++j) out.center[m * d + j] = xc[j];
        } else {
          for (std::size_t j = 0; j < d; ++j) {
            const double v = diff[j] / (2.0 * bump);
            out.derivative[(m * d + j) * d + k] = v;
            if (v != (j == k ? 1.0 : 0.0)) ident[w] = 0;
          }
        }
      }
    }
  });
  out.identity = std::all_of(ident.begin(), ident.end(), [](char c) { return c != 0; });
  out.max_drift = *std::max_element(worst.begin(), worst.end());
  return out;
}

double cell_volume(const std::vector<double>& grid, std::size_t d) {
  double vol = 1.0;
  for (std::size_t a = 0; a < d; ++a) {
    std::set<double> vals;
    for (std::size_t k = a; k < grid.size(); k += d) vals.insert(grid[k]);
    if (vals.size() < 2)
      fail(ErrorCode::InvalidArgument, "sobolev_flow_check: x_grid needs two values per axis");
    vol *= (*vals.rbegin() - *vals.begin()) / static_cast<double>(vals.size() - 1);
  }
  return vol;
}

}  // namespace

RegularityReport sobolev_flow_check(const MollifiedCoefficients& mc,
                                    const DecouplingField& field,
                                    const GrowthSpec& spec, double s, double t,
                                    const std::vector<double>& x_grid, double bump,
                                    std::size_t M, std::uint64_t seed, double p,
                                    const SobolevOptions& opts) {
  const std::size_t d = spec.d;
  if (opts.y_check && spec.l != 1)
    fail(ErrorCode::InvalidArgument,
         "sobolev_flow_check: the Y-check is only defined for l = 1 (got l = " +
             std::to_string(spec.l) + ")");
  require(!x_grid.empty() && x_grid.size() % d == 0, "sobolev_flow_check: bad x_grid");
  require(bump >= 2.0 * field.dx() * (1.0 - 1e-12), "sobolev_flow_check: bump must be >= 2 dx");
  require(p >= 1.0, "sobolev_flow_check: p must be >= 1");
  require(M >= 1 && opts.N >= 1, "sobolev_flow_check: M and N must be >= 1");
  require(s >= 0.0 && t > s && t <= spec.T, "sobolev_flow_check: need 0 <= s < t <= T");
  for (std::size_t k = 0; k < x_grid.size(); k += d)
    require(field.inside({x_grid.data() + k, d}), "sobolev_flow_check: x_grid leaves the PDE box");

  const FeedbackDrift drift(mc, field, spec);
  const std::size_t N = opts.N;
  const double dt = (spec.T - s) / static_cast<double>(N);
  const std::size_t it = snap_index(t, s, dt, N, "sobolev_flow_check");
  const Increments dW = brownian_increments(M, N, d, dt, seed, kForwardStream, opts.jobs);
  const double bound = drift_bound(spec, mc.source ? mc.source->coeffs.flags
                                                   : StructuralFlags{true, false, false, false},
                                   field, mc.level);
  auto rho = opts.rho ? opts.rho : [](std::span<const double> x) {
    double r2 = 0.0;
    for (double v : x) r2 += v * v;
    return std::exp(-r2);
  };

  RegularityReport rep;
  rep.s = s;
  rep.t = s + static_cast<double>(it) * dt;
  rep.bump = bump;
  rep.p = p;
  rep.M = M;
  rep.identity_exact = true;
  const double vol = cell_volume(x_grid, d);
  const double Mf = static_cast<double>(M);
  double y_norm = 0.0;
  std::vector<double> wv(spec.l * d), yv(spec.l);

  for (std::size_t k = 0; k < x_grid.size(); k += d) {
    const std::span<const double> x(x_grid.data() + k, d);
    const FlowSample fs = simulate_flow(drift, spec, dW, M, N, s, dt, it, x, bump, opts.jobs);
    if (fs.max_drift > bound)
      fail(ErrorCode::Invariant, "drift bound violated in flow simulation: " +
                                     format_number(fs.max_drift) + " > " + format_number(bound));
    rep.identity_exact = rep.identity_exact && fs.identity;
    FlowPoint fp;
    fp.x.assign(x.begin(), x.end());
    fp.mean_derivative.assign(d * d, 0.0);
    bool in_u = true;
    for (double v : x) in_u = in_u && std::abs(v) < opts.u_halfwidth;
    double ey = 0.0, edy = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      const std::span<const double> xt(fs.center.data() + m * d, d);
      const std::span<const double> D(fs.derivative.data() + m * d * d, d * d);
      for (std::size_t e = 0; e < d * d; ++e) fp.mean_derivative[e] += D[e] / Mf;
      fp.mean_abs_x_p += std::pow(std::sqrt(frob2(xt)), p) / Mf;
      fp.mean_abs_dx_p += std::pow(std::sqrt(frob2(D)), p) / Mf;
      if (opts.y_check && in_u) {
        field.value(rep.t, xt, yv);
        field.gradient_at(rep.t, xt, wv);
        double dy2 = 0.0;
        for (std::size_t col = 0; col < d; ++col) {
          double acc = 0.0;
          for (std::size_t a = 0; a < d; ++a) acc += wv[a] * D[a * d + col];
          dy2 += acc * acc;
        }
        ey += std::abs(yv[0]) / Mf;
        edy += std::sqrt(dy2) / Mf;
      }
    }
    rep.weighted_norm += (fp.mean_abs_x_p + fp.mean_abs_dx_p) * rho(x) * vol;
    if (opts.y_check && in_u) y_norm += (ey + edy) * vol;
    rep.points.push_back(std::move(fp));
  }
  if (opts.y_check) rep.y_norm = y_norm;
  return rep;
}

std::vector<double> flow_derivative(const MollifiedCoefficients& mc,
                                    const DecouplingField& field,
                                    const GrowthSpec& spec, double s, double t,
                                    std::span<const double> x, double bump,
                                    std::size_t M, std::uint64_t seed, std::size_t N) {
  const FeedbackDrift drift(mc, field, spec);
  const double dt = (spec.T - s) / static_cast<double>(N);
  const std::size_t it = snap_index(t, s, dt, N, "flow_derivative");
  const Increments dW = brownian_increments(M, N, spec.d, dt, seed, kForwardStream);
  const FlowSample fs = simulate_flow(drift, spec, dW, M, N, s, dt, it, x, bump, 1);
  const std::size_t dd = spec.d * spec.d;
  std::vector<double> mean(dd, 0.0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t e = 0; e < dd; ++e) mean[e] += fs.derivative[m * dd + e];
  for (double& v : mean) v /= static_cast<double>(M);
  return mean;
}

MalliavinSummary malliavin_regularity_summary(const std::vector<MalliavinRun>& runs,
                                              const StructuralFlags& flags,
                                              const GrowthSpec& spec, double delta) {
  MalliavinSummary out;
  out.claims = applicable_claims(flags, spec.l);
  out.delta = delta;
  const bool y_all = flags.b2;
  const bool y_part = flags.b1 && !flags.b2;
  const bool z_all = flags.b2 && (flags.g_no_z || flags.g_no_x);
  const std::size_t d = spec.d, l = spec.l;

  for (const auto& run : runs) {
    require(run.mall && run.field, "malliavin_regularity_summary: missing ensemble or field");
    const MalliavinEnsemble& me = *run.mall;
    const DecouplingField& field = *run.field;
    const PathEnsemble& ens = *me.source;
    MalliavinLevel lv;
    lv.n = me.level;
    lv.x_by_time.assign(me.N + 1, 0.0);
    for (std::size_t j = 0; j < me.Ns(); ++j)
      for (std::size_t i = me.s_index[j]; i <= me.N; ++i)
        lv.x_by_time[i] = std::max(lv.x_by_time[i], me.mean_square(j, i));
    lv.x_sup = *std::max_element(lv.x_by_time.begin(), lv.x_by_time.end());

    if (y_all || y_part) {
      const double horizon = y_all ? spec.T + 1e-12 : spec.T - delta + 1e-12;
      const bool with_z = z_all;
      const double h = field.dx();
      double ysup = 0.0, zsup = 0.0;
      std::vector<double> w(l * d), wp(l * d), wm(l * d), dw(l * d * d), dy(l * d), dz(l * d);
      std::vector<double> xs(d);
      for (std::size_t j = 0; j < me.Ns(); ++j)
        for (std::size_t i = me.s_index[j]; i <= me.N; ++i) {
          const double ti = me.times[i];
          if (ti > horizon) break;
          double ys = 0.0, zs = 0.0;
          for (std::size_t m = 0; m < me.M; ++m) {
            const auto x = ens.x(m, i);
            const auto D = me.at(m, j, i);
            field.gradient_at(ti, x, w);
            for (std::size_t c = 0; c < l; ++c)
              for (std::size_t col = 0; col < d; ++col) {
                double acc = 0.0;
                for (std::size_t a = 0; a < d; ++a) acc += w[c * d + a] * D[a * d + col];
                dy[c * d + col] = acc;
              }
            ys += frob2(dy);
            if (with_z) {
              // dw[(c,k), a] = d/dx_a w_{c,k}
              for (std::size_t a = 0; a < d; ++a) {
                std::copy(x.begin(), x.end(), xs.begin());
                xs[a] = x[a] + h;
                field.gradient_at(ti, xs, wp);
                xs[a] = x[a] - h;
                field.gradient_at(ti, xs, wm);
                for (std::size_t e = 0; e < l * d; ++e) dw[e * d + a] = (wp[e] - wm[e]) / (2.0 * h);
              }
              // (D_s Z)_{c, jj, col} = sum_{k,a} dw[(c,k),a] D[a,col] sigma[k,jj]
              double acc2 = 0.0;
              for (std::size_t c = 0; c < l; ++c)
                for (std::size_t jj = 0; jj < d; ++jj)
                  for (std::size_t col = 0; col < d; ++col) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < d; ++k)
                      for (std::size_t a = 0; a < d; ++a)
                        acc += dw[(c * d + k) * d + a] * D[a * d + col] *
                               spec.sigma(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(jj));
                    acc2 += acc * acc;
                  }
              zs += acc2;
            }
          }
          ysup = std::max(ysup, ys / static_cast<double>(me.M));
          zsup = std::max(zsup, zs / static_cast<double>(me.M));
        }
      lv.y_sup = ysup;
      if (with_z) lv.z_sup = zsup;
    }
    out.levels.push_back(std::move(lv));
  }
  return out;
}

}  // namespace fbsde
