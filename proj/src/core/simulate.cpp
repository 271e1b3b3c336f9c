#include "core/simulate.hpp"

#include "core/error.hpp"
#include "core/format.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

namespace fbsde {

Increments brownian_increments(std::size_t M, std::size_t N, std::size_t d,
                               double dt, std::uint64_t seed,
                               std::uint32_t stream, std::size_t jobs) {
  require(M >= 1 && N >= 1, "path count and step count must be >= 1");
  require(M <= 0xffffffffu && N <= 0xffffffffu, "path or step count too large");
  auto out = std::make_shared<std::vector<double>>(M * N * d);
  const NormalStream rng(seed, stream);
  const double scale = std::sqrt(dt);
  parallel_for(M, jobs, [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t m = lo; m < hi; ++m)
      for (std::size_t i = 0; i < N; ++i) {
        double* dst = out->data() + (m * N + i) * d;
        rng.fill(static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(i), dst, d);
        for (std::size_t j = 0; j < d; ++j) dst[j] *= scale;
      }
  });
  return out;
}

FeedbackDrift::FeedbackDrift(const MollifiedCoefficients& mc,
                             const DecouplingField& field, const GrowthSpec& spec)
    : mc_(&mc), field_(&field), spec_(&spec) {
  require(field.d() == spec.d && field.l() == spec.l,
          "decoupling field dimensions do not match the growth spec");
  require(std::abs(field.T() - spec.T) <= 1e-12 * std::max(1.0, spec.T),
          "decoupling field horizon does not match the growth spec");
  require(mc.b.out_dim() == spec.d && mc.b.in_dim() == spec.layout().size(),
          "mollified drift does not match the growth spec");
}

void FeedbackDrift::arguments(double t, std::span<const double> x,
                              std::span<double> args) const {
  const std::size_t d = spec_->d, l = spec_->l;
  const ArgLayout lay = spec_->layout();
  args[0] = t;
  for (std::size_t i = 0; i < d; ++i) args[lay.x_offset() + i] = x[i];
  field_->value(t, x, args.subspan(lay.y_offset(), l));
  double w[kMaxForwardDim * 8];
  std::vector<double> wbuf;
  double* wp = w;
  if (l * d > std::size(w)) {
    wbuf.resize(l * d);
    wp = wbuf.data();
  }
  field_->gradient_at(t, x, {wp, l * d});
  for (std::size_t c = 0; c < l; ++c)
    for (std::size_t j = 0; j < d; ++j) {
      double z = 0.0;
      for (std::size_t i = 0; i < d; ++i)
        z += wp[c * d + i] * spec_->sigma(static_cast<Eigen::Index>(i),
                                          static_cast<Eigen::Index>(j));
      args[lay.z_offset() + c * d + j] = z;
    }
}

void FeedbackDrift::operator()(double t, std::span<const double> x,
                               std::span<double> out) const {
  const std::size_t n = spec_->layout().size();
  double buf[64];
  std::vector<double> big;
  double* a = buf;
  if (n > std::size(buf)) {
    big.resize(n);
    a = big.data();
  }
  arguments(t, x, {a, n});
  mc_->b(std::span<const double>(a, n), out);
}

void FeedbackDrift::jacobian(double t, std::span<const double> x, double step,
                             std::span<double> out) const {
  const std::size_t d = spec_->d;
  double xp[kMaxForwardDim], xm[kMaxForwardDim];
  double bp[kMaxForwardDim], bm[kMaxForwardDim];
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < d; ++i) xp[i] = xm[i] = x[i];
    xp[k] += step;
    xm[k] -= step;
    (*this)(t, {xp, d}, {bp, d});
    (*this)(t, {xm, d}, {bm, d});
    for (std::size_t i = 0; i < d; ++i) out[i * d + k] = (bp[i] - bm[i]) / (2.0 * step);
  }
}

double drift_bound(const GrowthSpec& spec, const StructuralFlags& flags,
                   const DecouplingField& field, int level) {
  const double shift = level > 0 ? 1.0 / level : 0.0;
  double bound = 1.0 + spec.R * (1.0 + 1e-6) + shift;
  if (!flags.b1) {
    const Eigen::JacobiSVD<Matrix> svd(spec.sigma);
    bound += field.sup_abs_w(spec.T) * svd.singularValues()(0);
  }
  return spec.k1 * bound * (1.0 + 1e-9);
}

PathEnsemble simulate_forward(const DecouplingField& field,
                              const MollifiedCoefficients& mc,
                              const GrowthSpec& spec, std::span<const double> x0,
                              double s, std::size_t N, std::size_t M,
                              std::uint64_t seed, const SimulationOptions& opts) {
  require(M >= 1 && N >= 1, "simulate_forward: M and N must be >= 1");
  require(x0.size() == spec.d, "simulate_forward: x0 has the wrong dimension");
  require(s >= 0.0 && s < spec.T, "simulate_forward: start time must lie in [0, T)");
  const FeedbackDrift drift(mc, field, spec);
  const std::size_t d = spec.d;

  PathEnsemble ens;
  ens.M = M;
  ens.N = N;
  ens.d = d;
  ens.l = spec.l;
  ens.s = s;
  ens.T = spec.T;
  ens.seed = seed;
  ens.level = mc.level;
  ens.x0.assign(x0.begin(), x0.end());
  ens.times.resize(N + 1);
  const double dt = ens.dt();
  for (std::size_t i = 0; i < N; ++i) ens.times[i] = s + static_cast<double>(i) * dt;
  ens.times[N] = spec.T;

  if (opts.dW) {
    require(opts.dW->size() == M * N * d,
            "simulate_forward: shared increments have the wrong shape");
    ens.dW = opts.dW;
  } else {
    ens.dW = brownian_increments(M, N, d, dt, seed, kForwardStream, opts.jobs);
  }
  ens.X.resize(M * (N + 1) * d);
  ens.drift_bound = drift_bound(spec, mc.source ? mc.source->coeffs.flags
                                                : StructuralFlags{true, false, false, false},
                                field, mc.level);

  const std::size_t workers = std::max<std::size_t>(
      1, std::min(opts.jobs == 0 ? default_jobs() : opts.jobs, M));
  std::vector<double> max_drift(workers, 0.0);
  std::vector<std::size_t> exits(workers, 0);
  const Matrix& sigma = spec.sigma;

  parallel_for(M, workers, [&](std::size_t lo, std::size_t hi, std::size_t w) {
    double bval[kMaxForwardDim];
    for (std::size_t m = lo; m < hi; ++m) {
      double* X = ens.X.data() + m * (N + 1) * d;
      for (std::size_t j = 0; j < d; ++j) X[j] = x0[j];
      for (std::size_t i = 0; i < N; ++i) {
        const double* xi = X + i * d;
        double* xn = X + (i + 1) * d;
        const std::span<const double> xs(xi, d);
        if (!field.inside(xs)) ++exits[w];
        drift(ens.times[i], xs, {bval, d});
        double norm2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          if (!std::isfinite(bval[j]))
            fail(ErrorCode::Numeric, "non-finite drift at path " + std::to_string(m) +
                                         ", step " + std::to_string(i));
          norm2 += bval[j] * bval[j];
        }
        max_drift[w] = std::max(max_drift[w], std::sqrt(norm2));
        const double* dw = ens.dW->data() + (m * N + i) * d;
        for (std::size_t j = 0; j < d; ++j) {
          double noise = 0.0;
          for (std::size_t k = 0; k < d; ++k)
            noise += sigma(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * dw[k];
          xn[j] = xi[j] + bval[j] * dt + noise;
        }
      }
    }
  });

  std::size_t total_exits = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    ens.max_drift = std::max(ens.max_drift, max_drift[w]);
    total_exits += exits[w];
  }
  ens.exit_fraction = static_cast<double>(total_exits) / static_cast<double>(M * N);
  if (ens.max_drift > ens.drift_bound)
    fail(ErrorCode::Invariant,
         "drift bound violated: max |b~_n| = " + format_number(ens.max_drift) +
             " exceeds " + format_number(ens.drift_bound));
  return ens;
}

void reconstruct_yz(PathEnsemble& ens, const DecouplingField& field,
                    const GrowthSpec& spec, std::size_t jobs) {
  require(!ens.X.empty(), "reconstruct_yz: ensemble has no paths");
  require(field.d() == ens.d && field.l() == ens.l,
          "reconstruct_yz: field dimensions do not match the ensemble");
  const std::size_t d = ens.d, l = ens.l, N = ens.N;
  ens.Y.assign(ens.M * (N + 1) * l, 0.0);
  ens.Z.assign(ens.M * (N + 1) * l * d, 0.0);
  parallel_for(ens.M, jobs, [&](std::size_t lo, std::size_t hi, std::size_t) {
    std::vector<double> w(l * d);
    for (std::size_t m = lo; m < hi; ++m)
      for (std::size_t i = 0; i <= N; ++i) {
        const auto x = ens.x(m, i);
        const std::size_t row = m * (N + 1) + i;
        field.value(ens.times[i], x, {ens.Y.data() + row * l, l});
        field.gradient_at(ens.times[i], x, w);
        double* z = ens.Z.data() + row * l * d;
        for (std::size_t c = 0; c < l; ++c)
          for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k)
              acc += w[c * d + k] * spec.sigma(static_cast<Eigen::Index>(k),
                                               static_cast<Eigen::Index>(j));
            z[c * d + j] = acc;
          }
      }
  });
}

void write_ensemble_csv(const PathEnsemble& ens, const DecouplingField& field,
                        std::ostream& os) {
  const std::size_t d = ens.d, l = ens.l;
  const bool yz = ens.has_yz();
  std::string line = "t";
  for (std::size_t j = 0; j < d; ++j) {
    const auto s = std::to_string(j + 1);
    line += ",mean_x" + s + ",var_x" + s;
  }
  if (yz) {
    for (std::size_t c = 0; c < l; ++c) {
      const auto s = std::to_string(c + 1);
      line += ",mean_y" + s + ",var_y" + s;
    }
    for (std::size_t c = 0; c < l; ++c)
      for (std::size_t j = 0; j < d; ++j) {
        const auto s = std::to_string(c + 1) + "_" + std::to_string(j + 1);
        line += ",mean_z" + s + ",var_z" + s;
      }
  }
  line += ",exit_fraction\n";
  os << line;

  const double Mf = static_cast<double>(ens.M);
  auto moments = [&](auto get, std::size_t width, std::size_t i, std::string& row) {
    for (std::size_t c = 0; c < width; ++c) {
      double sum = 0.0, sum2 = 0.0;
      for (std::size_t m = 0; m < ens.M; ++m) {
        const double v = get(m, i)[c];
        sum += v;
        sum2 += v * v;
      }
      const double mean = sum / Mf;
      const double var = ens.M > 1 ? std::max(0.0, (sum2 - Mf * mean * mean) / (Mf - 1.0)) : 0.0;
      row += ',';
      append_number(row, mean);
      row += ',';
      append_number(row, var);
    }
  };
  std::string row;
  for (std::size_t i = 0; i <= ens.N; ++i) {
    row.clear();
    append_number(row, ens.times[i]);
    moments([&](std::size_t m, std::size_t k) { return ens.x(m, k); }, d, i, row);
    if (yz) {
      moments([&](std::size_t m, std::size_t k) { return ens.y(m, k); }, l, i, row);
      moments([&](std::size_t m, std::size_t k) { return ens.z(m, k); }, l * d, i, row);
    }
    std::size_t out = 0;
    for (std::size_t m = 0; m < ens.M; ++m)
      if (!field.inside(ens.x(m, i))) ++out;
    row += ',';
    append_number(row, static_cast<double>(out) / Mf);
    row += '\n';
    os << row;
  }
}

double MalliavinEnsemble::mean_square(std::size_t j, std::size_t i) const {
  double acc = 0.0;
  for (std::size_t m = 0; m < M; ++m)
    for (double v : at(m, j, i)) acc += v * v;
  return acc / static_cast<double>(M);
}

double MalliavinEnsemble::sup_mean_square() const {
  double sup = 0.0;
  for (std::size_t j = 0; j < Ns(); ++j)
    for (std::size_t i = s_index[j]; i <= N; ++i) sup = std::max(sup, mean_square(j, i));
  return sup;
}

MalliavinEnsemble simulate_malliavin(std::shared_ptr<const PathEnsemble> ens,
                                     const MollifiedCoefficients& mc,
                                     const DecouplingField& field,
                                     const GrowthSpec& spec,
                                     std::vector<double> s_grid, std::size_t jobs) {
  require(ens && !ens->X.empty(), "simulate_malliavin: ensemble has no paths");
  require(!s_grid.empty(), "simulate_malliavin: empty differentiation grid");
  const FeedbackDrift drift(mc, field, spec);
  const std::size_t d = ens->d, N = ens->N, M = ens->M;
  const double dt = ens->dt();

  MalliavinEnsemble out;
  out.M = M;
  out.N = N;
  out.d = d;
  out.level = ens->level;
  out.times = ens->times;
  out.source = ens;
  std::sort(s_grid.begin(), s_grid.end());
  for (double sj : s_grid) {
    require(sj >= ens->s - 1e-12 && sj <= ens->T + 1e-12,
            "simulate_malliavin: differentiation time outside [s, T]");
    const auto idx = static_cast<std::size_t>(std::llround((sj - ens->s) / dt));
    const std::size_t k = std::min(idx, N);
    if (!out.s_index.empty() && out.s_index.back() == k) continue;
    out.s_index.push_back(k);
    out.s_grid.push_back(ens->times[k]);
  }
  const std::size_t Ns = out.Ns();
  out.D.assign(M * Ns * (N + 1) * d * d, 0.0);
  const double step = field.dx();

  parallel_for(M, jobs, [&](std::size_t lo, std::size_t hi, std::size_t) {
    std::vector<double> J(d * d), tmp(d * d);
    for (std::size_t m = lo; m < hi; ++m) {
      for (std::size_t j = 0; j < Ns; ++j) {
        double* D0 = out.D.data() + ((m * Ns + j) * (N + 1) + out.s_index[j]) * d * d;
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b < d; ++b)
            D0[a * d + b] = spec.sigma(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      }
      for (std::size_t i = out.s_index.front(); i < N; ++i) {
        drift.jacobian(ens->times[i], ens->x(m, i), step, J);
        for (std::size_t j = 0; j < Ns && out.s_index[j] <= i; ++j) {
          const double* Di = out.D.data() + ((m * Ns + j) * (N + 1) + i) * d * d;
          double* Dn = out.D.data() + ((m * Ns + j) * (N + 1) + i + 1) * d * d;
          for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) {
              double acc = 0.0;
              for (std::size_t c = 0; c < d; ++c) acc += J[a * d + c] * Di[c * d + b];
              tmp[a * d + b] = Di[a * d + b] + acc * dt;
            }
          std::copy(tmp.begin(), tmp.end(), Dn);
        }
      }
    }
  });
  return out;
}

CompactnessReport compactness_statistics(
    const std::vector<const MalliavinEnsemble*>& malls) {
  CompactnessReport rep;
  for (const MalliavinEnsemble* me : malls) {
    require(me != nullptr, "compactness_statistics: null ensemble");
    const std::size_t r = me->N;
    const std::size_t Ns = me->Ns();
    std::map<double, std::pair<double, std::size_t>> by_lag;
    for (std::size_t a = 0; a < Ns; ++a)
      for (std::size_t b = a + 1; b < Ns; ++b) {
        double acc = 0.0;
        for (std::size_t m = 0; m < me->M; ++m) {
          const auto Da = me->at(m, a, r);
          const auto Db = me->at(m, b, r);
          for (std::size_t k = 0; k < Da.size(); ++k) {
            const double e = Da[k] - Db[k];
            acc += e * e;
          }
        }
        const double lag = me->s_grid[b] - me->s_grid[a];
        const double key = std::round(lag * 1e9) / 1e9;
        auto& slot = by_lag[key];
        slot.first += acc / static_cast<double>(me->M);
        slot.second += 1;
      }
    if (by_lag.size() < 3)
      fail(ErrorCode::InvalidArgument,
           "compactness_statistics: degenerate fit at level " + std::to_string(me->level) +
               " (fewer than 3 distinct lags)");
    ModulusFit fit;
    fit.level = me->level;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    bool all_zero = true;
    for (const auto& [lag, slot] : by_lag) {
      const double mod = slot.first / static_cast<double>(slot.second);
      if (mod > 0.0) all_zero = false;
      if (!(mod > 0.0) || !(lag > 0.0)) continue;
      const double lx = std::log(lag), ly = std::log(mod);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++fit.lags;
    }
    if (all_zero) {
      fit.zero_modulus = true;
      fit.note = "degenerate (zero modulus)";
    } else if (fit.lags < 2) {
      fit.note = "degenerate (fewer than 2 lags with positive modulus)";
    } else {
      const double n = static_cast<double>(fit.lags);
      const double den = n * sxx - sx * sx;
      fit.alpha = (n * sxy - sx * sy) / den;
      fit.intercept = std::exp((sy - fit.alpha * sx) / n);
      rep.max_alpha = std::max(rep.max_alpha, fit.alpha);
      rep.max_intercept = std::max(rep.max_intercept, fit.intercept);
    }
    rep.fits.push_back(fit);
  }
  return rep;
}

}  // namespace fbsde
