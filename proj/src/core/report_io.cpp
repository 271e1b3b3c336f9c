#include "core/report_io.hpp"

#include "core/format.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fbsde {

namespace {

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json pairs(const std::vector<std::pair<double, double>>& v, const char* a, const char* b) {
  Json out = Json::array();
  for (const auto& [x, y] : v) out.push_back({{a, num(x)}, {b, num(y)}});
  return out;
}

Json numbers(const std::vector<double>& v) {
  Json out = Json::array();
  for (double x : v) out.push_back(num(x));
  return out;
}

std::string fmt(double v) { return format_number(v); }

}  // namespace

Json to_json(const GridSpec& g) {
  return {{"L", g.L}, {"Nx", g.Nx}, {"Nt", g.Nt}, {"deltas", numbers(g.deltas)}};
}

Json to_json(const GrowthSpec& s) {
  Json sigma = Json::array();
  for (Eigen::Index i = 0; i < s.sigma.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < s.sigma.cols(); ++j) row.push_back(s.sigma(i, j));
    sigma.push_back(row);
  }
  return {{"d", s.d}, {"l", s.l}, {"T", s.T}, {"sigma", sigma}, {"lambda", s.lambda},
          {"k1", s.k1}, {"k2", s.k2}, {"k3", s.k3}, {"R", s.R}};
}

Json to_json(const ValidationReport& r) {
  Json checks = Json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"function", c.function}, {"max_ratio", num(c.max_ratio)},
                      {"witness", numbers(c.witness)}, {"pass", c.pass}});
  return {{"samples", r.samples}, {"box_halfwidth", r.box_halfwidth}, {"checks", checks},
          {"pass", r.pass}};
}

Json to_json(const AprioriReport& r) {
  return {{"sup_v", num(r.sup_v)},
          {"R", num(r.R)},
          {"bound_ok", r.bound_ok},
          {"grad_bound", pairs(r.grad_bound, "delta", "sup_grad")},
          {"holder", {{"alpha", num(r.holder_alpha)}, {"C", num(r.holder_c)}, {"pairs", r.holder_pairs}}},
          {"sobolev", {{"p", r.sobolev_p},
                       {"halfwidth", r.sobolev_halfwidth},
                       {"local", pairs(r.sobolev_local, "delta", "integral")}}}};
}

Json ensemble_summary_json(const PathEnsemble& e) {
  return {{"M", e.M}, {"N", e.N}, {"seed", e.seed}, {"s", e.s}, {"x0", numbers(e.x0)},
          {"exit_fraction", num(e.exit_fraction)}, {"max_drift", num(e.max_drift)},
          {"drift_bound", num(e.drift_bound)}};
}

Json to_json(const GirsanovReport& r) {
  Json rows = Json::array();
  for (const auto& m : r.moments)
    rows.push_back({{"name", m.name}, {"weighted", num(m.weighted)}, {"weighted_se", num(m.weighted_se)},
                    {"direct", num(m.direct)}, {"direct_se", num(m.direct_se)}, {"z", num(m.z)}});
  Json out = {{"t", r.t}, {"M", r.M}, {"N", r.N}, {"moments", rows}, {"max_abs_z", num(r.max_abs_z)},
              {"ess", num(r.ess)}, {"reliable", r.reliable}, {"weight_mean", num(r.weight_mean)},
              {"weight_se", num(r.weight_se)}, {"weights_nonnegative", r.weights_nonnegative},
              {"martingale_ok", r.martingale_ok}};
  out["ks_statistic"] = r.ks_statistic ? num(*r.ks_statistic) : Json(nullptr);
  out["ks_critical"] = r.ks_critical ? num(*r.ks_critical) : Json(nullptr);
  return out;
}

Json to_json(const ConvergenceReport& r) {
  Json gaps = Json::array();
  for (const auto& g : r.gaps)
    gaps.push_back({{"n", g.n}, {"next", g.next}, {"v_sup", num(g.v_sup)}, {"w_sup", num(g.w_sup)},
                    {"x_l2", numbers(g.x_l2)}, {"y_h2", num(g.y_h2)}, {"z_h2", num(g.z_h2)},
                    {"stoch_int", num(g.stoch_int)}});
  return {{"delta", r.delta}, {"t_list", numbers(r.t_list)}, {"gaps", gaps}, {"finite", r.finite}};
}

Json to_json(const RegularityReport& r) {
  Json pts = Json::array();
  for (const auto& p : r.points)
    pts.push_back({{"x", numbers(p.x)}, {"mean_derivative", numbers(p.mean_derivative)},
                   {"mean_abs_x_p", num(p.mean_abs_x_p)}, {"mean_abs_dx_p", num(p.mean_abs_dx_p)}});
  Json mall = Json::array();
  for (const auto& [n, v] : r.malliavin) mall.push_back({{"level", n}, {"sup_mean_square", num(v)}});
  return {{"s", r.s}, {"t", r.t}, {"bump", r.bump}, {"p", r.p}, {"M", r.M}, {"points", pts},
          {"weighted_norm", num(r.weighted_norm)}, {"identity_exact", r.identity_exact},
          {"y_norm", r.y_norm ? num(*r.y_norm) : Json(nullptr)}, {"malliavin", mall}};
}

Json to_json(const MalliavinSummary& r) {
  Json levels = Json::array();
  for (const auto& l : r.levels)
    levels.push_back({{"level", l.n}, {"x_sup", num(l.x_sup)}, {"x_by_time", numbers(l.x_by_time)},
                      {"y_sup", l.y_sup ? num(*l.y_sup) : Json(nullptr)},
                      {"z_sup", l.z_sup ? num(*l.z_sup) : Json(nullptr)}});
  return {{"claims", r.claims}, {"delta", r.delta}, {"levels", levels}};
}

Json to_json(const CompactnessReport& r) {
  Json fits = Json::array();
  for (const auto& f : r.fits)
    fits.push_back({{"level", f.level}, {"alpha", num(f.alpha)}, {"intercept", num(f.intercept)},
                    {"lags", f.lags}, {"zero_modulus", f.zero_modulus}, {"note", f.note}});
  return {{"fits", fits}, {"max_alpha", num(r.max_alpha)}, {"max_intercept", num(r.max_intercept)}};
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

TextTable::TextTable(std::vector<std::string> header) { rows_.push_back(std::move(header)); }

void TextTable::add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

std::string TextTable::str() const {
  std::vector<std::size_t> width;
  for (const auto& r : rows_)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  std::string out;
  for (const auto& r : rows_) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) line += "  ";
      line += r[c];
      if (c + 1 < r.size()) line.append(width[c] - r[c].size(), ' ');
    }
    out += line + "\n";
  }
  return out;
}

std::string render_text(const AprioriReport& r) {
  std::ostringstream os;
  os << "sup |v| = " << fmt(r.sup_v) << "  R = " << fmt(r.R) << "  bound "
     << (r.bound_ok ? "ok" : "VIOLATED") << "\n";
  TextTable t({"delta", "sup|D_x v|", "local W2,1_p integral"});
  for (std::size_t i = 0; i < r.grad_bound.size(); ++i)
    t.add({fmt(r.grad_bound[i].first), fmt(r.grad_bound[i].second),
           i < r.sobolev_local.size() ? fmt(r.sobolev_local[i].second) : "-"});
  os << t.str();
  os << "holder fit: alpha = " << fmt(r.holder_alpha) << ", C = " << fmt(r.holder_c) << " ("
     << r.holder_pairs << " pairs)\n";
  return os.str();
}

std::string render_text(const GirsanovReport& r) {
  std::ostringstream os;
  os << "t = " << fmt(r.t) << "  M = " << r.M << "  ESS = " << fmt(r.ess)
     << (r.reliable ? "" : "  (UNRELIABLE: ESS < 100)") << "\n";
  TextTable t({"moment", "weighted", "se", "direct", "se", "z"});
  for (const auto& m : r.moments)
    t.add({m.name, fmt(m.weighted), fmt(m.weighted_se), fmt(m.direct), fmt(m.direct_se), fmt(m.z)});
  os << t.str();
  os << "weight mean = " << fmt(r.weight_mean) << " +- " << fmt(r.weight_se)
     << (r.martingale_ok ? "  (within 5 SE of 1)" : "  (NOT within 5 SE of 1)") << "\n";
  if (r.ks_statistic)
    os << "KS = " << fmt(*r.ks_statistic) << "  critical(1e-3) = " << fmt(*r.ks_critical) << "\n";
  return os.str();
}

std::string render_text(const ConvergenceReport& r) {
  std::vector<std::string> head{"n", "2n", "v_sup", "w_sup"};
  for (double t : r.t_list) head.push_back("X_L2@" + fmt(t));
  for (const char* s : {"Y_H2", "Z_H2", "int_ZdW"}) head.emplace_back(s);
  TextTable t(head);
  for (const auto& g : r.gaps) {
    std::vector<std::string> row{std::to_string(g.n), std::to_string(g.next), fmt(g.v_sup), fmt(g.w_sup)};
    for (double x : g.x_l2) row.push_back(fmt(x));
    row.push_back(fmt(g.y_h2));
    row.push_back(fmt(g.z_h2));
    row.push_back(fmt(g.stoch_int));
    t.add(row);
  }
  return "delta = " + fmt(r.delta) + "\n" + t.str();
}

std::string render_text(const RegularityReport& r) {
  std::ostringstream os;
  os << "s = " << fmt(r.s) << "  t = " << fmt(r.t) << "  bump = " << fmt(r.bump) << "  p = " << fmt(r.p)
     << "  M = " << r.M << "\n";
  TextTable t({"x", "E dX/dx", "E|X|^p", "E|dX|^p"});
  for (const auto& p : r.points) {
    std::string xs, ds;
    for (double v : p.x) xs += (xs.empty() ? "" : ",") + fmt(v);
    for (double v : p.mean_derivative) ds += (ds.empty() ? "" : ",") + fmt(v);
    t.add({xs, ds, fmt(p.mean_abs_x_p), fmt(p.mean_abs_dx_p)});
  }
  os << t.str();
  os << "weighted norm = " << fmt(r.weighted_norm) << (r.identity_exact ? "  (identity flow)" : "") << "\n";
  if (r.y_norm) os << "Y W1,1(U) norm = " << fmt(*r.y_norm) << "\n";
  return os.str();
}

std::string render_text(const MalliavinSummary& r) {
  std::ostringstream os;
  for (const auto& c : r.claims) os << "claim: " << c << "\n";
  TextTable t({"n", "sup E|DX|^2", "sup E|DY|^2", "sup E|DZ|^2"});
  for (const auto& l : r.levels)
    t.add({std::to_string(l.n), fmt(l.x_sup), l.y_sup ? fmt(*l.y_sup) : "-", l.z_sup ? fmt(*l.z_sup) : "-"});
  os << t.str();
  return os.str();
}

std::string render_text(const CompactnessReport& r) {
  TextTable t({"n", "alpha", "C", "lags", "note"});
  for (const auto& f : r.fits)
    t.add({std::to_string(f.level), fmt(f.alpha), fmt(f.intercept), std::to_string(f.lags), f.note});
  return t.str();
}

}  // namespace fbsde
