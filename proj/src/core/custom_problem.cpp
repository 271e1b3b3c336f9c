#include "core/custom_problem.hpp"

#include "core/error.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace fbsde {

namespace {

[[noreturn]] void config_error(const std::string& key, const std::string& what) {
  fail(ErrorCode::Config, "custom problem: '" + key + "' " + what);
}

YAML::Node need(const YAML::Node& parent, const std::string& key,
                const std::string& path) {
  const YAML::Node n = parent[key];
  if (!n) config_error(path + key, "is missing");
  return n;
}

template <class T>
T scalar(const YAML::Node& n, const std::string& path) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    config_error(path, "has the wrong type");
  }
}

// Maps argument names to positions in the flat argument vector.
std::map<std::string, std::size_t> argument_names(const ArgLayout& lay,
                                                  bool x_only) {
  std::map<std::string, std::size_t> names;
  if (x_only) {
    for (std::size_t i = 0; i < lay.d; ++i) names["x" + std::to_string(i + 1)] = i;
    return names;
  }
  names["t"] = 0;
  for (std::size_t i = 0; i < lay.d; ++i)
    names["x" + std::to_string(i + 1)] = lay.x_offset() + i;
  for (std::size_t c = 0; c < lay.l; ++c)
    names["y" + std::to_string(c + 1)] = lay.y_offset() + c;
  for (std::size_t c = 0; c < lay.l; ++c)
    for (std::size_t j = 0; j < lay.d; ++j)
      names["z" + std::to_string(c + 1) + "_" + std::to_string(j + 1)] =
          lay.z_offset() + c * lay.d + j;
  return names;
}

std::size_t lookup(const std::map<std::string, std::size_t>& names,
                   const std::string& name, const std::string& path) {
  const auto it = names.find(name);
  if (it == names.end()) config_error(path, "names unknown argument '" + name + "'");
  return it->second;
}

using Scalar = std::function<double(std::span<const double>)>;

struct Component {
  Scalar eval;
  std::vector<std::size_t> reads;
};

Component parse_component(const YAML::Node& n, const std::map<std::string, std::size_t>& names,
                          const std::string& path) {
  if (!n.IsMap() || n.size() != 1)
    config_error(path, "must be a mapping with exactly one of constant, piecewise, polynomial");
  if (n["constant"]) {
    const double c = scalar<double>(n["constant"], path + ".constant");
    return {[c](std::span<const double>) { return c; }, {}};
  }
  if (n["piecewise"]) {
    const std::string p = path + ".piecewise";
    const YAML::Node pw = n["piecewise"];
    const std::size_t arg = lookup(names, scalar<std::string>(need(pw, "arg", p + "."), p + ".arg"),
                                   p + ".arg");
    const auto breaks = scalar<std::vector<double>>(need(pw, "breaks", p + "."), p + ".breaks");
    const auto values = scalar<std::vector<double>>(need(pw, "values", p + "."), p + ".values");
    if (values.size() != breaks.size() + 1)
      config_error(p + ".values", "must have one more entry than breaks");
    for (std::size_t i = 1; i < breaks.size(); ++i)
      if (!(breaks[i] > breaks[i - 1])) config_error(p + ".breaks", "must be strictly increasing");
    return {[arg, breaks, values](std::span<const double> a) {
              std::size_t k = 0;
              while (k < breaks.size() && a[arg] >= breaks[k]) ++k;
              return values[k];
            },
            {arg}};
  }
  if (n["polynomial"]) {
    const std::string p = path + ".polynomial";
    const YAML::Node terms = n["polynomial"];
    if (!terms.IsSequence()) config_error(p, "must be a list of terms");
    struct Term {
      double coef;
      std::vector<std::pair<std::size_t, int>> powers;
    };
    std::vector<Term> parsed;
    std::vector<std::size_t> reads;
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const std::string tp = p + "[" + std::to_string(k) + "]";
      Term term{scalar<double>(need(terms[k], "coef", tp + "."), tp + ".coef"), {}};
      if (const YAML::Node pw = terms[k]["powers"]) {
        if (!pw.IsMap()) config_error(tp + ".powers", "must be a mapping");
        for (const auto& kv : pw) {
          const auto name = kv.first.as<std::string>();
          const int e = scalar<int>(kv.second, tp + ".powers." + name);
          if (e < 0) config_error(tp + ".powers." + name, "must be a nonnegative integer");
          const std::size_t idx = lookup(names, name, tp + ".powers");
          if (e > 0) {
            term.powers.emplace_back(idx, e);
            reads.push_back(idx);
          }
        }
      }
      parsed.push_back(std::move(term));
    }
    return {[parsed](std::span<const double> a) {
              double s = 0.0;
              for (const auto& t : parsed) {
                double v = t.coef;
                for (const auto& [idx, e] : t.powers) v *= std::pow(a[idx], e);
                s += v;
              }
              return s;
            },
            reads};
  }
  config_error(path, "must be one of constant, piecewise, polynomial");
}

VectorFunction parse_function(const YAML::Node& root, const std::string& key,
                              std::size_t in_dim, std::size_t out_dim,
                              const std::map<std::string, std::size_t>& names) {
  const YAML::Node n = need(root, key, "");
  if (n.IsScalar() && n.as<std::string>() == "zero") return VectorFunction::zero(in_dim, out_dim);
  if (!n.IsSequence() || n.size() != out_dim)
    config_error(key, "must be 'zero' or a list of " + std::to_string(out_dim) + " components");
  std::vector<Scalar> comps;
  std::vector<bool> depends(in_dim, false);
  for (std::size_t c = 0; c < out_dim; ++c) {
    Component comp = parse_component(n[c], names, key + "[" + std::to_string(c) + "]");
    for (std::size_t idx : comp.reads) depends[idx] = true;
    comps.push_back(std::move(comp.eval));
  }
  return VectorFunction(in_dim, out_dim, std::move(depends),
                        [comps](std::span<const double> a, std::span<double> out) {
                          for (std::size_t c = 0; c < comps.size(); ++c) out[c] = comps[c](a);
                        });
}

Matrix parse_sigma(const YAML::Node& n, std::size_t d) {
  if (n.IsScalar()) return Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) *
                           scalar<double>(n, "sigma");
  const auto rows = scalar<std::vector<std::vector<double>>>(n, "sigma");
  if (rows.size() != d) config_error("sigma", "must have d rows");
  Matrix m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) {
    if (rows[i].size() != d) config_error("sigma", "must be a d x d matrix");
    for (std::size_t j = 0; j < d; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

}  // namespace

Problem custom_problem_from_yaml(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::Config, std::string("custom problem: YAML parse error: ") + e.what());
  }
  if (!root.IsMap()) fail(ErrorCode::Config, "custom problem: expected a mapping");

  Problem p;
  p.name = root["name"] ? scalar<std::string>(root["name"], "name") : "custom";
  if (root["description"]) p.description = scalar<std::string>(root["description"], "description");
  const auto d = scalar<std::size_t>(need(root, "d", ""), "d");
  const auto l = scalar<std::size_t>(need(root, "l", ""), "l");
  const double T = scalar<double>(need(root, "T", ""), "T");
  const Matrix sigma = root["sigma"] ? parse_sigma(root["sigma"], d)
                                     : Matrix::Identity(static_cast<Eigen::Index>(d),
                                                        static_cast<Eigen::Index>(d));
  const double lambda = root["lambda"] ? scalar<double>(root["lambda"], "lambda")
                                       : min_ellipticity(sigma);
  const double k1 = scalar<double>(need(root, "k1", ""), "k1");
  const double k2 = scalar<double>(need(root, "k2", ""), "k2");
  const double k3 = scalar<double>(need(root, "k3", ""), "k3");
  try {
    p.spec = make_growth_spec(d, l, T, sigma, lambda, k1, k2, k3);
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("custom problem: ") + e.what());
  }

  const ArgLayout lay = p.spec.layout();
  const auto full = argument_names(lay, false);
  const auto xs = argument_names(lay, true);
  p.coeffs.b = parse_function(root, "b", lay.size(), d, full);
  p.coeffs.g = parse_function(root, "g", lay.size(), l, full);
  p.coeffs.h = parse_function(root, "h", d, l, xs);

  const auto flags = scalar<std::vector<std::string>>(need(root, "flags", ""), "flags");
  for (const auto& f : flags) {
    if (f == "B1") p.coeffs.flags.b1 = true;
    else if (f == "B2") p.coeffs.flags.b2 = true;
    else if (f == "A5") p.coeffs.flags.g_no_z = true;
    else if (f == "A6") p.coeffs.flags.g_no_x = true;
    else config_error("flags", "contains unknown flag '" + f + "' (use B1, B2, A5, A6)");
  }
  if (root["lipschitz_h"]) p.coeffs.lipschitz_h = scalar<double>(root["lipschitz_h"], "lipschitz_h");
  if (p.coeffs.flags.b2 && !p.coeffs.lipschitz_h) p.coeffs.lipschitz_h = k3;
  if (p.coeffs.flags.g_no_z)
    for (std::size_t i = 0; i < l * d; ++i)
      if (p.coeffs.g.depends_on(lay.z_offset() + i)) config_error("flags", "claims A5 but g reads z");
  if (p.coeffs.flags.g_no_x)
    for (std::size_t i = 0; i < d; ++i)
      if (p.coeffs.g.depends_on(lay.x_offset() + i)) config_error("flags", "claims A6 but g reads x");

  try {
    check_coefficients(p.coeffs, p.spec);
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("custom problem: ") + e.what());
  }
  const ValidationReport rep = validate_growth(p.coeffs, p.spec, 4096, 0);
  if (!rep.pass) {
    for (const auto& c : rep.checks)
      if (!c.pass) {
        std::ostringstream os;
        os << "custom problem: " << c.function << " violates its growth bound (ratio "
           << c.max_ratio << ") at (";
        for (std::size_t i = 0; i < c.witness.size(); ++i) os << (i ? ", " : "") << c.witness[i];
        os << ")";
        fail(ErrorCode::Config, os.str());
      }
  }
  return p;
}

Problem load_custom_problem(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return custom_problem_from_yaml(ss.str());
}

}  // namespace fbsde
