#pragma once

#include "core/coefficients.hpp"
#include "core/pde.hpp"
#include "core/simulate.hpp"
#include "core/verify.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fbsde {

using Json = nlohmann::ordered_json;

Json to_json(const GridSpec& g);
Json to_json(const GrowthSpec& s);
Json to_json(const ValidationReport& r);
Json to_json(const AprioriReport& r);
Json ensemble_summary_json(const PathEnsemble& e);
Json to_json(const GirsanovReport& r);
Json to_json(const ConvergenceReport& r);
Json to_json(const RegularityReport& r);
Json to_json(const MalliavinSummary& r);
Json to_json(const CompactnessReport& r);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Columns padded to their widest cell.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header);
  void add(std::vector<std::string> row);
  std::string str() const;

 private:
  std::vector<std::vector<std::string>> rows_;
};

std::string render_text(const AprioriReport& r);
std::string render_text(const GirsanovReport& r);
std::string render_text(const ConvergenceReport& r);
std::string render_text(const RegularityReport& r);
std::string render_text(const MalliavinSummary& r);
std::string render_text(const CompactnessReport& r);

}  // namespace fbsde
