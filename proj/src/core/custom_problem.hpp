#pragma once

#include "core/coefficients.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace fbsde {

// Builds a problem from a YAML mapping (the value of `problem.custom` in a run
// config, or a standalone file). Each of b, g, h is `zero` or a list with one
// entry per output component; an entry is one of
//   constant: <c>
//   piecewise: {arg: <name>, breaks: [...], values: [...]}  (right-continuous)
//   polynomial: [{coef: <c>, powers: {<name>: <k>, ...}}, ...]
// Argument names are t, x1.., y1.., z<c>_<j> (b and g) and x1.. (h).
// Throws fbsde::Error(Config) naming the offending key.
Problem custom_problem_from_yaml(std::string_view text);
Problem load_custom_problem(const std::filesystem::path& path);

}  // namespace fbsde
