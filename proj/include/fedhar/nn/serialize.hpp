#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "fedhar/nn/parameters.hpp"

namespace fedhar::nn {

// Portable parameter format: a JSON array of
//   {"name": ..., "shape": [rows, cols], "values": [...row-major...]}
// with every value written as %.16e (17 significant digits), which makes
// the text round trip value-exact.

std::string parameters_to_json(const ParameterSet& params);
ParameterSet parameters_from_json(const nlohmann::json& tensors);

void save_parameters(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_parameters(const std::filesystem::path& path);

}  // namespace fedhar::nn
