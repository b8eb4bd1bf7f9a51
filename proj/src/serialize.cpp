#include "fedhar/nn/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedhar/error.hpp"

namespace fedhar::nn {

namespace {

void append_number(std::string& out, double value) {
  if (!std::isfinite(value)) throw NumericHealthError("cannot serialize non-finite parameter");
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.16e", value);
  out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace

std::string parameters_to_json(const ParameterSet& params) {
  std::string out = "[";
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = params[i];
    if (i) out += ",";
    out += "\n{\"name\":" + nlohmann::json(name).dump() + ",\"shape\":[" +
           std::to_string(value.rows()) + "," + std::to_string(value.cols()) + "],\"values\":[";
    for (Eigen::Index r = 0; r < value.rows(); ++r) {
      for (Eigen::Index c = 0; c < value.cols(); ++c) {
        if (r || c) out += ",";
        append_number(out, value(r, c));
      }
    }
    out += "]}";
  }
  out += "\n]";
  return out;
}

ParameterSet parameters_from_json(const nlohmann::json& tensors) {
  if (!tensors.is_array()) throw DataError("parameter list must be a JSON array");
  ParameterSet params;
  for (const auto& t : tensors) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
    const auto values = t.at("values").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] <= 0 || shape[1] <= 0 ||
        static_cast<std::size_t>(shape[0] * shape[1]) != values.size()) {
      throw DataError("parameter '" + name + "' has inconsistent shape and value count");
    }
    MatrixXr m(shape[0], shape[1]);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = values[k++];
    }
    params.add(name, std::move(m));
  }
  return params;
}

void save_parameters(const ParameterSet& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << parameters_to_json(params) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

ParameterSet load_parameters(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return parameters_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace fedhar::nn
