#include "drl/params.hpp"

#include <fstream>

#include <json.hpp>

namespace drl {

void save_checkpoint(const ParamStore& params, const std::string& path) {
  nlohmann::json j;
  j["format"] = "drl-checkpoint-v1";
  j["base_trained"] = params.base_trained;
  nlohmann::json mats = nlohmann::json::object();
  for (const auto& [name, m] : params.values) {
    nlohmann::json entry;
    entry["rows"] = m.rows();
    entry["cols"] = m.cols();
    std::vector<double> data;
    data.reserve(static_cast<size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index k = 0; k < m.cols(); ++k) data.push_back(m(i, k));
    entry["data"] = std::move(data);
    mats[name] = std::move(entry);
  }
  j["params"] = std::move(mats);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out << j.dump() << "\n";
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != std::string("drl-checkpoint-v1"))
    throw ConfigError("not a drl checkpoint: " + path);
  ParamStore params;
  params.base_trained = j.value("base_trained", false);
  for (const auto& [name, entry] : j.at("params").items()) {
    const int rows = entry.at("rows").get<int>();
    const int cols = entry.at("cols").get<int>();
    const auto data = entry.at("data").get<std::vector<double>>();
    if (static_cast<int>(data.size()) != rows * cols)
      throw ConfigError("checkpoint entry " + name + " has wrong size");
    Matrix m(rows, cols);
    size_t idx = 0;
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < cols; ++k) m(i, k) = data[idx++];
    params.values[name] = std::move(m);
  }
  return params;
}

}  // namespace drl
