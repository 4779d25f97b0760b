#ifndef DRL_PARAMS_HPP
#define DRL_PARAMS_HPP

#include <map>
#include <string>

#include "drl/tape.hpp"

namespace drl {

/// Named trainable matrices. Lives across episodes; each episode registers
/// the values it needs on a fresh tape via use().
struct ParamStore {
  std::map<std::string, Matrix> values;
  bool base_trained = false;

  Var use(Tape& t, const std::string& name) const {
    return t.param(name, values.at(name));
  }

  /// Glorot-uniform weight, registered under `name`.
  void init_weight(const std::string& name, int rows, int cols, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i)
      w(i) = rng.uniform(-bound, bound);
    values[name] = std::move(w);
  }

  void init_zero(const std::string& name, int rows, int cols) {
    values[name] = Matrix::Zero(rows, cols);
  }

  bool operator==(const ParamStore& o) const {
    if (base_trained != o.base_trained || values.size() != o.values.size())
      return false;
    for (const auto& [k, v] : values) {
      auto it = o.values.find(k);
      if (it == o.values.end() || it->second.rows() != v.rows() ||
          it->second.cols() != v.cols() || it->second != v)
        return false;
    }
    return true;
  }
};

/// JSON checkpoint of all matrices; doubles are written with shortest
/// round-trip formatting, so save/load is bitwise lossless.
void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace drl

#endif  // DRL_PARAMS_HPP
