#ifndef DRL_TAPE_HPP
#define DRL_TAPE_HPP

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "drl/common.hpp"

namespace drl {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense matrices. Operations append nodes in
/// evaluation order; backward() replays their adjoint closures in exact
/// reverse order. One tape per episode; not thread-safe.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var)>;

  Var constant(Matrix value) { return emit(std::move(value), nullptr); }

  /// Registers a named trainable leaf. Gradients are retrievable by name
  /// after backward().
  Var param(const std::string& name, Matrix value) {
    Var v = emit(std::move(value), nullptr);
    params_[name] = v.id;
    return v;
  }

  Var emit(Matrix value, BackwardFn backward) {
    require_finite(value, "tape op");
    Node n;
    n.grad = Matrix::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  Matrix& grad(Var v) { return nodes_.at(v.id).grad; }
  const Matrix& grad(Var v) const { return nodes_.at(v.id).grad; }

  double scalar(Var v) const {
    const Matrix& m = value(v);
    if (m.rows() != 1 || m.cols() != 1)
      throw ShapeError("scalar() on " + shape_str(m) + " value");
    return m(0, 0);
  }

  /// Accumulates d(out)/d(leaf) into every node's grad. `out` must be 1x1.
  void backward(Var out) {
    if (value(out).rows() != 1 || value(out).cols() != 1)
      throw ShapeError("backward() requires a scalar output, got " +
                       shape_str(value(out)));
    for (Node& n : nodes_) n.grad.setZero();
    nodes_[out.id].grad(0, 0) = 1.0;
    for (int i = out.id; i >= 0; --i)
      if (nodes_[i].backward) nodes_[i].backward(*this, Var{i});
  }

  bool has_param(const std::string& name) const { return params_.count(name) > 0; }

  const Matrix& param_grad(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end())
      throw std::out_of_range("no parameter named " + name);
    return nodes_[it->second].grad;
  }

  const std::map<std::string, int>& params() const { return params_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::map<std::string, int> params_;
};

}  // namespace drl

#endif  // DRL_TAPE_HPP
