#ifndef DRL_GRADCHECK_HPP
#define DRL_GRADCHECK_HPP

#include <functional>
#include <map>
#include <string>

#include "drl/params.hpp"

namespace drl {

struct GradCheckReport {
  std::map<std::string, double> per_param;  // max relative error per parameter
  double max_rel_error = 0.0;
  double step = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Compares analytic gradients against central finite differences
/// (f(x+h)-f(x-h))/(2h), entrywise over every matrix in `params`. Relative
/// error uses the denominator max(|analytic|, |numeric|, 1e-8). A parameter
/// missing from `analytic` is treated as having zero gradient.
GradCheckReport gradient_check(
    const std::function<double(const ParamStore&)>& f, const ParamStore& params,
    const std::map<std::string, Matrix>& analytic, double step, double tolerance);

/// Builds the graph once via `build` to obtain tape gradients, then runs the
/// finite-difference comparison with f(p) = value of the rebuilt graph.
using TapeBuilder = std::function<Var(Tape&, const ParamStore&)>;
GradCheckReport gradient_check(const TapeBuilder& build, const ParamStore& params,
                               double step, double tolerance);

}  // namespace drl

#endif  // DRL_GRADCHECK_HPP
