#include "drl/gradcheck.hpp"

#include <cmath>

namespace drl {

GradCheckReport gradient_check(
    const std::function<double(const ParamStore&)>& f, const ParamStore& params,
    const std::map<std::string, Matrix>& analytic, double step, double tolerance) {
  if (step <= 0.0) throw ConfigError("gradient_check: step must be > 0");
  GradCheckReport report;
  report.step = step;
  report.tolerance = tolerance;
  ParamStore probe = params;
  for (const auto& [name, value] : params.values) {
    const Matrix* grad = nullptr;
    if (auto it = analytic.find(name); it != analytic.end()) grad = &it->second;
    double worst = 0.0;
    Matrix& pm = probe.values[name];
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double orig = pm(i);
      pm(i) = orig + step;
      const double up = f(probe);
      pm(i) = orig - step;
      const double down = f(probe);
      pm(i) = orig;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("gradient_check: non-finite f while probing " + name);
      const double numeric = (up - down) / (2.0 * step);
      const double exact = grad ? (*grad)(i) : 0.0;
      const double denom =
          std::max({std::abs(exact), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
    report.per_param[name] = worst;
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

GradCheckReport gradient_check(const TapeBuilder& build, const ParamStore& params,
                               double step, double tolerance) {
  Tape tape;
  Var out = build(tape, params);
  tape.backward(out);
  std::map<std::string, Matrix> analytic;
  for (const auto& [name, id] : tape.params())
    analytic[name] = tape.grad(Var{id});
  auto f = [&build](const ParamStore& p) {
    Tape t;
    return t.scalar(build(t, p));
  };
  return gradient_check(f, params, analytic, step, tolerance);
}

}  // namespace drl
