#include "sgcap/gradcheck.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

namespace sgcap::ad {
namespace {

double evaluate(const LossClosure& loss, const ParameterStore& params) {
  Tape tape;
  ParamBinder binder(tape, params);
  const Var out = loss(binder);
  if (!out.value().is_scalar()) {
    throw ShapeError("grad_check: closure returned " + out.value().shape_string());
  }
  return out.value()[0];
}

}  // namespace

double GradCheckReport::max_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_relative_error);
  return worst;
}

GradCheckReport grad_check(const LossClosure& loss, ParameterStore& params, double tolerance,
                           const GradCheckOptions& options) {
  const double first = evaluate(loss, params);
  const double second = evaluate(loss, params);
  if (std::bit_cast<std::uint64_t>(first) != std::bit_cast<std::uint64_t>(second)) {
    throw NondeterministicClosure("grad_check: closure is not deterministic (" +
                                  std::to_string(first) + " vs " + std::to_string(second) + ")");
  }

  GradientMap analytic;
  {
    Tape tape;
    tape.inject_adjoint_fault(options.fault);
    ParamBinder binder(tape, params);
    const Var out = loss(binder);
    analytic = complete_gradients(params, tape.backward(out));
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  for (auto& [name, slot] : params.slots()) {
    GradCheckEntry entry;
    entry.parameter = name;
    const Tensor& g = analytic.at(name);
    auto values = slot.value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = evaluate(loss, params);
      values[i] = saved - options.step;
      const double down = evaluate(loss, params);
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * options.step);
      const double denom = std::max({std::abs(g[i]), std::abs(numeric), options.floor});
      const double err = std::abs(g[i] - numeric) / denom;
      if (i == 0 || !(err <= entry.max_relative_error)) {
        entry.max_relative_error = err;
        entry.worst_index = i;
        entry.analytic = g[i];
        entry.numeric = numeric;
      }
    }
    if (!(entry.max_relative_error <= tolerance)) report.passed = false;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace sgcap::ad
