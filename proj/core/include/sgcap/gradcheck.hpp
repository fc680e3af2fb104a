#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgcap/parameters.hpp"

namespace sgcap::ad {

/// Thrown when two evaluations of a closure at identical parameters differ.
class NondeterministicClosure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckEntry {
  std::string parameter;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool passed = true;

  double max_error() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor for |a - n| / max(|a|, |n|, floor).
  double floor = 1e-5;
  /// Forwarded to Tape::inject_adjoint_fault for the analytic pass.
  std::optional<OpKind> fault;
};

/// Builds a scalar loss on the binder's tape from the bound parameters.
using LossClosure = std::function<Var(ParamBinder&)>;

/// Compares the analytic gradient of `loss` against central differences for
/// every scalar of every parameter in `params`. `params` is perturbed in place
/// and restored before returning.
GradCheckReport grad_check(const LossClosure& loss, ParameterStore& params, double tolerance,
                           const GradCheckOptions& options = {});

}  // namespace sgcap::ad
