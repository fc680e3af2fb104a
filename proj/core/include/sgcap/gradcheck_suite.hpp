#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sgcap/gradcheck.hpp"

namespace sgcap {

struct SuiteResult {
  std::string name;  // op name, layer name or "decoder:<variant>"
  ad::GradCheckReport report;
};

/// Finite-difference check of every differentiable primitive, both attention
/// layers and a 5-step unroll of every decoder variant, at small sizes.
/// `fault` negates one primitive's adjoint in every analytic pass.
std::vector<SuiteResult> run_gradcheck_suite(double tolerance = 1e-4,
                                             std::optional<ad::OpKind> fault = std::nullopt);

/// One line per result; returns true when all passed.
bool print_suite(std::ostream& out, const std::vector<SuiteResult>& results);

}  // namespace sgcap
