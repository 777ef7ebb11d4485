#pragma once

// Central finite-difference checks of analytic gradients, per component.

#include "sasreid/autograd.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sasreid::gradcheck {

struct GradCase {
  std::string component;
  /// Rebuilds the scalar loss from the current values of `inputs`.
  std::function<ag::Var()> loss;
  /// Leaves whose gradients are checked.
  std::vector<ag::Var> inputs;
  /// Entries checked per input; 0 checks all of them.
  int max_entries = 0;
};

struct GradResult {
  std::string component;
  double max_rel_error = 0;
  int entries = 0;
  bool passed = false;
};

/// Relative error |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-7);

/// When an input has more entries than `max_entries`, the entries with the
/// largest analytic gradient are checked.
GradResult check(const GradCase& c, double tolerance = 1e-3, double step = 1e-6);

/// Memory, ID, triplet and shape-prior losses on random inputs, plus the
/// fusion logits, a mixer weight and an encoder weight through the total
/// loss of a small model.
std::vector<GradCase> standard_cases(std::uint64_t seed = 0);

/// Runs every case whose component matches `only` (all when empty).
std::vector<GradResult> run(const std::vector<GradCase>& cases, const std::string& only = "", double tolerance = 1e-3);

std::vector<std::string> component_names();

}  // namespace sasreid::gradcheck
