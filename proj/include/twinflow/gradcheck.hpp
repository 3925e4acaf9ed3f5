#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "twinflow/autodiff.hpp"

namespace twinflow::ad {

// A scalar function of several inputs. It must build its result only from
// the given inputs and constants, so it can run both recorded and detached.
using ScalarFn = std::function<DiffValue(std::span<const DiffValue>)>;

struct GradcheckCase {
  std::string name;
  double rel_error = 0.0;
  std::size_t n_inputs = 0;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double max_rel_error = 0.0;
  std::string worst_case;
};

// Norm-wise relative error ||a - b|| / max(||a||, ||b||), 0 when both vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

// Compares reverse-mode gradients of `fn` at `inputs` against central finite
// differences with step `eps`. Returns the relative error over all inputs.
double check_gradient(const ScalarFn& fn, const std::vector<DiffValue>& inputs, double eps = 1e-5);

// Randomized suite over every primitive plus a 3-layer silu/tanh network.
GradcheckReport run_gradcheck_suite(std::uint64_t seed, int n_cases = 100);

}  // namespace twinflow::ad
