#pragma once

#include <span>
#include <vector>

#include "twinflow/model.hpp"
#include "twinflow/rng.hpp"

namespace twinflow::sampler {

enum class Branch { real, fake };

struct SampleRun {
  int nfe = 0;
  std::vector<double> times;  // 1 = s_0 > ... > s_K = 0
  Matrix samples;
  std::vector<Matrix> trajectory;  // K + 1 states when recorded
};

// Uniform grid s_k = 1 - k/K.
std::vector<double> uniform_grid(int nfe);

// Euler-style jumps x_{k+1} = x_k + (s_{k+1} - s_k) A(x_k, sigma s_k, sigma s_{k+1})
// with sigma = +1 (real) or -1 (fake). Since A targets z - x, the jump uses
// (s_{k+1} - s_k) rather than (s_k - s_{k+1}).
SampleRun sample_from(const VelocityNet& net, const Matrix& noise, int nfe, std::span<const int> labels = {},
                      Branch branch = Branch::real, bool record = false);

SampleRun sample(const VelocityNet& net, std::size_t n, int nfe, Rng& rng, std::span<const int> labels = {},
                 Branch branch = Branch::real, bool record = false);

// One run per entry of `nfe_list`, all starting from the same noise.
std::vector<SampleRun> nfe_sweep(const VelocityNet& net, std::size_t n, std::span<const int> nfe_list, Rng& rng,
                                 std::span<const int> labels = {});

}  // namespace twinflow::sampler
