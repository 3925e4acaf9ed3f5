#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "twinflow/autodiff.hpp"

namespace twinflow {

// Seeded random source. Owns its engine and distribution state so the full
// state can be saved and restored (std::normal_distribution caches a value
// between calls, which the engine alone does not capture).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // U[0, 1)
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  std::size_t index(std::size_t n);
  std::uint64_t next_u64() { return engine_(); }

  Matrix normal_matrix(std::size_t rows, std::size_t cols);

  // Derives an independent stream, e.g. one per training run.
  Rng split(std::uint64_t salt);

  std::string save() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace twinflow
