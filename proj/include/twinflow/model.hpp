#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "twinflow/autodiff.hpp"

namespace twinflow {

struct ModelConfig {
  std::size_t data_dim = 2;
  std::size_t hidden = 256;
  std::size_t depth = 4;
  std::size_t n_classes = 0;
  // Sinusoidal features per time input: sin and cos at `time_frequencies`
  // geometrically spaced frequencies in [1, kMaxFrequency].
  std::size_t time_frequencies = 64;
};

inline constexpr double kMaxFrequency = 1000.0;

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

class ParamSnapshot {
 public:
  ParamSnapshot() = default;
  explicit ParamSnapshot(std::vector<NamedTensor> tensors);

  const std::vector<NamedTensor>& tensors() const noexcept { return tensors_; }
  std::vector<NamedTensor>& tensors() noexcept { return tensors_; }
  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t parameter_count() const noexcept;
  const NamedTensor& at(const std::string& name) const;

  // Throws unless names and shapes match pairwise.
  void require_compatible(const ParamSnapshot& other) const;

  friend bool operator==(const ParamSnapshot& a, const ParamSnapshot& b);

 private:
  std::vector<NamedTensor> tensors_;
};

// Parameters viewed as autodiff values: recorded leaves (gradients flow) or
// constants (the stop-gradient copy).
class ParamBinding {
 public:
  explicit ParamBinding(std::vector<ad::DiffValue> values) : values_(std::move(values)) {}

  const ad::DiffValue& operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const noexcept { return values_.size(); }
  bool recorded() const noexcept { return !values_.empty() && values_.front().recorded(); }
  const std::vector<ad::DiffValue>& values() const noexcept { return values_; }

  // Same buffers, no tape.
  ParamBinding detached() const;

 private:
  std::vector<ad::DiffValue> values_;
};

// Average-velocity network A(x, t, r[, c]). The jump x_t + (r - t) * A lands
// on x_r; on straight paths A equals u = z - x for every r.
//
// Architecture: input_proj(x) + time_embed(phi(t)) + target_embed(phi(r))
// [+ class_embed(c)], then `depth` affine+silu blocks and a linear head.
// phi uses the signed time so the twin (negative-time) branch is distinct.
class VelocityNet {
 public:
  // Weights ~ U(+-1/sqrt(fan_in)), biases 0, head weights 0 (output is 0).
  VelocityNet(const ModelConfig& config, std::uint64_t seed);
  VelocityNet(const ModelConfig& config, ParamSnapshot params);

  const ModelConfig& config() const noexcept { return config_; }
  const ParamSnapshot& params() const noexcept { return params_; }
  ParamSnapshot& params() noexcept { return params_; }
  void load(const ParamSnapshot& params);

  ParamBinding bind(ad::Tape& tape) const;
  ParamBinding frozen() const;

  // Batched evaluation. `t` and `r` hold one time per row of `x`; labels are
  // required iff the net is class-conditional. Gradients reach the
  // parameters only when `params` is recorded.
  ad::DiffValue eval(const ParamBinding& params, const ad::DiffValue& x, std::span<const double> t,
                     std::span<const double> r, std::span<const int> labels = {}) const;

  // eval with frozen parameters, returning plain values.
  Matrix predict(const Matrix& x, std::span<const double> t, std::span<const double> r,
                 std::span<const int> labels = {}) const;

 private:
  void validate_layout() const;

  ModelConfig config_;
  ParamSnapshot params_;
};

// Sinusoidal features of signed times, one row per time: [sin(f_k t) | cos(f_k t)].
Matrix time_features(std::span<const double> t, std::size_t frequencies);

// ema <- decay * ema + (1 - decay) * live
void ema_update(ParamSnapshot& ema, const ParamSnapshot& live, double decay);
ParamSnapshot ema_updated(const ParamSnapshot& ema, const ParamSnapshot& live, double decay);

}  // namespace twinflow
