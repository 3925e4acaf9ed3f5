#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "twinflow/checkpoint.hpp"
#include "twinflow/data.hpp"
#include "twinflow/losses.hpp"
#include "twinflow/model.hpp"
#include "twinflow/rng.hpp"

namespace twinflow {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct AdamState {
  ParamSnapshot m;
  ParamSnapshot v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ParamSnapshot& params);
};

// Bias-corrected Adam with decoupled weight decay. `grads` holds one buffer
// per parameter tensor, in snapshot order.
void adam_step(ParamSnapshot& params, const std::vector<std::vector<double>>& grads, AdamState& state,
               const AdamConfig& cfg);

// Scales `grads` in place so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_global_norm(std::vector<std::vector<double>>& grads, std::optional<double> max_norm);

struct TrainConfig {
  data::DatasetSpec dataset;
  ModelConfig model;
  losses::MixConfig mix;
  AdamConfig adam;
  double ema_decay = 0.99;
  std::size_t batch_size = 256;
  long steps = 2000;
  std::uint64_t seed = 42;
  long eval_every = 500;
  std::optional<double> grad_clip = 1.0;

  // Model dims and class count follow the dataset.
  ModelConfig resolved_model() const;
  void validate() const;
};

struct TrainState {
  long step = 0;
  VelocityNet net;
  ParamSnapshot ema;
  AdamState adam;
  Rng rng;
};

struct StepRecord {
  long step = 0;
  losses::LossBreakdown loss;
  double grad_norm = 0.0;
};

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  Trainer(TrainConfig cfg, TrainState state);

  // One optimization step. Throws DivergenceError on a non-finite loss.
  StepRecord step();

  const TrainConfig& config() const noexcept { return cfg_; }
  const TrainState& state() const noexcept { return state_; }

  // EMA weights when ema_decay > 0, live weights otherwise.
  VelocityNet sampling_net() const;

  checkpoint::Checkpoint to_checkpoint(std::string config_text = {}) const;
  static TrainState restore(const TrainConfig& cfg, const checkpoint::Checkpoint& ckpt);

 private:
  TrainConfig cfg_;
  TrainState state_;
};

TrainState initial_state(const TrainConfig& cfg);

struct TrainResult {
  TrainState state;
  std::vector<StepRecord> log;
};

// Runs cfg.steps steps from scratch. `on_step` (optional) sees every record.
TrainResult train(const TrainConfig& cfg, const std::function<void(const Trainer&, const StepRecord&)>& on_step = {});

}  // namespace twinflow
