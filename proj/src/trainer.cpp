#include "twinflow/trainer.hpp"

#include <cmath>

#include <fmt/format.h>

namespace twinflow {

namespace {

constexpr std::string_view kEmaTag = "EMA_";
constexpr std::string_view kAdamTag = "ADAM";
constexpr std::string_view kStepTag = "STEP";
constexpr std::string_view kRngTag = "RNG_";
constexpr std::string_view kConfigTag = "CONF";

ParamSnapshot zeros_like(const ParamSnapshot& params) {
  ParamSnapshot out = params;
  for (auto& t : out.tensors()) std::fill(t.values.begin(), t.values.end(), 0.0);
  return out;
}

const checkpoint::Block& require_block(const checkpoint::Checkpoint& ckpt, std::string_view tag) {
  const auto* b = ckpt.find(tag);
  if (b == nullptr) throw IoError(fmt::format("checkpoint has no '{}' block; not a training checkpoint", tag));
  return *b;
}

}  // namespace

AdamState AdamState::zeros_like(const ParamSnapshot& params) {
  return AdamState{twinflow::zeros_like(params), twinflow::zeros_like(params), 0};
}

void adam_step(ParamSnapshot& params, const std::vector<std::vector<double>>& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (grads.size() != params.size()) throw InvalidArgument("adam_step: one gradient per parameter required");
  params.require_compatible(state.m);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.tensors()[i].values;
    auto& m = state.m.tensors()[i].values;
    auto& v = state.v.tensors()[i].values;
    const auto& g = grads[i];
    if (g.size() != p.size()) {
      throw InvalidArgument(fmt::format("adam_step: gradient {} has {} entries, expected {}", i, g.size(), p.size()));
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * p[j]);
    }
  }
}

double clip_global_norm(std::vector<std::vector<double>>& grads, std::optional<double> max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm && norm > *max_norm) {
    const double scale = *max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g) v *= scale;
    }
  }
  return norm;
}

ModelConfig TrainConfig::resolved_model() const {
  ModelConfig m = model;
  m.data_dim = dataset.data_dim();
  m.n_classes = dataset.n_classes();
  return m;
}

void TrainConfig::validate() const {
  if (!(mix.lambda >= 0.0 && mix.lambda <= 1.0)) throw ConfigError(fmt::format("lambda {} outside [0, 1]", mix.lambda));
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (steps < 0) throw ConfigError("steps must be non-negative");
  if (eval_every < 1) throw ConfigError("eval_every must be positive");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must lie in [0, 1)");
  if (!(adam.lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("betas must lie in [0, 1)");
  }
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (!(mix.time_floor > 0.0 && mix.time_floor < 1.0)) throw ConfigError("time_floor must lie in (0, 1)");
  if (model.hidden == 0 || model.time_frequencies == 0) throw ConfigError("model sizes must be positive");
  if (dataset.data_dim() == 0) throw ConfigError("data dimension must be positive");
}

TrainState initial_state(const TrainConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  VelocityNet net(cfg.resolved_model(), rng.next_u64());
  ParamSnapshot ema = net.params();
  AdamState adam = AdamState::zeros_like(net.params());
  return TrainState{0, std::move(net), std::move(ema), std::move(adam), std::move(rng)};
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), state_(initial_state(cfg_)) {}

Trainer::Trainer(TrainConfig cfg, TrainState state) : cfg_(std::move(cfg)), state_(std::move(state)) {
  cfg_.validate();
}

StepRecord Trainer::step() {
  auto& rng = state_.rng;
  const std::size_t dim = cfg_.dataset.data_dim();
  const data::Samples drawn = data::sample_data(cfg_.dataset, cfg_.batch_size, rng);
  losses::Batch batch{drawn.x, rng.normal_matrix(cfg_.batch_size, dim), {}};
  if (cfg_.dataset.n_classes() > 0) batch.labels = drawn.labels;

  ad::Tape tape;
  const losses::NetworkModel model(state_.net, tape);
  const losses::MixedLoss loss = losses::mixed_step_loss(model, batch, cfg_.mix, rng);
  const auto& lb = loss.breakdown;
  if (!std::isfinite(lb.total)) throw DivergenceError(state_.step + 1, lb.base, lb.adv, lb.rectify);

  const ad::Gradients grads = tape.backward(loss.total);
  std::vector<std::vector<double>> flat;
  flat.reserve(model.live_params().size());
  for (const auto& p : model.live_params().values()) flat.push_back(grads.wrt(p));
  const double norm = clip_global_norm(flat, cfg_.grad_clip);
  if (!std::isfinite(norm)) throw DivergenceError(state_.step + 1, lb.base, lb.adv, lb.rectify);

  adam_step(state_.net.params(), flat, state_.adam, cfg_.adam);
  ema_update(state_.ema, state_.net.params(), cfg_.ema_decay);
  ++state_.step;
  return StepRecord{state_.step, lb, norm};
}

VelocityNet Trainer::sampling_net() const {
  if (cfg_.ema_decay > 0.0) return VelocityNet(state_.net.config(), state_.ema);
  return state_.net;
}

checkpoint::Checkpoint Trainer::to_checkpoint(std::string config_text) const {
  checkpoint::Checkpoint ckpt;
  ckpt.config = state_.net.config();
  ckpt.seed = cfg_.seed;
  ckpt.params = state_.net.params();
  ckpt.blocks.push_back(checkpoint::Block::make(kEmaTag, checkpoint::encode_params(state_.ema)));

  checkpoint::Writer adam;
  adam.u64(state_.adam.step);
  for (const ParamSnapshot* moments : {&state_.adam.m, &state_.adam.v}) {
    const std::string encoded = checkpoint::encode_params(*moments);
    adam.u64(encoded.size());
    adam.bytes(encoded);
  }
  ckpt.blocks.push_back(checkpoint::Block::make(kAdamTag, adam.take()));

  checkpoint::Writer step;
  step.u64(static_cast<std::uint64_t>(state_.step));
  ckpt.blocks.push_back(checkpoint::Block::make(kStepTag, step.take()));
  ckpt.blocks.push_back(checkpoint::Block::make(kRngTag, state_.rng.save()));
  if (!config_text.empty()) ckpt.blocks.push_back(checkpoint::Block::make(kConfigTag, std::move(config_text)));
  return ckpt;
}

TrainState Trainer::restore(const TrainConfig& cfg, const checkpoint::Checkpoint& ckpt) {
  VelocityNet net(ckpt.config, ckpt.params);
  ParamSnapshot ema = checkpoint::decode_params(require_block(ckpt, kEmaTag).payload);
  ema.require_compatible(net.params());

  checkpoint::Reader adam(require_block(ckpt, kAdamTag).payload);
  AdamState state;
  state.step = adam.u64();
  for (ParamSnapshot* moments : {&state.m, &state.v}) {
    const auto len = adam.u64();
    *moments = checkpoint::decode_params(adam.bytes(len));
  }
  state.m.require_compatible(net.params());
  state.v.require_compatible(net.params());

  checkpoint::Reader step(require_block(ckpt, kStepTag).payload);
  const auto step_count = static_cast<long>(step.u64());

  Rng rng;
  rng.restore(require_block(ckpt, kRngTag).payload);
  if (!(net.config().data_dim == cfg.dataset.data_dim())) {
    throw ConfigError("checkpoint data dimension does not match the configured dataset");
  }
  return TrainState{step_count, std::move(net), std::move(ema), std::move(state), std::move(rng)};
}

TrainResult train(const TrainConfig& cfg, const std::function<void(const Trainer&, const StepRecord&)>& on_step) {
  Trainer trainer(cfg);
  std::vector<StepRecord> log;
  log.reserve(static_cast<std::size_t>(cfg.steps));
  for (long i = 0; i < cfg.steps; ++i) {
    log.push_back(trainer.step());
    if (on_step) on_step(trainer, log.back());
  }
  return TrainResult{trainer.state(), std::move(log)};
}

}  // namespace twinflow
