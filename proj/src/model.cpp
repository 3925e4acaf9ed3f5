#include "twinflow/model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "twinflow/rng.hpp"

namespace twinflow {

namespace {

NamedTensor make_tensor(std::string name, ad::Shape shape) {
  return NamedTensor{std::move(name), shape, std::vector<double>(shape.size(), 0.0)};
}

void fill_uniform(NamedTensor& t, Rng& rng, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.values) v = rng.uniform(-bound, bound);
}

std::vector<NamedTensor> layout(const ModelConfig& c) {
  const std::size_t features = 2 * c.time_frequencies;
  std::vector<NamedTensor> out;
  out.push_back(make_tensor("input_proj.weight", ad::Shape(c.data_dim, c.hidden)));
  out.push_back(make_tensor("input_proj.bias", ad::Shape(c.hidden)));
  out.push_back(make_tensor("time_embed.weight", ad::Shape(features, c.hidden)));
  out.push_back(make_tensor("time_embed.bias", ad::Shape(c.hidden)));
  out.push_back(make_tensor("target_embed.weight", ad::Shape(features, c.hidden)));
  out.push_back(make_tensor("target_embed.bias", ad::Shape(c.hidden)));
  if (c.n_classes > 0) {
    out.push_back(make_tensor("class_embed.weight", ad::Shape(c.n_classes, c.hidden)));
  }
  for (std::size_t i = 0; i < c.depth; ++i) {
    out.push_back(make_tensor(fmt::format("block{}.weight", i), ad::Shape(c.hidden, c.hidden)));
    out.push_back(make_tensor(fmt::format("block{}.bias", i), ad::Shape(c.hidden)));
  }
  out.push_back(make_tensor("output_proj.weight", ad::Shape(c.hidden, c.data_dim)));
  out.push_back(make_tensor("output_proj.bias", ad::Shape(c.data_dim)));
  return out;
}

void check_times(std::span<const double> t, std::size_t batch, const char* what) {
  if (t.size() != batch) {
    throw InvalidArgument(fmt::format("eval: {} has {} entries for a batch of {}", what, t.size(), batch));
  }
  for (double v : t) {
    if (!(std::abs(v) <= 1.0)) throw InvalidArgument(fmt::format("eval: {} value {} outside [-1, 1]", what, v));
  }
}

}  // namespace

ParamSnapshot::ParamSnapshot(std::vector<NamedTensor> tensors) : tensors_(std::move(tensors)) {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].values.size() != tensors_[i].shape.size()) {
      throw InvalidArgument(fmt::format("parameter {} has {} values for shape {}", tensors_[i].name,
                                        tensors_[i].values.size(), tensors_[i].shape.str()));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (tensors_[i].name == tensors_[j].name) {
        throw InvalidArgument(fmt::format("duplicate parameter name {}", tensors_[i].name));
      }
    }
  }
}

std::size_t ParamSnapshot::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.values.size();
  return n;
}

const NamedTensor& ParamSnapshot::at(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw InvalidArgument(fmt::format("no parameter named {}", name));
}

void ParamSnapshot::require_compatible(const ParamSnapshot& other) const {
  if (tensors_.size() != other.tensors_.size()) {
    throw InvalidArgument(fmt::format("parameter count mismatch ({} vs {})", tensors_.size(),
                                      other.tensors_.size()));
  }
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || !(a.shape == b.shape)) {
      throw ad::ShapeError(fmt::format("parameter {} vs {}", a.name, b.name), a.shape, b.shape);
    }
  }
}

bool operator==(const ParamSnapshot& a, const ParamSnapshot& b) {
  if (a.tensors_.size() != b.tensors_.size()) return false;
  for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
    const auto& x = a.tensors_[i];
    const auto& y = b.tensors_[i];
    if (x.name != y.name || !(x.shape == y.shape) || x.values != y.values) return false;
  }
  return true;
}

ParamBinding ParamBinding::detached() const {
  std::vector<ad::DiffValue> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(ad::stop_gradient(v));
  return ParamBinding(std::move(out));
}

VelocityNet::VelocityNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  if (config.data_dim == 0 || config.hidden == 0 || config.time_frequencies == 0) {
    throw InvalidArgument("model dimensions must be positive");
  }
  Rng rng(seed);
  auto tensors = layout(config);
  for (auto& t : tensors) {
    const bool is_weight = t.name.ends_with(".weight");
    if (!is_weight || t.name == "output_proj.weight") continue;
    fill_uniform(t, rng, t.shape.dim(0));
  }
  params_ = ParamSnapshot(std::move(tensors));
}

VelocityNet::VelocityNet(const ModelConfig& config, ParamSnapshot params)
    : config_(config), params_(std::move(params)) {
  validate_layout();
}

void VelocityNet::load(const ParamSnapshot& params) {
  params_.require_compatible(params);
  params_ = params;
}

void VelocityNet::validate_layout() const {
  ParamSnapshot expected(layout(config_));
  expected.require_compatible(params_);
}

ParamBinding VelocityNet::bind(ad::Tape& tape) const {
  std::vector<ad::DiffValue> out;
  out.reserve(params_.size());
  for (const auto& t : params_.tensors()) out.push_back(tape.leaf(t.values, t.shape));
  return ParamBinding(std::move(out));
}

ParamBinding VelocityNet::frozen() const {
  std::vector<ad::DiffValue> out;
  out.reserve(params_.size());
  for (const auto& t : params_.tensors()) out.emplace_back(t.values, t.shape);
  return ParamBinding(std::move(out));
}

Matrix time_features(std::span<const double> t, std::size_t frequencies) {
  Matrix out(static_cast<Eigen::Index>(t.size()), static_cast<Eigen::Index>(2 * frequencies));
  std::vector<double> freq(frequencies, 1.0);
  for (std::size_t k = 1; k < frequencies; ++k) {
    freq[k] = std::pow(kMaxFrequency, static_cast<double>(k) / static_cast<double>(frequencies - 1));
  }
  const auto f = static_cast<Eigen::Index>(frequencies);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double ti = t[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < f; ++k) {
      const double a = freq[static_cast<std::size_t>(k)] * ti;
      out(i, k) = std::sin(a);
      out(i, f + k) = std::cos(a);
    }
  }
  return out;
}

ad::DiffValue VelocityNet::eval(const ParamBinding& p, const ad::DiffValue& x, std::span<const double> t,
                                std::span<const double> r, std::span<const int> labels) const {
  if (p.size() != params_.size()) throw InvalidArgument("eval: binding does not match this network");
  if (x.shape().rank() != 2 || x.shape().cols() != config_.data_dim) {
    throw ad::ShapeError("eval", x.shape(), ad::Shape(x.shape().rows(), config_.data_dim));
  }
  const std::size_t batch = x.shape().rows();
  check_times(t, batch, "t");
  check_times(r, batch, "r");
  if (!labels.empty() && config_.n_classes == 0) {
    throw InvalidArgument("eval: labels given to an unconditional network");
  }
  if (config_.n_classes > 0 && labels.size() != batch) {
    throw InvalidArgument(fmt::format("eval: conditional network needs {} labels, got {}", batch, labels.size()));
  }

  std::size_t k = 0;
  const auto& w_in = p[k++];
  const auto& b_in = p[k++];
  const auto& w_t = p[k++];
  const auto& b_t = p[k++];
  const auto& w_r = p[k++];
  const auto& b_r = p[k++];

  const auto phi_t = ad::DiffValue::constant(time_features(t, config_.time_frequencies));
  const auto phi_r = ad::DiffValue::constant(time_features(r, config_.time_frequencies));
  ad::DiffValue h = ad::affine(w_in, b_in, x) + ad::affine(w_t, b_t, phi_t) + ad::affine(w_r, b_r, phi_r);

  if (config_.n_classes > 0) {
    Matrix one_hot = Matrix::Zero(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(config_.n_classes));
    for (std::size_t i = 0; i < batch; ++i) {
      const int c = labels[i];
      if (c < 0 || static_cast<std::size_t>(c) >= config_.n_classes) {
        throw InvalidArgument(fmt::format("eval: label {} outside [0, {})", c, config_.n_classes));
      }
      one_hot(static_cast<Eigen::Index>(i), c) = 1.0;
    }
    h = h + ad::matmul(ad::DiffValue::constant(one_hot), p[k++]);
  }
  for (std::size_t i = 0; i < config_.depth; ++i) {
    const auto& w = p[k++];
    const auto& b = p[k++];
    h = ad::silu(ad::affine(w, b, h));
  }
  const auto& w_out = p[k++];
  const auto& b_out = p[k++];
  return ad::affine(w_out, b_out, h);
}

Matrix VelocityNet::predict(const Matrix& x, std::span<const double> t, std::span<const double> r,
                            std::span<const int> labels) const {
  return eval(frozen(), ad::DiffValue::constant(x), t, r, labels).to_matrix();
}

void ema_update(ParamSnapshot& ema, const ParamSnapshot& live, double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw InvalidArgument(fmt::format("ema decay {} outside [0, 1)", decay));
  ema.require_compatible(live);
  for (std::size_t i = 0; i < ema.size(); ++i) {
    auto& e = ema.tensors()[i].values;
    const auto& l = live.tensors()[i].values;
    for (std::size_t j = 0; j < e.size(); ++j) e[j] = decay * e[j] + (1.0 - decay) * l[j];
  }
}

ParamSnapshot ema_updated(const ParamSnapshot& ema, const ParamSnapshot& live, double decay) {
  ParamSnapshot out = ema;
  ema_update(out, live, decay);
  return out;
}

}  // namespace twinflow
