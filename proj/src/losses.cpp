#include "twinflow/losses.hpp"

#include <cmath>

#include <fmt/format.h>

namespace twinflow::losses {

namespace {

using ad::DiffValue;

Matrix row_filled(std::span<const double> per_row, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(per_row.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).setConstant(per_row[static_cast<std::size_t>(i)]);
  return m;
}

DiffValue scale_rows(const DiffValue& v, std::span<const double> s) {
  return ad::mul(v, DiffValue::constant(row_filled(s, static_cast<Eigen::Index>(v.shape().cols()))));
}

Matrix scale_rows(const Matrix& m, std::span<const double> s) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) *= s[static_cast<std::size_t>(i)];
  return out;
}

std::vector<double> negated(std::span<const double> t) {
  std::vector<double> out(t.begin(), t.end());
  for (double& v : out) v = -v;
  return out;
}

void require_rows(const Matrix& m, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(m.rows()) != n) {
    throw InvalidArgument(fmt::format("{}: expected {} rows, got {}", what, n, m.rows()));
  }
}

void require_open_unit(std::span<const double> t, const char* what) {
  for (double v : t) {
    if (!(v > 0.0 && v <= 1.0)) throw InvalidArgument(fmt::format("{}: time {} outside (0, 1]", what, v));
  }
}

// Target times for the fake/real instantaneous evaluations at |t| = t_prime.
std::vector<double> fake_targets(std::span<const double> signed_t, FakeTarget target) {
  if (target == FakeTarget::zero) return std::vector<double>(signed_t.size(), 0.0);
  return {signed_t.begin(), signed_t.end()};
}

Matrix renoise(const Matrix& x_fake, const Matrix& z_fake, std::span<const double> t_prime) {
  return transport::interpolate_rows(x_fake, z_fake, t_prime);
}

// Rectification term given the live one-jump prediction F = A(x_t, t, 0).
DiffValue rectify_from_live(const VelocityModel& model, const DiffValue& f_live, const Matrix& x_fake,
                            const Matrix& z_fake, std::span<const int> labels,
                            std::span<const double> t_prime, RectifyWeighting weighting,
                            FakeTarget target, double time_floor) {
  const Matrix x_pt = renoise(x_fake, z_fake, t_prime);
  const Matrix dv = velocity_diff(model, x_pt, t_prime, labels, target);
  const DiffValue goal = DiffValue::constant(dv + f_live.to_matrix());
  if (weighting == RectifyWeighting::none) return squared_l2(f_live, goal);

  std::vector<double> w(t_prime.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (t_prime[i] < time_floor) {
      throw InvalidArgument(fmt::format("rectify_loss: t'={} below {} makes the KL weight singular",
                                        t_prime[i], time_floor));
    }
    w[i] = (1.0 - t_prime[i]) / t_prime[i];
  }
  return weighted_squared_l2(f_live, goal, w);
}

}  // namespace

NetworkModel::NetworkModel(const VelocityNet& net, ad::Tape& tape)
    : net_(net), live_(net.bind(tape)), frozen_(live_.detached()) {}

NetworkModel::NetworkModel(const VelocityNet& net) : net_(net), live_(net.frozen()), frozen_(live_) {}

DiffValue NetworkModel::live(const Matrix& x, std::span<const double> t, std::span<const double> r,
                             std::span<const int> labels) const {
  return net_.eval(live_, DiffValue::constant(x), t, r, labels);
}

Matrix NetworkModel::frozen(const Matrix& x, std::span<const double> t, std::span<const double> r,
                            std::span<const int> labels) const {
  return net_.eval(frozen_, DiffValue::constant(x), t, r, labels).to_matrix();
}

DiffValue squared_l2(const DiffValue& a, const DiffValue& b) {
  if (!(a.shape() == b.shape())) throw ad::ShapeError("squared_l2", a.shape(), b.shape());
  const double batch = static_cast<double>(a.shape().rows());
  return ad::scalar_mul(ad::sum(ad::square(ad::sub(a, b))), 1.0 / batch);
}

DiffValue weighted_squared_l2(const DiffValue& a, const DiffValue& b, std::span<const double> weights) {
  if (!(a.shape() == b.shape())) throw ad::ShapeError("weighted_squared_l2", a.shape(), b.shape());
  if (weights.size() != a.shape().rows()) {
    throw InvalidArgument("weighted_squared_l2: one weight per row required");
  }
  const double batch = static_cast<double>(a.shape().rows());
  return ad::scalar_mul(ad::sum(scale_rows(ad::square(ad::sub(a, b)), weights)), 1.0 / batch);
}

DiffValue base_loss_n2(const VelocityModel& model, const Matrix& x, const Matrix& z,
                       std::span<const int> labels, std::span<const double> t,
                       std::span<const transport::TimeChain> chains) {
  const std::size_t n = t.size();
  require_rows(x, n, "base_loss_n2");
  require_rows(z, n, "base_loss_n2");
  if (chains.size() != n) throw InvalidArgument("base_loss_n2: one time chain per sample required");

  std::vector<double> t1(n), t2(n), t3(n);
  std::vector<double> g_scale(n), h1_scale(n), h2_scale(n), inv_gap(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = chains[i];
    if (!(t[i] > c.t1 && c.t1 > c.t2 && c.t2 > c.t3 && c.t3 >= 0.0)) {
      throw InvalidArgument(fmt::format("base_loss_n2: times ({}, {}, {}, {}) not strictly decreasing", t[i],
                                        c.t1, c.t2, c.t3));
    }
    if (std::abs(c.t1 - t[i]) < transport::kMinLegGap) {
      throw InvalidArgument(fmt::format("base_loss_n2: |t1 - t| = {} too small; resample", std::abs(c.t1 - t[i])));
    }
    t1[i] = c.t1;
    t2[i] = c.t2;
    t3[i] = c.t3;
    g_scale[i] = c.t3 - t[i];
    h1_scale[i] = c.t2 - c.t1;
    h2_scale[i] = c.t3 - c.t2;
    inv_gap[i] = 1.0 / (c.t1 - t[i]);
  }

  const Matrix x_t = transport::interpolate_rows(x, z, t);
  const Matrix x_t1 = transport::interpolate_rows(x, z, t1);
  const Matrix x_t2 = transport::interpolate_rows(x, z, t2);

  const DiffValue g = scale_rows(model.live(x_t, t, t3, labels), g_scale);
  const Matrix h1 = scale_rows(model.frozen(x_t1, t1, t2, labels), h1_scale);
  const Matrix h2 = scale_rows(model.frozen(x_t2, t2, t3, labels), h2_scale);

  const DiffValue pred = scale_rows(ad::sub(g, DiffValue::constant(h1 + h2)), inv_gap);
  return squared_l2(DiffValue::constant(z - x), pred);
}

DiffValue make_fake(const VelocityModel& model, const Matrix& x, const Matrix& z, std::span<const int> labels,
                    std::span<const double> t, bool grad) {
  require_open_unit(t, "make_fake");
  const Matrix x_t = transport::interpolate_rows(x, z, t);
  const std::vector<double> zero(t.size(), 0.0);
  const std::vector<double> neg_t = negated(t);
  if (grad) {
    const DiffValue f = model.live(x_t, t, zero, labels);
    return ad::add(DiffValue::constant(x_t), scale_rows(f, neg_t));
  }
  return DiffValue::constant(x_t + scale_rows(model.frozen(x_t, t, zero, labels), neg_t));
}

DiffValue adv_loss(const VelocityModel& model, const Matrix& x_fake, const Matrix& z_fake,
                   std::span<const int> labels, std::span<const double> t_prime, FakeTarget target) {
  require_open_unit(t_prime, "adv_loss");
  const Matrix x_pt = renoise(x_fake, z_fake, t_prime);
  const std::vector<double> neg = negated(t_prime);
  const DiffValue pred = model.live(x_pt, neg, fake_targets(neg, target), labels);
  return squared_l2(pred, DiffValue::constant(z_fake - x_fake));
}

Matrix velocity_diff(const VelocityModel& model, const Matrix& x, std::span<const double> t_prime,
                     std::span<const int> labels, FakeTarget target) {
  require_open_unit(t_prime, "velocity_diff");
  const std::vector<double> neg = negated(t_prime);
  const Matrix fake = model.frozen(x, neg, fake_targets(neg, target), labels);
  const Matrix real = model.frozen(x, t_prime, fake_targets(t_prime, target), labels);
  return fake - real;
}

DiffValue rectify_loss(const VelocityModel& model, const Matrix& x, const Matrix& z, std::span<const int> labels,
                       std::span<const double> t, const Matrix& z_fake, std::span<const double> t_prime,
                       RectifyWeighting weighting, FakeTarget target, double time_floor) {
  require_open_unit(t, "rectify_loss");
  require_open_unit(t_prime, "rectify_loss");
  const Matrix x_t = transport::interpolate_rows(x, z, t);
  const std::vector<double> zero(t.size(), 0.0);
  const DiffValue f_live = model.live(x_t, t, zero, labels);
  const Matrix x_fake = x_t - scale_rows(f_live.to_matrix(), t);
  return rectify_from_live(model, f_live, x_fake, z_fake, labels, t_prime, weighting, target, time_floor);
}

std::size_t twin_subset_size(double lambda, std::size_t batch) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument(fmt::format("lambda {} outside [0, 1]", lambda));
  // The epsilon keeps exact products such as (1/3) * 12 from rounding up.
  const double raw = std::ceil(lambda * static_cast<double>(batch) - 1e-9);
  return std::min(batch, static_cast<std::size_t>(std::max(0.0, raw)));
}

MixedLoss mixed_step_loss(const VelocityModel& model, const Batch& batch, const MixConfig& cfg, Rng& rng) {
  const std::size_t n = batch.size();
  if (n < 2) throw InvalidArgument("mixed_step_loss: batch size must be at least 2");
  require_rows(batch.z, n, "mixed_step_loss");
  const std::size_t n_twin = twin_subset_size(cfg.lambda, n);
  const std::size_t n_base = n - n_twin;
  const auto dim = batch.x.cols();
  const auto labels = std::span<const int>(batch.labels);
  auto label_slice = [&](std::size_t off, std::size_t len) {
    return labels.empty() ? labels : labels.subspan(off, len);
  };

  MixedLoss out{DiffValue::scalar(0.0), {}};
  out.breakdown.twin_count = n_twin;
  out.breakdown.base_count = n_base;
  std::optional<DiffValue> total;
  auto accumulate = [&total](const DiffValue& term) { total = total ? ad::add(*total, term) : term; };

  if (n_twin > 0) {
    const auto idx = static_cast<Eigen::Index>(n_twin);
    const Matrix x = batch.x.topRows(idx);
    const Matrix z = batch.z.topRows(idx);
    const auto c = label_slice(0, n_twin);
    const auto t = transport::sample_uniform_times(rng, n_twin, cfg.time_floor);
    const auto t_prime = transport::sample_uniform_times(rng, n_twin, cfg.time_floor);
    const Matrix z_fake = rng.normal_matrix(n_twin, static_cast<std::size_t>(dim));

    // One live evaluation serves both terms: its value (detached) is the fake
    // sample for the adversarial loss, and it is the regressed output of the
    // rectification loss.
    const Matrix x_t = transport::interpolate_rows(x, z, t);
    const std::vector<double> zero(n_twin, 0.0);
    const DiffValue f_live = model.live(x_t, t, zero, c);
    const Matrix x_fake = x_t - scale_rows(f_live.to_matrix(), t);

    const DiffValue adv = adv_loss(model, x_fake, z_fake, c, t_prime, cfg.fake_target);
    const DiffValue rect = rectify_from_live(model, f_live, x_fake, z_fake, c, t_prime, cfg.rectify_weighting,
                                             cfg.fake_target, cfg.time_floor);
    out.breakdown.adv = adv.item();
    out.breakdown.rectify = rect.item();
    accumulate(adv);
    accumulate(rect);
  }

  if (n_base > 0) {
    const auto off = static_cast<Eigen::Index>(n_twin);
    const auto len = static_cast<Eigen::Index>(n_base);
    const Matrix x = batch.x.middleRows(off, len);
    const Matrix z = batch.z.middleRows(off, len);
    const auto t = transport::sample_uniform_times(rng, n_base, cfg.time_floor);
    std::vector<transport::TimeChain> chains;
    chains.reserve(n_base);
    for (double ti : t) chains.push_back(transport::sample_chain_n2(rng, ti));
    const DiffValue base = base_loss_n2(model, x, z, label_slice(n_twin, n_base), t, chains);
    out.breakdown.base = base.item();
    accumulate(base);
  }

  out.total = *total;
  out.breakdown.total = out.total.item();
  return out;
}

}  // namespace twinflow::losses
