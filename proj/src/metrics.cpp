#include "twinflow/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace twinflow::metrics {

namespace {

void require_nonempty_same_dim(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() == 0 || b.rows() == 0) throw InvalidArgument(fmt::format("{}: empty sample set", what));
  if (a.cols() != b.cols()) {
    throw InvalidArgument(fmt::format("{}: dimension mismatch ({} vs {})", what, a.cols(), b.cols()));
  }
}

double mean_pairwise(const Matrix& a, const Matrix& b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < b.rows(); ++j) row += (a.row(i) - b.row(j)).norm();
    total += row;
  }
  return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

}  // namespace

double w2_squared_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("w2_squared_1d: empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = a.size(), m = b.size();
  // Quantile breakpoints i/n and j/m on the common denominator n*m.
  const double denom = static_cast<double>(n) * static_cast<double>(m);
  std::size_t i = 0, j = 0, cur = 0;
  double acc = 0.0;
  while (i < n && j < m) {
    const std::size_t next_a = (i + 1) * m;
    const std::size_t next_b = (j + 1) * n;
    const std::size_t next = std::min(next_a, next_b);
    const double d = a[i] - b[j];
    acc += static_cast<double>(next - cur) * d * d;
    cur = next;
    if (next_a == next) ++i;
    if (next_b == next) ++j;
  }
  return acc / denom;
}

double sliced_w2(const Matrix& a, const Matrix& b, std::size_t n_proj, Rng& rng) {
  require_nonempty_same_dim(a, b, "sliced_w2");
  if (n_proj == 0) throw InvalidArgument("sliced_w2: need at least one projection");
  const auto d = a.cols();
  double total = 0.0;
  Eigen::VectorXd w(d);
  std::vector<double> pa(static_cast<std::size_t>(a.rows())), pb(static_cast<std::size_t>(b.rows()));
  for (std::size_t p = 0; p < n_proj; ++p) {
    do {
      for (Eigen::Index k = 0; k < d; ++k) w(k) = rng.normal();
    } while (w.norm() == 0.0);
    w.normalize();
    for (Eigen::Index i = 0; i < a.rows(); ++i) pa[static_cast<std::size_t>(i)] = a.row(i).dot(w);
    for (Eigen::Index i = 0; i < b.rows(); ++i) pb[static_cast<std::size_t>(i)] = b.row(i).dot(w);
    total += w2_squared_1d(pa, pb);
  }
  return total / static_cast<double>(n_proj);
}

double energy_distance(const Matrix& a, const Matrix& b) {
  require_nonempty_same_dim(a, b, "energy_distance");
  const double e = 2.0 * mean_pairwise(a, b) - mean_pairwise(a, a) - mean_pairwise(b, b);
  return std::max(0.0, e);
}

ModeCoverage mode_coverage(const Matrix& samples, const data::DatasetSpec& spec, double radius_tol) {
  if (spec.id != data::DatasetId::ring8) throw InvalidArgument("mode_coverage: only defined for ring8");
  if (samples.cols() != 2) throw InvalidArgument("mode_coverage: samples must be 2-D");
  const Matrix centers = data::ring_centers(spec);
  ModeCoverage out;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    Eigen::Index best = 0;
    const double dist = (centers.rowwise() - samples.row(i)).rowwise().norm().minCoeff(&best);
    if (dist < radius_tol) ++out.counts[static_cast<std::size_t>(best)];
  }
  const double needed = 0.01 * static_cast<double>(samples.rows());
  for (std::size_t count : out.counts) {
    if (count > 0 && static_cast<double>(count) >= needed) ++out.modes_recovered;
  }
  return out;
}

double diversity(const Matrix& samples, std::size_t max_pairs, Rng& rng) {
  const auto n = static_cast<std::size_t>(samples.rows());
  if (n < 2) throw InvalidArgument("diversity: need at least two samples");
  if (max_pairs == 0) throw InvalidArgument("diversity: max_pairs must be positive");
  const std::size_t all_pairs = n * (n - 1) / 2;
  double total = 0.0;
  if (all_pairs <= max_pairs) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        total += (samples.row(static_cast<Eigen::Index>(i)) - samples.row(static_cast<Eigen::Index>(j))).norm();
      }
    }
    return total / static_cast<double>(all_pairs);
  }
  for (std::size_t p = 0; p < max_pairs; ++p) {
    const std::size_t i = rng.index(n);
    std::size_t j = rng.index(n - 1);
    if (j >= i) ++j;
    total += (samples.row(static_cast<Eigen::Index>(i)) - samples.row(static_cast<Eigen::Index>(j))).norm();
  }
  return total / static_cast<double>(max_pairs);
}

MetricsReport evaluate(const Matrix& generated, const Matrix& reference, const data::DatasetSpec& spec, int nfe,
                       const EvalOptions& opts) {
  Rng rng(opts.seed);
  MetricsReport r;
  r.nfe = nfe;
  r.sliced_w2 = sliced_w2(generated, reference, opts.n_proj, rng);
  r.energy_dist = energy_distance(generated, reference);
  if (spec.id == data::DatasetId::ring8) {
    r.modes_recovered = mode_coverage(generated, spec, default_radius_tol(spec)).modes_recovered;
  }
  r.diversity = diversity(generated, opts.max_pairs, rng);
  return r;
}

}  // namespace twinflow::metrics
