#include "twinflow/sampler.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace twinflow::sampler {

std::vector<double> uniform_grid(int nfe) {
  if (nfe < 1) throw InvalidArgument(fmt::format("nfe must be at least 1, got {}", nfe));
  std::vector<double> s(static_cast<std::size_t>(nfe) + 1);
  for (int k = 0; k <= nfe; ++k) s[static_cast<std::size_t>(k)] = 1.0 - static_cast<double>(k) / nfe;
  return s;
}

SampleRun sample_from(const VelocityNet& net, const Matrix& noise, int nfe, std::span<const int> labels,
                      Branch branch, bool record) {
  if (static_cast<std::size_t>(noise.cols()) != net.config().data_dim) {
    throw InvalidArgument("sample: noise dimension does not match the network");
  }
  SampleRun run;
  run.nfe = nfe;
  run.times = uniform_grid(nfe);
  const double sign = branch == Branch::real ? 1.0 : -1.0;
  const auto n = static_cast<std::size_t>(noise.rows());

  const ParamBinding params = net.frozen();
  Matrix x = noise;
  if (record) run.trajectory.push_back(x);
  std::vector<double> from(n), to(n);
  for (int k = 0; k < nfe; ++k) {
    const double s = run.times[static_cast<std::size_t>(k)];
    const double s_next = run.times[static_cast<std::size_t>(k) + 1];
    std::fill(from.begin(), from.end(), sign * s);
    std::fill(to.begin(), to.end(), sign * s_next);
    const Matrix a = net.eval(params, ad::DiffValue::constant(x), from, to, labels).to_matrix();
    x += (s_next - s) * a;
    if (record) run.trajectory.push_back(x);
  }
  run.samples = std::move(x);
  return run;
}

SampleRun sample(const VelocityNet& net, std::size_t n, int nfe, Rng& rng, std::span<const int> labels,
                 Branch branch, bool record) {
  const Matrix noise = rng.normal_matrix(n, net.config().data_dim);
  return sample_from(net, noise, nfe, labels, branch, record);
}

std::vector<SampleRun> nfe_sweep(const VelocityNet& net, std::size_t n, std::span<const int> nfe_list, Rng& rng,
                                 std::span<const int> labels) {
  if (nfe_list.empty()) throw InvalidArgument("nfe_sweep: empty nfe list");
  const Matrix noise = rng.normal_matrix(n, net.config().data_dim);
  std::vector<SampleRun> runs;
  runs.reserve(nfe_list.size());
  for (int k : nfe_list) runs.push_back(sample_from(net, noise, k, labels));
  return runs;
}

}  // namespace twinflow::sampler
