#include "twinflow/rng.hpp"

#include <sstream>

namespace twinflow {

std::size_t Rng::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

Matrix Rng::normal_matrix(std::size_t rows, std::size_t cols) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal();
  return m;
}

Rng Rng::split(std::uint64_t salt) {
  std::seed_seq seq{engine_(), salt, salt >> 32};
  Rng child;
  child.engine_.seed(seq);
  return child;
}

std::string Rng::save() const {
  std::ostringstream out;
  out.precision(17);
  out << engine_ << ' ' << uniform_ << ' ' << normal_;
  return out.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream in(state);
  in >> engine_ >> uniform_ >> normal_;
  if (!in) throw IoError("malformed rng state");
}

}  // namespace twinflow
