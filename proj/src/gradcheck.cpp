#include "twinflow/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "twinflow/rng.hpp"

namespace twinflow::ad {

namespace {

DiffValue random_value(Rng& rng, const Shape& s) {
  Buffer b(s.size());
  for (double& v : b) v = rng.normal();
  return DiffValue(std::move(b), s);
}

Shape random_shape(Rng& rng) {
  const std::size_t rows = 1 + rng.index(5);
  const std::size_t cols = 1 + rng.index(5);
  return rng.uniform() < 0.25 ? Shape(cols) : Shape(rows, cols);
}

// Reduces a tensor output to a scalar through a fixed random weighting so
// every output element contributes to the checked gradient.
ScalarFn projected(std::function<DiffValue(std::span<const DiffValue>)> body, const DiffValue& weights) {
  return [body = std::move(body), weights](std::span<const DiffValue> in) {
    return sum(mul(body(in), weights));
  };
}

struct Case {
  std::string name;
  ScalarFn fn;
  std::vector<DiffValue> inputs;
};

Case make_case(int kind, Rng& rng) {
  const Shape s = random_shape(rng);
  auto weights_for = [&rng](const Shape& out) { return random_value(rng, out); };
  switch (kind) {
    case 0: {
      auto a = random_value(rng, s), b = random_value(rng, s);
      return {"add", projected([](auto in) { return add(in[0], in[1]); }, weights_for(s)), {a, b}};
    }
    case 1: {
      auto a = random_value(rng, s), b = random_value(rng, s);
      return {"sub", projected([](auto in) { return sub(in[0], in[1]); }, weights_for(s)), {a, b}};
    }
    case 2: {
      const double k = rng.normal();
      auto a = random_value(rng, s);
      return {"scalar_mul", projected([k](auto in) { return scalar_mul(in[0], k); }, weights_for(s)),
              {a}};
    }
    case 3: {
      auto a = random_value(rng, s), b = random_value(rng, s);
      return {"elementwise_mul", projected([](auto in) { return mul(in[0], in[1]); }, weights_for(s)),
              {a, b}};
    }
    case 4: {
      auto a = random_value(rng, s), b = random_value(rng, Shape::scalar());
      return {"elementwise_mul_broadcast",
              projected([](auto in) { return add(mul(in[0], in[1]), in[1]); }, weights_for(s)),
              {a, b}};
    }
    case 5: {
      const std::size_t m = 1 + rng.index(4), k = 1 + rng.index(4), n = 1 + rng.index(4);
      auto a = random_value(rng, Shape(m, k)), b = random_value(rng, Shape(k, n));
      return {"matmul", projected([](auto in) { return matmul(in[0], in[1]); }, weights_for(Shape(m, n))),
              {a, b}};
    }
    case 6: {
      const std::size_t batch = 1 + rng.index(4), in_dim = 1 + rng.index(4), out = 1 + rng.index(4);
      auto w = random_value(rng, Shape(in_dim, out)), b = random_value(rng, Shape(out));
      auto x = random_value(rng, Shape(batch, in_dim));
      return {"affine",
              projected([](auto in) { return affine(in[0], in[1], in[2]); }, weights_for(Shape(batch, out))),
              {w, b, x}};
    }
    case 7: {
      auto a = random_value(rng, s);
      return {"tanh", projected([](auto in) { return tanh(in[0]); }, weights_for(s)), {a}};
    }
    case 8: {
      auto a = random_value(rng, s);
      return {"silu", projected([](auto in) { return silu(in[0]); }, weights_for(s)), {a}};
    }
    case 9: {
      auto a = random_value(rng, s);
      return {"mean", [](auto in) { return scalar_mul(mean(in[0]), 3.0); }, {a}};
    }
    case 10: {
      auto a = random_value(rng, s);
      return {"sum", [](auto in) { return square(sum(in[0])); }, {a}};
    }
    case 11: {
      auto a = random_value(rng, s);
      return {"square", projected([](auto in) { return square(in[0]); }, weights_for(s)), {a}};
    }
    case 12: {
      const std::size_t cols = 1 + rng.index(4);
      const Shape sa(1 + rng.index(3), cols), sb(1 + rng.index(3), cols);
      auto a = random_value(rng, sa), b = random_value(rng, sb);
      return {"concat_rows",
              projected([](auto in) { return concat_rows(in[0], in[1]); },
                        weights_for(Shape(sa.rows() + sb.rows(), cols))),
              {a, b}};
    }
    default: {
      // Three affine layers: silu, tanh, linear head; squared-error loss.
      const std::size_t batch = 2 + rng.index(3), d = 2, h = 3 + rng.index(3);
      std::vector<DiffValue> in{
          random_value(rng, Shape(d, h)), random_value(rng, Shape(h)),
          random_value(rng, Shape(h, h)), random_value(rng, Shape(h)),
          random_value(rng, Shape(h, d)), random_value(rng, Shape(d)),
      };
      const DiffValue x = random_value(rng, Shape(batch, d));
      const DiffValue target = random_value(rng, Shape(batch, d));
      return {"mlp3",
              [x, target](auto p) {
                auto h1 = silu(affine(p[0], p[1], x));
                auto h2 = tanh(affine(p[2], p[3], h1));
                return mean(square(sub(affine(p[4], p[5], h2), target)));
              },
              std::move(in)};
    }
  }
}

constexpr int kKinds = 14;

}  // namespace

double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / scale;
}

double check_gradient(const ScalarFn& fn, const std::vector<DiffValue>& inputs, double eps) {
  Tape tape;
  std::vector<DiffValue> leaves;
  leaves.reserve(inputs.size());
  for (const auto& v : inputs) leaves.push_back(tape.leaf(v));
  const DiffValue loss = fn(leaves);

  Buffer analytic;
  if (loss.recorded()) {
    const Gradients grads = tape.backward(loss);
    for (const auto& leaf : leaves) {
      const Buffer g = grads.wrt(leaf);
      analytic.insert(analytic.end(), g.begin(), g.end());
    }
  }

  Buffer numeric;
  std::vector<DiffValue> probe(inputs.begin(), inputs.end());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto base = inputs[i].data();
    for (std::size_t j = 0; j < base.size(); ++j) {
      Buffer plus(base.begin(), base.end()), minus(base.begin(), base.end());
      plus[j] += eps;
      minus[j] -= eps;
      probe[i] = DiffValue(std::move(plus), inputs[i].shape());
      const double fp = fn(probe).item();
      probe[i] = DiffValue(std::move(minus), inputs[i].shape());
      const double fm = fn(probe).item();
      numeric.push_back((fp - fm) / (2.0 * eps));
    }
    probe[i] = inputs[i];
  }
  if (analytic.empty()) analytic.assign(numeric.size(), 0.0);
  return relative_error(analytic, numeric);
}

GradcheckReport run_gradcheck_suite(std::uint64_t seed, int n_cases) {
  Rng rng(seed);
  GradcheckReport report;
  for (int k = 0; k < n_cases; ++k) {
    Case c = make_case(k % kKinds, rng);
    const double err = check_gradient(c.fn, c.inputs);
    report.cases.push_back({c.name, err, c.inputs.size()});
    if (err >= report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_case = c.name;
    }
  }
  return report;
}

}  // namespace twinflow::ad
