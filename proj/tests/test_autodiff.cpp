#include <doctest.h>

#include <cmath>
#include <set>

#include "twinflow/autodiff.hpp"
#include "twinflow/gradcheck.hpp"

using namespace twinflow;
using namespace twinflow::ad;

namespace {

DiffValue mat(std::size_t r, std::size_t c, std::vector<double> v) { return DiffValue(std::move(v), Shape(r, c)); }

}  // namespace

TEST_CASE("constants are not recorded and produce constants") {
  const DiffValue a = mat(2, 2, {1, 2, 3, 4});
  const DiffValue b = DiffValue::scalar(2.0);
  const DiffValue c = ad::tanh(a * b + a);
  CHECK_FALSE(c.recorded());
  CHECK(c.shape() == Shape(2, 2));
  CHECK(c[3] == doctest::Approx(std::tanh(12.0)));
}

TEST_CASE("fan-out accumulates: d/dx (x*x + x) = 2x + 1") {
  Tape tape;
  const DiffValue x = tape.leaf({0.5, -1.5, 3.0}, Shape(3));
  const DiffValue y = sum(x * x + x);
  const auto g = tape.backward(y).wrt(x);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(-2.0));
  CHECK(g[2] == doctest::Approx(7.0));
}

TEST_CASE("scalar broadcasting sums the gradient of the broadcast operand") {
  Tape tape;
  const DiffValue a = tape.leaf({1, 2, 3, 4, 5, 6}, Shape(2, 3));
  const DiffValue s = tape.leaf({2.0}, Shape::scalar());
  const DiffValue y = sum(mul(a, s));
  const auto grads = tape.backward(y);
  CHECK(grads.wrt(s)[0] == doctest::Approx(21.0));
  for (double v : grads.wrt(a)) CHECK(v == doctest::Approx(2.0));
  // Scalar on the left.
  const DiffValue z = sum(sub(s, a));
  CHECK(tape.backward(z).wrt(s)[0] == doctest::Approx(6.0));
}

TEST_CASE("matmul gradient matches the closed form") {
  // y = sum(A B): dy/dA = 1 B^T, dy/dB = A^T 1.
  Tape tape;
  const DiffValue a = tape.leaf({1, 2, 3, 4, 5, 6}, Shape(2, 3));
  const DiffValue b = tape.leaf({1, -1, 0, 2, 3, 1}, Shape(3, 2));
  const auto grads = tape.backward(sum(matmul(a, b)));
  const auto ga = grads.wrt(a);
  const auto gb = grads.wrt(b);
  const std::vector<double> b_row_sums{0, 2, 4};
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < 3; ++k) CHECK(ga[i * 3 + k] == doctest::Approx(b_row_sums[k]));
  }
  const std::vector<double> a_col_sums{5, 7, 9};
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < 2; ++j) CHECK(gb[k * 2 + j] == doctest::Approx(a_col_sums[k]));
  }
}

TEST_CASE("stop_gradient keeps the value and blocks the gradient") {
  Tape tape;
  const DiffValue x = tape.leaf({3.0}, Shape::scalar());
  const DiffValue frozen = stop_gradient(x);
  CHECK_FALSE(frozen.recorded());
  CHECK(frozen.item() == 3.0);
  const DiffValue y = x * stop_gradient(x * x);  // d/dx = x^2 only
  CHECK(tape.backward(y).wrt(x)[0] == doctest::Approx(9.0));
  const DiffValue only_sg = stop_gradient(x) * stop_gradient(x) + DiffValue::scalar(0.0) * x;
  CHECK(tape.backward(only_sg).wrt(x)[0] == doctest::Approx(0.0));
}

TEST_CASE("unreached leaves get zero gradients") {
  Tape tape;
  const DiffValue x = tape.leaf({1.0, 2.0}, Shape(2));
  const DiffValue unused = tape.leaf({5.0}, Shape::scalar());
  const auto grads = tape.backward(sum(x));
  CHECK_FALSE(grads.reached(unused));
  CHECK(grads.wrt(unused) == Buffer{0.0});
}

TEST_CASE("backward can run twice on the same tape") {
  Tape tape;
  const DiffValue x = tape.leaf({0.3, 0.7}, Shape(2));
  const DiffValue y = mean(square(silu(x)));
  CHECK(tape.backward(y).wrt(x) == tape.backward(y).wrt(x));
}

TEST_CASE("backward preconditions") {
  Tape tape, other;
  const DiffValue x = tape.leaf({1.0, 2.0}, Shape(2));
  CHECK_THROWS_AS((void)tape.backward(x), InvalidArgument);                        // not a scalar
  CHECK_THROWS_AS((void)tape.backward(DiffValue::scalar(1.0)), InvalidArgument);   // not recorded
  CHECK_THROWS_AS((void)other.backward(sum(x)), InvalidArgument);                  // another tape
}

TEST_CASE("shape errors name the operation") {
  const DiffValue a = mat(2, 3, std::vector<double>(6, 1.0));
  const DiffValue b = mat(3, 2, std::vector<double>(6, 1.0));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(mul(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(affine(b, DiffValue(Buffer(3, 0.0), Shape(3)), a), ShapeError);
  CHECK_THROWS_AS(concat_rows(a, b), ShapeError);
  try {
    (void)add(a, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
}

TEST_CASE("affine broadcasts the bias over rows") {
  const DiffValue w = mat(2, 3, {1, 0, 1, 0, 1, 1});
  const DiffValue b = DiffValue({10, 20, 30}, Shape(3));
  const DiffValue x = mat(2, 2, {1, 2, 3, 4});
  const Matrix y = affine(w, b, x).to_matrix();
  CHECK(y(0, 0) == 11);
  CHECK(y(0, 2) == 33);
  CHECK(y(1, 1) == 24);
}

TEST_CASE("concat_rows stacks and splits gradients") {
  Tape tape;
  const DiffValue a = tape.leaf({1, 2}, Shape(1, 2));
  const DiffValue b = tape.leaf({3, 4, 5, 6}, Shape(2, 2));
  const DiffValue c = concat_rows(a, b);
  CHECK(c.shape() == Shape(3, 2));
  const DiffValue w = mat(3, 2, {1, 2, 3, 4, 5, 6});
  const auto grads = tape.backward(sum(mul(c, w)));
  CHECK(grads.wrt(a) == Buffer{1, 2});
  CHECK(grads.wrt(b) == Buffer{3, 4, 5, 6});
}

TEST_CASE("relative_error is norm-wise and symmetric") {
  const std::vector<double> a{3, 4}, b{3, 4}, c{0, 0}, d{6, 8};
  CHECK(ad::relative_error(a, b) == 0.0);
  CHECK(ad::relative_error(c, c) == 0.0);
  CHECK(ad::relative_error(a, d) == doctest::Approx(0.5));
  CHECK(ad::relative_error(d, a) == doctest::Approx(0.5));
}

TEST_CASE("check_gradient flags an inconsistent gradient") {
  // Forward value is sum(x^2); the stop_gradient hides half of the slope
  // from the backward pass, so the two estimates differ by a factor of 2.
  const ScalarFn hidden = [](std::span<const DiffValue> in) {
    return sum(in[0] * stop_gradient(in[0]));
  };
  const std::vector<DiffValue> at{DiffValue({1.0, -2.0}, Shape(2))};
  CHECK(check_gradient(hidden, at) > 0.1);
}

TEST_CASE("gradcheck suite covers every primitive within tolerance") {
  const auto report = run_gradcheck_suite(7, 100);
  CHECK(report.cases.size() == 100);
  CHECK(report.max_rel_error < 1e-4);
  std::set<std::string> kinds;
  for (const auto& c : report.cases) kinds.insert(c.name);
  for (const char* k : {"add", "sub", "scalar_mul", "elementwise_mul", "elementwise_mul_broadcast", "matmul", "affine", "tanh", "silu",
                        "mean", "sum", "square", "concat_rows", "mlp3"}) {
    CHECK_MESSAGE(kinds.count(k) == 1, k);
  }
}
