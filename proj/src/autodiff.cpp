#include "twinflow/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace twinflow {

DivergenceError::DivergenceError(long step, double base, double adv, double rectify)
    : Error(fmt::format("non-finite loss at step {} (base={}, adv={}, rectify={})", step, base,
                        adv, rectify)),
      step_(step),
      base_(base),
      adv_(adv),
      rectify_(rectify) {}

namespace ad {

namespace {

using ConstMap = Eigen::Map<const Matrix>;

ConstMap as_matrix(const Buffer& buf, const Shape& s) {
  return ConstMap(buf.data(), static_cast<Eigen::Index>(s.rows()),
                  static_cast<Eigen::Index>(s.cols()));
}

// op(a)[m x k] * op(b)[k x n] from row-major buffers; op transposes when the
// flag is set (a stored k x m, b stored n x k). Operands are copied into
// Eigen-owned (maximally aligned) matrices first: Eigen picks its reduction
// order from the data alignment, and tape buffers have arbitrary alignment,
// which would make results vary from run to run.
Matrix product(const double* a, bool ta, const double* b, bool tb, std::size_t m, std::size_t k, std::size_t n) {
  using Map = Eigen::Map<const Matrix>;
  const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k), ni = static_cast<Eigen::Index>(n);
  const Matrix lhs = ta ? Matrix(Map(a, ki, mi)) : Matrix(Map(a, mi, ki));
  const Matrix rhs = tb ? Matrix(Map(b, ni, ki)) : Matrix(Map(b, ki, ni));
  Matrix out(mi, ni);
  if (ta && tb) {
    out.noalias() = lhs.transpose() * rhs.transpose();
  } else if (ta) {
    out.noalias() = lhs.transpose() * rhs;
  } else if (tb) {
    out.noalias() = lhs * rhs.transpose();
  } else {
    out.noalias() = lhs * rhs;
  }
  return out;
}

// c += op(a) * op(b)
void gemm_acc(const double* a, bool ta, const double* b, bool tb, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  const Matrix p = product(a, ta, b, tb, m, k, n);
  const double* v = p.data();
  for (std::size_t i = 0; i < m * n; ++i) c[i] += v[i];
}

Tape::Operand operand(const DiffValue& v) {
  Tape::Operand o;
  o.data = v.buffer();
  o.shape = v.shape();
  o.recorded = v.recorded();
  o.id = v.recorded() ? v.node() : 0;
  return o;
}

Tape* common_tape(std::initializer_list<const DiffValue*> values) {
  Tape* tape = nullptr;
  for (const DiffValue* v : values) {
    if (!v->recorded()) continue;
    if (tape != nullptr && tape != v->tape()) {
      throw InvalidArgument("operands are recorded on different tapes");
    }
    tape = v->tape();
  }
  return tape;
}

DiffValue finish(Op op, std::initializer_list<const DiffValue*> inputs, Buffer value, Shape shape,
                 double scalar = 0.0) {
  Tape* tape = common_tape(inputs);
  if (tape == nullptr) return DiffValue(std::move(value), shape);
  std::vector<Tape::Operand> ops;
  ops.reserve(inputs.size());
  for (const DiffValue* v : inputs) ops.push_back(operand(*v));
  return tape->record(op, std::move(ops), std::move(value), shape, scalar);
}

// Shape of an elementwise binary result under scalar-only broadcasting.
Shape broadcast_shape(Op op, const Shape& a, const Shape& b) {
  if (a == b) return a;
  if (b.size() == 1) return a;
  if (a.size() == 1) return b;
  throw ShapeError(op_name(op), a, b);
}

template <typename F>
Buffer zip(const DiffValue& a, const DiffValue& b, std::size_t n, F f) {
  Buffer out(n);
  const auto x = a.data();
  const auto y = b.data();
  if (x.size() == n && y.size() == n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i], y[i]);
  } else if (y.size() == 1) {
    const double s = y[0];
    for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i], s);
  } else {
    const double s = x[0];
    for (std::size_t i = 0; i < n; ++i) out[i] = f(s, y[i]);
  }
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Shape::Shape(std::size_t n) : dims_{n, 1}, rank_(1) {
  if (n == 0) throw InvalidArgument("shape dimensions must be positive");
}

Shape::Shape(std::size_t rows, std::size_t cols) : dims_{rows, cols}, rank_(2) {
  if (rows == 0 || cols == 0) throw InvalidArgument("shape dimensions must be positive");
}

std::string Shape::str() const {
  return rank_ == 1 ? fmt::format("[{}]", dims_[0]) : fmt::format("[{}, {}]", dims_[0], dims_[1]);
}

ShapeError::ShapeError(std::string op, const Shape& lhs, const Shape& rhs)
    : InvalidArgument(fmt::format("{}: incompatible shapes {} and {}", op, lhs.str(), rhs.str())),
      op_(std::move(op)),
      lhs_(lhs),
      rhs_(rhs) {}

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::scalar_mul: return "scalar_mul";
    case Op::mul: return "elementwise_mul";
    case Op::matmul: return "matmul";
    case Op::affine: return "affine";
    case Op::tanh: return "tanh";
    case Op::silu: return "silu";
    case Op::mean: return "mean";
    case Op::sum: return "sum";
    case Op::square: return "square";
    case Op::concat_rows: return "concat_rows";
  }
  return "unknown";
}

DiffValue::DiffValue(Buffer data, Shape shape)
    : data_(std::make_shared<const Buffer>(std::move(data))), shape_(shape) {
  if (data_->size() != shape_.size()) {
    throw InvalidArgument(fmt::format("buffer of length {} does not match shape {}", data_->size(),
                                      shape_.str()));
  }
}

DiffValue::DiffValue(BufferPtr data, Shape shape, Tape* tape, NodeId node)
    : data_(std::move(data)), shape_(shape), tape_(tape), node_(node) {}

DiffValue DiffValue::constant(const Matrix& m) {
  Buffer buf(m.data(), m.data() + m.size());
  return DiffValue(std::move(buf),
                   Shape(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())));
}

DiffValue DiffValue::constant(std::span<const double> v) {
  return DiffValue(Buffer(v.begin(), v.end()), Shape(v.size()));
}

DiffValue DiffValue::scalar(double v) { return DiffValue(Buffer{v}, Shape::scalar()); }

DiffValue DiffValue::filled(Shape shape, double v) {
  return DiffValue(Buffer(shape.size(), v), shape);
}

double DiffValue::item() const {
  if (shape_.size() != 1) throw ShapeError("item", shape_, Shape::scalar());
  return (*data_)[0];
}

NodeId DiffValue::node() const {
  if (tape_ == nullptr) throw InvalidArgument("value is not recorded on a tape");
  return node_;
}

Matrix DiffValue::to_matrix() const { return as_matrix(*data_, shape_); }

DiffValue Tape::leaf(Buffer data, Shape shape) {
  if (data.size() != shape.size()) throw ShapeError("leaf", Shape(data.size()), shape);
  return record(Op::leaf, {}, std::move(data), shape);
}

DiffValue Tape::leaf(const DiffValue& value) {
  const auto id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(Node{Op::leaf, value.shape(), {}, 0.0, value.buffer()});
  return DiffValue(value.buffer(), value.shape(), this, id);
}

DiffValue Tape::record(Op op, std::vector<Operand> inputs, Buffer value, Shape shape,
                       double scalar) {
  const auto id = static_cast<NodeId>(nodes_.size());
  auto buf = std::make_shared<const Buffer>(std::move(value));
  nodes_.push_back(Node{op, shape, std::move(inputs), scalar, buf});
  return DiffValue(std::move(buf), shape, this, id);
}

Buffer Gradients::wrt(const DiffValue& v) const {
  if (reached(v)) return grads_[v.node()];
  return Buffer(v.shape().size(), 0.0);
}

bool Gradients::reached(const DiffValue& v) const {
  return v.recorded() && v.node() < grads_.size() && !grads_[v.node()].empty();
}

Gradients Tape::backward(const DiffValue& loss) const {
  if (!loss.recorded()) throw InvalidArgument("backward: loss is not recorded on a tape");
  if (loss.tape() != this) throw InvalidArgument("backward: loss belongs to another tape");
  if (loss.shape().size() != 1) throw ShapeError("backward", loss.shape(), Shape::scalar());

  Gradients out;
  auto& grads = out.grads_;
  grads.resize(static_cast<std::size_t>(loss.node()) + 1);
  grads[loss.node()] = Buffer{1.0};

  auto slot = [&grads](const Operand& o) -> Buffer* {
    if (!o.recorded) return nullptr;
    Buffer& g = grads[o.id];
    if (g.empty()) g.assign(o.shape.size(), 0.0);
    return &g;
  };

  // Accumulates an elementwise gradient into operand `o`, summing when the
  // operand was broadcast from a scalar.
  auto accumulate = [&](const Operand& o, std::size_t n, auto&& grad_at) {
    Buffer* g = slot(o);
    if (g == nullptr) return;
    if (o.shape.size() == n) {
      for (std::size_t i = 0; i < n; ++i) (*g)[i] += grad_at(i);
    } else {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += grad_at(i);
      (*g)[0] += acc;
    }
  };

  for (std::size_t k = grads.size(); k-- > 0;) {
    if (grads[k].empty()) continue;
    const Node& node = nodes_[k];
    // Inputs always precede their consumer, so `gy` is never written below.
    const Buffer& gy = grads[k];
    const std::size_t n = node.shape.size();
    const auto& in = node.inputs;

    auto value_at = [](const Operand& o, std::size_t i) {
      return o.shape.size() == 1 ? (*o.data)[0] : (*o.data)[i];
    };

    switch (node.op) {
      case Op::leaf:
        break;
      case Op::add:
        accumulate(in[0], n, [&](std::size_t i) { return gy[i]; });
        accumulate(in[1], n, [&](std::size_t i) { return gy[i]; });
        break;
      case Op::sub:
        accumulate(in[0], n, [&](std::size_t i) { return gy[i]; });
        accumulate(in[1], n, [&](std::size_t i) { return -gy[i]; });
        break;
      case Op::scalar_mul:
        accumulate(in[0], n, [&](std::size_t i) { return node.scalar * gy[i]; });
        break;
      case Op::mul:
        accumulate(in[0], n, [&](std::size_t i) { return gy[i] * value_at(in[1], i); });
        accumulate(in[1], n, [&](std::size_t i) { return gy[i] * value_at(in[0], i); });
        break;
      case Op::matmul: {
        const std::size_t m = in[0].shape.rows(), k = in[0].shape.cols(), cols = in[1].shape.cols();
        if (Buffer* da = slot(in[0])) gemm_acc(gy.data(), false, in[1].data->data(), true, da->data(), m, cols, k);
        if (Buffer* db = slot(in[1])) gemm_acc(in[0].data->data(), true, gy.data(), false, db->data(), k, m, cols);
        break;
      }
      case Op::affine: {
        // inputs: W [in,out], b [out], x [B,in]
        const auto g = as_matrix(gy, node.shape);
        const std::size_t rows = in[2].shape.rows(), k = in[0].shape.rows(), cols = in[0].shape.cols();
        if (Buffer* dw = slot(in[0])) gemm_acc(in[2].data->data(), true, gy.data(), false, dw->data(), k, rows, cols);
        if (Buffer* db = slot(in[1])) {
          // Plain row-order loop: Eigen's vectorized reduction order depends
          // on buffer alignment, which would make results vary run to run.
          for (Eigen::Index i = 0; i < g.rows(); ++i) {
            for (Eigen::Index j = 0; j < g.cols(); ++j) (*db)[static_cast<std::size_t>(j)] += g(i, j);
          }
        }
        if (Buffer* dx = slot(in[2])) gemm_acc(gy.data(), false, in[0].data->data(), true, dx->data(), rows, cols, k);
        break;
      }
      case Op::tanh: {
        const Buffer& y = *node.value;
        accumulate(in[0], n, [&](std::size_t i) { return gy[i] * (1.0 - y[i] * y[i]); });
        break;
      }
      case Op::silu: {
        const Buffer& x = *in[0].data;
        accumulate(in[0], n, [&](std::size_t i) {
          const double s = sigmoid(x[i]);
          return gy[i] * s * (1.0 + x[i] * (1.0 - s));
        });
        break;
      }
      case Op::mean: {
        const std::size_t m = in[0].shape.size();
        const double g = gy[0] / static_cast<double>(m);
        accumulate(in[0], m, [g](std::size_t) { return g; });
        break;
      }
      case Op::sum: {
        const double g = gy[0];
        accumulate(in[0], in[0].shape.size(), [g](std::size_t) { return g; });
        break;
      }
      case Op::square: {
        const Buffer& x = *in[0].data;
        accumulate(in[0], n, [&](std::size_t i) { return 2.0 * x[i] * gy[i]; });
        break;
      }
      case Op::concat_rows: {
        const std::size_t na = in[0].shape.size();
        if (Buffer* da = slot(in[0])) {
          for (std::size_t i = 0; i < na; ++i) (*da)[i] += gy[i];
        }
        if (Buffer* db = slot(in[1])) {
          for (std::size_t i = 0; i < in[1].shape.size(); ++i) (*db)[i] += gy[na + i];
        }
        break;
      }
    }
  }
  return out;
}

DiffValue stop_gradient(const DiffValue& v) { return DiffValue(v.buffer(), v.shape(), nullptr, 0); }

DiffValue add(const DiffValue& a, const DiffValue& b) {
  const Shape s = broadcast_shape(Op::add, a.shape(), b.shape());
  return finish(Op::add, {&a, &b}, zip(a, b, s.size(), std::plus<>{}), s);
}

DiffValue sub(const DiffValue& a, const DiffValue& b) {
  const Shape s = broadcast_shape(Op::sub, a.shape(), b.shape());
  return finish(Op::sub, {&a, &b}, zip(a, b, s.size(), std::minus<>{}), s);
}

DiffValue scalar_mul(const DiffValue& a, double s) {
  Buffer out(a.data().begin(), a.data().end());
  for (double& v : out) v *= s;
  return finish(Op::scalar_mul, {&a}, std::move(out), a.shape(), s);
}

DiffValue mul(const DiffValue& a, const DiffValue& b) {
  const Shape s = broadcast_shape(Op::mul, a.shape(), b.shape());
  return finish(Op::mul, {&a, &b}, zip(a, b, s.size(), std::multiplies<>{}), s);
}

DiffValue matmul(const DiffValue& a, const DiffValue& b) {
  if (b.shape().rank() != 2 || a.shape().cols() != b.shape().rows()) {
    throw ShapeError(op_name(Op::matmul), a.shape(), b.shape());
  }
  const Shape s = a.shape().rank() == 2 ? Shape(a.shape().rows(), b.shape().cols())
                                        : Shape(b.shape().cols());
  const Matrix p = product(a.buffer()->data(), false, b.buffer()->data(), false, a.shape().rows(),
                           a.shape().cols(), b.shape().cols());
  Buffer out(p.data(), p.data() + p.size());
  return finish(Op::matmul, {&a, &b}, std::move(out), s);
}

DiffValue affine(const DiffValue& w, const DiffValue& b, const DiffValue& x) {
  if (w.shape().rank() != 2 || x.shape().cols() != w.shape().rows()) {
    throw ShapeError(op_name(Op::affine), x.shape(), w.shape());
  }
  if (b.shape().size() != w.shape().cols() || (b.shape().rank() == 2 && b.shape().rows() != 1)) {
    throw ShapeError(op_name(Op::affine), w.shape(), b.shape());
  }
  const std::size_t out_dim = w.shape().cols();
  const Shape s =
      x.shape().rank() == 2 ? Shape(x.shape().rows(), out_dim) : Shape(out_dim);
  const std::size_t rows = x.shape().rows();
  const Matrix p = product(x.buffer()->data(), false, w.buffer()->data(), false, rows, w.shape().rows(), out_dim);
  Buffer out(p.data(), p.data() + p.size());
  const double* bias = b.buffer()->data();
  for (std::size_t i = 0; i < rows; ++i) {
    double* row = out.data() + i * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) row[j] += bias[j];
  }
  return finish(Op::affine, {&w, &b, &x}, std::move(out), s);
}

DiffValue tanh(const DiffValue& a) {
  Buffer out(a.data().begin(), a.data().end());
  for (double& v : out) v = std::tanh(v);
  return finish(Op::tanh, {&a}, std::move(out), a.shape());
}

DiffValue silu(const DiffValue& a) {
  Buffer out(a.data().begin(), a.data().end());
  for (double& v : out) v = v * sigmoid(v);
  return finish(Op::silu, {&a}, std::move(out), a.shape());
}

DiffValue sum(const DiffValue& a) {
  const auto d = a.data();
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  return finish(Op::sum, {&a}, Buffer{total}, Shape::scalar());
}

DiffValue mean(const DiffValue& a) {
  const auto d = a.data();
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  return finish(Op::mean, {&a}, Buffer{total / static_cast<double>(d.size())}, Shape::scalar());
}

DiffValue square(const DiffValue& a) {
  Buffer out(a.data().begin(), a.data().end());
  for (double& v : out) v = v * v;
  return finish(Op::square, {&a}, std::move(out), a.shape());
}

DiffValue concat_rows(const DiffValue& a, const DiffValue& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.rank() != sb.rank() || (sa.rank() == 2 && sa.cols() != sb.cols())) {
    throw ShapeError(op_name(Op::concat_rows), sa, sb);
  }
  const Shape s = sa.rank() == 2 ? Shape(sa.rows() + sb.rows(), sa.cols()) : Shape(sa.size() + sb.size());
  Buffer out;
  out.reserve(s.size());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return finish(Op::concat_rows, {&a, &b}, std::move(out), s);
}

}  // namespace ad
}  // namespace twinflow
