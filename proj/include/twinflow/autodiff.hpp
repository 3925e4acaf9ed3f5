#pragma once

// Reverse-mode automatic differentiation over dense rank-1/rank-2 float64
// arrays. A Tape records primitive operations in insertion order; values that
// are not on a tape are constants and never receive gradients.
//
// Layout is row-major. Batches are stored one sample per row.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "twinflow/error.hpp"

namespace twinflow {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace ad {

class Shape {
 public:
  // Rank-1 shape [n].
  explicit Shape(std::size_t n);
  // Rank-2 shape [rows, cols].
  Shape(std::size_t rows, std::size_t cols);

  static Shape scalar() { return Shape(1); }

  int rank() const noexcept { return rank_; }
  std::size_t dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const noexcept { return rank_ == 1 ? dims_[0] : dims_[0] * dims_[1]; }
  // Rank-1 values behave as a single row in matrix primitives.
  std::size_t rows() const noexcept { return rank_ == 1 ? 1 : dims_[0]; }
  std::size_t cols() const noexcept { return rank_ == 1 ? dims_[0] : dims_[1]; }

  std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b) noexcept {
    return a.rank_ == b.rank_ && a.dims_[0] == b.dims_[0] && a.dims_[1] == b.dims_[1];
  }

 private:
  std::array<std::size_t, 2> dims_{0, 0};
  int rank_ = 1;
};

// Raised by a primitive whose operands do not conform.
class ShapeError : public InvalidArgument {
 public:
  ShapeError(std::string op, const Shape& lhs, const Shape& rhs);

  const std::string& op() const noexcept { return op_; }
  const Shape& lhs() const noexcept { return lhs_; }
  const Shape& rhs() const noexcept { return rhs_; }

 private:
  std::string op_;
  Shape lhs_;
  Shape rhs_;
};

using NodeId = std::uint32_t;
using Buffer = std::vector<double>;
using BufferPtr = std::shared_ptr<const Buffer>;

class Tape;

class DiffValue {
 public:
  DiffValue(Buffer data, Shape shape);

  static DiffValue constant(const Matrix& m);
  static DiffValue constant(std::span<const double> v);
  static DiffValue scalar(double v);
  static DiffValue filled(Shape shape, double v);

  const Shape& shape() const noexcept { return shape_; }
  std::span<const double> data() const noexcept { return *data_; }
  const BufferPtr& buffer() const noexcept { return data_; }
  double item() const;
  double operator[](std::size_t i) const { return (*data_)[i]; }

  bool recorded() const noexcept { return tape_ != nullptr; }
  NodeId node() const;
  Tape* tape() const noexcept { return tape_; }

  Matrix to_matrix() const;

 private:
  friend class Tape;
  friend DiffValue stop_gradient(const DiffValue& v);
  DiffValue(BufferPtr data, Shape shape, Tape* tape, NodeId node);

  BufferPtr data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  NodeId node_ = 0;
};

enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  scalar_mul,
  mul,
  matmul,
  affine,
  tanh,
  silu,
  mean,
  sum,
  square,
  concat_rows,
};

const char* op_name(Op op) noexcept;

// Gradients of one backward pass, keyed by node id.
class Gradients {
 public:
  // Gradient with the shape of `v`; zeros when `v` was not reached or is a
  // constant.
  Buffer wrt(const DiffValue& v) const;
  bool reached(const DiffValue& v) const;

 private:
  friend class Tape;
  std::vector<Buffer> grads_;
};

// Not thread-safe; independent tapes may be used from different threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  DiffValue leaf(Buffer data, Shape shape);
  DiffValue leaf(const DiffValue& value);

  // Requires a recorded scalar. The tape is left intact, so several backward
  // passes over one tape are allowed.
  Gradients backward(const DiffValue& loss) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() noexcept { nodes_.clear(); }

  // Used by the primitives; not part of the public surface.
  struct Operand {
    BufferPtr data;
    Shape shape{1};
    bool recorded = false;
    NodeId id = 0;
  };
  DiffValue record(Op op, std::vector<Operand> inputs, Buffer value, Shape shape,
                   double scalar = 0.0);

 private:
  struct Node {
    Op op;
    Shape shape;
    std::vector<Operand> inputs;
    double scalar;
    BufferPtr value;
  };
  std::vector<Node> nodes_;
};

DiffValue stop_gradient(const DiffValue& v);

DiffValue add(const DiffValue& a, const DiffValue& b);
DiffValue sub(const DiffValue& a, const DiffValue& b);
DiffValue scalar_mul(const DiffValue& a, double s);
DiffValue mul(const DiffValue& a, const DiffValue& b);
DiffValue matmul(const DiffValue& a, const DiffValue& b);
// x · W + b with W of shape [in, out] and b of shape [out].
DiffValue affine(const DiffValue& w, const DiffValue& b, const DiffValue& x);
DiffValue tanh(const DiffValue& a);
DiffValue silu(const DiffValue& a);
DiffValue mean(const DiffValue& a);
DiffValue sum(const DiffValue& a);
DiffValue square(const DiffValue& a);
DiffValue concat_rows(const DiffValue& a, const DiffValue& b);

inline DiffValue operator+(const DiffValue& a, const DiffValue& b) { return add(a, b); }
inline DiffValue operator-(const DiffValue& a, const DiffValue& b) { return sub(a, b); }
inline DiffValue operator*(const DiffValue& a, const DiffValue& b) { return mul(a, b); }
inline DiffValue operator*(double s, const DiffValue& a) { return scalar_mul(a, s); }

}  // namespace ad
}  // namespace twinflow
