#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gpc {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles.
struct Array {
  Shape shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(Shape s, double fill = 0.0);
  Array(Shape s, std::vector<double> values);

  static Array scalar(double v) { return Array({1}, {v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool empty() const { return data.empty(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool operator==(const Array&) const = default;
};

/// Cholesky factorization A = L·Lᵀ of a symmetric positive definite matrix.
class Cholesky {
 public:
  /// Throws NumericalError naming the failing pivot when A is not SPD.
  explicit Cholesky(const Array& a);

  std::size_t order() const { return n_; }

  /// Solves A·X = B for B of shape [n] or [n×d].
  Array solve(const Array& b) const;
  void solve_in_place(std::span<double> column) const;

  const std::vector<double>& lower() const { return l_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> l_;
};

/// X with A·X = B via one Cholesky factorization.
Array solve_spd(const Array& a, const Array& b);

namespace ad {

/// Receives the gradient flowing into an op's output and one slot per
/// parent. Slots are null for parents that do not require gradients.
using BackwardFn =
    std::function<void(const Array& grad_out, std::span<Array* const> parent_grads)>;

/// Handle to a vertex of the reverse-mode computation graph. Copies alias
/// the same vertex.
class Node {
 public:
  Node() = default;

  static Node constant(Array value);
  static Node parameter(Array value);

  /// Builds an op node. The backward rule is dropped when no parent
  /// requires gradients.
  static Node make(Array value, std::vector<Node> parents, BackwardFn backward);

  const Array& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t size() const { return value().size(); }
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  /// Accumulated gradient; zeros when nothing has been accumulated yet.
  Array grad() const;
  void zero_grad();

  explicit operator bool() const { return impl_ != nullptr; }
  bool same_as(const Node& other) const { return impl_ == other.impl_; }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;

  friend void backward(const Node& root);
};

/// Accumulates d(root)/d(leaf) into every requires_grad leaf reachable from
/// root. Interior gradients are recomputed per call, so repeated calls on
/// the same graph accumulate linearly into the leaves.
void backward(const Node& root);

Node matmul(const Node& a, const Node& b);

/// Cross-correlation of input [C_in×H×W] with kernels [C_out×C_in×k×k]
/// plus bias [C_out].
Node conv2d(const Node& input, const Node& kernels, const Node& bias, std::size_t stride,
            std::size_t padding);

Node add(const Node& a, const Node& b);
Node sub(const Node& a, const Node& b);
Node mul(const Node& a, const Node& b);
Node div(const Node& a, const Node& b);
Node scalar_mul(const Node& a, double s);
Node add_scalar(const Node& a, double s);
Node relu(const Node& a);
Node log(const Node& a);
Node sqrt(const Node& a);
Node sum(const Node& a);
Node mean(const Node& a);
/// Euclidean norm of all elements. The gradient at the origin is taken as 0.
Node norm(const Node& a);
Node reshape(const Node& a, Shape shape);

/// Bilinear resize of [C×H×W] to [C×out_h×out_w] using half-pixel centres
/// with edge clamping.
Node bilinear_upsample(const Node& a, std::size_t out_h, std::size_t out_w);

}  // namespace ad
}  // namespace gpc
