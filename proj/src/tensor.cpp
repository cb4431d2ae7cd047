#include "gpcount/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include <cblas.h>

#include "gpcount/errors.hpp"

namespace gpc {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Array::Array(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("array extents must be positive: " + shape_to_string(shape));
  }
}

Array::Array(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("array extents must be positive: " + shape_to_string(shape));
  }
  if (data.size() != shape_size(shape)) {
    throw ShapeError("array of shape " + shape_to_string(shape) + " given " +
                     std::to_string(data.size()) + " values");
  }
}

// ---------------------------------------------------------------------------
// Cholesky

Cholesky::Cholesky(const Array& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw ShapeError("cholesky: expected a square matrix, got " + shape_to_string(a.shape));
  }
  n_ = a.dim(0);
  l_.assign(n_ * n_, 0.0);
  double max_pivot = 0.0;
  double min_pivot = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n_; ++j) {
    double d = a[j * n_ + j];
    for (std::size_t k = 0; k < j; ++k) d -= l_[j * n_ + k] * l_[j * n_ + k];
    if (!(d > 0.0) || !std::isfinite(d)) {
      std::ostringstream os;
      os << "cholesky: matrix is not positive definite (pivot " << j << " = " << d
         << ", accepted pivots in [" << (j ? min_pivot : 0.0) << ", " << max_pivot
         << "], condition estimate >= "
         << (j && d > 0 ? max_pivot / d : std::numeric_limits<double>::infinity()) << ")";
      throw NumericalError(os.str());
    }
    max_pivot = std::max(max_pivot, d);
    min_pivot = std::min(min_pivot, d);
    const double ljj = std::sqrt(d);
    l_[j * n_ + j] = ljj;
    for (std::size_t i = j + 1; i < n_; ++i) {
      double s = a[i * n_ + j];
      for (std::size_t k = 0; k < j; ++k) s -= l_[i * n_ + k] * l_[j * n_ + k];
      l_[i * n_ + j] = s / ljj;
    }
  }
}

void Cholesky::solve_in_place(std::span<double> x) const {
  if (x.size() != n_) throw ShapeError("cholesky solve: right-hand side length mismatch");
  // L·y = b
  for (std::size_t i = 0; i < n_; ++i) {
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) s -= l_[i * n_ + k] * x[k];
    x[i] = s / l_[i * n_ + i];
  }
  // Lᵀ·x = y
  for (std::size_t ii = n_; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < n_; ++k) s -= l_[k * n_ + ii] * x[k];
    x[ii] = s / l_[ii * n_ + ii];
  }
}

Array Cholesky::solve(const Array& b) const {
  if (b.rank() == 1) {
    Array x = b;
    solve_in_place(x.data);
    return x;
  }
  if (b.rank() != 2 || b.dim(0) != n_) {
    throw ShapeError("cholesky solve: expected [" + std::to_string(n_) + "xd], got " +
                     shape_to_string(b.shape));
  }
  const std::size_t d = b.dim(1);
  Array x = b;
  std::vector<double> col(n_);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t i = 0; i < n_; ++i) col[i] = b[i * d + c];
    solve_in_place(col);
    for (std::size_t i = 0; i < n_; ++i) x[i * d + c] = col[i];
  }
  return x;
}

Array solve_spd(const Array& a, const Array& b) { return Cholesky(a).solve(b); }

namespace ad {

struct Node::Impl {
  Array value;
  Array grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Impl>> parents;
  BackwardFn backward;
};

Node Node::constant(Array value) {
  Node n;
  n.impl_ = std::make_shared<Impl>();
  n.impl_->value = std::move(value);
  return n;
}

Node Node::parameter(Array value) {
  Node n = constant(std::move(value));
  n.impl_->requires_grad = true;
  return n;
}

Node Node::make(Array value, std::vector<Node> parents, BackwardFn backward) {
  Node n = constant(std::move(value));
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any) {
    n.impl_->requires_grad = true;
    n.impl_->backward = std::move(backward);
    n.impl_->parents.reserve(parents.size());
    for (auto& p : parents) n.impl_->parents.push_back(p.impl_);
  }
  return n;
}

const Array& Node::value() const {
  if (!impl_) throw ContractError("access to an empty node");
  return impl_->value;
}

double Node::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ContractError("item() on non-scalar node " + shape_to_string(v.shape));
  return v[0];
}

bool Node::requires_grad() const { return impl_ && impl_->requires_grad; }

bool Node::has_grad() const { return impl_ && !impl_->grad.empty(); }

Array Node::grad() const {
  if (has_grad()) return impl_->grad;
  return Array(value().shape, 0.0);
}

void Node::zero_grad() {
  if (impl_) impl_->grad = Array();
}

void backward(const Node& root) {
  auto ensure_grad = [](Node::Impl& n) -> Array& {
    if (n.grad.empty()) n.grad = Array(n.value.shape, 0.0);
    return n.grad;
  };
  if (!root) throw ContractError("backward on an empty node");
  if (root.size() != 1) {
    throw ContractError("backward requires a scalar root, got " + shape_to_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; parents are visited in declaration order.
  std::vector<Node::Impl*> order;
  std::unordered_set<Node::Impl*> seen;
  std::vector<std::pair<Node::Impl*, std::size_t>> stack;
  stack.emplace_back(root.impl_.get(), 0);
  seen.insert(root.impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node::Impl* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->parents.empty()) n->grad = Array();
  }
  ensure_grad(*root.impl_)[0] += 1.0;

  std::vector<Array*> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node::Impl* n = *it;
    if (n->parents.empty() || n->grad.empty()) continue;
    slots.clear();
    for (auto& p : n->parents) slots.push_back(p->requires_grad ? &ensure_grad(*p) : nullptr);
    n->backward(n->grad, slots);
    n->grad = Array();
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace {

void require_same_shape(const Node& a, const Node& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

enum class Bcast { kNone, kScalarA, kScalarB };

Bcast broadcast_kind(const Node& a, const Node& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::kNone;
  if (b.size() == 1) return Bcast::kScalarB;
  if (a.size() == 1) return Bcast::kScalarA;
  require_same_shape(a, b, op);
  return Bcast::kNone;
}

// Applies f(x, y) elementwise with scalar broadcasting; returns output shape.
template <class F>
Array binary_forward(const Array& a, const Array& b, Bcast kind, F f) {
  const Array& big = kind == Bcast::kScalarA ? b : a;
  Array out(big.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = kind == Bcast::kScalarA ? a[0] : a[i];
    const double y = kind == Bcast::kScalarB ? b[0] : b[i];
    out[i] = f(x, y);
  }
  return out;
}

// Accumulates dOut/dA and dOut/dB given partials da(x,y), db(x,y).
template <class DA, class DB>
BackwardFn binary_backward(Array av, Array bv, Bcast kind, DA da, DB db) {
  return [av = std::move(av), bv = std::move(bv), kind, da, db](const Array& g,
                                                                 std::span<Array* const> slots) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t ia = kind == Bcast::kScalarA ? 0 : i;
      const std::size_t ib = kind == Bcast::kScalarB ? 0 : i;
      const double x = av[ia];
      const double y = bv[ib];
      if (slots[0]) (*slots[0])[ia] += g[i] * da(x, y);
      if (slots[1]) (*slots[1])[ib] += g[i] * db(x, y);
    }
  };
}

}  // namespace

Node matmul(const Node& a, const Node& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rank() != 2 || B.rank() != 2) throw ShapeError("matmul: operands must be rank 2");
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  if (B.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ " + shape_to_string(A.shape) + " x " +
                     shape_to_string(B.shape));
  }
  Array out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * B[p * n + j];
    }
  return Node::make(std::move(out), {a, b},
                    [A, B, m, k, n](const Array& g, std::span<Array* const> slots) {
                      if (slots[0]) {
                        auto& ga = *slots[0];
                        for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t p = 0; p < k; ++p) {
                            double s = 0.0;
                            for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B[p * n + j];
                            ga[i * k + p] += s;
                          }
                      }
                      if (slots[1]) {
                        auto& gb = *slots[1];
                        for (std::size_t i = 0; i < m; ++i)
                          for (std::size_t p = 0; p < k; ++p) {
                            const double aip = A[i * k + p];
                            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                          }
                      }
                    });
}

namespace {

// C[m×n] = op(A)·op(B) + beta·C, row-major, op(A) is m×k.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double beta, double* c) {
  const auto lda = static_cast<blasint>(ta ? m : k);
  const auto ldb = static_cast<blasint>(tb ? k : n);
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<blasint>(m), static_cast<blasint>(n), static_cast<blasint>(k), 1.0, a, lda, b, ldb,
              beta, c, static_cast<blasint>(n));
}

struct ConvGeometry {
  std::size_t cin, h, w, cout, k, stride, pad, oh, ow;

  // Output columns ox for which ox*stride + kx - pad lies inside [0, w).
  std::pair<std::size_t, std::size_t> valid_cols(std::size_t kx) const {
    return valid_range(kx, w, ow);
  }
  std::pair<std::size_t, std::size_t> valid_rows(std::size_t ky) const {
    return valid_range(ky, h, oh);
  }
  std::pair<std::size_t, std::size_t> valid_range(std::size_t kk, std::size_t extent,
                                                  std::size_t out) const {
    // lo = ceil((pad - kk) / stride) clamped at 0
    std::size_t lo = 0;
    if (pad > kk) lo = (pad - kk + stride - 1) / stride;
    // hi (exclusive): largest o with o*stride + kk - pad <= extent - 1
    const long long top = static_cast<long long>(extent) - 1 + static_cast<long long>(pad) -
                          static_cast<long long>(kk);
    std::size_t hi = top < 0 ? 0 : static_cast<std::size_t>(top) / stride + 1;
    hi = std::min(hi, out);
    if (lo > hi) lo = hi;
    return {lo, hi};
  }
};

}  // namespace

Node conv2d(const Node& input, const Node& kernels, const Node& bias, std::size_t stride,
            std::size_t padding) {
  const auto& X = input.value();
  const auto& W = kernels.value();
  const auto& Bv = bias.value();
  if (X.rank() != 3) throw ShapeError("conv2d: input must be [C x H x W], got " + shape_to_string(X.shape));
  if (W.rank() != 4 || W.dim(2) != W.dim(3)) {
    throw ShapeError("conv2d: kernels must be [Cout x Cin x k x k], got " + shape_to_string(W.shape));
  }
  if (W.dim(1) != X.dim(0)) throw ShapeError("conv2d: kernel input channels differ from input");
  if (Bv.rank() != 1 || Bv.dim(0) != W.dim(0)) throw ShapeError("conv2d: bias must be [Cout]");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t k = W.dim(2);
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd");
  const std::size_t h = X.dim(1), w = X.dim(2);
  if (h + 2 * padding < k || w + 2 * padding < k) throw ShapeError("conv2d: kernel larger than padded input");
  ConvGeometry geo{X.dim(0), h, w, W.dim(0), k, stride, padding,
                   (h + 2 * padding - k) / stride + 1, (w + 2 * padding - k) / stride + 1};

  // Lowered to a product with the [Cin·k·k × oh·ow] patch matrix.
  const std::size_t plane = geo.oh * geo.ow;
  const std::size_t rows = geo.cin * k * k;
  std::vector<double> col(rows * plane, 0.0);
  for (std::size_t ci = 0; ci < geo.cin; ++ci) {
    const double* xin = X.data.data() + ci * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      const auto [ylo, yhi] = geo.valid_rows(ky);
      for (std::size_t kx = 0; kx < k; ++kx) {
        const auto [xlo, xhi] = geo.valid_cols(kx);
        double* c = col.data() + ((ci * k + ky) * k + kx) * plane;
        for (std::size_t oy = ylo; oy < yhi; ++oy) {
          const double* row = xin + (oy * stride + ky - padding) * w + kx - padding;
          double* crow = c + oy * geo.ow;
          for (std::size_t ox = xlo; ox < xhi; ++ox) crow[ox] = row[ox * stride];
        }
      }
    }
  }

  Array out({geo.cout, geo.oh, geo.ow});
  for (std::size_t co = 0; co < geo.cout; ++co) std::fill_n(out.data.data() + co * plane, plane, Bv[co]);
  gemm(false, false, geo.cout, plane, rows, W.data.data(), col.data(), 1.0, out.data.data());

  return Node::make(
      std::move(out), {input, kernels, bias},
      [col = std::move(col), W, geo, rows](const Array& g, std::span<Array* const> slots) {
        const std::size_t plane = geo.oh * geo.ow;
        Array* gx = slots[0];
        Array* gw = slots[1];
        Array* gb = slots[2];
        for (std::size_t co = 0; co < geo.cout; ++co) {
          const double* go = g.data.data() + co * plane;
          if (gb) {
            double s = 0.0;
            for (std::size_t p = 0; p < plane; ++p) s += go[p];
            (*gb)[co] += s;
          }
        }
        // gW += G·colᵀ, gcol = Wᵀ·G
        if (gw) gemm(false, true, geo.cout, rows, plane, g.data.data(), col.data(), 1.0, gw->data.data());
        if (!gx) return;
        std::vector<double> gcol(rows * plane);
        gemm(true, false, rows, plane, geo.cout, W.data.data(), g.data.data(), 0.0, gcol.data());
        for (std::size_t ci = 0; ci < geo.cin; ++ci) {
          double* gxin = gx->data.data() + ci * geo.h * geo.w;
          for (std::size_t ky = 0; ky < geo.k; ++ky) {
            const auto [ylo, yhi] = geo.valid_rows(ky);
            for (std::size_t kx = 0; kx < geo.k; ++kx) {
              const auto [xlo, xhi] = geo.valid_cols(kx);
              const double* c = gcol.data() + ((ci * geo.k + ky) * geo.k + kx) * plane;
              for (std::size_t oy = ylo; oy < yhi; ++oy) {
                double* row = gxin + (oy * geo.stride + ky - geo.pad) * geo.w + kx - geo.pad;
                const double* crow = c + oy * geo.ow;
                for (std::size_t ox = xlo; ox < xhi; ++ox) row[ox * geo.stride] += crow[ox];
              }
            }
          }
        }
      });
}

Node add(const Node& a, const Node& b) {
  const auto kind = broadcast_kind(a, b, "add");
  auto out = binary_forward(a.value(), b.value(), kind, [](double x, double y) { return x + y; });
  return Node::make(std::move(out), {a, b},
                    binary_backward(a.value(), b.value(), kind, [](double, double) { return 1.0; },
                                    [](double, double) { return 1.0; }));
}

Node sub(const Node& a, const Node& b) {
  const auto kind = broadcast_kind(a, b, "sub");
  auto out = binary_forward(a.value(), b.value(), kind, [](double x, double y) { return x - y; });
  return Node::make(std::move(out), {a, b},
                    binary_backward(a.value(), b.value(), kind, [](double, double) { return 1.0; },
                                    [](double, double) { return -1.0; }));
}

Node mul(const Node& a, const Node& b) {
  const auto kind = broadcast_kind(a, b, "mul");
  auto out = binary_forward(a.value(), b.value(), kind, [](double x, double y) { return x * y; });
  return Node::make(std::move(out), {a, b},
                    binary_backward(a.value(), b.value(), kind, [](double, double y) { return y; },
                                    [](double x, double) { return x; }));
}

Node div(const Node& a, const Node& b) {
  const auto kind = broadcast_kind(a, b, "div");
  for (double y : b.value().data) {
    if (y == 0.0) throw DomainError("div: division by zero");
  }
  auto out = binary_forward(a.value(), b.value(), kind, [](double x, double y) { return x / y; });
  return Node::make(std::move(out), {a, b},
                    binary_backward(
                        a.value(), b.value(), kind, [](double, double y) { return 1.0 / y; },
                        [](double x, double y) { return -x / (y * y); }));
}

namespace {

template <class F, class DF>
Node unary(const Node& a, F f, DF df) {
  const auto& A = a.value();
  Array out(A.shape);
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = f(A[i]);
  return Node::make(std::move(out), {a}, [A, df](const Array& g, std::span<Array* const> slots) {
    if (!slots[0]) return;
    auto& ga = *slots[0];
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(A[i]);
  });
}

}  // namespace

Node scalar_mul(const Node& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double) { return s; });
}

Node add_scalar(const Node& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Node relu(const Node& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Node log(const Node& a) {
  for (double x : a.value().data) {
    if (!(x > 0.0)) throw DomainError("log: non-positive input " + std::to_string(x));
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Node sqrt(const Node& a) {
  for (double x : a.value().data) {
    if (x < 0.0) throw DomainError("sqrt: negative input " + std::to_string(x));
  }
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double x) { return 0.5 / std::sqrt(x); });
}

Node sum(const Node& a) {
  double s = 0.0;
  for (double x : a.value().data) s += x;
  return Node::make(Array::scalar(s), {a}, [](const Array& g, std::span<Array* const> slots) {
    if (!slots[0]) return;
    for (auto& v : slots[0]->data) v += g[0];
  });
}

Node mean(const Node& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (double x : a.value().data) s += x;
  return Node::make(Array::scalar(s * inv), {a},
                    [inv](const Array& g, std::span<Array* const> slots) {
                      if (!slots[0]) return;
                      for (auto& v : slots[0]->data) v += g[0] * inv;
                    });
}

Node norm(const Node& a) {
  const auto& A = a.value();
  double ss = 0.0;
  for (double x : A.data) ss += x * x;
  const double r = std::sqrt(ss);
  return Node::make(Array::scalar(r), {a}, [A, r](const Array& g, std::span<Array* const> slots) {
    if (!slots[0] || r == 0.0) return;
    auto& ga = *slots[0];
    const double s = g[0] / r;
    for (std::size_t i = 0; i < A.size(); ++i) ga[i] += s * A[i];
  });
}

Node reshape(const Node& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_to_string(a.shape()) + " -> " + shape_to_string(shape));
  }
  Array out(std::move(shape), a.value().data);
  return Node::make(std::move(out), {a}, [](const Array& g, std::span<Array* const> slots) {
    if (!slots[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*slots[0])[i] += g[i];
  });
}

namespace {

struct Lerp {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Lerp> lerp_table(std::size_t in, std::size_t out) {
  std::vector<Lerp> t(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    t[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return t;
}

}  // namespace

Node bilinear_upsample(const Node& a, std::size_t out_h, std::size_t out_w) {
  const auto& A = a.value();
  if (A.rank() != 3) throw ShapeError("bilinear_upsample: input must be [C x H x W]");
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_upsample: output extents must be positive");
  const std::size_t c = A.dim(0), h = A.dim(1), w = A.dim(2);
  auto rows = lerp_table(h, out_h);
  auto cols = lerp_table(w, out_w);
  Array out({c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = A.data.data() + ch * h * w;
    double* dst = out.data.data() + ch * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto& r = rows[y];
      const double* r0 = src + r.i0 * w;
      const double* r1 = src + r.i1 * w;
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto& q = cols[x];
        const double top = r0[q.i0] + q.w1 * (r0[q.i1] - r0[q.i0]);
        const double bot = r1[q.i0] + q.w1 * (r1[q.i1] - r1[q.i0]);
        dst[y * out_w + x] = top + r.w1 * (bot - top);
      }
    }
  }
  return Node::make(
      std::move(out), {a},
      [rows = std::move(rows), cols = std::move(cols), c, h, w, out_h, out_w](
          const Array& g, std::span<Array* const> slots) {
        if (!slots[0]) return;
        auto& ga = *slots[0];
        for (std::size_t ch = 0; ch < c; ++ch) {
          double* gs = ga.data.data() + ch * h * w;
          const double* gd = g.data.data() + ch * out_h * out_w;
          for (std::size_t y = 0; y < out_h; ++y) {
            const auto& r = rows[y];
            for (std::size_t x = 0; x < out_w; ++x) {
              const auto& q = cols[x];
              const double gv = gd[y * out_w + x];
              const double gt = gv * (1.0 - r.w1);
              const double gbm = gv * r.w1;
              gs[r.i0 * w + q.i0] += gt * (1.0 - q.w1);
              gs[r.i0 * w + q.i1] += gt * q.w1;
              gs[r.i1 * w + q.i0] += gbm * (1.0 - q.w1);
              gs[r.i1 * w + q.i1] += gbm * q.w1;
            }
          }
        }
      });
}

}  // namespace ad
}  // namespace gpc
