#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgdl/numerics/tensor.hpp"

namespace mgdl::num {

/// Lower clamp for probabilities inside logarithms (cross-entropy).
inline constexpr double kProbClamp = 1e-7;

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

inline void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

inline Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv, const char* op) {
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_op(x.shape(), std::move(out), {x},
                 [deriv](Node& self) {
                   Node& p = parent(self, 0);
                   if (!p.requires_grad) return;
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     p.grad[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
                 },
                 op);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](detail::Node& self) {
                   for (std::size_t k = 0; k < 2; ++k) {
                     auto& p = detail::parent(self, k);
                     if (!p.requires_grad) continue;
                     for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
                   }
                 },
                 "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](detail::Node& self) {
                   auto& pa = detail::parent(self, 0);
                   auto& pb = detail::parent(self, 1);
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     if (pa.requires_grad) pa.grad[i] += self.grad[i];
                     if (pb.requires_grad) pb.grad[i] -= self.grad[i];
                   }
                 },
                 "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_op(a.shape(), std::move(out), {a, b},
                 [](detail::Node& self) {
                   auto& pa = detail::parent(self, 0);
                   auto& pb = detail::parent(self, 1);
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.data[i];
                     if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.data[i];
                   }
                 },
                 "mul");
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; }, "scale");
}

/// Adds a length-n bias to every row of an m×n matrix.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (bias.size() != a.cols())
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs input " + shape_str(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + bias[j];
  return make_op(a.shape(), std::move(out), {a, bias},
                 [m, n](detail::Node& self) {
                   auto& pa = detail::parent(self, 0);
                   auto& pb = detail::parent(self, 1);
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < n; ++j) {
                       double g = self.grad[i * n + j];
                       if (pa.requires_grad) pa.grad[i * n + j] += g;
                       if (pb.requires_grad) pb.grad[j] += g;
                     }
                 },
                 "add_bias");
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_op({m, n}, std::move(out), {a, b},
                 [m, k, n](detail::Node& self) {
                   auto& pa = detail::parent(self, 0);
                   auto& pb = detail::parent(self, 1);
                   const double* G = self.grad.data();
                   if (pa.requires_grad) {
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         const double* brow = pb.data.data() + p * n;
                         const double* grow = G + i * n;
                         double acc = 0.0;
                         for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                         pa.grad[i * k + p] += acc;
                       }
                   }
                   if (pb.requires_grad) {
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         const double av = pa.data[i * k + p];
                         if (av == 0.0) continue;
                         double* gb = pb.grad.data() + p * n;
                         const double* grow = G + i * n;
                         for (std::size_t j = 0; j < n; ++j) gb[j] += av * grow[j];
                       }
                   }
                 },
                 "matmul");
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return make_op({n, m}, std::move(out), {a},
                 [m, n](detail::Node& self) {
                   auto& p = detail::parent(self, 0);
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j * m + i];
                 },
                 "transpose");
}

/// Same values under a new shape with equal element count.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  return make_op(std::move(shape), a.to_vector(), {a},
                 [](detail::Node& self) {
                   auto& p = detail::parent(self, 0);
                   for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
                 },
                 "reshape");
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size())
    throw DimensionError("dot: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return make_op({1}, {acc}, {a, b},
                 [](detail::Node& self) {
                   auto& pa = detail::parent(self, 0);
                   auto& pb = detail::parent(self, 1);
                   const double g = self.grad[0];
                   for (std::size_t i = 0; i < pa.data.size(); ++i) {
                     if (pa.requires_grad) pa.grad[i] += g * pb.data[i];
                     if (pb.requires_grad) pb.grad[i] += g * pa.data[i];
                   }
                 },
                 "dot");
}

// ---------------------------------------------------------------------------
// Nonlinearities

inline Tensor tanh(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::tanh(v); },
                       [](double, double y) { return 1.0 - y * y; }, "tanh");
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
                       [](double v, double) { return v > 0.0 ? 1.0 : 0.0; }, "relu");
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(x, [](double v) { return sigmoid(v); },
                       [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; }, "exp");
}

/// Softmax along the last axis (each row of a matrix independently).
inline Tensor softmax(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    const double* in = x.data().data() + i * n;
    double* o = out.data() + i * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return make_op(x.shape(), std::move(out), {x},
                 [m, n](detail::Node& self) {
                   auto& p = detail::parent(self, 0);
                   for (std::size_t i = 0; i < m; ++i) {
                     const double* y = self.data.data() + i * n;
                     const double* g = self.grad.data() + i * n;
                     double s = 0.0;
                     for (std::size_t j = 0; j < n; ++j) s += g[j] * y[j];
                     for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += y[j] * (g[j] - s);
                   }
                 },
                 "softmax");
}

inline Tensor log_softmax(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    const double* in = x.data().data() + i * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(in[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = in[j] - lse;
  }
  return make_op(x.shape(), std::move(out), {x},
                 [m, n](detail::Node& self) {
                   auto& p = detail::parent(self, 0);
                   for (std::size_t i = 0; i < m; ++i) {
                     const double* y = self.data.data() + i * n;
                     const double* g = self.grad.data() + i * n;
                     double s = 0.0;
                     for (std::size_t j = 0; j < n; ++j) s += g[j];
                     for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += g[j] - std::exp(y[j]) * s;
                   }
                 },
                 "log_softmax");
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_op({1}, {acc}, {x},
                 [](detail::Node& self) {
                   auto& p = detail::parent(self, 0);
                   for (auto& g : p.grad) g += self.grad[0];
                 },
                 "sum");
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// Mean of a matrix over `axis` (0: down the rows, giving 1×n; 1: across columns, giving m×1).
inline Tensor mean_axis(const Tensor& x, int axis) {
  detail::require_rank2(x, "mean_axis");
  if (axis != 0 && axis != 1) throw DomainError("mean_axis: axis must be 0 or 1");
  const std::size_t m = x.rows(), n = x.cols();
  Shape shape = axis == 0 ? Shape{1, n} : Shape{m, 1};
  std::vector<double> out(shape_size(shape), 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += x[i * n + j];
  const double denom = static_cast<double>(axis == 0 ? m : n);
  for (auto& v : out) v /= denom;
  return make_op(std::move(shape), std::move(out), {x},
                 [m, n, axis, denom](detail::Node& self) {
                   auto& p = detail::parent(self, 0);
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < n; ++j)
                       p.grad[i * n + j] += self.grad[axis == 0 ? j : i] / denom;
                 },
                 "mean_axis");
}

// ---------------------------------------------------------------------------
// Structural

/// Concatenates along the last axis. All parts share the same row count.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t m = parts.front().rows();
  const bool as_vector = parts.front().rank() == 1;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& t : parts) {
    if (t.rows() != m || (t.rank() == 1) != as_vector)
      throw DimensionError("concat: " + shape_str(parts.front().shape()) + " vs " + shape_str(t.shape()));
    widths.push_back(t.cols());
    total += t.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + off + j] = parts[k][i * widths[k] + j];
    off += widths[k];
  }
  Shape shape = as_vector ? Shape{total} : Shape{m, total};
  return make_op(std::move(shape), std::move(out), parts,
                 [m, total, widths](detail::Node& self) {
                   std::size_t off = 0;
                   for (std::size_t k = 0; k < widths.size(); ++k) {
                     auto& p = detail::parent(self, k);
                     if (p.requires_grad)
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < widths[k]; ++j)
                           p.grad[i * widths[k] + j] += self.grad[i * total + off + j];
                     off += widths[k];
                   }
                 },
                 "concat");
}

/// Stacks matrices (or row vectors) vertically. All parts share the column count.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& t : parts) {
    if (t.cols() != n)
      throw DimensionError("concat_rows: " + shape_str(parts.front().shape()) + " vs " + shape_str(t.shape()));
    m += t.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& t : parts) out.insert(out.end(), t.data().begin(), t.data().end());
  return make_op({m, n}, std::move(out), parts,
                 [](detail::Node& self) {
                   std::size_t off = 0;
                   for (auto& pp : self.parents) {
                     if (pp->requires_grad)
                       for (std::size_t i = 0; i < pp->data.size(); ++i) pp->grad[i] += self.grad[off + i];
                     off += pp->data.size();
                   }
                 },
                 "concat_rows");
}

/// Embedding lookup: row i of the result is row indices[i] of `table`.
/// The backward pass scatter-adds, so repeated indices accumulate.
inline Tensor gather_rows(const Tensor& table, std::span<const std::uint32_t> indices) {
  detail::require_rank2(table, "gather_rows");
  if (indices.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t n = table.cols();
  std::vector<double> out(indices.size() * n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= table.rows())
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                           shape_str(table.shape()));
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(indices[i] * n), n, out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  std::vector<std::uint32_t> idx(indices.begin(), indices.end());
  return make_op({indices.size(), n}, std::move(out), {table},
                 [idx = std::move(idx), n](detail::Node& self) {
                   auto& p = detail::parent(self, 0);
                   for (std::size_t i = 0; i < idx.size(); ++i) {
                     double* dst = p.grad.data() + idx[i] * n;
                     const double* src = self.grad.data() + i * n;
                     for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                   }
                 },
                 "gather_rows");
}

inline Tensor gather_rows(const Tensor& table, const std::vector<std::uint32_t>& indices) {
  return gather_rows(table, std::span<const std::uint32_t>(indices));
}

/// Elements (i, i) of a square matrix as a vector.
inline Tensor diagonal(const Tensor& a) {
  detail::require_rank2(a, "diagonal");
  if (a.rows() != a.cols()) throw DimensionError("diagonal: matrix not square " + shape_str(a.shape()));
  const std::size_t n = a.rows();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i * n + i];
  return make_op({n}, std::move(out), {a},
                 [n](detail::Node& self) {
                   auto& p = detail::parent(self, 0);
                   for (std::size_t i = 0; i < n; ++i) p.grad[i * n + i] += self.grad[i];
                 },
                 "diagonal");
}

/// Dots between row pairs: out[k] = U[left[k]] · V[right[k]].
inline Tensor row_dot(const Tensor& u, const Tensor& v, std::span<const std::uint32_t> left,
                      std::span<const std::uint32_t> right) {
  detail::require_rank2(u, "row_dot");
  detail::require_rank2(v, "row_dot");
  if (u.cols() != v.cols()) throw DimensionError("row_dot: " + shape_str(u.shape()) + " vs " + shape_str(v.shape()));
  if (left.size() != right.size() || left.empty())
    throw DimensionError("row_dot: index lists must be non-empty and of equal length");
  const std::size_t n = u.cols();
  std::vector<double> out(left.size());
  for (std::size_t k = 0; k < left.size(); ++k) {
    if (left[k] >= u.rows() || right[k] >= v.rows()) throw DimensionError("row_dot: row index out of range");
    const double* a = u.data().data() + left[k] * n;
    const double* b = v.data().data() + right[k] * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += a[j] * b[j];
    out[k] = acc;
  }
  std::vector<std::uint32_t> li(left.begin(), left.end()), ri(right.begin(), right.end());
  return make_op({left.size()}, std::move(out), {u, v},
                 [li = std::move(li), ri = std::move(ri), n](detail::Node& self) {
                   auto& pu = detail::parent(self, 0);
                   auto& pv = detail::parent(self, 1);
                   for (std::size_t k = 0; k < li.size(); ++k) {
                     const double g = self.grad[k];
                     for (std::size_t j = 0; j < n; ++j) {
                       if (pu.requires_grad) pu.grad[li[k] * n + j] += g * pv.data[ri[k] * n + j];
                       if (pv.requires_grad) pv.grad[ri[k] * n + j] += g * pu.data[li[k] * n + j];
                     }
                   }
                 },
                 "row_dot");
}

// ---------------------------------------------------------------------------
// Similarity

/// Scales each row to unit Euclidean norm. All-zero rows stay zero.
inline Tensor normalize_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.size()), norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x[i * n + j] * x[i * n + j];
    norms[i] = std::max(std::sqrt(s), 1e-12);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] / norms[i];
  }
  return make_op(x.shape(), std::move(out), {x},
                 [m, n, norms = std::move(norms)](detail::Node& self) {
                   auto& p = detail::parent(self, 0);
                   for (std::size_t i = 0; i < m; ++i) {
                     const double* y = self.data.data() + i * n;
                     const double* g = self.grad.data() + i * n;
                     double yg = 0.0;
                     for (std::size_t j = 0; j < n; ++j) yg += y[j] * g[j];
                     for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += (g[j] - y[j] * yg) / norms[i];
                   }
                 },
                 "normalize_rows");
}

/// Cosine similarity of two equally sized tensors, viewed as flat vectors.
inline Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size())
    throw DimensionError("cosine_similarity: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  return dot(normalize_rows(reshape(a, {1, a.size()})), normalize_rows(reshape(b, {1, b.size()})));
}

/// Pairwise cosine similarities: out[i][j] = cos(A row i, B row j).
inline Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
  return matmul(normalize_rows(a), transpose(normalize_rows(b)));
}

// ---------------------------------------------------------------------------
// Losses

/// Elementwise −[y ln p + (1−y) ln(1−p)] with p clamped to [1e-7, 1−1e-7].
/// Labels must be exactly 0 or 1. Clamped entries pass no gradient.
inline Tensor binary_cross_entropy(const Tensor& p, std::span<const double> labels) {
  if (labels.size() != p.size())
    throw DimensionError("binary_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         shape_str(p.shape()));
  for (double y : labels)
    if (y != 0.0 && y != 1.0) throw DomainError("binary_cross_entropy: label must be 0 or 1");
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double q = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    out[i] = -(labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q));
  }
  std::vector<double> ys(labels.begin(), labels.end());
  return make_op(p.shape(), std::move(out), {p},
                 [ys = std::move(ys)](detail::Node& self) {
                   auto& pp = detail::parent(self, 0);
                   for (std::size_t i = 0; i < ys.size(); ++i) {
                     const double q = pp.data[i];
                     if (q < kProbClamp || q > 1.0 - kProbClamp) continue;
                     pp.grad[i] += self.grad[i] * (-ys[i] / q + (1.0 - ys[i]) / (1.0 - q));
                   }
                 },
                 "binary_cross_entropy");
}

inline Tensor binary_cross_entropy(const Tensor& p, double label) {
  if (!p.is_scalar()) throw DimensionError("binary_cross_entropy: scalar overload needs a scalar probability");
  const double y[1] = {label};
  return binary_cross_entropy(p, std::span<const double>(y, 1));
}

inline double binary_cross_entropy(double p, double label) {
  if (label != 0.0 && label != 1.0) throw DomainError("binary_cross_entropy: label must be 0 or 1");
  const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return -(label * std::log(q) + (1.0 - label) * std::log(1.0 - q));
}

}  // namespace mgdl::num

namespace mgdl::num {

/// Plain-value softmax, for callers outside the tape.
inline std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw DomainError("softmax: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) total += (out[i] = std::exp(v[i] - mx));
  for (auto& x : out) x /= total;
  return out;
}

}  // namespace mgdl::num
