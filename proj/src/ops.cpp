// Copyright 2026 The LDDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "lddr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

namespace lddr {

AttentionMask AttentionMask::causal(std::size_t rows, std::size_t cols,
                                    std::size_t offset) {
  AttentionMask m;
  m.rows = rows;
  m.cols = cols;
  m.allow.assign(rows * cols, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols && j <= offset + i; ++j) m.allow[i * cols + j] = 1;
  }
  return m;
}

namespace {

template <typename T>
void check_same_graph(Var<T> a, Var<T> b, const char* op) {
  if (a.graph != b.graph) {
    throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
  }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

template <typename T>
inline void axpy(T* y, const T* x, T a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
struct Simd {
  typedef T V __attribute__((vector_size(32)));
  static constexpr std::size_t kLanes = 32 / sizeof(T);
};

/// C[R x 2L] += A[R x K] * B[K x 2L] for L SIMD lanes, accumulating in
/// registers across the whole K loop. A(i, k) = a[i * a_rs + k * a_ks].
template <typename T, std::size_t R>
inline void gemm_tile(const T* a, std::size_t a_rs, std::size_t a_ks, const T* b, std::size_t ldb,
                      T* c, std::size_t ldc, std::size_t k_dim) {
  using V = typename Simd<T>::V;
  constexpr std::size_t kL = Simd<T>::kLanes;
  V acc0[R], acc1[R];
  for (std::size_t r = 0; r < R; ++r) {
    std::memcpy(&acc0[r], c + r * ldc, sizeof(V));
    std::memcpy(&acc1[r], c + r * ldc + kL, sizeof(V));
  }
  for (std::size_t k = 0; k < k_dim; ++k) {
    V b0, b1;
    std::memcpy(&b0, b + k * ldb, sizeof(V));
    std::memcpy(&b1, b + k * ldb + kL, sizeof(V));
    const T* ak = a + k * a_ks;
    for (std::size_t r = 0; r < R; ++r) {
      const V ar = V{} + ak[r * a_rs];
      acc0[r] += ar * b0;
      acc1[r] += ar * b1;
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    std::memcpy(c + r * ldc, &acc0[r], sizeof(V));
    std::memcpy(c + r * ldc + kL, &acc1[r], sizeof(V));
  }
}

/// C[M x N] += A * B[K x N] with A(i, k) = a[i * a_rs + k * a_ks].
template <typename T>
void gemm_strided(const T* a, std::size_t a_rs, std::size_t a_ks, const T* b, T* c, std::size_t m,
                  std::size_t k, std::size_t n) {
  constexpr std::size_t kWidth = 2 * Simd<T>::kLanes;
  std::size_t j = 0;
  for (; j + kWidth <= n; j += kWidth) {
    std::size_t r = 0;
    for (; r + 8 <= m; r += 8) {
      gemm_tile<T, 8>(a + r * a_rs, a_rs, a_ks, b + j, n, c + r * n + j, n, k);
    }
    for (; r + 4 <= m; r += 4) {
      gemm_tile<T, 4>(a + r * a_rs, a_rs, a_ks, b + j, n, c + r * n + j, n, k);
    }
    for (; r < m; ++r) gemm_tile<T, 1>(a + r * a_rs, a_rs, a_ks, b + j, n, c + r * n + j, n, k);
  }
  if (j == n) return;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T ar = a[r * a_rs + kk * a_ks];
      for (std::size_t jj = j; jj < n; ++jj) c[r * n + jj] += ar * b[kk * n + jj];
    }
  }
}

/// C[M x N] += A[M x K] * B[K x N].
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  gemm_strided(a, k, std::size_t{1}, b, c, m, k, n);
}

/// C[M x N] += A[K x M]^T * B[K x N].
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  gemm_strided(a, std::size_t{1}, m, b, c, m, k, n);
}

template <typename T, std::size_t RN, std::size_t JN>
inline void dot_block(const T* a, const T* b, T* c, std::size_t k, std::size_t n) {
  using V = typename Simd<T>::V;
  constexpr std::size_t kL = Simd<T>::kLanes;
  const std::size_t kv = k - k % kL;
  V acc[RN][JN] = {};
  for (std::size_t kk = 0; kk < kv; kk += kL) {
    V av[RN], bv[JN];
    for (std::size_t r = 0; r < RN; ++r) std::memcpy(&av[r], a + r * k + kk, sizeof(V));
    for (std::size_t j = 0; j < JN; ++j) std::memcpy(&bv[j], b + j * k + kk, sizeof(V));
    for (std::size_t r = 0; r < RN; ++r) {
      for (std::size_t j = 0; j < JN; ++j) acc[r][j] += av[r] * bv[j];
    }
  }
  for (std::size_t r = 0; r < RN; ++r) {
    for (std::size_t j = 0; j < JN; ++j) {
      T s = 0;
      for (std::size_t l = 0; l < kL; ++l) s += acc[r][j][l];
      for (std::size_t kk = kv; kk < k; ++kk) s += a[r * k + kk] * b[j * k + kk];
      c[r * n + j] += s;
    }
  }
}

/// C[M x N] += A[M x K] * B[N x K]^T, as blocks of SIMD dot products.
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t r = 0;
  for (; r + 4 <= m; r += 4) {
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) dot_block<T, 4, 4>(a + r * k, b + j * k, c + r * n + j, k, n);
    for (; j < n; ++j) dot_block<T, 4, 1>(a + r * k, b + j * k, c + r * n + j, k, n);
  }
  for (; r < m; ++r) {
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) dot_block<T, 1, 4>(a + r * k, b + j * k, c + r * n + j, k, n);
    for (; j < n; ++j) dot_block<T, 1, 1>(a + r * k, b + j * k, c + r * n + j, k, n);
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> b) {
  Graph<T>& g = *x.graph;
  check_same_graph(x, w, "linear");
  const BasicTensor<T>& xv = x.value();
  const BasicTensor<T>& wv = w.value();
  if (xv.rank() < 2 || wv.rank() != 2 || xv.cols() != wv.dim(0)) {
    throw DimensionError("linear: input " + shape_str(xv.shape()) +
                         " incompatible with weight " + shape_str(wv.shape()));
  }
  const std::size_t rows = xv.rows(), din = wv.dim(0), dout = wv.dim(1);
  if (b && (b->value().rank() != 1 || b->value().size() != dout)) {
    throw DimensionError("linear: bias " + shape_str(b->value().shape()) +
                         " incompatible with weight " + shape_str(wv.shape()));
  }
  Shape out_shape = xv.shape();
  out_shape.back() = dout;
  BasicTensor<T> out(out_shape);
  if (b) {
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(b->value().data(), dout, out.data() + r * dout);
  }
  gemm_nn(xv.data(), wv.data(), out.data(), rows, din, dout);
  const bool needs = x.requires_grad() || w.requires_grad() || (b && b->requires_grad());
  return g.emit("linear", std::move(out), needs,
                [x, w, b, rows, din, dout](const BasicTensor<T>& go) {
                  Graph<T>& g = *x.graph;
                  const BasicTensor<T>& xv = x.value();
                  const BasicTensor<T>& wv = w.value();
                  if (x.requires_grad()) {
                    gemm_nt(go.data(), wv.data(), g.grad_buffer(x).data(), rows, dout, din);
                  }
                  if (w.requires_grad()) {
                    gemm_tn(xv.data(), go.data(), g.grad_buffer(w).data(), din, rows, dout);
                  }
                  if (b && b->requires_grad()) {
                    BasicTensor<T>& gb = g.grad_buffer(*b);
                    for (std::size_t r = 0; r < rows; ++r) {
                      axpy(gb.data(), go.data() + r * dout, T{1}, dout);
                    }
                  }
                });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  check_same_graph(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  BasicTensor<T> out = a.value();
  const BasicTensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.graph->emit("add", std::move(out), a.requires_grad() || b.requires_grad(),
                       [a, b](const BasicTensor<T>& go) {
                         for (Var<T> v : {a, b}) {
                           if (!v.requires_grad()) continue;
                           BasicTensor<T>& gv = v.graph->grad_buffer(v);
                           for (std::size_t i = 0; i < go.size(); ++i) gv[i] += go[i];
                         }
                       });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  check_same_graph(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  BasicTensor<T> out = a.value();
  const BasicTensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.graph->emit("mul", std::move(out), a.requires_grad() || b.requires_grad(),
                       [a, b](const BasicTensor<T>& go) {
                         Graph<T>& g = *a.graph;
                         if (a.requires_grad()) {
                           BasicTensor<T>& ga = g.grad_buffer(a);
                           const BasicTensor<T>& bv = b.value();
                           for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
                         }
                         if (b.requires_grad()) {
                           BasicTensor<T>& gb = g.grad_buffer(b);
                           const BasicTensor<T>& av = a.value();
                           for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
                         }
                       });
}

template <typename T>
Var<T> scale(Var<T> x, T s) {
  BasicTensor<T> out = x.value();
  for (auto& v : out.vec()) v *= s;
  return x.graph->emit("scale", std::move(out), x.requires_grad(),
                       [x, s](const BasicTensor<T>& go) {
                         BasicTensor<T>& gx = x.graph->grad_buffer(x);
                         for (std::size_t i = 0; i < go.size(); ++i) gx[i] += s * go[i];
                       });
}

template <typename T>
Var<T> add_row_vector(Var<T> x, Var<T> v) {
  check_same_graph(x, v, "add_row_vector");
  const BasicTensor<T>& xv = x.value();
  if (v.value().size() != xv.cols()) {
    throw DimensionError("add_row_vector: vector " + shape_str(v.value().shape()) +
                         " does not match rows of " + shape_str(xv.shape()));
  }
  BasicTensor<T> out = xv;
  const std::size_t rows = xv.rows(), cols = xv.cols();
  for (std::size_t r = 0; r < rows; ++r) axpy(out.data() + r * cols, v.value().data(), T{1}, cols);
  return x.graph->emit("add_row_vector", std::move(out), x.requires_grad() || v.requires_grad(),
                       [x, v, rows, cols](const BasicTensor<T>& go) {
                         Graph<T>& g = *x.graph;
                         if (x.requires_grad()) {
                           BasicTensor<T>& gx = g.grad_buffer(x);
                           for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
                         }
                         if (v.requires_grad()) {
                           BasicTensor<T>& gv = g.grad_buffer(v);
                           for (std::size_t r = 0; r < rows; ++r) {
                             axpy(gv.data(), go.data() + r * cols, T{1}, cols);
                           }
                         }
                       });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  const BasicTensor<T>& xv = x.value();
  BasicTensor<T> out(xv.shape());
  const T c = T(kGeluC), a = T(kGeluA);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T z = xv[i];
    out[i] = T(0.5) * z * (T(1) + std::tanh(c * (z + a * z * z * z)));
  }
  return x.graph->emit("gelu", std::move(out), x.requires_grad(),
                       [x, c, a](const BasicTensor<T>& go) {
                         BasicTensor<T>& gx = x.graph->grad_buffer(x);
                         const BasicTensor<T>& xv = x.value();
                         for (std::size_t i = 0; i < go.size(); ++i) {
                           const T z = xv[i];
                           const T th = std::tanh(c * (z + a * z * z * z));
                           const T d = T(0.5) * (T(1) + th) +
                                       T(0.5) * z * (T(1) - th * th) * c * (T(1) + T(3) * a * z * z);
                           gx[i] += go[i] * d;
                         }
                       });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  if (!(eps > T{0})) throw std::invalid_argument("layer_norm: eps must be positive");
  const BasicTensor<T>& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gain.value().size() != cols || bias.value().size() != cols) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.value().shape()) + "/" +
                         shape_str(bias.value().shape()) + " vs input " + shape_str(xv.shape()));
  }
  BasicTensor<T> out(xv.shape());
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  const T* gv = gain.value().data();
  const T* bv = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * cols;
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= T(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= T(cols);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (xr[c] - mean) * is;
      (*xhat)[r * cols + c] = h;
      out[r * cols + c] = h * gv[c] + bv[c];
    }
  }
  const bool needs = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  return x.graph->emit(
      "layer_norm", std::move(out), needs,
      [x, gain, bias, xhat, inv_std, rows, cols](const BasicTensor<T>& go) {
        Graph<T>& g = *x.graph;
        const T* gv = gain.value().data();
        if (gain.requires_grad()) {
          BasicTensor<T>& gg = g.grad_buffer(gain);
          for (std::size_t i = 0; i < go.size(); ++i) gg[i % cols] += go[i] * (*xhat)[i];
        }
        if (bias.requires_grad()) {
          BasicTensor<T>& gb = g.grad_buffer(bias);
          for (std::size_t i = 0; i < go.size(); ++i) gb[i % cols] += go[i];
        }
        if (x.requires_grad()) {
          BasicTensor<T>& gx = g.grad_buffer(x);
          for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = go.data() + r * cols;
            const T* hr = xhat->data() + r * cols;
            T mean_d = 0, mean_dh = 0;
            for (std::size_t c = 0; c < cols; ++c) {
              const T d = gr[c] * gv[c];
              mean_d += d;
              mean_dh += d * hr[c];
            }
            mean_d /= T(cols);
            mean_dh /= T(cols);
            const T is = (*inv_std)[r];
            T* gxr = gx.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) {
              gxr[c] += is * (gr[c] * gv[c] - mean_d - hr[c] * mean_dh);
            }
          }
        }
      });
}

namespace {

struct AttnGeometry {
  std::size_t slices, s, t, d, dv;
};

template <typename T>
AttnGeometry attention_geometry(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                const BasicTensor<T>* v, const AttentionMask* mask) {
  if (q.rank() < 2 || k.rank() != q.rank() || (v && v->rank() != q.rank())) {
    throw DimensionError("attention: rank mismatch q" + shape_str(q.shape()) + " k" +
                         shape_str(k.shape()));
  }
  const std::size_t r = q.rank();
  for (std::size_t i = 0; i + 2 < r; ++i) {
    if (q.dim(i) != k.dim(i) || (v && v->dim(i) != q.dim(i))) {
      throw DimensionError("attention: leading dims differ q" + shape_str(q.shape()) + " k" +
                           shape_str(k.shape()));
    }
  }
  AttnGeometry geo{};
  geo.s = q.dim(r - 2);
  geo.d = q.dim(r - 1);
  geo.t = k.dim(r - 2);
  geo.dv = v ? v->dim(r - 1) : 0;
  geo.slices = geo.s == 0 ? 0 : q.size() / (geo.s * geo.d);
  if (geo.s == 0) geo.slices = shape_numel(Shape(q.shape().begin(), q.shape().end() - 2));
  if (k.dim(r - 1) != geo.d || (v && v->dim(r - 2) != geo.t)) {
    throw DimensionError("attention: q" + shape_str(q.shape()) + " k" + shape_str(k.shape()) +
                         (v ? " v" + shape_str(v->shape()) : std::string()) +
                         " have inconsistent inner dims");
  }
  if (mask && (mask->rows != geo.s || mask->cols != geo.t)) {
    throw DimensionError("attention: mask " + std::to_string(mask->rows) + "x" +
                         std::to_string(mask->cols) + " does not match scores " +
                         std::to_string(geo.s) + "x" + std::to_string(geo.t));
  }
  if (mask) {
    for (std::size_t i = 0; i < geo.s; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < geo.t && !any; ++j) any = mask->allowed(i, j);
      if (!any) {
        throw std::invalid_argument("attention: mask row " + std::to_string(i) +
                                    " has no attendable key");
      }
    }
  }
  if (geo.t == 0 && geo.s > 0) throw std::invalid_argument("attention: no keys");
  return geo;
}

template <typename T>
void softmax_scores(const T* q, const T* k, const AttentionMask* mask, const AttnGeometry& geo,
                    T* probs) {
  const T sc = T(1) / std::sqrt(T(geo.d));
  for (std::size_t i = 0; i < geo.s; ++i) {
    T* pr = probs + i * geo.t;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < geo.t; ++j) {
      T z = dot(q + i * geo.d, k + j * geo.d, geo.d) * sc;
      if (mask && !mask->allowed(i, j)) z += T(kMaskBias);
      pr[j] = z;
      mx = std::max(mx, z);
    }
    T total = 0;
    for (std::size_t j = 0; j < geo.t; ++j) {
      pr[j] = std::exp(pr[j] - mx);
      total += pr[j];
    }
    for (std::size_t j = 0; j < geo.t; ++j) pr[j] /= total;
  }
}

}  // namespace

template <typename T>
BasicTensor<T> attention_probs(const BasicTensor<T>& q, const BasicTensor<T>& k,
                               const AttentionMask* mask) {
  const AttnGeometry geo = attention_geometry<T>(q, k, nullptr, mask);
  Shape shape(q.shape().begin(), q.shape().end() - 1);
  shape.push_back(geo.t);
  BasicTensor<T> probs(shape);
  for (std::size_t h = 0; h < geo.slices; ++h) {
    softmax_scores(q.data() + h * geo.s * geo.d, k.data() + h * geo.t * geo.d, mask, geo,
                   probs.data() + h * geo.s * geo.t);
  }
  return probs;
}

template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, const AttentionMask* mask) {
  check_same_graph(q, k, "attention");
  check_same_graph(q, v, "attention");
  const BasicTensor<T>& qv = q.value();
  const BasicTensor<T>& kv = k.value();
  const BasicTensor<T>& vv = v.value();
  const AttnGeometry geo = attention_geometry(qv, kv, &vv, mask);
  Shape out_shape = qv.shape();
  out_shape.back() = geo.dv;
  BasicTensor<T> out(out_shape);
  auto probs = std::make_shared<std::vector<T>>(geo.slices * geo.s * geo.t);
  for (std::size_t h = 0; h < geo.slices; ++h) {
    T* ph = probs->data() + h * geo.s * geo.t;
    softmax_scores(qv.data() + h * geo.s * geo.d, kv.data() + h * geo.t * geo.d, mask, geo, ph);
    const T* vh = vv.data() + h * geo.t * geo.dv;
    T* oh = out.data() + h * geo.s * geo.dv;
    for (std::size_t i = 0; i < geo.s; ++i) {
      for (std::size_t j = 0; j < geo.t; ++j) {
        const T p = ph[i * geo.t + j];
        if (p != T{0}) axpy(oh + i * geo.dv, vh + j * geo.dv, p, geo.dv);
      }
    }
  }
  const bool needs = q.requires_grad() || k.requires_grad() || v.requires_grad();
  return q.graph->emit(
      "attention", std::move(out), needs, [q, k, v, probs, geo](const BasicTensor<T>& go) {
        Graph<T>& g = *q.graph;
        const BasicTensor<T>& qv = q.value();
        const BasicTensor<T>& kv = k.value();
        const BasicTensor<T>& vv = v.value();
        const T sc = T(1) / std::sqrt(T(geo.d));
        BasicTensor<T>* gq = q.requires_grad() ? &g.grad_buffer(q) : nullptr;
        BasicTensor<T>* gk = k.requires_grad() ? &g.grad_buffer(k) : nullptr;
        BasicTensor<T>* gv = v.requires_grad() ? &g.grad_buffer(v) : nullptr;
        std::vector<T> dp(geo.t);
        for (std::size_t h = 0; h < geo.slices; ++h) {
          const T* ph = probs->data() + h * geo.s * geo.t;
          const T* qh = qv.data() + h * geo.s * geo.d;
          const T* kh = kv.data() + h * geo.t * geo.d;
          const T* vh = vv.data() + h * geo.t * geo.dv;
          const T* goh = go.data() + h * geo.s * geo.dv;
          for (std::size_t i = 0; i < geo.s; ++i) {
            const T* pr = ph + i * geo.t;
            const T* gor = goh + i * geo.dv;
            if (gv) {
              T* gvh = gv->data() + h * geo.t * geo.dv;
              for (std::size_t j = 0; j < geo.t; ++j) {
                if (pr[j] != T{0}) axpy(gvh + j * geo.dv, gor, pr[j], geo.dv);
              }
            }
            if (!gq && !gk) continue;
            T row_dot = 0;
            for (std::size_t j = 0; j < geo.t; ++j) {
              dp[j] = dot(gor, vh + j * geo.dv, geo.dv);
              row_dot += dp[j] * pr[j];
            }
            for (std::size_t j = 0; j < geo.t; ++j) {
              const T ds = pr[j] * (dp[j] - row_dot) * sc;
              if (ds == T{0}) continue;
              if (gq) axpy(gq->data() + (h * geo.s + i) * geo.d, kh + j * geo.d, ds, geo.d);
              if (gk) axpy(gk->data() + (h * geo.t + j) * geo.d, qh + i * geo.d, ds, geo.d);
            }
          }
        }
      });
}

template <typename T>
Var<T> split_heads(Var<T> x, std::size_t heads) {
  const BasicTensor<T>& xv = x.value();
  if (xv.rank() != 2 || heads == 0 || xv.dim(1) % heads != 0) {
    throw DimensionError("split_heads: " + shape_str(xv.shape()) + " not divisible into " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t s = xv.dim(0), dh = xv.dim(1) / heads;
  std::vector<std::uint32_t> src(xv.size());
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t c = 0; c < dh; ++c)
        src[(h * s + i) * dh + c] = static_cast<std::uint32_t>(i * heads * dh + h * dh + c);
  return remap(x, std::span<const std::uint32_t>(src), Shape{heads, s, dh});
}

template <typename T>
Var<T> merge_heads(Var<T> x) {
  const BasicTensor<T>& xv = x.value();
  if (xv.rank() != 3) throw DimensionError("merge_heads: expected rank 3, got " + shape_str(xv.shape()));
  const std::size_t heads = xv.dim(0), s = xv.dim(1), dh = xv.dim(2);
  std::vector<std::uint32_t> src(xv.size());
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t c = 0; c < dh; ++c)
        src[i * heads * dh + h * dh + c] = static_cast<std::uint32_t>((h * s + i) * dh + c);
  return remap(x, std::span<const std::uint32_t>(src), Shape{s, heads * dh});
}

template <typename T>
Var<T> remap(Var<T> x, std::span<const std::uint32_t> source, Shape out_shape) {
  const BasicTensor<T>& xv = x.value();
  if (shape_numel(out_shape) != source.size()) {
    throw DimensionError("remap: index count does not match " + shape_str(out_shape));
  }
  BasicTensor<T> out(std::move(out_shape));
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] >= xv.size()) throw DimensionError("remap: source index out of range");
    out[i] = xv[source[i]];
  }
  std::vector<std::uint32_t> src(source.begin(), source.end());
  return x.graph->emit("remap", std::move(out), x.requires_grad(),
                       [x, src = std::move(src)](const BasicTensor<T>& go) {
                         BasicTensor<T>& gx = x.graph->grad_buffer(x);
                         for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += go[i];
                       });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  BasicTensor<T> out = x.value().reshaped(std::move(shape));
  return x.graph->emit("reshape", std::move(out), x.requires_grad(),
                       [x](const BasicTensor<T>& go) {
                         BasicTensor<T>& gx = x.graph->grad_buffer(x);
                         for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
                       });
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  bool needs = false;
  for (const Var<T>& p : parts) {
    check_same_graph(parts[0], p, "concat_rows");
    if (p.value().rank() != 2 || p.value().cols() != cols) {
      throw DimensionError("concat_rows: part " + shape_str(p.value().shape()) +
                           " does not have " + std::to_string(cols) + " columns");
    }
    rows += p.value().dim(0);
    needs = needs || p.requires_grad();
  }
  BasicTensor<T> out(Shape{rows, cols});
  std::size_t at = 0;
  for (const Var<T>& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + at);
    at += p.value().size();
  }
  std::vector<Var<T>> saved(parts.begin(), parts.end());
  return parts[0].graph->emit("concat_rows", std::move(out), needs,
                              [saved = std::move(saved)](const BasicTensor<T>& go) {
                                std::size_t at = 0;
                                for (const Var<T>& p : saved) {
                                  const std::size_t n = p.value().size();
                                  if (p.requires_grad() && n) {
                                    BasicTensor<T>& gp = p.graph->grad_buffer(p);
                                    for (std::size_t i = 0; i < n; ++i) gp[i] += go[at + i];
                                  }
                                  at += n;
                                }
                              });
}

template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end) {
  const BasicTensor<T>& xv = x.value();
  if (xv.rank() != 2 || begin > end || end > xv.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(xv.shape()));
  }
  const std::size_t cols = xv.cols();
  BasicTensor<T> out(Shape{end - begin, cols});
  std::copy_n(xv.data() + begin * cols, out.size(), out.data());
  return x.graph->emit("slice_rows", std::move(out), x.requires_grad(),
                       [x, begin, cols](const BasicTensor<T>& go) {
                         BasicTensor<T>& gx = x.graph->grad_buffer(x);
                         T* dst = gx.data() + begin * cols;
                         for (std::size_t i = 0; i < go.size(); ++i) dst[i] += go[i];
                       });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> ids) {
  const BasicTensor<T>& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("gather_rows: table must be rank 2");
  const std::size_t cols = tv.cols();
  BasicTensor<T> out(Shape{ids.size(), cols});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.dim(0)) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                           std::to_string(tv.dim(0)) + " rows");
    }
    std::copy_n(tv.data() + ids[i] * cols, cols, out.data() + i * cols);
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return table.graph->emit("gather_rows", std::move(out), table.requires_grad(),
                           [table, saved = std::move(saved), cols](const BasicTensor<T>& go) {
                             BasicTensor<T>& gt = table.graph->grad_buffer(table);
                             for (std::size_t i = 0; i < saved.size(); ++i) {
                               axpy(gt.data() + saved[i] * cols, go.data() + i * cols, T{1}, cols);
                             }
                           });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total = 0;
  for (T v : x.value().vec()) total += v;
  return x.graph->emit("sum", BasicTensor<T>(Shape{1}, {total}), x.requires_grad(),
                       [x](const BasicTensor<T>& go) {
                         BasicTensor<T>& gx = x.graph->grad_buffer(x);
                         for (auto& v : gx.vec()) v += go[0];
                       });
}

template <typename T>
Var<T> mse(Var<T> pred, Var<T> target) {
  check_same_graph(pred, target, "mse");
  require_same_shape(pred.value(), target.value(), "mse");
  const BasicTensor<T>& pv = pred.value();
  const BasicTensor<T>& tv = target.value();
  if (pv.size() == 0) throw DimensionError("mse: empty input");
  T total = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const T d = pv[i] - tv[i];
    total += d * d;
  }
  const T n = T(pv.size());
  return pred.graph->emit("mse", BasicTensor<T>(Shape{1}, {total / n}),
                          pred.requires_grad() || target.requires_grad(),
                          [pred, target, n](const BasicTensor<T>& go) {
                            Graph<T>& g = *pred.graph;
                            const BasicTensor<T>& pv = pred.value();
                            const BasicTensor<T>& tv = target.value();
                            const T f = T(2) * go[0] / n;
                            if (pred.requires_grad()) {
                              BasicTensor<T>& gp = g.grad_buffer(pred);
                              for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += f * (pv[i] - tv[i]);
                            }
                            if (target.requires_grad()) {
                              BasicTensor<T>& gt = g.grad_buffer(target);
                              for (std::size_t i = 0; i < pv.size(); ++i) gt[i] -= f * (pv[i] - tv[i]);
                            }
                          });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::int32_t> targets) {
  const BasicTensor<T>& lv = logits.value();
  const std::size_t rows = lv.rows(), vocab = lv.cols();
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_str(lv.shape()));
  }
  auto probs = std::make_shared<std::vector<T>>(lv.size());
  T total = 0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* lr = lv.data() + r * vocab;
    T* pr = probs->data() + r * vocab;
    const T mx = *std::max_element(lr, lr + vocab);
    T z = 0;
    for (std::size_t c = 0; c < vocab; ++c) {
      pr[c] = std::exp(lr[c] - mx);
      z += pr[c];
    }
    for (std::size_t c = 0; c < vocab; ++c) pr[c] /= z;
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= vocab) {
      throw DimensionError("cross_entropy: target " + std::to_string(targets[r]) +
                           " outside vocabulary of " + std::to_string(vocab));
    }
    total += mx + std::log(z) - lr[targets[r]];
    ++counted;
  }
  const T n = T(std::max<std::size_t>(counted, 1));
  std::vector<std::int32_t> saved(targets.begin(), targets.end());
  return logits.graph->emit(
      "cross_entropy", BasicTensor<T>(Shape{1}, {total / n}), logits.requires_grad(),
      [logits, probs, saved = std::move(saved), vocab, n](const BasicTensor<T>& go) {
        BasicTensor<T>& gl = logits.graph->grad_buffer(logits);
        const T f = go[0] / n;
        for (std::size_t r = 0; r < saved.size(); ++r) {
          if (saved[r] < 0) continue;
          const T* pr = probs->data() + r * vocab;
          T* gr = gl.data() + r * vocab;
          for (std::size_t c = 0; c < vocab; ++c) gr[c] += f * pr[c];
          gr[saved[r]] -= f;
        }
      });
}

#define LDDR_INSTANTIATE_OPS(T)                                                          \
  template Var<T> linear(Var<T>, Var<T>, std::optional<Var<T>>);                         \
  template Var<T> add(Var<T>, Var<T>);                                                   \
  template Var<T> mul(Var<T>, Var<T>);                                                   \
  template Var<T> scale(Var<T>, T);                                                      \
  template Var<T> add_row_vector(Var<T>, Var<T>);                                        \
  template Var<T> gelu(Var<T>);                                                          \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                 \
  template Var<T> attention(Var<T>, Var<T>, Var<T>, const AttentionMask*);               \
  template BasicTensor<T> attention_probs(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                          const AttentionMask*);                         \
  template Var<T> split_heads(Var<T>, std::size_t);                                      \
  template Var<T> merge_heads(Var<T>);                                                   \
  template Var<T> concat_rows(std::span<const Var<T>>);                                  \
  template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);                          \
  template Var<T> gather_rows(Var<T>, std::span<const std::int32_t>);                    \
  template Var<T> remap(Var<T>, std::span<const std::uint32_t>, Shape);                  \
  template Var<T> reshape(Var<T>, Shape);                                                \
  template Var<T> sum(Var<T>);                                                           \
  template Var<T> mse(Var<T>, Var<T>);                                                   \
  template Var<T> cross_entropy(Var<T>, std::span<const std::int32_t>);

LDDR_INSTANTIATE_OPS(float)
LDDR_INSTANTIATE_OPS(double)

}  // namespace lddr
