#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "infocal/num/tape.hpp"

// Differentiable primitives. All operands are rank-2; elementwise binary ops
// broadcast any dimension of size 1.

namespace infocal::num {

/// Probabilities are clamped to [kProbEps, 1 - kProbEps] before taking logs.
inline constexpr double kProbEps = 1e-7;

namespace detail {

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) throw ContractViolation(std::string(op) + ": operands must be rank-2, got " + shape_string(t.shape()));
}

inline std::size_t broadcast_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b && a != 1 && b != 1) throw ContractViolation(std::string(op) + ": incompatible broadcast dimensions " +
                                          std::to_string(a) + " and " + std::to_string(b));
  return std::max(a, b);
}

// Sum `g` (shape out) down to `target` shape, accumulating into `acc`.
template <typename T>
void reduce_into(const Tensor<T>& g, Tensor<T>& acc, std::size_t R, std::size_t C) {
  const std::size_t ar = acc.rows(), ac = acc.cols();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) acc(ar == 1 ? 0 : r, ac == 1 ? 0 : c) += g(r, c);
}

// C[m,n] (+)= A[m,k] * B[k,n]
template <typename T>
void gemm_nn(const Tensor<T>& A, const Tensor<T>& B, Tensor<T>& C) {
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  const T* a = A.storage().data();
  const T* b = B.storage().data();
  T* c = C.storage().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T{0}) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,k] += G[m,n] * B[k,n]^T
template <typename T>
void gemm_nt(const Tensor<T>& G, const Tensor<T>& B, Tensor<T>& C) {
  const std::size_t m = G.rows(), n = G.cols(), k = B.rows();
  const T* g = G.storage().data();
  const T* b = B.storage().data();
  T* c = C.storage().data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T s{0};
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      c[i * k + p] += s;
    }
  }
}

// C[k,n] += A[m,k]^T * G[m,n]
template <typename T>
void gemm_tn(const Tensor<T>& A, const Tensor<T>& G, Tensor<T>& C) {
  const std::size_t m = A.rows(), k = A.cols(), n = G.cols();
  const T* a = A.storage().data();
  const T* g = G.storage().data();
  T* c = C.storage().data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T{0}) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) {
    const T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
T stable_softplus(T x) {
  return x > T{0} ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Elementwise unary op whose derivative is expressed through (input, output).
template <typename T, typename Fwd, typename Deriv>
Var<T> unary(const char* op, Var<T> x, Fwd fwd, Deriv deriv) {
  auto& tape = *x.tape;
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  const std::size_t xi = x.id;
  return tape.record(op, std::move(out), {x}, [xi, deriv](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(xi);
    const auto& yv = t.value(self);
    auto& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require_rank2(av, "matmul");
  detail::require_rank2(bv, "matmul");
  if (av.cols() != bv.rows()) throw ContractViolation("matmul: inner dimensions differ " + shape_string(av.shape()) + " x " +
                                      shape_string(bv.shape()));
  Tensor<T> out = Tensor<T>::zeros(av.rows(), bv.cols());
  detail::gemm_nn(av, bv, out);
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record("matmul", std::move(out), {a, b}, [ai, bi](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(ai)) detail::gemm_nt(g, t.value(bi), t.grad(ai));
    if (t.needs_grad(bi)) detail::gemm_tn(t.value(ai), g, t.grad(bi));
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require_rank2(av, "add");
  detail::require_rank2(bv, "add");
  const std::size_t R = detail::broadcast_dim(av.rows(), bv.rows(), "add");
  const std::size_t C = detail::broadcast_dim(av.cols(), bv.cols(), "add");
  Tensor<T> out = Tensor<T>::zeros(R, C);
  const bool ar1 = av.rows() == 1, ac1 = av.cols() == 1, br1 = bv.rows() == 1, bc1 = bv.cols() == 1;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c)
      out(r, c) = av(ar1 ? 0 : r, ac1 ? 0 : c) + bv(br1 ? 0 : r, bc1 ? 0 : c);
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record("add", std::move(out), {a, b}, [ai, bi, R, C](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(ai)) detail::reduce_into(g, t.grad(ai), R, C);
    if (t.needs_grad(bi)) detail::reduce_into(g, t.grad(bi), R, C);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  detail::require_rank2(av, "mul");
  detail::require_rank2(bv, "mul");
  const std::size_t R = detail::broadcast_dim(av.rows(), bv.rows(), "mul");
  const std::size_t C = detail::broadcast_dim(av.cols(), bv.cols(), "mul");
  Tensor<T> out = Tensor<T>::zeros(R, C);
  const bool ar1 = av.rows() == 1, ac1 = av.cols() == 1, br1 = bv.rows() == 1, bc1 = bv.cols() == 1;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c)
      out(r, c) = av(ar1 ? 0 : r, ac1 ? 0 : c) * bv(br1 ? 0 : r, bc1 ? 0 : c);
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record("mul", std::move(out), {a, b}, [ai, bi, R, C](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(ai);
    const auto& bv = t.value(bi);
    const bool ar1 = av.rows() == 1, ac1 = av.cols() == 1, br1 = bv.rows() == 1, bc1 = bv.cols() == 1;
    if (t.needs_grad(ai)) {
      auto& ga = t.grad(ai);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
          ga(ar1 ? 0 : r, ac1 ? 0 : c) += g(r, c) * bv(br1 ? 0 : r, bc1 ? 0 : c);
    }
    if (t.needs_grad(bi)) {
      auto& gb = t.grad(bi);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
          gb(br1 ? 0 : r, bc1 ? 0 : c) += g(r, c) * av(ar1 ? 0 : r, ac1 ? 0 : c);
    }
  });
}

/// scale * x + shift, elementwise.
template <typename T>
Var<T> affine(Var<T> x, T scale, T shift) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * xv[i] + shift;
  const std::size_t xi = x.id;
  return x.tape->record("affine", std::move(out), {x}, [xi, scale](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
  });
}

template <typename T>
Var<T> neg(Var<T> x) {
  return affine(x, T{-1}, T{0});
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return add(a, neg(b));
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  expects(!parts.empty(), "concat_cols: no inputs");
  const std::size_t R = parts[0].rows();
  std::size_t C = 0;
  for (const auto& p : parts) {
    expects(p.rows() == R, "concat_cols: row counts differ");
    C += p.cols();
  }
  Tensor<T> out = Tensor<T>::zeros(R, C);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t r = 0; r < R; ++r)
      std::copy_n(&v(r, 0), v.cols(), &out(r, off));
    ids.push_back(p.id);
    offsets.push_back(off);
    off += v.cols();
  }
  return parts[0].tape->record("concat", std::move(out), parts, [ids, offsets](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      auto& gk = t.grad(ids[k]);
      for (std::size_t r = 0; r < gk.rows(); ++r)
        for (std::size_t c = 0; c < gk.cols(); ++c) gk(r, c) += g(r, offsets[k] + c);
    }
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  expects(!parts.empty(), "concat_rows: no inputs");
  const std::size_t C = parts[0].cols();
  std::size_t R = 0;
  for (const auto& p : parts) {
    expects(p.cols() == C, "concat_rows: column counts differ");
    R += p.rows();
  }
  std::vector<T> data;
  data.reserve(R * C);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value().storage();
    data.insert(data.end(), v.begin(), v.end());
    ids.push_back(p.id);
    offsets.push_back(off);
    off += v.size();
  }
  return parts[0].tape->record("concat", Tensor<T>({R, C}, std::move(data)), parts,
                               [ids, offsets](Tape<T>& t, std::size_t self) {
                                 const auto& g = t.grad(self);
                                 for (std::size_t k = 0; k < ids.size(); ++k) {
                                   if (!t.needs_grad(ids[k])) continue;
                                   auto& gk = t.grad(ids[k]);
                                   for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[offsets[k] + i];
                                 }
                               });
}

template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t count) {
  const auto& xv = x.value();
  detail::require_rank2(xv, "slice");
  expects(count > 0 && begin + count <= xv.rows(), "slice_rows: range out of bounds");
  const std::size_t C = xv.cols();
  std::vector<T> data(xv.storage().begin() + begin * C, xv.storage().begin() + (begin + count) * C);
  const std::size_t xi = x.id;
  return x.tape->record("slice", Tensor<T>({count, C}, std::move(data)), {x},
                        [xi, begin, C](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          auto& gx = t.grad(xi);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[begin * C + i] += g[i];
                        });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count) {
  const auto& xv = x.value();
  detail::require_rank2(xv, "slice");
  expects(count > 0 && begin + count <= xv.cols(), "slice_cols: range out of bounds");
  const std::size_t R = xv.rows();
  Tensor<T> out = Tensor<T>::zeros(R, count);
  for (std::size_t r = 0; r < R; ++r) std::copy_n(&xv(r, begin), count, &out(r, 0));
  const std::size_t xi = x.id;
  return x.tape->record("slice", std::move(out), {x}, [xi, begin](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, begin + c) += g(r, c);
  });
}

/// Row lookup. Ids equal to `pad_id` produce a zero row and never receive
/// gradient.
template <typename T>
Var<T> embedding(Var<T> table, std::span<const std::int32_t> ids, std::int32_t pad_id = 0) {
  const auto& tv = table.value();
  detail::require_rank2(tv, "embedding");
  const std::size_t V = tv.rows(), E = tv.cols();
  expects(!ids.empty(), "embedding: empty id sequence");
  Tensor<T> out = Tensor<T>::zeros(ids.size(), E);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V) throw ContractViolation("embedding: token id " + std::to_string(ids[i]) + " outside vocabulary of size " + std::to_string(V));
    if (ids[i] == pad_id) continue;
    std::copy_n(&tv(static_cast<std::size_t>(ids[i]), 0), E, &out(i, 0));
  }
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  const std::size_t ti = table.id;
  return table.tape->record("embedding", std::move(out), {table},
                            [ti, idv = std::move(idv), pad_id, E](Tape<T>& t, std::size_t self) {
                              const auto& g = t.grad(self);
                              auto& gt = t.grad(ti);
                              for (std::size_t i = 0; i < idv.size(); ++i) {
                                if (idv[i] == pad_id) continue;
                                T* row = &gt(static_cast<std::size_t>(idv[i]), 0);
                                for (std::size_t c = 0; c < E; ++c) row[c] += g(i, c);
                              }
                            });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary<T>(
      "sigmoid", x, [](T v) { return detail::stable_sigmoid(v); }, [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return detail::unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> softplus(Var<T> x) {
  return detail::unary<T>(
      "softplus", x, [](T v) { return detail::stable_softplus(v); },
      [](T v, T) { return detail::stable_sigmoid(v); });
}

template <typename T>
Var<T> exp(Var<T> x) {
  return detail::unary<T>(
      "exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(Var<T> x) {
  for (auto v : x.value().values())
    if (!(v > T{0})) throw NumericFault("log", "log of non-positive value");
  return detail::unary<T>(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

/// Pass-through inside [lo, hi], zero gradient outside.
template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  return detail::unary<T>(
      "clamp", x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T{1} : T{0}; });
}

/// log(clamp(p, eps, 1 - eps)): the only way probabilities are logged.
template <typename T>
Var<T> log_prob(Var<T> p) {
  const T eps = static_cast<T>(kProbEps);
  return log(clamp(p, eps, T{1} - eps));
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  const auto& xv = x.value();
  detail::require_rank2(xv, "softmax");
  const std::size_t R = xv.rows(), C = xv.cols();
  Tensor<T> out = Tensor<T>::zeros(R, C);
  for (std::size_t r = 0; r < R; ++r) {
    T mx = xv(r, 0);
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, xv(r, c));
    T s{0};
    for (std::size_t c = 0; c < C; ++c) s += out(r, c) = std::exp(xv(r, c) - mx);
    for (std::size_t c = 0; c < C; ++c) out(r, c) /= s;
  }
  const std::size_t xi = x.id;
  return x.tape->record("softmax", std::move(out), {x}, [xi](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad(xi);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      T dot{0};
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T s{0};
  for (auto v : x.value().values()) s += v;
  const std::size_t xi = x.id;
  return x.tape->record("sum", Tensor<T>::scalar(s), {x}, [xi](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    auto& gx = t.grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const T n = static_cast<T>(x.value().size());
  T s{0};
  for (auto v : x.value().values()) s += v;
  const std::size_t xi = x.id;
  return x.tape->record("mean", Tensor<T>::scalar(s / n), {x}, [xi, n](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0] / n;
    auto& gx = t.grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

/// [R,C] -> [R,1]
template <typename T>
Var<T> row_sum(Var<T> x) {
  const auto& xv = x.value();
  detail::require_rank2(xv, "sum");
  Tensor<T> out = Tensor<T>::zeros(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out[r] += xv(r, c);
  const std::size_t xi = x.id;
  return x.tape->record("sum", std::move(out), {x}, [xi](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g[r];
  });
}

}  // namespace infocal::num
