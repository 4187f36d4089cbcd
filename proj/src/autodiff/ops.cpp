#include "nmt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace nmt::ad {
namespace {

template <typename T>
void check_same_tape(Var<T> a, Var<T> b) {
  require(&a.tape() == &b.tape(), "operands live on different tapes");
}

void dimension_error(const char* op, const Shape& a, const Shape& b) {
  fail(ErrorKind::kDimension, std::string(op) + ": incompatible shapes " +
                                  shape_string(a) + " and " + shape_string(b));
}

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T, typename Fwd, typename Deriv>
Var<T> unary(const char* op, Var<T> x, Fwd fwd, Deriv deriv) {
  auto xv = x.value();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  const auto xid = x.id();
  return x.tape().push(
      op, x.shape(), std::move(out), {xid},
      [xid, deriv](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        const auto& y = t.node(self).value;
        const auto& xin = t.node(xid).value;
        auto& dx = t.grad(xid);
        for (std::size_t i = 0; i < g.size(); ++i) {
          dx[i] += g[i] * deriv(xin[i], y[i]);
        }
      });
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  check_same_tape(a, b);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    dimension_error("matmul", sa, sb);
  }
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  std::vector<T> out(m * n, T(0));
  gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
  const auto aid = a.id(), bid = b.id();
  return a.tape().push(
      "matmul", {m, n}, std::move(out), {aid, bid},
      [aid, bid, m, k, n](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        if (t.requires_grad(aid)) {
          gemm_nt(g.data(), t.node(bid).value.data(), t.grad(aid).data(), m,
                  n, k);
        }
        if (t.requires_grad(bid)) {
          gemm_tn(t.node(aid).value.data(), g.data(), t.grad(bid).data(), m,
                  k, n);
        }
      });
}

template <typename T>
Var<T> batched_matmul(Var<T> a, Var<T> b, bool transpose_b) {
  check_same_tape(a, b);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0]) {
    dimension_error("batched_matmul", sa, sb);
  }
  const std::size_t batch = sa[0], m = sa[1], k = sa[2];
  const std::size_t n = transpose_b ? sb[1] : sb[2];
  if ((transpose_b ? sb[2] : sb[1]) != k) dimension_error("batched_matmul", sa, sb);
  std::vector<T> out(batch * m * n, T(0));
  const T* av = a.value().data();
  const T* bv = b.value().data();
  for (std::size_t z = 0; z < batch; ++z) {
    if (transpose_b) {
      gemm_nt(av + z * m * k, bv + z * n * k, out.data() + z * m * n, m, k, n);
    } else {
      gemm_nn(av + z * m * k, bv + z * k * n, out.data() + z * m * n, m, k, n);
    }
  }
  const auto aid = a.id(), bid = b.id();
  return a.tape().push(
      "batched_matmul", {batch, m, n}, std::move(out), {aid, bid},
      [=](Tape<T>& t, std::size_t self) {
        const T* g = t.node(self).grad.data();
        const T* A = t.node(aid).value.data();
        const T* B = t.node(bid).value.data();
        T* dA = t.requires_grad(aid) ? t.grad(aid).data() : nullptr;
        T* dB = t.requires_grad(bid) ? t.grad(bid).data() : nullptr;
        for (std::size_t z = 0; z < batch; ++z) {
          const T* gz = g + z * m * n;
          const T* Az = A + z * m * k;
          const T* Bz = B + z * n * k;
          if (transpose_b) {
            // C = A B^T: dA = G B, dB = G^T A
            if (dA) gemm_nn(gz, Bz, dA + z * m * k, m, n, k);
            if (dB) gemm_tn(gz, Az, dB + z * n * k, m, n, k);
          } else {
            // C = A B: dA = G B^T, dB = A^T G
            if (dA) gemm_nt(gz, Bz, dA + z * m * k, m, n, k);
            if (dB) gemm_tn(Az, gz, dB + z * k * n, m, k, n);
          }
        }
      });
}

namespace {

template <typename T, typename Combine, typename DA, typename DB>
Var<T> elementwise(const char* op, Var<T> a, Var<T> b, Combine combine, DA da,
                   DB db) {
  check_same_tape(a, b);
  if (a.shape() != b.shape()) dimension_error(op, a.shape(), b.shape());
  auto av = a.value();
  auto bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = combine(av[i], bv[i]);
  const auto aid = a.id(), bid = b.id();
  return a.tape().push(
      op, a.shape(), std::move(out), {aid, bid},
      [aid, bid, da, db](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        const auto& x = t.node(aid).value;
        const auto& y = t.node(bid).value;
        if (t.requires_grad(aid)) {
          auto& d = t.grad(aid);
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * da(x[i], y[i]);
        }
        if (t.requires_grad(bid)) {
          auto& d = t.grad(bid);
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * db(x[i], y[i]);
        }
      });
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return elementwise(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return elementwise(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return elementwise(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  return unary(
      "scale", x, [factor](T v) { return v * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_broadcast(Var<T> x, Var<T> y) {
  check_same_tape(x, y);
  const auto& sx = x.shape();
  const auto& sy = y.shape();
  if (sy.size() > sx.size() ||
      !std::equal(sy.begin(), sy.end(), sx.end() - sy.size())) {
    dimension_error("add_broadcast", sx, sy);
  }
  const std::size_t inner = y.size();
  const std::size_t outer = x.size() / inner;
  std::vector<T> out(x.value().begin(), x.value().end());
  auto yv = y.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += yv[i];
  }
  const auto xid = x.id(), yid = y.id();
  return x.tape().push(
      "add_broadcast", sx, std::move(out), {xid, yid},
      [xid, yid, outer, inner](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        if (t.requires_grad(xid)) {
          auto& d = t.grad(xid);
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
        if (t.requires_grad(yid)) {
          auto& d = t.grad(yid);
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) d[i] += g[o * inner + i];
          }
        }
      });
}

template <typename T>
Var<T> add_per_batch(Var<T> x, Var<T> q) {
  check_same_tape(x, q);
  const auto& sx = x.shape();
  const auto& sq = q.shape();
  if (sx.size() != 3 || sq.size() != 2 || sx[0] != sq[0] || sx[2] != sq[1]) {
    dimension_error("add_per_batch", sx, sq);
  }
  const std::size_t batch = sx[0], mid = sx[1], dim = sx[2];
  std::vector<T> out(x.value().begin(), x.value().end());
  auto qv = q.value();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < mid; ++s) {
      T* row = out.data() + (b * mid + s) * dim;
      for (std::size_t d = 0; d < dim; ++d) row[d] += qv[b * dim + d];
    }
  }
  const auto xid = x.id(), qid = q.id();
  return x.tape().push(
      "add_per_batch", sx, std::move(out), {xid, qid},
      [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        if (t.requires_grad(xid)) {
          auto& d = t.grad(xid);
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
        if (t.requires_grad(qid)) {
          auto& d = t.grad(qid);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t s = 0; s < mid; ++s) {
              const T* row = g.data() + (b * mid + s) * dim;
              for (std::size_t k = 0; k < dim; ++k) d[b * dim + k] += row[k];
            }
          }
        }
      });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return unary(
      "tanh", x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return unary(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return unary(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts) {
  require(!parts.empty(), "concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  require(!s0.empty(), "concat of scalars");
  const std::size_t rows = parts[0].size() / s0.back();
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_same_tape(parts[0], p);
    const Shape& s = p.shape();
    if (s.size() != s0.size() ||
        !std::equal(s.begin(), s.end() - 1, s0.begin())) {
      dimension_error("concat", s0, s);
    }
    widths.push_back(s.back());
    ids.push_back(p.id());
    total += s.back();
  }
  std::vector<T> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].value();
    const std::size_t w = widths[p];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * w, w, out.data() + r * total + offset);
    }
    offset += w;
  }
  Shape shape = s0;
  shape.back() = total;
  auto inputs = ids;
  return parts[0].tape().push(
      "concat", std::move(shape), std::move(out), std::move(inputs),
      [ids, widths, rows, total](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        std::size_t off = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          const std::size_t w = widths[p];
          if (t.requires_grad(ids[p])) {
            auto& d = t.grad(ids[p]);
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < w; ++c) {
                d[r * w + c] += g[r * total + off + c];
              }
            }
          }
          off += w;
        }
      });
}

template <typename T>
Var<T> concat(std::initializer_list<Var<T>> parts) {
  return concat(std::span<const Var<T>>(parts.begin(), parts.size()));
}

template <typename T>
Var<T> slice_last(Var<T> x, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  require(!s.empty() && begin < end && end <= s.back(),
          "slice_last range out of bounds for " + shape_string(s));
  const std::size_t width = s.back();
  const std::size_t rows = x.size() / width;
  const std::size_t w = end - begin;
  std::vector<T> out(rows * w);
  auto v = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(v.data() + r * width + begin, w, out.data() + r * w);
  }
  Shape shape = s;
  shape.back() = w;
  const auto xid = x.id();
  return x.tape().push(
      "slice_last", std::move(shape), std::move(out), {xid},
      [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        auto& d = t.grad(xid);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < w; ++c) d[r * width + begin + c] += g[r * w + c];
        }
      });
}

template <typename T>
Var<T> stack_middle(std::span<const Var<T>> parts) {
  require(!parts.empty(), "stack of zero tensors");
  const Shape& s0 = parts[0].shape();
  require(s0.size() == 2, "stack_middle expects [B,D] parts");
  const std::size_t batch = s0[0], dim = s0[1], n = parts.size();
  std::vector<std::size_t> ids;
  std::vector<T> out(batch * n * dim);
  for (std::size_t p = 0; p < n; ++p) {
    check_same_tape(parts[0], parts[p]);
    if (parts[p].shape() != s0) dimension_error("stack_middle", s0, parts[p].shape());
    ids.push_back(parts[p].id());
    auto v = parts[p].value();
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(v.data() + b * dim, dim, out.data() + (b * n + p) * dim);
    }
  }
  auto inputs = ids;
  return parts[0].tape().push(
      "stack_middle", {batch, n, dim}, std::move(out), std::move(inputs),
      [ids, batch, n, dim](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        for (std::size_t p = 0; p < n; ++p) {
          if (!t.requires_grad(ids[p])) continue;
          auto& d = t.grad(ids[p]);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t k = 0; k < dim; ++k) {
              d[b * dim + k] += g[(b * n + p) * dim + k];
            }
          }
        }
      });
}

template <typename T>
Var<T> embedding(Var<T> table, std::span<const int> ids) {
  const Shape& s = table.shape();
  require(s.size() == 2, "embedding table must be [V,E]");
  const std::size_t vocab = s[0], dim = s[1];
  std::vector<int> rows(ids.begin(), ids.end());
  std::vector<T> out(rows.size() * dim);
  auto v = table.value();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= vocab) {
      fail(ErrorKind::kContract, "embedding id " + std::to_string(rows[i]) +
                                     " outside vocabulary of " +
                                     std::to_string(vocab));
    }
    std::copy_n(v.data() + rows[i] * dim, dim, out.data() + i * dim);
  }
  const auto tid = table.id();
  const std::size_t count = rows.size();
  return table.tape().push(
      "embedding", {count, dim}, std::move(out), {tid},
      [tid, rows = std::move(rows), dim](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        auto& d = t.grad(tid);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          T* dst = d.data() + rows[i] * dim;
          for (std::size_t k = 0; k < dim; ++k) dst[k] += g[i * dim + k];
        }
      });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (numel(shape) != x.size()) dimension_error("reshape", x.shape(), shape);
  const auto xid = x.id();
  std::vector<T> out(x.value().begin(), x.value().end());
  return x.tape().push("reshape", std::move(shape), std::move(out), {xid},
                       [xid](Tape<T>& t, std::size_t self) {
                         const auto& g = t.node(self).grad;
                         auto& d = t.grad(xid);
                         for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                       });
}

template <typename T>
Var<T> swap_axes12(Var<T> x) {
  const Shape& s = x.shape();
  require(s.size() == 4, "swap_axes12 expects a rank-4 tensor");
  const std::size_t A = s[0], B = s[1], C = s[2], D = s[3];
  auto v = x.value();
  std::vector<T> out(v.size());
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        std::copy_n(v.data() + ((a * B + b) * C + c) * D, D,
                    out.data() + ((a * C + c) * B + b) * D);
  const auto xid = x.id();
  return x.tape().push(
      "swap_axes12", {A, C, B, D}, std::move(out), {xid},
      [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        auto& d = t.grad(xid);
        for (std::size_t a = 0; a < A; ++a)
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
              const T* src = g.data() + ((a * C + c) * B + b) * D;
              T* dst = d.data() + ((a * B + b) * C + c) * D;
              for (std::size_t k = 0; k < D; ++k) dst[k] += src[k];
            }
      });
}

template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis, std::span<const std::uint8_t> allowed) {
  const Shape& s = x.shape();
  require(axis < s.size(), "softmax axis " + std::to_string(axis) +
                               " invalid for shape " + shape_string(s));
  require(allowed.empty() || allowed.size() == x.size(),
          "softmax mask size does not match input");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  auto v = x.value();
  std::vector<T> out(v.size(), T(0));
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      auto ok = [&](std::size_t j) {
        return allowed.empty() || allowed[base + j * inner] != 0;
      };
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (ok(j)) mx = std::max(mx, v[base + j * inner]);
      }
      if (mx == -std::numeric_limits<T>::infinity()) continue;  // all masked
      T total = T(0);
      for (std::size_t j = 0; j < n; ++j) {
        if (!ok(j)) continue;
        const T e = std::exp(v[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  const auto xid = x.id();
  return x.tape().push(
      "softmax", s, std::move(out), {xid},
      [=](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        const auto& y = t.node(self).value;
        auto& d = t.grad(xid);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            T dot = T(0);
            for (std::size_t j = 0; j < n; ++j) {
              dot += g[base + j * inner] * y[base + j * inner];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t idx = base + j * inner;
              d[idx] += y[idx] * (g[idx] - dot);
            }
          }
        }
      });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets,
                     std::span<const std::uint8_t> pad_mask) {
  const Shape& s = logits.shape();
  require(!s.empty(), "cross_entropy needs logits with a vocabulary axis");
  const std::size_t vocab = s.back();
  const std::size_t rows = logits.size() / vocab;
  require(targets.size() == rows && pad_mask.size() == rows,
          "cross_entropy: " + std::to_string(rows) + " logit rows but " +
              std::to_string(targets.size()) + " targets");
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (pad_mask[r]) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      fail(ErrorKind::kContract, "target id " + std::to_string(targets[r]) +
                                     " outside vocabulary of " +
                                     std::to_string(vocab));
    }
    ++count;
  }
  if (count == 0) fail(ErrorKind::kDegenerate, "cross_entropy over an all-pad batch");

  auto v = logits.value();
  std::vector<T> lse(rows, T(0));
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (pad_mask[r]) continue;
    const T* row = v.data() + r * vocab;
    const T mx = *std::max_element(row, row + vocab);
    T total = T(0);
    for (std::size_t j = 0; j < vocab; ++j) total += std::exp(row[j] - mx);
    lse[r] = mx + std::log(total);
    loss += static_cast<double>(lse[r] - row[targets[r]]);
  }
  const T mean_loss = static_cast<T>(loss / static_cast<double>(count));
  const auto lid = logits.id();
  return logits.tape().push(
      "cross_entropy", {}, {mean_loss}, {lid},
      [lid, rows, vocab, count, lse = std::move(lse),
       tg = std::vector<int>(targets.begin(), targets.end()),
       pm = std::vector<std::uint8_t>(pad_mask.begin(), pad_mask.end())](
          Tape<T>& t, std::size_t self) {
        const T g = t.node(self).grad[0] / static_cast<T>(count);
        const auto& x = t.node(lid).value;
        auto& d = t.grad(lid);
        for (std::size_t r = 0; r < rows; ++r) {
          if (pm[r]) continue;
          for (std::size_t j = 0; j < vocab; ++j) {
            d[r * vocab + j] += g * std::exp(x[r * vocab + j] - lse[r]);
          }
          d[r * vocab + tg[r]] -= g;
        }
      });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  check_same_tape(x, gain);
  check_same_tape(x, bias);
  const Shape& s = x.shape();
  require(!s.empty(), "layer_norm of a scalar");
  const std::size_t dim = s.back();
  if (gain.shape() != Shape{dim} || bias.shape() != Shape{dim}) {
    dimension_error("layer_norm", s, gain.shape());
  }
  const std::size_t rows = x.size() / dim;
  auto v = x.value();
  auto gv = gain.value();
  auto bv = bias.value();
  std::vector<T> out(v.size());
  std::vector<T> xhat(v.size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = v.data() + r * dim;
    T mu = T(0);
    for (std::size_t k = 0; k < dim; ++k) mu += row[k];
    mu /= static_cast<T>(dim);
    T var = T(0);
    for (std::size_t k = 0; k < dim; ++k) var += (row[k] - mu) * (row[k] - mu);
    var /= static_cast<T>(dim);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t k = 0; k < dim; ++k) {
      const T h = (row[k] - mu) * rstd[r];
      xhat[r * dim + k] = h;
      out[r * dim + k] = h * gv[k] + bv[k];
    }
  }
  const auto xid = x.id(), gid = gain.id(), bid = bias.id();
  return x.tape().push(
      "layer_norm", s, std::move(out), {xid, gid, bid},
      [=, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& t,
                                                          std::size_t self) {
        const auto& g = t.node(self).grad;
        const auto& gv2 = t.node(gid).value;
        if (t.requires_grad(gid)) {
          auto& d = t.grad(gid);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t k = 0; k < dim; ++k)
              d[k] += g[r * dim + k] * xhat[r * dim + k];
        }
        if (t.requires_grad(bid)) {
          auto& d = t.grad(bid);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t k = 0; k < dim; ++k) d[k] += g[r * dim + k];
        }
        if (t.requires_grad(xid)) {
          auto& d = t.grad(xid);
          const T inv_dim = T(1) / static_cast<T>(dim);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_dh = T(0), mean_dh_h = T(0);
            for (std::size_t k = 0; k < dim; ++k) {
              const T dh = g[r * dim + k] * gv2[k];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * dim + k];
            }
            mean_dh *= inv_dim;
            mean_dh_h *= inv_dim;
            for (std::size_t k = 0; k < dim; ++k) {
              const T dh = g[r * dim + k] * gv2[k];
              d[r * dim + k] +=
                  rstd[r] * (dh - mean_dh - xhat[r * dim + k] * mean_dh_h);
            }
          }
        }
      });
}

template <typename T>
Var<T> dropout(Var<T> x, double p, Rng& rng) {
  require(p >= 0.0 && p < 1.0, "dropout probability must be in [0,1)");
  if (p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.uniform() >= p ? keep_scale : T(0);
  auto v = x.value();
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * mask[i];
  const auto xid = x.id();
  return x.tape().push("dropout", x.shape(), std::move(out), {xid},
                       [xid, mask = std::move(mask)](Tape<T>& t, std::size_t self) {
                         const auto& g = t.node(self).grad;
                         auto& d = t.grad(xid);
                         for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * mask[i];
                       });
}

template <typename T>
Var<T> blend_rows(std::span<const std::uint8_t> keep_next, Var<T> next, Var<T> prev) {
  check_same_tape(next, prev);
  if (next.shape() != prev.shape()) dimension_error("blend_rows", next.shape(), prev.shape());
  const std::size_t rows = next.shape().empty() ? 1 : next.shape()[0];
  require(keep_next.size() == rows, "blend_rows mask has wrong length");
  const std::size_t width = next.size() / rows;
  std::vector<std::uint8_t> keep(keep_next.begin(), keep_next.end());
  auto nv = next.value();
  auto pv = prev.value();
  std::vector<T> out(nv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = keep[r] ? nv.data() : pv.data();
    std::copy_n(src + r * width, width, out.data() + r * width);
  }
  const auto nid = next.id(), pid = prev.id();
  return next.tape().push(
      "blend_rows", next.shape(), std::move(out), {nid, pid},
      [nid, pid, rows, width, keep = std::move(keep)](Tape<T>& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t target = keep[r] ? nid : pid;
          if (!t.requires_grad(target)) continue;
          auto& d = t.grad(target);
          for (std::size_t k = 0; k < width; ++k) d[r * width + k] += g[r * width + k];
        }
      });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total = T(0);
  for (const T v : x.value()) total += v;
  const auto xid = x.id();
  return x.tape().push("sum", {}, {total}, {xid}, [xid](Tape<T>& t, std::size_t self) {
    const T g = t.node(self).grad[0];
    for (auto& d : t.grad(xid)) d += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

#define NMT_INSTANTIATE_OPS(T)                                                     \
  template Var<T> matmul(Var<T>, Var<T>);                                          \
  template Var<T> batched_matmul(Var<T>, Var<T>, bool);                            \
  template Var<T> add(Var<T>, Var<T>);                                             \
  template Var<T> sub(Var<T>, Var<T>);                                             \
  template Var<T> mul(Var<T>, Var<T>);                                             \
  template Var<T> scale(Var<T>, T);                                                \
  template Var<T> add_broadcast(Var<T>, Var<T>);                                   \
  template Var<T> add_per_batch(Var<T>, Var<T>);                                   \
  template Var<T> tanh(Var<T>);                                                    \
  template Var<T> sigmoid(Var<T>);                                                 \
  template Var<T> relu(Var<T>);                                                    \
  template Var<T> concat(std::span<const Var<T>>);                                 \
  template Var<T> concat(std::initializer_list<Var<T>>);                           \
  template Var<T> slice_last(Var<T>, std::size_t, std::size_t);                    \
  template Var<T> stack_middle(std::span<const Var<T>>);                           \
  template Var<T> embedding(Var<T>, std::span<const int>);                         \
  template Var<T> reshape(Var<T>, Shape);                                          \
  template Var<T> swap_axes12(Var<T>);                                             \
  template Var<T> softmax(Var<T>, std::size_t, std::span<const std::uint8_t>);     \
  template Var<T> cross_entropy(Var<T>, std::span<const int>,                      \
                                std::span<const std::uint8_t>);                    \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                           \
  template Var<T> dropout(Var<T>, double, Rng&);                                   \
  template Var<T> blend_rows(std::span<const std::uint8_t>, Var<T>, Var<T>);       \
  template Var<T> sum(Var<T>);                                                     \
  template Var<T> mean(Var<T>);

NMT_INSTANTIATE_OPS(float)
NMT_INSTANTIATE_OPS(double)

#undef NMT_INSTANTIATE_OPS

}  // namespace nmt::ad
