#include "iconpeft/ops.hpp"

#include <algorithm>
#include <cmath>

#include "iconpeft/gradcheck.hpp"
#include "iconpeft/threading.hpp"

namespace iconpeft {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (size_t i = 0; i < nd; ++i) {
    const int64_t ea = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const int64_t eb = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                       shape_str(b) + " are not broadcast-compatible");
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

// Element strides of `in` viewed through `out` (right-aligned), 0 on
// broadcast axes.
std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<int64_t> st(out.size(), 0);
  const auto own = strides_of(in);
  const size_t off = out.size() - in.size();
  for (size_t i = 0; i < in.size(); ++i) {
    st[off + i] = in[i] == 1 && out[off + i] != 1 ? 0 : own[i];
  }
  return st;
}

// Walks the output index space, handing the visitor the flat output index and
// the mapped offsets into two (possibly broadcast) inputs. Sequential, so
// gradient accumulation through it is deterministic.
template <class F>
void for_each_mapped(const Shape& out, const std::vector<int64_t>& sa,
                     const std::vector<int64_t>& sb, F&& f) {
  const int nd = static_cast<int>(out.size());
  const int64_t total = numel_of(out);
  std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
  int64_t ao = 0;
  int64_t bo = 0;
  for (int64_t i = 0; i < total; ++i) {
    f(i, ao, bo);
    for (int d = nd - 1; d >= 0; --d) {
      ++idx[static_cast<size_t>(d)];
      ao += sa[static_cast<size_t>(d)];
      bo += sb[static_cast<size_t>(d)];
      if (idx[static_cast<size_t>(d)] < out[static_cast<size_t>(d)]) break;
      ao -= sa[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
      bo -= sb[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
      idx[static_cast<size_t>(d)] = 0;
    }
  }
}

template <class S>
bool same_shape(const Tensor<S>& a, const Tensor<S>& b) {
  return a.shape() == b.shape();
}

// C[m,n] += A[m,k] @ B[k,n]. Four k-steps share one pass over the output
// row, which keeps the j loop vector-friendly and cuts the store traffic.
template <class S>
void gemm_acc(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    int64_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const S a0 = arow[p];
      const S a1 = arow[p + 1];
      const S a2 = arow[p + 2];
      const S a3 = arow[p + 3];
      if (a0 == S(0) && a1 == S(0) && a2 == S(0) && a3 == S(0)) continue;
      const S* b0 = b + p * n;
      const S* b1 = b0 + n;
      const S* b2 = b1 + n;
      const S* b3 = b2 + n;
      for (int64_t j = 0; j < n; ++j) {
        crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
      }
    }
    for (; p < k; ++p) {
      const S av = arow[p];
      if (av == S(0)) continue;
      const S* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// Row-major transpose into a scratch buffer; the backward contractions then
// reuse the fast j-inner kernel above.
template <class S>
void transpose_into(const S* src, S* dst, int64_t rows, int64_t cols) {
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
  }
}

// C[m,k] += G[m,n] @ B[k,n]^T, via bT scratch of shape [n,k].
template <class S>
void gemm_acc_nt(const S* g, const S* b, S* c, int64_t m, int64_t n, int64_t k,
                 std::vector<S>& scratch) {
  scratch.resize(static_cast<size_t>(n * k));
  transpose_into(b, scratch.data(), k, n);
  gemm_acc(g, scratch.data(), c, m, n, k);
}

// C[k,n] += A[m,k]^T @ G[m,n], via aT scratch of shape [k,m].
template <class S>
void gemm_acc_tn(const S* a, const S* g, S* c, int64_t m, int64_t k, int64_t n,
                 std::vector<S>& scratch) {
  scratch.resize(static_cast<size_t>(k * m));
  transpose_into(a, scratch.data(), m, k);
  gemm_acc(scratch.data(), g, c, k, m, n);
}

template <class S>
void maybe_record(Tensor<S>& out, bool needs_grad, std::function<void()> rule) {
  if (!needs_grad) return;
  out.set_requires_grad(true);
  if (auto* tape = Tape<S>::active()) tape->record(out, std::move(rule));
}

// Shared implementation for add/sub/mul.
enum class BinOp { Add, Sub, Mul };

template <class S>
Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, BinOp kind,
                    const char* name) {
  Tensor<S> out;
  const S* pa = a.data_ptr();
  const S* pb = b.data_ptr();
  if (same_shape(a, b)) {
    out = Tensor<S>::zeros(a.shape());
    S* po = out.data_ptr();
    const int64_t n = out.numel();
    switch (kind) {
      case BinOp::Add:
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
        break;
      case BinOp::Sub:
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
        break;
      case BinOp::Mul:
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
        break;
    }
  } else {
    const Shape os = broadcast_shape(a.shape(), b.shape(), name);
    out = Tensor<S>::zeros(os);
    const auto sa = broadcast_strides(a.shape(), os);
    const auto sb = broadcast_strides(b.shape(), os);
    S* po = out.data_ptr();
    for_each_mapped(os, sa, sb, [&](int64_t i, int64_t ao, int64_t bo) {
      switch (kind) {
        case BinOp::Add: po[i] = pa[ao] + pb[bo]; break;
        case BinOp::Sub: po[i] = pa[ao] - pb[bo]; break;
        case BinOp::Mul: po[i] = pa[ao] * pb[bo]; break;
      }
    });
  }
  detail::check_finite(out, name);

  const bool needs = a.requires_grad() || b.requires_grad();
  maybe_record<S>(out, needs, [a, b, out, kind]() mutable {
    if (!out.has_grad()) return;
    const S* g = out.grad().data();
    const Shape& os = out.shape();
    const auto sa = broadcast_strides(a.shape(), os);
    const auto sb = broadcast_strides(b.shape(), os);
    S* ga = a.requires_grad() ? a.grad().data() : nullptr;
    S* gb = b.requires_grad() ? b.grad().data() : nullptr;
    const S* pa = a.data_ptr();
    const S* pb = b.data_ptr();
    for_each_mapped(os, sa, sb, [&](int64_t i, int64_t ao, int64_t bo) {
      switch (kind) {
        case BinOp::Add:
          if (ga) ga[ao] += g[i];
          if (gb) gb[bo] += g[i];
          break;
        case BinOp::Sub:
          if (ga) ga[ao] += g[i];
          if (gb) gb[bo] -= g[i];
          break;
        case BinOp::Mul:
          if (ga) ga[ao] += g[i] * pb[bo];
          if (gb) gb[bo] += g[i] * pa[ao];
          break;
      }
    });
  });
  return out;
}

}  // namespace

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(a, b, BinOp::Add, "add");
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(a, b, BinOp::Sub, "sub");
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(a, b, BinOp::Mul, "mul");
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, double c) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const S cs = static_cast<S>(c);
  const S* pa = a.data_ptr();
  S* po = out.data_ptr();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * cs;
  detail::check_finite(out, "scale");

  maybe_record<S>(out, a.requires_grad(), [a, out, cs]() mutable {
    if (!out.has_grad()) return;
    const S* g = out.grad().data();
    S* ga = a.grad().data();
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * cs;
  });
  return out;
}

template <class S>
Tensor<S> gelu(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  const S* px = x.data_ptr();
  S* po = out.data_ptr();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(px[i]);
    po[i] = static_cast<S>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
  }
  detail::check_finite(out, "gelu");

  maybe_record<S>(out, x.requires_grad(), [x, out]() mutable {
    if (!out.has_grad()) return;
    const S* g = out.grad().data();
    const S* px = x.data_ptr();
    S* gx = x.grad().data();
    const int64_t n = out.numel();
    const double tilt = test_hooks::corrupt_gelu_backward() ? 1.25 : 1.0;
    for (int64_t i = 0; i < n; ++i) {
      const double v = static_cast<double>(px[i]);
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * static_cast<S>(tilt * (cdf + v * pdf));
    }
  });
  return out;
}

template <class S>
Tensor<S> softmax(const Tensor<S>& x) {
  const int64_t d = x.shape().back();
  const int64_t rows = x.numel() / d;
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  const S* px = x.data_ptr();
  S* po = out.data_ptr();
  for (int64_t r = 0; r < rows; ++r) {
    const S* xr = px + r * d;
    S* or_ = po + r * d;
    S m = xr[0];
    for (int64_t j = 1; j < d; ++j) m = std::max(m, xr[j]);
    S sum(0);
    for (int64_t j = 0; j < d; ++j) {
      or_[j] = static_cast<S>(std::exp(static_cast<double>(xr[j] - m)));
      sum += or_[j];
    }
    const S inv = S(1) / sum;
    for (int64_t j = 0; j < d; ++j) or_[j] *= inv;
  }
  detail::check_finite(out, "softmax");

  maybe_record<S>(out, x.requires_grad(), [x, out]() mutable {
    if (!out.has_grad()) return;
    const int64_t d = x.shape().back();
    const int64_t rows = x.numel() / d;
    const S* g = out.grad().data();
    const S* py = out.data_ptr();
    S* gx = x.grad().data();
    for (int64_t r = 0; r < rows; ++r) {
      const S* gr = g + r * d;
      const S* yr = py + r * d;
      S dot(0);
      for (int64_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
      S* gxr = gx + r * d;
      for (int64_t j = 0; j < d; ++j) gxr[j] += yr[j] * (gr[j] - dot);
    }
  });
  return out;
}

template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& weight,
                     const Tensor<S>& bias, double eps) {
  if (eps <= 0) throw ConfigError("layer_norm: eps must be > 0");
  const int64_t d = x.shape().back();
  if (weight.ndim() != 1 || weight.dim(0) != d || bias.ndim() != 1 ||
      bias.dim(0) != d) {
    throw ShapeError("layer_norm: affine params " + shape_str(weight.shape()) +
                     "/" + shape_str(bias.shape()) +
                     " do not match last extent of " + shape_str(x.shape()));
  }
  const int64_t rows = x.numel() / d;
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  // Per-row statistics are kept for the backward rule.
  auto mean = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
  auto inv_sigma = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
  const S* px = x.data_ptr();
  const S* pw = weight.data_ptr();
  const S* pb = bias.data_ptr();
  S* po = out.data_ptr();
  for (int64_t r = 0; r < rows; ++r) {
    const S* xr = px + r * d;
    S mu(0);
    for (int64_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<S>(d);
    S var(0);
    for (int64_t j = 0; j < d; ++j) {
      const S c = xr[j] - mu;
      var += c * c;
    }
    var /= static_cast<S>(d);
    const S isig = S(1) / static_cast<S>(std::sqrt(static_cast<double>(var) + eps));
    (*mean)[static_cast<size_t>(r)] = mu;
    (*inv_sigma)[static_cast<size_t>(r)] = isig;
    S* or_ = po + r * d;
    for (int64_t j = 0; j < d; ++j) {
      or_[j] = pw[j] * ((xr[j] - mu) * isig) + pb[j];
    }
  }
  detail::check_finite(out, "layer_norm");

  const bool needs =
      x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  maybe_record<S>(out, needs, [x, weight, bias, out, mean, inv_sigma]() mutable {
    if (!out.has_grad()) return;
    const int64_t d = x.shape().back();
    const int64_t rows = x.numel() / d;
    const S* g = out.grad().data();
    const S* px = x.data_ptr();
    const S* pw = weight.data_ptr();
    S* gx = x.requires_grad() ? x.grad().data() : nullptr;
    S* gw = weight.requires_grad() ? weight.grad().data() : nullptr;
    S* gb = bias.requires_grad() ? bias.grad().data() : nullptr;
    for (int64_t r = 0; r < rows; ++r) {
      const S mu = (*mean)[static_cast<size_t>(r)];
      const S isig = (*inv_sigma)[static_cast<size_t>(r)];
      const S* xr = px + r * d;
      const S* gr = g + r * d;
      if (gx) {
        S mg(0);
        S mgy(0);
        for (int64_t j = 0; j < d; ++j) {
          const S gh = gr[j] * pw[j];
          const S y = (xr[j] - mu) * isig;
          mg += gh;
          mgy += gh * y;
        }
        mg /= static_cast<S>(d);
        mgy /= static_cast<S>(d);
        S* gxr = gx + r * d;
        for (int64_t j = 0; j < d; ++j) {
          const S gh = gr[j] * pw[j];
          const S y = (xr[j] - mu) * isig;
          gxr[j] += isig * (gh - mg - y * mgy);
        }
      }
      if (gw || gb) {
        for (int64_t j = 0; j < d; ++j) {
          if (gw) gw[j] += gr[j] * ((xr[j] - mu) * isig);
          if (gb) gb[j] += gr[j];
        }
      }
    }
  });
  return out;
}

namespace {

// Batch bookkeeping shared by matmul forward/backward: broadcast strides in
// units of whole matrices.
struct MatmulPlan {
  Shape batch;                       // broadcast batch extents
  std::vector<int64_t> sa, sb;       // per-dim matrix strides into a / b
  int64_t m = 0, k = 0, n = 0;
  Shape out_shape;
};

template <class S>
MatmulPlan plan_matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() < 2 || b.ndim() < 2) {
    throw ShapeError("matmul: operands must have rank >= 2, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  MatmulPlan p;
  p.m = a.dim(a.ndim() - 2);
  p.k = a.dim(a.ndim() - 1);
  const int64_t kb = b.dim(b.ndim() - 2);
  p.n = b.dim(b.ndim() - 1);
  if (p.k != kb) {
    throw ShapeError("matmul: inner extents disagree for shapes " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const Shape ba(a.shape().begin(), a.shape().end() - 2);
  const Shape bb(b.shape().begin(), b.shape().end() - 2);
  p.batch = broadcast_shape(ba, bb, "matmul");
  p.sa = broadcast_strides(ba, p.batch);
  p.sb = broadcast_strides(bb, p.batch);
  p.out_shape = p.batch;
  p.out_shape.push_back(p.m);
  p.out_shape.push_back(p.n);
  return p;
}

}  // namespace

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  const MatmulPlan p = plan_matmul(a, b);
  Tensor<S> out = Tensor<S>::zeros(p.out_shape);
  const S* pa = a.data_ptr();
  const S* pb = b.data_ptr();
  S* po = out.data_ptr();
  const int64_t msz = p.m * p.k;
  const int64_t bsz = p.k * p.n;
  const int64_t osz = p.m * p.n;
  for_each_mapped(p.batch, p.sa, p.sb, [&](int64_t i, int64_t ao, int64_t bo) {
    const S* abase = pa + ao * msz;
    const S* bbase = pb + bo * bsz;
    S* obase = po + i * osz;
    if (p.m >= 2 * max_threads() && max_threads() > 1) {
      parallel_for(p.m, [&](int64_t r0, int64_t r1) {
        gemm_acc(abase + r0 * p.k, bbase, obase + r0 * p.n, r1 - r0, p.k, p.n);
      });
    } else {
      gemm_acc(abase, bbase, obase, p.m, p.k, p.n);
    }
  });
  detail::check_finite(out, "matmul");

  const bool needs = a.requires_grad() || b.requires_grad();
  maybe_record<S>(out, needs, [a, b, out]() mutable {
    if (!out.has_grad()) return;
    const MatmulPlan p = plan_matmul(a, b);
    const S* g = out.grad().data();
    const S* pa = a.data_ptr();
    const S* pb = b.data_ptr();
    S* ga = a.requires_grad() ? a.grad().data() : nullptr;
    S* gb = b.requires_grad() ? b.grad().data() : nullptr;
    const int64_t msz = p.m * p.k;
    const int64_t bsz = p.k * p.n;
    const int64_t osz = p.m * p.n;
    std::vector<S> scratch;
    for_each_mapped(p.batch, p.sa, p.sb, [&](int64_t i, int64_t ao, int64_t bo) {
      const S* gbase = g + i * osz;
      if (ga) gemm_acc_nt(gbase, pb + bo * bsz, ga + ao * msz, p.m, p.n, p.k, scratch);
      if (gb) gemm_acc_tn(pa + ao * msz, gbase, gb + bo * bsz, p.m, p.k, p.n, scratch);
    });
  });
  return out;
}

template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape target) {
  if (numel_of(target) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(target));
  }
  Tensor<S> out = Tensor<S>::zeros(std::move(target));
  std::copy(x.data().begin(), x.data().end(), out.data().begin());

  maybe_record<S>(out, x.requires_grad(), [x, out]() mutable {
    if (!out.has_grad()) return;
    const S* g = out.grad().data();
    S* gx = x.grad().data();
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) gx[i] += g[i];
  });
  return out;
}

template <class S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& perm) {
  const int nd = x.ndim();
  if (static_cast<int>(perm.size()) != nd) {
    throw ShapeError("permute: perm size " + std::to_string(perm.size()) +
                     " does not match rank of " + shape_str(x.shape()));
  }
  std::vector<bool> seen(static_cast<size_t>(nd), false);
  for (int p : perm) {
    if (p < 0 || p >= nd || seen[static_cast<size_t>(p)]) {
      throw ShapeError("permute: invalid permutation");
    }
    seen[static_cast<size_t>(p)] = true;
  }
  Shape os(static_cast<size_t>(nd));
  for (int d = 0; d < nd; ++d) os[static_cast<size_t>(d)] = x.dim(perm[static_cast<size_t>(d)]);

  const auto xst = strides_of(x.shape());
  std::vector<int64_t> src_strides(static_cast<size_t>(nd));
  for (int d = 0; d < nd; ++d) {
    src_strides[static_cast<size_t>(d)] = xst[static_cast<size_t>(perm[static_cast<size_t>(d)])];
  }
  Tensor<S> out = Tensor<S>::zeros(os);
  const S* px = x.data_ptr();
  S* po = out.data_ptr();
  const std::vector<int64_t> zero(static_cast<size_t>(nd), 0);
  for_each_mapped(os, src_strides, zero,
                  [&](int64_t i, int64_t so, int64_t) { po[i] = px[so]; });

  maybe_record<S>(out, x.requires_grad(), [x, out, src_strides, zero]() mutable {
    if (!out.has_grad()) return;
    const S* g = out.grad().data();
    S* gx = x.grad().data();
    for_each_mapped(out.shape(), src_strides, zero,
                    [&](int64_t i, int64_t so, int64_t) { gx[so] += g[i]; });
  });
  return out;
}

template <class S>
Tensor<S> mean_axis(const Tensor<S>& x, int axis) {
  const int nd = x.ndim();
  if (axis < 0 || axis >= nd) {
    throw ShapeError("mean_axis: axis " + std::to_string(axis) +
                     " out of range for " + shape_str(x.shape()));
  }
  int64_t outer = 1;
  int64_t inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < nd; ++d) inner *= x.dim(d);
  const int64_t e = x.dim(axis);

  Shape os;
  for (int d = 0; d < nd; ++d) {
    if (d != axis) os.push_back(x.dim(d));
  }
  if (os.empty()) os.push_back(1);
  Tensor<S> out = Tensor<S>::zeros(os);
  const S* px = x.data_ptr();
  S* po = out.data_ptr();
  const S inv = S(1) / static_cast<S>(e);
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t j = 0; j < e; ++j) {
      const S* src = px + (o * e + j) * inner;
      S* dst = po + o * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  for (int64_t i = 0; i < outer * inner; ++i) po[i] *= inv;
  detail::check_finite(out, "mean_axis");

  maybe_record<S>(out, x.requires_grad(), [x, out, outer, inner, e, inv]() mutable {
    if (!out.has_grad()) return;
    const S* g = out.grad().data();
    S* gx = x.grad().data();
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t j = 0; j < e; ++j) {
        S* dst = gx + (o * e + j) * inner;
        const S* src = g + o * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
      }
    }
  });
  return out;
}

template <class S>
Tensor<S> sum_all(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros({1});
  S acc(0);
  for (S v : x.data()) acc += v;
  out.data()[0] = acc;
  detail::check_finite(out, "sum_all");

  maybe_record<S>(out, x.requires_grad(), [x, out]() mutable {
    if (!out.has_grad()) return;
    const S g = out.grad()[0];
    S* gx = x.grad().data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) gx[i] += g;
  });
  return out;
}

template <class S>
Tensor<S> mean_all(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros({1});
  S acc(0);
  for (S v : x.data()) acc += v;
  const S inv = S(1) / static_cast<S>(x.numel());
  out.data()[0] = acc * inv;
  detail::check_finite(out, "mean_all");

  maybe_record<S>(out, x.requires_grad(), [x, out, inv]() mutable {
    if (!out.has_grad()) return;
    const S g = out.grad()[0] * inv;
    S* gx = x.grad().data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) gx[i] += g;
  });
  return out;
}

#define ICONPEFT_INSTANTIATE_OPS(S)                                           \
  template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&);              \
  template Tensor<S> sub<S>(const Tensor<S>&, const Tensor<S>&);              \
  template Tensor<S> mul<S>(const Tensor<S>&, const Tensor<S>&);              \
  template Tensor<S> scale<S>(const Tensor<S>&, double);                      \
  template Tensor<S> gelu<S>(const Tensor<S>&);                               \
  template Tensor<S> softmax<S>(const Tensor<S>&);                            \
  template Tensor<S> layer_norm<S>(const Tensor<S>&, const Tensor<S>&,        \
                                   const Tensor<S>&, double);                 \
  template Tensor<S> matmul<S>(const Tensor<S>&, const Tensor<S>&);           \
  template Tensor<S> reshape<S>(const Tensor<S>&, Shape);                     \
  template Tensor<S> permute<S>(const Tensor<S>&, const std::vector<int>&);   \
  template Tensor<S> mean_axis<S>(const Tensor<S>&, int);                     \
  template Tensor<S> sum_all<S>(const Tensor<S>&);                            \
  template Tensor<S> mean_all<S>(const Tensor<S>&);

ICONPEFT_INSTANTIATE_OPS(float)
ICONPEFT_INSTANTIATE_OPS(double)

}  // namespace iconpeft
