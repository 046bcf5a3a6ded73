#include "iconpeft/conv.hpp"

#include "iconpeft/threading.hpp"

namespace iconpeft {

namespace {

template <class S>
void validate_conv_args(const Tensor<S>& x, const Tensor<S>& kernels) {
  if (x.ndim() != 4 || kernels.ndim() != 4) {
    throw ShapeError("conv2d_depthwise_dynamic: expected x [B,C,H,W] and "
                     "kernels [B,C,K,K], got " + shape_str(x.shape()) + " and " +
                     shape_str(kernels.shape()));
  }
  const int64_t k = kernels.dim(2);
  if (kernels.dim(3) != k) {
    throw ShapeError("conv2d_depthwise_dynamic: kernels must be square, got " +
                     shape_str(kernels.shape()));
  }
  if (k % 2 == 0) {
    throw ConfigError("conv2d_depthwise_dynamic: kernel size must be odd, got " +
                      std::to_string(k));
  }
  if (x.dim(0) != kernels.dim(0) || x.dim(1) != kernels.dim(1)) {
    throw ShapeError("conv2d_depthwise_dynamic: batch/channel extents of x " +
                     shape_str(x.shape()) + " and kernels " +
                     shape_str(kernels.shape()) + " disagree");
  }
}

// One output plane: cross-correlation with zero "same" padding.
template <class S>
void corr_plane(const S* x, const S* k, S* out, int64_t h, int64_t w, int64_t ks) {
  const int64_t pad = (ks - 1) / 2;
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      S acc(0);
      for (int64_t u = 0; u < ks; ++u) {
        const int64_t y = i + u - pad;
        if (y < 0 || y >= h) continue;
        const S* xrow = x + y * w;
        const S* krow = k + u * ks;
        for (int64_t v = 0; v < ks; ++v) {
          const int64_t xx = j + v - pad;
          if (xx < 0 || xx >= w) continue;
          acc += xrow[xx] * krow[v];
        }
      }
      out[i * w + j] = acc;
    }
  }
}

}  // namespace

template <class S>
Tensor<S> conv2d_depthwise_dynamic(const Tensor<S>& x, const Tensor<S>& kernels) {
  validate_conv_args(x, kernels);
  const int64_t b = x.dim(0);
  const int64_t c = x.dim(1);
  const int64_t h = x.dim(2);
  const int64_t w = x.dim(3);
  const int64_t ks = kernels.dim(2);
  const int64_t plane = h * w;
  const int64_t ksz = ks * ks;

  Tensor<S> out = Tensor<S>::zeros(x.shape());
  const S* px = x.data_ptr();
  const S* pk = kernels.data_ptr();
  S* po = out.data_ptr();
  parallel_for(b * c, [&](int64_t begin, int64_t end) {
    for (int64_t bc = begin; bc < end; ++bc) {
      corr_plane(px + bc * plane, pk + bc * ksz, po + bc * plane, h, w, ks);
    }
  });
  detail::check_finite(out, "conv2d_depthwise_dynamic");

  const bool needs = x.requires_grad() || kernels.requires_grad();
  if (needs) {
    out.set_requires_grad(true);
    if (auto* tape = Tape<S>::active()) {
      tape->record(out, [x, kernels, out, b, c, h, w, ks, plane, ksz]() mutable {
        if (!out.has_grad()) return;
        const S* g = out.grad().data();
        const S* px = x.data_ptr();
        const S* pk = kernels.data_ptr();
        S* gx = x.requires_grad() ? x.grad().data() : nullptr;
        S* gk = kernels.requires_grad() ? kernels.grad().data() : nullptr;
        const int64_t pad = (ks - 1) / 2;
        parallel_for(b * c, [&](int64_t begin, int64_t end) {
          for (int64_t bc = begin; bc < end; ++bc) {
            const S* gp = g + bc * plane;
            const S* xp = px + bc * plane;
            const S* kp = pk + bc * ksz;
            for (int64_t i = 0; i < h; ++i) {
              for (int64_t j = 0; j < w; ++j) {
                const S gv = gp[i * w + j];
                if (gv == S(0)) continue;
                for (int64_t u = 0; u < ks; ++u) {
                  const int64_t y = i + u - pad;
                  if (y < 0 || y >= h) continue;
                  for (int64_t v = 0; v < ks; ++v) {
                    const int64_t xx = j + v - pad;
                    if (xx < 0 || xx >= w) continue;
                    if (gx) gx[bc * plane + y * w + xx] += gv * kp[u * ks + v];
                    if (gk) gk[bc * ksz + u * ks + v] += gv * xp[y * w + xx];
                  }
                }
              }
            }
          }
        });
      });
    }
  }
  return out;
}

template Tensor<float> conv2d_depthwise_dynamic<float>(const Tensor<float>&,
                                                       const Tensor<float>&);
template Tensor<double> conv2d_depthwise_dynamic<double>(const Tensor<double>&,
                                                         const Tensor<double>&);

}  // namespace iconpeft
