#include "layer_math.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "deepcorrect/errors.hpp"

namespace deepcorrect::math {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapCM = Eigen::Map<const MatRM<T>>;

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int thread_id() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

// col has rows (Cg*kh*kw) and columns (Ho*Wo); row r = (c*kh + a)*kw + b.
template <typename T>
void im2col(const T* x, int H, int W, int c0, int Cg, const ConvDims& d, int Ho, int Wo, T* col) {
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int c = 0; c < Cg; ++c) {
    const T* src = x + (c0 + c) * plane;
    for (int a = 0; a < d.k_h; ++a) {
      for (int b = 0; b < d.k_w; ++b) {
        T* dst = col + (static_cast<int64_t>((c * d.k_h + a) * d.k_w + b)) * Ho * Wo;
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih = oh * d.s_h - d.p_h + a;
          T* row = dst + static_cast<int64_t>(oh) * Wo;
          if (ih < 0 || ih >= H) {
            std::fill(row, row + Wo, T(0));
            continue;
          }
          const T* srow = src + static_cast<int64_t>(ih) * W;
          for (int ow = 0; ow < Wo; ++ow) {
            const int iw = ow * d.s_w - d.p_w + b;
            row[ow] = (iw >= 0 && iw < W) ? srow[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int H, int W, int c0, int Cg, const ConvDims& d, int Ho, int Wo, T* x) {
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int c = 0; c < Cg; ++c) {
    T* dst = x + (c0 + c) * plane;
    for (int a = 0; a < d.k_h; ++a) {
      for (int b = 0; b < d.k_w; ++b) {
        const T* src = col + (static_cast<int64_t>((c * d.k_h + a) * d.k_w + b)) * Ho * Wo;
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih = oh * d.s_h - d.p_h + a;
          if (ih < 0 || ih >= H) continue;
          T* drow = dst + static_cast<int64_t>(ih) * W;
          const T* srow = src + static_cast<int64_t>(oh) * Wo;
          for (int ow = 0; ow < Wo; ++ow) {
            const int iw = ow * d.s_w - d.p_w + b;
            if (iw >= 0 && iw < W) drow[iw] += srow[ow];
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T>& scratch_buffer(size_t n) {
  thread_local std::vector<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

}  // namespace

template <typename T>
ConvDims dims_of(const Conv2DSpec& s) {
  ConvDims d;
  d.in_ch = s.in_ch;
  d.out_ch = s.out_ch;
  d.k_h = s.k_h;
  d.k_w = s.k_w;
  d.s_h = d.s_w = s.stride;
  d.p_h = d.p_w = s.pad;
  d.groups = s.groups;
  return d;
}

ConvDims vertical_bank_dims(const SeparableConv2DSpec& s) {
  ConvDims d;
  d.in_ch = s.in_ch;
  d.out_ch = s.rank;
  d.k_h = s.k;
  d.k_w = 1;
  d.s_h = s.stride;
  d.s_w = 1;
  d.p_h = s.pad;
  d.p_w = 0;
  return d;
}

ConvDims horizontal_bank_dims(const SeparableConv2DSpec& s) {
  ConvDims d;
  d.in_ch = s.rank;
  d.out_ch = s.out_ch;
  d.k_h = 1;
  d.k_w = s.k;
  d.s_h = 1;
  d.s_w = s.stride;
  d.p_h = 0;
  d.p_w = s.pad;
  return d;
}

template <typename T>
void conv_forward(const TensorT<T>& x, const ConvDims& d, const TensorT<T>& W, const TensorT<T>& b, TensorT<T>& y) {
  check_shape(x.rank() == 4, "conv input must be 4-D, got " + shape_str(x.shape));
  check_shape(x.dim(1) == d.in_ch, "conv expects " + std::to_string(d.in_ch) + " input channels, got " +
                                       std::to_string(x.dim(1)) + " in " + shape_str(x.shape));
  const int B = x.dim(0), H = x.dim(2), Wd = x.dim(3);
  const int Ho = conv_out_extent(H, d.k_h, d.s_h, d.p_h);
  const int Wo = conv_out_extent(Wd, d.k_w, d.s_w, d.p_w);
  check_shape(Ho > 0 && Wo > 0, "conv output would be empty for input " + shape_str(x.shape));
  const int G = d.groups, Cg = d.in_ch / G, Ng = d.out_ch / G;
  check_shape(Cg * G == d.in_ch && Ng * G == d.out_ch, "channel counts must divide groups");
  const int kk = Cg * d.k_h * d.k_w;
  check_shape(W.numel() == static_cast<int64_t>(d.out_ch) * kk, "conv weight numel mismatch");

  y = TensorT<T>({B, d.out_ch, Ho, Wo});
  const int64_t ospatial = static_cast<int64_t>(Ho) * Wo;
  const bool with_bias = !b.empty();

#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < B; ++bi) {
    T* col = scratch_buffer<T>(static_cast<size_t>(kk) * ospatial).data();
    const T* xb = x.ptr() + static_cast<int64_t>(bi) * d.in_ch * H * Wd;
    T* yb = y.ptr() + static_cast<int64_t>(bi) * d.out_ch * ospatial;
    for (int g = 0; g < G; ++g) {
      im2col(xb, H, Wd, g * Cg, Cg, d, Ho, Wo, col);
      MapCM<T> wmat(W.ptr() + static_cast<int64_t>(g) * Ng * kk, Ng, kk);
      MapCM<T> cmat(col, kk, ospatial);
      MapM<T> ymat(yb + static_cast<int64_t>(g) * Ng * ospatial, Ng, ospatial);
      ymat.noalias() = wmat * cmat;
    }
    if (with_bias) {
      for (int n = 0; n < d.out_ch; ++n) {
        T* row = yb + static_cast<int64_t>(n) * ospatial;
        const T bv = b.data[static_cast<size_t>(n)];
        for (int64_t i = 0; i < ospatial; ++i) row[i] += bv;
      }
    }
  }
}

template <typename T>
void conv_backward(const TensorT<T>& x, const ConvDims& d, const TensorT<T>& W, const TensorT<T>& gy, TensorT<T>* gx,
                   TensorT<T>* gW, TensorT<T>* gb) {
  const int B = x.dim(0), H = x.dim(2), Wd = x.dim(3);
  const int Ho = gy.dim(2), Wo = gy.dim(3);
  const int G = d.groups, Cg = d.in_ch / G, Ng = d.out_ch / G;
  const int kk = Cg * d.k_h * d.k_w;
  const int64_t ospatial = static_cast<int64_t>(Ho) * Wo;

  const int nt = num_threads();
  std::vector<std::vector<T>> gw_local, gb_local;
  if (gW) gw_local.assign(static_cast<size_t>(nt), std::vector<T>(static_cast<size_t>(W.numel()), T(0)));
  if (gb) gb_local.assign(static_cast<size_t>(nt), std::vector<T>(static_cast<size_t>(d.out_ch), T(0)));

#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < B; ++bi) {
    const int tid = thread_id();
    // two scratch areas: im2col matrix and the column-gradient matrix
    T* col = scratch_buffer<T>(static_cast<size_t>(kk) * ospatial * 2).data();
    T* gcol = col + static_cast<size_t>(kk) * ospatial;
    const T* xb = x.ptr() + static_cast<int64_t>(bi) * d.in_ch * H * Wd;
    const T* gyb = gy.ptr() + static_cast<int64_t>(bi) * d.out_ch * ospatial;
    T* gxb = gx ? gx->ptr() + static_cast<int64_t>(bi) * d.in_ch * H * Wd : nullptr;
    for (int g = 0; g < G; ++g) {
      MapCM<T> gymat(gyb + static_cast<int64_t>(g) * Ng * ospatial, Ng, ospatial);
      if (gW) {
        im2col(xb, H, Wd, g * Cg, Cg, d, Ho, Wo, col);
        MapCM<T> cmat(col, kk, ospatial);
        MapM<T> gwmat(gw_local[static_cast<size_t>(tid)].data() + static_cast<int64_t>(g) * Ng * kk, Ng, kk);
        gwmat.noalias() += gymat * cmat.transpose();
      }
      if (gb) {
        T* gbt = gb_local[static_cast<size_t>(tid)].data() + g * Ng;
        for (int n = 0; n < Ng; ++n) gbt[n] += gymat.row(n).sum();
      }
      if (gx) {
        MapCM<T> wmat(W.ptr() + static_cast<int64_t>(g) * Ng * kk, Ng, kk);
        MapM<T> gcmat(gcol, kk, ospatial);
        gcmat.noalias() = wmat.transpose() * gymat;
        col2im_add(gcol, H, Wd, g * Cg, Cg, d, Ho, Wo, gxb);
      }
    }
  }

  // fixed-order reduction keeps results deterministic for a given thread count
  if (gW)
    for (int t = 0; t < nt; ++t)
      for (int64_t i = 0; i < gW->numel(); ++i) gW->data[static_cast<size_t>(i)] += gw_local[static_cast<size_t>(t)][static_cast<size_t>(i)];
  if (gb)
    for (int t = 0; t < nt; ++t)
      for (int i = 0; i < d.out_ch; ++i) gb->data[static_cast<size_t>(i)] += gb_local[static_cast<size_t>(t)][static_cast<size_t>(i)];
}

template <typename T>
void relu_forward(const TensorT<T>& x, TensorT<T>& y) {
  y.shape = x.shape;
  y.data.resize(x.data.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < x.numel(); ++i) y.data[static_cast<size_t>(i)] = x.data[static_cast<size_t>(i)] > T(0) ? x.data[static_cast<size_t>(i)] : T(0);
}

template <typename T>
void relu_backward(const TensorT<T>& x, const TensorT<T>& gy, TensorT<T>& gx) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < x.numel(); ++i)
    if (x.data[static_cast<size_t>(i)] > T(0)) gx.data[static_cast<size_t>(i)] += gy.data[static_cast<size_t>(i)];
}

template <typename T>
void maxpool_forward(const TensorT<T>& x, const MaxPoolSpec& s, TensorT<T>& y) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = conv_out_extent(H, s.k, s.stride, s.pad);
  const int Wo = conv_out_extent(W, s.k, s.stride, s.pad);
  check_shape(Ho > 0 && Wo > 0, "maxpool output would be empty for input " + shape_str(x.shape));
  y = TensorT<T>({B, C, Ho, Wo});
#pragma omp parallel for schedule(static)
  for (int bc = 0; bc < B * C; ++bc) {
    const T* src = x.ptr() + static_cast<int64_t>(bc) * H * W;
    T* dst = y.ptr() + static_cast<int64_t>(bc) * Ho * Wo;
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        for (int a = 0; a < s.k; ++a) {
          const int ih = oh * s.stride - s.pad + a;
          if (ih < 0 || ih >= H) continue;
          for (int b = 0; b < s.k; ++b) {
            const int iw = ow * s.stride - s.pad + b;
            if (iw < 0 || iw >= W) continue;
            best = std::max(best, src[static_cast<int64_t>(ih) * W + iw]);
          }
        }
        dst[static_cast<int64_t>(oh) * Wo + ow] = best;
      }
  }
}

template <typename T>
void maxpool_backward(const TensorT<T>& x, const MaxPoolSpec& s, const TensorT<T>& gy, TensorT<T>& gx) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = gy.dim(2), Wo = gy.dim(3);
#pragma omp parallel for schedule(static)
  for (int bc = 0; bc < B * C; ++bc) {
    const T* src = x.ptr() + static_cast<int64_t>(bc) * H * W;
    const T* g = gy.ptr() + static_cast<int64_t>(bc) * Ho * Wo;
    T* dst = gx.ptr() + static_cast<int64_t>(bc) * H * W;
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow) {
        // first maximum wins ties, matching forward determinism
        T best = -std::numeric_limits<T>::infinity();
        int64_t arg = -1;
        for (int a = 0; a < s.k; ++a) {
          const int ih = oh * s.stride - s.pad + a;
          if (ih < 0 || ih >= H) continue;
          for (int b = 0; b < s.k; ++b) {
            const int iw = ow * s.stride - s.pad + b;
            if (iw < 0 || iw >= W) continue;
            const T v = src[static_cast<int64_t>(ih) * W + iw];
            if (v > best) {
              best = v;
              arg = static_cast<int64_t>(ih) * W + iw;
            }
          }
        }
        if (arg >= 0) dst[arg] += g[static_cast<int64_t>(oh) * Wo + ow];
      }
  }
}

template <typename T>
void batchnorm_forward(const TensorT<T>& x, const BatchNormSpec& s, const TensorT<T>& gamma, const TensorT<T>& beta,
                       TensorT<T>& running_mean, TensorT<T>& running_var, bool use_batch_stats, bool update_running,
                       TensorT<T>& y) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check_shape(C == s.channels, "batchnorm channels mismatch");
  y.shape = x.shape;
  y.data.resize(x.data.size());
  const int64_t plane = static_cast<int64_t>(H) * W;
  const int64_t m = static_cast<int64_t>(B) * plane;

  for (int c = 0; c < C; ++c) {
    double mean, var;
    if (use_batch_stats) {
      double sum = 0;
      for (int b = 0; b < B; ++b) {
        const T* p = x.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = sum / static_cast<double>(m);
      double sq = 0;
      for (int b = 0; b < B; ++b) {
        const T* p = x.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const double dv = p[i] - mean;
          sq += dv * dv;
        }
      }
      var = sq / static_cast<double>(m);
      if (update_running) {
        running_mean.data[static_cast<size_t>(c)] =
            static_cast<T>((1.0 - s.momentum) * running_mean.data[static_cast<size_t>(c)] + s.momentum * mean);
        running_var.data[static_cast<size_t>(c)] =
            static_cast<T>((1.0 - s.momentum) * running_var.data[static_cast<size_t>(c)] + s.momentum * var);
      }
    } else {
      mean = running_mean.data[static_cast<size_t>(c)];
      var = running_var.data[static_cast<size_t>(c)];
    }
    const double inv_std = 1.0 / std::sqrt(var + s.eps);
    const double a = gamma.data[static_cast<size_t>(c)] * inv_std;
    const double bb = beta.data[static_cast<size_t>(c)] - a * mean;
    for (int b = 0; b < B; ++b) {
      const T* p = x.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
      T* q = y.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) q[i] = static_cast<T>(a * p[i] + bb);
    }
  }
}

template <typename T>
void batchnorm_backward(const TensorT<T>& x, const BatchNormSpec& s, const TensorT<T>& gamma,
                        const TensorT<T>& running_mean, const TensorT<T>& running_var, bool used_batch_stats,
                        const TensorT<T>& gy, TensorT<T>* gx, TensorT<T>* ggamma, TensorT<T>* gbeta) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t plane = static_cast<int64_t>(H) * W;
  const int64_t m = static_cast<int64_t>(B) * plane;

  for (int c = 0; c < C; ++c) {
    double mean, var;
    if (used_batch_stats) {
      double sum = 0;
      for (int b = 0; b < B; ++b) {
        const T* p = x.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = sum / static_cast<double>(m);
      double sq = 0;
      for (int b = 0; b < B; ++b) {
        const T* p = x.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const double dv = p[i] - mean;
          sq += dv * dv;
        }
      }
      var = sq / static_cast<double>(m);
    } else {
      mean = running_mean.data[static_cast<size_t>(c)];
      var = running_var.data[static_cast<size_t>(c)];
    }
    const double inv_std = 1.0 / std::sqrt(var + s.eps);

    double s1 = 0, s2 = 0;  // sum gy*xhat, sum gy
    for (int b = 0; b < B; ++b) {
      const T* px = x.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
      const T* pg = gy.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        s1 += pg[i] * (px[i] - mean) * inv_std;
        s2 += pg[i];
      }
    }
    if (ggamma) ggamma->data[static_cast<size_t>(c)] += static_cast<T>(s1);
    if (gbeta) gbeta->data[static_cast<size_t>(c)] += static_cast<T>(s2);
    if (gx) {
      const double gsc = gamma.data[static_cast<size_t>(c)] * inv_std;
      for (int b = 0; b < B; ++b) {
        const T* px = x.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
        const T* pg = gy.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
        T* pd = gx->ptr() + (static_cast<int64_t>(b) * C + c) * plane;
        if (used_batch_stats) {
          for (int64_t i = 0; i < plane; ++i) {
            const double xhat = (px[i] - mean) * inv_std;
            pd[i] += static_cast<T>(gsc / static_cast<double>(m) * (static_cast<double>(m) * pg[i] - s2 - xhat * s1));
          }
        } else {
          for (int64_t i = 0; i < plane; ++i) pd[i] += static_cast<T>(gsc * pg[i]);
        }
      }
    }
  }
}

template <typename T>
void dense_forward(const TensorT<T>& x, const DenseSpec& s, const TensorT<T>& W, const TensorT<T>& b, TensorT<T>& y) {
  const int B = x.dim(0);
  const int64_t feat = x.numel() / B;
  check_shape(feat == s.in, "dense expects " + std::to_string(s.in) + " features, got " + std::to_string(feat));
  y = TensorT<T>({B, s.out});
  MapCM<T> xm(x.ptr(), B, s.in);
  MapCM<T> wm(W.ptr(), s.out, s.in);
  MapM<T> ym(y.ptr(), B, s.out);
  ym.noalias() = xm * wm.transpose();
  if (!b.empty())
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < s.out; ++j) y.at2(i, j) += b.data[static_cast<size_t>(j)];
}

template <typename T>
void dense_backward(const TensorT<T>& x, const DenseSpec& s, const TensorT<T>& W, const TensorT<T>& gy, TensorT<T>* gx,
                    TensorT<T>* gW, TensorT<T>* gb) {
  const int B = x.dim(0);
  MapCM<T> xm(x.ptr(), B, s.in);
  MapCM<T> wm(W.ptr(), s.out, s.in);
  MapCM<T> gym(gy.ptr(), B, s.out);
  if (gW) {
    MapM<T> gwm(gW->ptr(), s.out, s.in);
    gwm.noalias() += gym.transpose() * xm;
  }
  if (gb)
    for (int j = 0; j < s.out; ++j) gb->data[static_cast<size_t>(j)] += gym.col(j).sum();
  if (gx) {
    MapM<T> gxm(gx->ptr(), B, s.in);
    gxm.noalias() += gym * wm;
  }
}

template <typename T>
void add_forward(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& y) {
  check_shape(a.shape == b.shape,
              "elementwise add shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  y.shape = a.shape;
  y.data.resize(a.data.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < a.numel(); ++i) y.data[static_cast<size_t>(i)] = a.data[static_cast<size_t>(i)] + b.data[static_cast<size_t>(i)];
}

template <typename T>
void global_avg_pool_forward(const TensorT<T>& x, TensorT<T>& y) {
  const int B = x.dim(0), C = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  y = TensorT<T>({B, C});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* p = x.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
      double sum = 0;
      for (int64_t i = 0; i < plane; ++i) sum += p[i];
      y.at2(b, c) = static_cast<T>(sum / static_cast<double>(plane));
    }
}

template <typename T>
void global_avg_pool_backward(const TensorT<T>& x, const TensorT<T>& gy, TensorT<T>& gx) {
  const int B = x.dim(0), C = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T g = static_cast<T>(gy.at2(b, c) / static_cast<double>(plane));
      T* p = gx.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] += g;
    }
}

template <typename T>
void softmax_forward(const TensorT<T>& logits, const std::vector<int>* labels, TensorT<T>& probs, double* loss) {
  const int B = logits.dim(0), K = logits.dim(1);
  probs = TensorT<T>({B, K});
  double total = 0;
  for (int b = 0; b < B; ++b) {
    const T* z = logits.ptr() + static_cast<int64_t>(b) * K;
    T* p = probs.ptr() + static_cast<int64_t>(b) * K;
    double zmax = z[0];
    for (int k = 1; k < K; ++k) zmax = std::max(zmax, static_cast<double>(z[k]));
    double sum = 0;
    for (int k = 0; k < K; ++k) sum += std::exp(static_cast<double>(z[k]) - zmax);
    const double lse = zmax + std::log(sum);
    for (int k = 0; k < K; ++k) p[k] = static_cast<T>(std::exp(static_cast<double>(z[k]) - lse));
    if (labels) {
      const int y = (*labels)[static_cast<size_t>(b)];
      check_shape(y >= 0 && y < K, "label " + std::to_string(y) + " out of range for " + std::to_string(K) + " classes");
      total += lse - static_cast<double>(z[y]);
    }
  }
  if (loss) *loss = labels ? total / B : 0.0;
}

template <typename T>
void softmax_backward(const TensorT<T>& probs, const std::vector<int>& labels, TensorT<T>& glogits) {
  const int B = probs.dim(0), K = probs.dim(1);
  for (int b = 0; b < B; ++b) {
    const T* p = probs.ptr() + static_cast<int64_t>(b) * K;
    T* g = glogits.ptr() + static_cast<int64_t>(b) * K;
    for (int k = 0; k < K; ++k) g[k] += static_cast<T>((static_cast<double>(p[k]) - (labels[static_cast<size_t>(b)] == k ? 1.0 : 0.0)) / B);
  }
}

template <typename T>
void channel_select_forward(const TensorT<T>& x, const ChannelSelectSpec& s, TensorT<T>& y) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int R = static_cast<int>(s.channels.size());
  for (int c : s.channels) check_shape(c >= 0 && c < C, "selected channel " + std::to_string(c) + " out of range");
  y = TensorT<T>({B, R, H, W});
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int b = 0; b < B; ++b)
    for (int r = 0; r < R; ++r)
      std::copy_n(x.ptr() + (static_cast<int64_t>(b) * C + s.channels[static_cast<size_t>(r)]) * plane, plane,
                  y.ptr() + (static_cast<int64_t>(b) * R + r) * plane);
}

template <typename T>
void channel_select_backward(const ChannelSelectSpec& s, const TensorT<T>& gy, TensorT<T>& gx) {
  const int B = gy.dim(0), R = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
  const int C = gx.dim(1);
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int b = 0; b < B; ++b)
    for (int r = 0; r < R; ++r) {
      const T* src = gy.ptr() + (static_cast<int64_t>(b) * R + r) * plane;
      T* dst = gx.ptr() + (static_cast<int64_t>(b) * C + s.channels[static_cast<size_t>(r)]) * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
}

template <typename T>
void channel_merge_forward(const TensorT<T>& narrow, const TensorT<T>& base, const ChannelMergeSpec& s, TensorT<T>& y) {
  check_shape(narrow.dim(1) == static_cast<int>(s.channels.size()), "channel merge width mismatch");
  check_shape(narrow.dim(0) == base.dim(0) && narrow.dim(2) == base.dim(2) && narrow.dim(3) == base.dim(3),
              "channel merge spatial mismatch");
  y = base;
  const int B = base.dim(0), C = base.dim(1), H = base.dim(2), W = base.dim(3);
  const int R = narrow.dim(1);
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int b = 0; b < B; ++b)
    for (int r = 0; r < R; ++r)
      std::copy_n(narrow.ptr() + (static_cast<int64_t>(b) * R + r) * plane, plane,
                  y.ptr() + (static_cast<int64_t>(b) * C + s.channels[static_cast<size_t>(r)]) * plane);
}

template <typename T>
void channel_merge_backward(const ChannelMergeSpec& s, const TensorT<T>& gy, TensorT<T>* gnarrow, TensorT<T>* gbase) {
  const int B = gy.dim(0), C = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
  const int R = static_cast<int>(s.channels.size());
  const int64_t plane = static_cast<int64_t>(H) * W;
  std::vector<char> replaced(static_cast<size_t>(C), 0);
  for (int c : s.channels) replaced[static_cast<size_t>(c)] = 1;
  for (int b = 0; b < B; ++b) {
    if (gnarrow)
      for (int r = 0; r < R; ++r) {
        const T* src = gy.ptr() + (static_cast<int64_t>(b) * C + s.channels[static_cast<size_t>(r)]) * plane;
        T* dst = gnarrow->ptr() + (static_cast<int64_t>(b) * R + r) * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
    if (gbase)
      for (int c = 0; c < C; ++c) {
        if (replaced[static_cast<size_t>(c)]) continue;
        const T* src = gy.ptr() + (static_cast<int64_t>(b) * C + c) * plane;
        T* dst = gbase->ptr() + (static_cast<int64_t>(b) * C + c) * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
  }
}

template <typename T>
void downsample_pad_forward(const TensorT<T>& x, const DownsamplePadSpec& s, TensorT<T>& y) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check_shape(s.out_ch >= C, "downsample pad cannot drop channels");
  const int Ho = (H - 1) / s.stride + 1, Wo = (W - 1) / s.stride + 1;
  y = TensorT<T>({B, s.out_ch, Ho, Wo});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) y.at4(b, c, oh, ow) = x.at4(b, c, oh * s.stride, ow * s.stride);
}

template <typename T>
void downsample_pad_backward(const TensorT<T>& x, const DownsamplePadSpec& s, const TensorT<T>& gy, TensorT<T>& gx) {
  const int B = x.dim(0), C = x.dim(1);
  const int Ho = gy.dim(2), Wo = gy.dim(3);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) gx.at4(b, c, oh * s.stride, ow * s.stride) += gy.at4(b, c, oh, ow);
}

#define DEEPCORRECT_INSTANTIATE(T)                                                                                    \
  template ConvDims dims_of<T>(const Conv2DSpec&);                                                                    \
  template void conv_forward<T>(const TensorT<T>&, const ConvDims&, const TensorT<T>&, const TensorT<T>&,            \
                                TensorT<T>&);                                                                         \
  template void conv_backward<T>(const TensorT<T>&, const ConvDims&, const TensorT<T>&, const TensorT<T>&,           \
                                 TensorT<T>*, TensorT<T>*, TensorT<T>*);                                              \
  template void relu_forward<T>(const TensorT<T>&, TensorT<T>&);                                                      \
  template void relu_backward<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>&);                                  \
  template void maxpool_forward<T>(const TensorT<T>&, const MaxPoolSpec&, TensorT<T>&);                               \
  template void maxpool_backward<T>(const TensorT<T>&, const MaxPoolSpec&, const TensorT<T>&, TensorT<T>&);           \
  template void batchnorm_forward<T>(const TensorT<T>&, const BatchNormSpec&, const TensorT<T>&, const TensorT<T>&,   \
                                     TensorT<T>&, TensorT<T>&, bool, bool, TensorT<T>&);                              \
  template void batchnorm_backward<T>(const TensorT<T>&, const BatchNormSpec&, const TensorT<T>&, const TensorT<T>&,  \
                                      const TensorT<T>&, bool, const TensorT<T>&, TensorT<T>*, TensorT<T>*,           \
                                      TensorT<T>*);                                                                   \
  template void dense_forward<T>(const TensorT<T>&, const DenseSpec&, const TensorT<T>&, const TensorT<T>&,           \
                                 TensorT<T>&);                                                                        \
  template void dense_backward<T>(const TensorT<T>&, const DenseSpec&, const TensorT<T>&, const TensorT<T>&,          \
                                  TensorT<T>*, TensorT<T>*, TensorT<T>*);                                             \
  template void add_forward<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>&);                                    \
  template void global_avg_pool_forward<T>(const TensorT<T>&, TensorT<T>&);                                           \
  template void global_avg_pool_backward<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>&);                       \
  template void softmax_forward<T>(const TensorT<T>&, const std::vector<int>*, TensorT<T>&, double*);                 \
  template void softmax_backward<T>(const TensorT<T>&, const std::vector<int>&, TensorT<T>&);                         \
  template void channel_select_forward<T>(const TensorT<T>&, const ChannelSelectSpec&, TensorT<T>&);                  \
  template void channel_select_backward<T>(const ChannelSelectSpec&, const TensorT<T>&, TensorT<T>&);                 \
  template void channel_merge_forward<T>(const TensorT<T>&, const TensorT<T>&, const ChannelMergeSpec&, TensorT<T>&); \
  template void channel_merge_backward<T>(const ChannelMergeSpec&, const TensorT<T>&, TensorT<T>*, TensorT<T>*);      \
  template void downsample_pad_forward<T>(const TensorT<T>&, const DownsamplePadSpec&, TensorT<T>&);                  \
  template void downsample_pad_backward<T>(const TensorT<T>&, const DownsamplePadSpec&, const TensorT<T>&, TensorT<T>&);

DEEPCORRECT_INSTANTIATE(float)
DEEPCORRECT_INSTANTIATE(double)

#undef DEEPCORRECT_INSTANTIATE

}  // namespace deepcorrect::math
