#include "affbench/nn.hpp"

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>

namespace affbench {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

namespace {

inline int out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

/// im2col for one sample: src [C,H,W] -> col [C*k*k, oh*ow], row-major.
void im2col(const float* src, int C, int H, int W, int k, int stride, int pad, float* col,
            int oh, int ow) {
  for (int c = 0; c < C; ++c) {
    const float* plane = src + static_cast<int64_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + (static_cast<int64_t>(c) * k * k + ky * k + kx) *
                               (static_cast<int64_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          int y = oy * stride - pad + ky;
          if (y < 0 || y >= H) {
            std::fill(row + static_cast<int64_t>(oy) * ow, row + (static_cast<int64_t>(oy) + 1) * ow, 0.0f);
            continue;
          }
          const float* srow = plane + static_cast<int64_t>(y) * W;
          float* drow = row + static_cast<int64_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            int x = ox * stride - pad + kx;
            drow[ox] = (x < 0 || x >= W) ? 0.0f : srow[x];
          }
        }
      }
    }
  }
}

/// Transpose of im2col: accumulates col [C*k*k, oh*ow] back into dst [C,H,W].
void col2im_acc(const float* col, int C, int H, int W, int k, int stride, int pad, float* dst,
                int oh, int ow) {
  for (int c = 0; c < C; ++c) {
    float* plane = dst + static_cast<int64_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col + (static_cast<int64_t>(c) * k * k + ky * k + kx) *
                                     (static_cast<int64_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          int y = oy * stride - pad + ky;
          if (y < 0 || y >= H) continue;
          float* drow = plane + static_cast<int64_t>(y) * W;
          const float* srow = row + static_cast<int64_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            int x = ox * stride - pad + kx;
            if (x >= 0 && x < W) drow[x] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, std::string name)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad) {
  weight_.name = std::move(name);
  weight_.value = Tensor({out_ch, static_cast<int64_t>(in_ch) * kernel * kernel});
  weight_.grad = Tensor::zeros_like(weight_.value);
}

void Conv2d::init(SplitMix64& rng) {
  // He normal, fan-out.
  double std = std::sqrt(2.0 / (static_cast<double>(out_ch_) * kernel_ * kernel_));
  for (int64_t i = 0; i < weight_.value.numel(); ++i)
    weight_.value[i] = static_cast<float>(rng.normal() * std);
}

Tensor Conv2d::forward(const Tensor& x, Cache& cache, bool training) {
  if (x.ndim() != 4 || x.dim(1) != in_ch_)
    throw std::invalid_argument("Conv2d " + weight_.name + ": bad input shape " + x.shape_str());
  const int N = static_cast<int>(x.dim(0)), H = static_cast<int>(x.dim(2)),
            W = static_cast<int>(x.dim(3));
  const int oh = out_size(H, kernel_, stride_, pad_), ow = out_size(W, kernel_, stride_, pad_);
  const int64_t K = static_cast<int64_t>(in_ch_) * kernel_ * kernel_;
  const int64_t P = static_cast<int64_t>(oh) * ow;

  Tensor y({N, out_ch_, oh, ow});
  Tensor col({K, P});
  CMapRM Wm(weight_.value.data(), out_ch_, K);
  for (int n = 0; n < N; ++n) {
    im2col(x.data() + static_cast<int64_t>(n) * in_ch_ * H * W, in_ch_, H, W, kernel_, stride_,
           pad_, col.data(), oh, ow);
    MapRM ym(y.data() + static_cast<int64_t>(n) * out_ch_ * P, out_ch_, P);
    CMapRM cm(col.data(), K, P);
    ym.noalias() = Wm * cm;
  }
  if (training) cache.t.assign(1, x);  // input is re-im2col'ed in backward
  return y;
}

Tensor Conv2d::backward(const Tensor& gy, const Cache& cache) {
  const Tensor& x = cache.t.at(0);
  const int N = static_cast<int>(x.dim(0)), H = static_cast<int>(x.dim(2)),
            W = static_cast<int>(x.dim(3));
  const int oh = static_cast<int>(gy.dim(2)), ow = static_cast<int>(gy.dim(3));
  const int64_t K = static_cast<int64_t>(in_ch_) * kernel_ * kernel_;
  const int64_t P = static_cast<int64_t>(oh) * ow;

  Tensor gx = Tensor::zeros_like(x);
  Tensor col({K, P}), gcol({K, P});
  CMapRM Wm(weight_.value.data(), out_ch_, K);
  MapRM gWm(weight_.grad.data(), out_ch_, K);
  for (int n = 0; n < N; ++n) {
    CMapRM gym(gy.data() + static_cast<int64_t>(n) * out_ch_ * P, out_ch_, P);
    im2col(x.data() + static_cast<int64_t>(n) * in_ch_ * H * W, in_ch_, H, W, kernel_, stride_,
           pad_, col.data(), oh, ow);
    CMapRM cm(col.data(), K, P);
    gWm.noalias() += gym * cm.transpose();
    MapRM gcm(gcol.data(), K, P);
    gcm.noalias() = Wm.transpose() * gym;
    col2im_acc(gcol.data(), in_ch_, H, W, kernel_, stride_, pad_,
               gx.data() + static_cast<int64_t>(n) * in_ch_ * H * W, oh, ow);
  }
  return gx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, std::string name) : channels_(channels) {
  gamma_.name = name + ".gamma";
  gamma_.value = Tensor({channels}, 1.0f);
  gamma_.grad = Tensor({channels});
  beta_.name = name + ".beta";
  beta_.value = Tensor({channels});
  beta_.grad = Tensor({channels});
  running_mean_ = Tensor({channels});
  running_var_ = Tensor({channels}, 1.0f);
}

Tensor BatchNorm2d::forward(const Tensor& x, Cache& cache, bool training) {
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (C != channels_) throw std::invalid_argument("BatchNorm2d: channel mismatch");
  Tensor y = Tensor::zeros_like(x);
  Tensor mean({C}), invstd({C});

  if (training) {
    const double cnt = static_cast<double>(N) * HW;
    const float mom = refresh_n_ >= 0 ? 1.0f / static_cast<float>(++refresh_n_) : momentum_;
    for (int64_t c = 0; c < C; ++c) {
      double sum = 0, sq = 0;
      for (int64_t n = 0; n < N; ++n) {
        const float* p = x.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          sum += p[i];
          sq += static_cast<double>(p[i]) * p[i];
        }
      }
      double m = sum / cnt;
      double var = sq / cnt - m * m;
      if (var < 0) var = 0;
      mean[c] = static_cast<float>(m);
      invstd[c] = static_cast<float>(1.0 / std::sqrt(var + eps_));
      running_mean_[c] = (1 - mom) * running_mean_[c] + mom * static_cast<float>(m);
      // Running variance uses the unbiased estimate.
      double unbiased = cnt > 1 ? var * cnt / (cnt - 1) : var;
      running_var_[c] = (1 - mom) * running_var_[c] + mom * static_cast<float>(unbiased);
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      mean[c] = running_mean_[c];
      invstd[c] = 1.0f / std::sqrt(running_var_[c] + eps_);
    }
  }

  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const float* p = x.data() + (n * C + c) * HW;
      float* q = y.data() + (n * C + c) * HW;
      const float g = gamma_.value[c], b = beta_.value[c], m = mean[c], is = invstd[c];
      for (int64_t i = 0; i < HW; ++i) q[i] = (p[i] - m) * is * g + b;
    }

  if (training) {
    // Backward needs x-hat; recoverable from y: xhat = (y - beta) / gamma, but
    // gamma can pass through zero during training, so store mean/invstd + x.
    cache.t.assign({x, mean, invstd});
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy, const Cache& cache) {
  const Tensor& x = cache.t.at(0);
  const Tensor& mean = cache.t.at(1);
  const Tensor& invstd = cache.t.at(2);
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const double cnt = static_cast<double>(N) * HW;

  Tensor gx = Tensor::zeros_like(x);
  for (int64_t c = 0; c < C; ++c) {
    const float m = mean[c], is = invstd[c], g = gamma_.value[c];
    double sum_gy = 0, sum_gy_xhat = 0;
    for (int64_t n = 0; n < N; ++n) {
      const float* px = x.data() + (n * C + c) * HW;
      const float* pg = gy.data() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        sum_gy += pg[i];
        sum_gy_xhat += pg[i] * static_cast<double>((px[i] - m) * is);
      }
    }
    gamma_.grad[c] += static_cast<float>(sum_gy_xhat);
    beta_.grad[c] += static_cast<float>(sum_gy);

    const float k1 = static_cast<float>(sum_gy / cnt);
    const float k2 = static_cast<float>(sum_gy_xhat / cnt);
    for (int64_t n = 0; n < N; ++n) {
      const float* px = x.data() + (n * C + c) * HW;
      const float* pg = gy.data() + (n * C + c) * HW;
      float* pq = gx.data() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) {
        float xhat = (px[i] - m) * is;
        pq[i] = g * is * (pg[i] - k1 - xhat * k2);
      }
    }
  }
  return gx;
}

// ---------------------------------------------------------------------------
// ReLU

Tensor ReLU::forward(const Tensor& x, Cache& cache, bool training) {
  Tensor y = x;
  for (int64_t i = 0; i < y.numel(); ++i)
    if (y[i] < 0) y[i] = 0;
  if (training) cache.t.assign(1, y);
  return y;
}

Tensor ReLU::backward(const Tensor& gy, const Cache& cache) {
  const Tensor& y = cache.t.at(0);
  Tensor gx = gy;
  for (int64_t i = 0; i < gx.numel(); ++i)
    if (y[i] <= 0) gx[i] = 0;
  return gx;
}

// ---------------------------------------------------------------------------
// MaxPool2d

Tensor MaxPool2d::forward(const Tensor& x, Cache& cache, bool training) {
  const int N = static_cast<int>(x.dim(0)), C = static_cast<int>(x.dim(1)),
            H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
  const int oh = out_size(H, kernel_, stride_, pad_), ow = out_size(W, kernel_, stride_, pad_);
  Tensor y({N, C, oh, ow});
  std::vector<int32_t> idx(static_cast<size_t>(y.numel()));

  int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float* plane = x.data() + (static_cast<int64_t>(n) * C + c) * H * W;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox, ++o) {
          float best = -std::numeric_limits<float>::infinity();
          int32_t best_i = -1;
          for (int ky = 0; ky < kernel_; ++ky) {
            int yy = oy * stride_ - pad_ + ky;
            if (yy < 0 || yy >= H) continue;
            for (int kx = 0; kx < kernel_; ++kx) {
              int xx = ox * stride_ - pad_ + kx;
              if (xx < 0 || xx >= W) continue;
              float v = plane[yy * W + xx];
              if (v > best) {
                best = v;
                best_i = yy * W + xx;
              }
            }
          }
          y[o] = best;
          idx[static_cast<size_t>(o)] = best_i;
        }
    }
  if (training) {
    cache.idx.assign(1, std::move(idx));
    cache.t.assign(1, Tensor({N, C, H, W}));  // shape carrier for backward
  }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& gy, const Cache& cache) {
  const auto& idx = cache.idx.at(0);
  Tensor gx = Tensor::zeros_like(cache.t.at(0));
  const int64_t N = gx.dim(0), C = gx.dim(1);
  const int64_t HW = gx.dim(2) * gx.dim(3);
  const int64_t P = gy.dim(2) * gy.dim(3);
  int64_t o = 0;
  for (int64_t nc = 0; nc < N * C; ++nc) {
    float* plane = gx.data() + nc * HW;
    for (int64_t i = 0; i < P; ++i, ++o) plane[idx[static_cast<size_t>(o)]] += gy[o];
  }
  return gx;
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, Cache& cache, bool training) {
  const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor y({N, C});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const float* p = x.data() + (n * C + c) * HW;
      double s = 0;
      for (int64_t i = 0; i < HW; ++i) s += p[i];
      y[n * C + c] = static_cast<float>(s / HW);
    }
  if (training) cache.t.assign(1, Tensor({N, C, x.dim(2), x.dim(3)}));
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& gy, const Cache& cache) {
  Tensor gx = Tensor::zeros_like(cache.t.at(0));
  const int64_t N = gx.dim(0), C = gx.dim(1), HW = gx.dim(2) * gx.dim(3);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      float v = gy[n * C + c] / static_cast<float>(HW);
      float* p = gx.data() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) p[i] = v;
    }
  return gx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(int in_features, int out_features, std::string name)
    : in_(in_features), out_(out_features) {
  weight_.name = name;
  weight_.value = Tensor({out_, in_});
  weight_.grad = Tensor({out_, in_});
  bias_.name = name + ".bias";
  bias_.value = Tensor({out_});
  bias_.grad = Tensor({out_});
}

void Linear::init(SplitMix64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  for (int64_t i = 0; i < weight_.value.numel(); ++i)
    weight_.value[i] = static_cast<float>(rng.uniform(-bound, bound));
  for (int64_t i = 0; i < bias_.value.numel(); ++i)
    bias_.value[i] = static_cast<float>(rng.uniform(-bound, bound));
}

Tensor Linear::forward(const Tensor& x, Cache& cache, bool training) {
  const int64_t B = x.dim(0);
  if (x.dim(1) != in_)
    throw std::invalid_argument("Linear " + weight_.name + ": bad input " + x.shape_str());
  Tensor y({B, out_});
  CMapRM xm(x.data(), B, in_);
  CMapRM wm(weight_.value.data(), out_, in_);
  MapRM ym(y.data(), B, out_);
  ym.noalias() = xm * wm.transpose();
  for (int64_t n = 0; n < B; ++n)
    for (int64_t o = 0; o < out_; ++o) y[n * out_ + o] += bias_.value[o];
  if (training) cache.t.assign(1, x);
  return y;
}

Tensor Linear::backward(const Tensor& gy, const Cache& cache) {
  const Tensor& x = cache.t.at(0);
  const int64_t B = x.dim(0);
  Tensor gx({B, in_});
  CMapRM gym(gy.data(), B, out_);
  CMapRM xm(x.data(), B, in_);
  CMapRM wm(weight_.value.data(), out_, in_);
  MapRM gwm(weight_.grad.data(), out_, in_);
  MapRM gxm(gx.data(), B, in_);
  gwm.noalias() += gym.transpose() * xm;
  gxm.noalias() = gym * wm;
  for (int64_t n = 0; n < B; ++n)
    for (int64_t o = 0; o < out_; ++o) bias_.grad[o] += gy[n * out_ + o];
  return gx;
}

// ---------------------------------------------------------------------------
// Sequential

Tensor Sequential::forward(const Tensor& x, Cache& cache, bool training) {
  cache.children.resize(layers_.size());
  Tensor h = x;
  for (size_t i = 0; i < layers_.size(); ++i) h = layers_[i]->forward(h, cache.children[i], training);
  return h;
}

Tensor Sequential::backward(const Tensor& gy, const Cache& cache) {
  Tensor g = gy;
  for (size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, cache.children[i]);
  return g;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  if (dst.numel() != src.numel()) throw std::invalid_argument("add_inplace: size mismatch");
  for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

}  // namespace affbench
