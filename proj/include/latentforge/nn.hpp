#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

// Minimal NCHW tensor, convolution and optimizer kit for the student networks.
// Layers cache what backward() needs from the most recent forward().

namespace lf::nn {

template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  T* sample(int i) { return data.data() + i * sample_size(); }
  const T* sample(int i) const { return data.data() + i * sample_size(); }
  T& at(int i, int ch, int y, int x) { return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x]; }
  T at(int i, int ch, int y, int x) const { return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x]; }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

template <class T>
struct Parameter {
  std::string name;
  std::vector<T> value, grad, m, v;

  Parameter() = default;
  Parameter(std::string n, std::size_t size) : name(std::move(n)), value(size), grad(size), m(size), v(size) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

/// Concatenate along channels.
template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_shape(a.n == b.n && a.h == b.h && a.w == b.w, "concat_channels: shape mismatch");
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_size(), out.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_size(), out.sample(i) + a.sample_size());
  }
  return out;
}

/// Channels [begin, begin + count).
template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int count) {
  require_shape(begin >= 0 && begin + count <= x.c, "slice_channels: range out of bounds");
  Tensor<T> out(x.n, count, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    const T* src = x.sample(i) + begin * x.plane();
    std::copy(src, src + count * x.plane(), out.sample(i));
  }
  return out;
}

template <class T>
class Conv2d {
 public:
  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Conv2d() = default;
  Conv2d(std::string name, int in, int out, int kernel, int stride, int pad)
      : in_(in),
        out_(out),
        k_(kernel),
        stride_(stride),
        pad_(pad),
        weight_(name + ".weight", static_cast<std::size_t>(out) * in * kernel * kernel),
        bias_(name + ".bias", static_cast<std::size_t>(out)) {}

  /// He-normal weights scaled by `gain`, zero bias.
  void init(Rng& rng, double gain = 1.0) {
    const double std = gain * std::sqrt(2.0 / (in_ * k_ * k_));
    for (auto& v : weight_.value) v = static_cast<T>(std * rng.normal());
    std::fill(bias_.value.begin(), bias_.value.end(), T(0));
  }

  int out_size(int size) const { return (size + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& x) {
    require_shape(x.c == in_, "Conv2d: input channel mismatch");
    in_h_ = x.h;
    in_w_ = x.w;
    const int oh = out_size(x.h), ow = out_size(x.w);
    Tensor<T> y(x.n, out_, oh, ow);
    cols_.resize(x.n);
    const Eigen::Map<const RowMat> wmat(weight_.value.data(), out_, in_ * k_ * k_);
    const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bvec(bias_.value.data(), out_);
    for (int i = 0; i < x.n; ++i) {
      im2col(x.sample(i), x.h, x.w, oh, ow, cols_[i]);
      Eigen::Map<RowMat> ymat(y.sample(i), out_, oh * ow);
      ymat.noalias() = wmat * cols_[i];
      ymat.colwise() += bvec;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    require_shape(gy.c == out_ && gy.n == static_cast<int>(cols_.size()), "Conv2d: gradient shape mismatch");
    Tensor<T> gx(gy.n, in_, in_h_, in_w_);
    const Eigen::Map<const RowMat> wmat(weight_.value.data(), out_, in_ * k_ * k_);
    Eigen::Map<RowMat> gw(weight_.grad.data(), out_, in_ * k_ * k_);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb(bias_.grad.data(), out_);
    RowMat gcols;
    for (int i = 0; i < gy.n; ++i) {
      const Eigen::Map<const RowMat> gmat(gy.sample(i), out_, gy.h * gy.w);
      gw.noalias() += gmat * cols_[i].transpose();
      gb += gmat.rowwise().sum();
      gcols.noalias() = wmat.transpose() * gmat;
      col2im(gcols, gy.h, gy.w, gx.sample(i));
    }
    return gx;
  }

  std::vector<Parameter<T>*> parameters() { return {&weight_, &bias_}; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  void im2col(const T* x, int h, int w, int oh, int ow, RowMat& cols) const {
    cols.setZero(in_ * k_ * k_, oh * ow);
    for (int ci = 0; ci < in_; ++ci)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          T* row = cols.data() + static_cast<std::size_t>((ci * k_ + ky) * k_ + kx) * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            const T* src = x + (static_cast<std::size_t>(ci) * h + iy) * w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < w) row[oy * ow + ox] = src[ix];
            }
          }
        }
  }

  void col2im(const RowMat& cols, int oh, int ow, T* gx) const {
    for (int ci = 0; ci < in_; ++ci)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const T* row = cols.data() + static_cast<std::size_t>((ci * k_ + ky) * k_ + kx) * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= in_h_) continue;
            T* dst = gx + (static_cast<std::size_t>(ci) * in_h_ + iy) * in_w_;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < in_w_) dst[ix] += row[oy * ow + ox];
            }
          }
        }
  }

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  int in_h_ = 0, in_w_ = 0;
  Parameter<T> weight_, bias_;
  std::vector<RowMat> cols_;
};

template <class T>
class LeakyRelu {
 public:
  explicit LeakyRelu(T slope = T(0.2)) : slope_(slope) {}

  Tensor<T> forward(const Tensor<T>& x) {
    input_ = x;
    Tensor<T> y = x;
    for (auto& v : y.data)
      if (v < T(0)) v *= slope_;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) const {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (input_.data[i] < T(0)) gx.data[i] *= slope_;
    return gx;
  }

 private:
  T slope_;
  Tensor<T> input_;
};

template <class T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  Tensor<T> y(x.n, x.c, 2 * x.h, 2 * x.w);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx) y.at(i, ch, yy, xx) = x.at(i, ch, yy / 2, xx / 2);
  return y;
}

template <class T>
Tensor<T> upsample2x_backward(const Tensor<T>& gy) {
  Tensor<T> gx(gy.n, gy.c, gy.h / 2, gy.w / 2);
  for (int i = 0; i < gy.n; ++i)
    for (int ch = 0; ch < gy.c; ++ch)
      for (int yy = 0; yy < gy.h; ++yy)
        for (int xx = 0; xx < gy.w; ++xx) gx.at(i, ch, yy / 2, xx / 2) += gy.at(i, ch, yy, xx);
  return gx;
}

template <class T>
Tensor<T> avgpool2x(const Tensor<T>& x) {
  Tensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx)
          y.at(i, ch, yy, xx) = T(0.25) * (x.at(i, ch, 2 * yy, 2 * xx) + x.at(i, ch, 2 * yy, 2 * xx + 1) +
                                           x.at(i, ch, 2 * yy + 1, 2 * xx) + x.at(i, ch, 2 * yy + 1, 2 * xx + 1));
  return y;
}

template <class T>
Tensor<T> avgpool2x_backward(const Tensor<T>& gy) {
  Tensor<T> gx(gy.n, gy.c, gy.h * 2, gy.w * 2);
  for (int i = 0; i < gy.n; ++i)
    for (int ch = 0; ch < gy.c; ++ch)
      for (int yy = 0; yy < gx.h; ++yy)
        for (int xx = 0; xx < gx.w; ++xx) gx.at(i, ch, yy, xx) = T(0.25) * gy.at(i, ch, yy / 2, xx / 2);
  return gx;
}

/// Adam with bias correction.
template <class T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, double lr, double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_), c2 = 1.0 - std::pow(beta2_, t_);
    for (auto* p : params_)
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = p->grad[i];
        p->m[i] = static_cast<T>(beta1_ * p->m[i] + (1 - beta1_) * g);
        p->v[i] = static_cast<T>(beta2_ * p->v[i] + (1 - beta2_) * g * g);
        const double mhat = p->m[i] / c1, vhat = p->v[i] / c2;
        p->value[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<Parameter<T>*> params_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

}  // namespace lf::nn
