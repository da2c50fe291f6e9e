/**
 * Copyright 2026 The ltuda Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ltuda/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

#include <Eigen/Core>

namespace ltuda {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

template <typename T>
constexpr T prob_eps() {
  if constexpr (std::is_same_v<T, float>) {
    return T(1e-6);
  } else {
    return T(1e-12);
  }
}

// Zero-padded "same" im2col for odd k; cols is (C*k*k) x (H*W).
template <typename T>
void im2col(const T* x, int channels, int height, int width, int k, T* cols) {
  const int pad = k / 2;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int c = 0; c < channels; ++c) {
    const T* src = x + c * plane;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * plane;
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - pad;
          T* out = row + static_cast<std::size_t>(y) * width;
          if (sy < 0 || sy >= height) {
            std::fill(out, out + width, T(0));
            continue;
          }
          const T* in = src + static_cast<std::size_t>(sy) * width;
          const int shift = kx - pad;
          const int x0 = std::max(0, -shift);
          const int x1 = std::min(width, width - shift);
          std::fill(out, out + x0, T(0));
          if (x1 > x0) std::copy(in + x0 + shift, in + x1 + shift, out + x0);
          std::fill(out + std::max(x1, x0), out + width, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int channels, int height, int width, int k, T* dx) {
  const int pad = k / 2;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int c = 0; c < channels; ++c) {
    T* dst = dx + c * plane;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * plane;
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= height) continue;
          const T* __restrict in = row + static_cast<std::size_t>(y) * width;
          T* __restrict out = dst + static_cast<std::size_t>(sy) * width;
          const int shift = kx - pad;
          const int x0 = std::max(0, -shift);
          const int x1 = std::min(width, width - shift);
          in += x0;
          out += x0 + shift;
          for (int xx = 0; xx < x1 - x0; ++xx) out[xx] += in[xx];
        }
      }
    }
  }
}

// Per-thread scratch buffer grown on demand; contents are not cleared.
template <typename T>
T* scratch(int slot, std::size_t count) {
  thread_local std::vector<T> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < count) b.resize(count);
  return b.data();
}

template <typename T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

// Plain left-to-right sums. Eigen's vectorised reductions peel differently
// depending on pointer alignment, which made runs depend on allocation
// addresses.
template <typename T>
double plain_sum(const T* v, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += static_cast<double>(v[i]);
  return s;
}

template <typename T>
double plain_sq_dev(const T* v, Eigen::Index n, double mean) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = static_cast<double>(v[i]) - mean;
    s += d * d;
  }
  return s;
}

template <typename T>
double plain_dot(const T* a, const T* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (auto& v : t.data) v = v > T(0) ? v : T(0);
}

// dy <- dy * [out > 0]
template <typename T>
void relu_mask(const Tensor<T>& out, Tensor<T>& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    if (!(out.data[i] > T(0))) dy.data[i] = T(0);
  }
}

}  // namespace

template <typename T>
UNet<T>::UNet(const BackboneConfig& config, std::uint64_t seed) : config_(config) {
  if (config.depth < 1 || config.base_width < 1 || config.embed_dim < 1 || config.num_classes < 1 ||
      config.in_channels < 1) {
    throw ShapeError("backbone config values must be positive");
  }
  std::mt19937_64 rng(seed);
  int channels = config.in_channels;
  for (int level = 0; level <= config.depth; ++level) {
    const int out = config.base_width << level;
    encoders_.push_back(make_block("enc" + std::to_string(level), channels, out, rng));
    channels = out;
  }
  ups_.resize(static_cast<std::size_t>(config.depth));
  decoders_.resize(static_cast<std::size_t>(config.depth));
  for (int level = config.depth - 1; level >= 0; --level) {
    const int out = config.base_width << level;
    UpConv up;
    up.in = channels;
    up.out = out;
    const std::string name = "up" + std::to_string(level);
    up.weight = add_param(name + ".weight", {channels, out, 2, 2}, true);
    up.bias = add_param(name + ".bias", {out}, true);
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / channels));
    for (auto& v : params_[up.weight].value) v = static_cast<T>(init(rng));
    ups_[static_cast<std::size_t>(level)] = up;
    decoders_[static_cast<std::size_t>(level)] = make_block("dec" + std::to_string(level), 2 * out, out, rng);
    channels = out;
  }
  embed_ = make_conv("embed", channels, config.embed_dim, 1, rng);
  head_ = make_conv("head", config.embed_dim, config.num_classes, 1, rng);
  // 1x1 projections without a following ReLU use fan-in variance.
  for (const Conv* conv : {&embed_, &head_}) {
    std::normal_distribution<double> init(0.0, std::sqrt(1.0 / conv->in));
    for (auto& v : params_[conv->weight].value) v = static_cast<T>(init(rng));
  }
}

template <typename T>
std::size_t UNet<T>::add_param(const std::string& name, std::vector<int> shape, bool trainable) {
  Parameter<T> p;
  p.name = name;
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  p.shape = std::move(shape);
  p.value.assign(count, T(0));
  p.trainable = trainable;
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

template <typename T>
typename UNet<T>::Conv UNet<T>::make_conv(const std::string& name, int in, int out, int k, std::mt19937_64& rng) {
  Conv conv;
  conv.in = in;
  conv.out = out;
  conv.k = k;
  conv.weight = add_param(name + ".weight", {out, in, k, k}, true);
  conv.bias = add_param(name + ".bias", {out}, true);
  std::normal_distribution<double> init(0.0, std::sqrt(2.0 / (in * k * k)));
  for (auto& v : params_[conv.weight].value) v = static_cast<T>(init(rng));
  return conv;
}

template <typename T>
typename UNet<T>::Norm UNet<T>::make_norm(const std::string& name, int channels) {
  Norm norm;
  norm.channels = channels;
  norm.gamma = add_param(name + ".gamma", {channels}, true);
  norm.beta = add_param(name + ".beta", {channels}, true);
  norm.mean = add_param(name + ".running_mean", {channels}, false);
  norm.var = add_param(name + ".running_var", {channels}, false);
  std::fill(params_[norm.gamma].value.begin(), params_[norm.gamma].value.end(), T(1));
  std::fill(params_[norm.var].value.begin(), params_[norm.var].value.end(), T(1));
  return norm;
}

template <typename T>
typename UNet<T>::Block UNet<T>::make_block(const std::string& name, int in, int out, std::mt19937_64& rng) {
  Block block;
  block.conv1 = make_conv(name + ".conv1", in, out, 3, rng);
  block.norm1 = make_norm(name + ".bn1", out);
  block.conv2 = make_conv(name + ".conv2", out, out, 3, rng);
  block.norm2 = make_norm(name + ".bn2", out);
  return block;
}

template <typename T>
void UNet<T>::check_input(const Tensor<T>& input) const {
  const int stride = 1 << config_.depth;
  if (input.n < 1 || input.c != config_.in_channels) {
    throw ShapeError("backbone input must be N x " + std::to_string(config_.in_channels) + " x H x W");
  }
  if (input.h % stride != 0 || input.w % stride != 0 || input.h == 0 || input.w == 0) {
    throw ShapeError("input " + std::to_string(input.h) + "x" + std::to_string(input.w) + " not divisible by 2^" +
                     std::to_string(config_.depth));
  }
}

template <typename T>
void UNet<T>::conv_forward(const Conv& conv, const Tensor<T>& x, Tensor<T>& y) const {
  y.reshape(x.n, conv.out, x.h, x.w);
  const auto plane = static_cast<Eigen::Index>(x.plane());
  const ConstMatMap<T> weight(params_[conv.weight].value.data(), conv.out, conv.in * conv.k * conv.k);
  const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(params_[conv.bias].value.data(), conv.out);
  T* cols = conv.k > 1 ? scratch<T>(0, static_cast<std::size_t>(conv.in) * conv.k * conv.k * x.plane()) : nullptr;
  for (int i = 0; i < x.n; ++i) {
    MatMap<T> out(y.sample(i), conv.out, plane);
    if (conv.k == 1) {
      out.noalias() = weight * ConstMatMap<T>(x.sample(i), conv.in, plane);
    } else {
      im2col(x.sample(i), conv.in, x.h, x.w, conv.k, cols);
      out.noalias() = weight * ConstMatMap<T>(cols, conv.in * conv.k * conv.k, plane);
    }
    out.colwise() += bias;
  }
}

template <typename T>
void UNet<T>::conv_backward(const Conv& conv, const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx) {
  auto& wp = params_[conv.weight];
  auto& bp = params_[conv.bias];
  if (wp.grad.size() != wp.value.size()) wp.grad.assign(wp.value.size(), T(0));
  if (bp.grad.size() != bp.value.size()) bp.grad.assign(bp.value.size(), T(0));
  const auto plane = static_cast<Eigen::Index>(x.plane());
  const auto kk = conv.in * conv.k * conv.k;
  const ConstMatMap<T> weight(wp.value.data(), conv.out, kk);
  MatMap<T> dweight(wp.grad.data(), conv.out, kk);
  VecMap<T> dbias(bp.grad.data(), conv.out);
  if (dx) dx->resize(x.n, x.c, x.h, x.w);
  T* cols = conv.k > 1 ? scratch<T>(0, static_cast<std::size_t>(kk) * x.plane()) : nullptr;
  T* dcols = conv.k > 1 && dx ? scratch<T>(1, static_cast<std::size_t>(kk) * x.plane()) : nullptr;
  for (int i = 0; i < x.n; ++i) {
    const ConstMatMap<T> g(dy.sample(i), conv.out, plane);
    for (int o = 0; o < conv.out; ++o) dbias[o] += static_cast<T>(plain_sum(dy.sample(i) + o * plane, plane));
    if (conv.k == 1) {
      const ConstMatMap<T> in(x.sample(i), conv.in, plane);
      dweight.noalias() += g * in.transpose();
      if (dx) MatMap<T>(dx->sample(i), conv.in, plane).noalias() = weight.transpose() * g;
    } else {
      im2col(x.sample(i), conv.in, x.h, x.w, conv.k, cols);
      dweight.noalias() += g * ConstMatMap<T>(cols, kk, plane).transpose();
      if (dx) {
        MatMap<T>(dcols, kk, plane).noalias() = weight.transpose() * g;
        col2im_add(dcols, conv.in, x.h, x.w, conv.k, dx->sample(i));
      }
    }
  }
}

template <typename T>
void UNet<T>::norm_forward(const Norm& norm, const Tensor<T>& x, Tensor<T>& y, NormCache& cache, Mode mode) {
  y.reshape(x.n, x.c, x.h, x.w);
  cache.xhat.reshape(x.n, x.c, x.h, x.w);
  cache.inv_std.assign(static_cast<std::size_t>(x.c), T(0));
  const auto& gamma = params_[norm.gamma].value;
  const auto& beta = params_[norm.beta].value;
  auto& running_mean = params_[norm.mean].value;
  auto& running_var = params_[norm.var].value;
  const auto plane = static_cast<Eigen::Index>(x.plane());
  const double count = static_cast<double>(x.n) * static_cast<double>(plane);
  for (int c = 0; c < x.c; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (mode == Mode::kTrain) {
      for (int i = 0; i < x.n; ++i) mean += plain_sum(x.sample(i) + c * plane, plane);
      mean /= count;
      for (int i = 0; i < x.n; ++i) {
        var += plain_sq_dev(x.sample(i) + c * plane, plane, mean);
      }
      var /= count;
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running_mean[c] = static_cast<T>((1.0 - kBnMomentum) * running_mean[c] + kBnMomentum * mean);
      running_var[c] = static_cast<T>((1.0 - kBnMomentum) * running_var[c] + kBnMomentum * unbiased);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + kBnEps);
    cache.inv_std[c] = static_cast<T>(inv_std);
    const T m = static_cast<T>(mean);
    const T s = static_cast<T>(inv_std);
    for (int i = 0; i < x.n; ++i) {
      ArrMap<T> h(cache.xhat.sample(i) + c * plane, plane);
      h = (ConstArrMap<T>(x.sample(i) + c * plane, plane) - m) * s;
      ArrMap<T>(y.sample(i) + c * plane, plane) = gamma[c] * h + beta[c];
    }
  }
}

template <typename T>
void UNet<T>::norm_backward(const Norm& norm, const Tensor<T>& dy, const NormCache& cache, Mode mode, Tensor<T>& dx) {
  auto& gp = params_[norm.gamma];
  auto& bp = params_[norm.beta];
  if (gp.grad.size() != gp.value.size()) gp.grad.assign(gp.value.size(), T(0));
  if (bp.grad.size() != bp.value.size()) bp.grad.assign(bp.value.size(), T(0));
  dx.reshape(dy.n, dy.c, dy.h, dy.w);
  const auto plane = static_cast<Eigen::Index>(dy.plane());
  const double count = static_cast<double>(dy.n) * static_cast<double>(plane);
  for (int c = 0; c < dy.c; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int i = 0; i < dy.n; ++i) {
      sum_dy += plain_sum(dy.sample(i) + c * plane, plane);
      sum_dy_xhat += plain_dot(dy.sample(i) + c * plane, cache.xhat.sample(i) + c * plane, plane);
    }
    gp.grad[c] += static_cast<T>(sum_dy_xhat);
    bp.grad[c] += static_cast<T>(sum_dy);
    const T scale = static_cast<T>(static_cast<double>(gp.value[c]) * cache.inv_std[c]);
    const T mean_dy = static_cast<T>(sum_dy / count);
    const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / count);
    for (int i = 0; i < dy.n; ++i) {
      const ConstArrMap<T> g(dy.sample(i) + c * plane, plane);
      const ConstArrMap<T> h(cache.xhat.sample(i) + c * plane, plane);
      ArrMap<T> o(dx.sample(i) + c * plane, plane);
      if (mode == Mode::kTrain) {
        o = scale * (g - mean_dy - h * mean_dy_xhat);
      } else {
        o = scale * g;
      }
    }
  }
}

template <typename T>
void UNet<T>::block_forward(const Block& block, const Tensor<T>& x, BlockCache& cache, Mode mode) {
  cache.input = x;
  conv_forward(block.conv1, x, cache.c1);
  norm_forward(block.norm1, cache.c1, cache.a1, cache.n1, mode);
  relu_inplace(cache.a1);
  conv_forward(block.conv2, cache.a1, cache.c2);
  norm_forward(block.norm2, cache.c2, cache.out, cache.n2, mode);
  relu_inplace(cache.out);
}

template <typename T>
Tensor<T> UNet<T>::block_backward(const Block& block, const Tensor<T>& dy, BlockCache& cache, bool want_dx) {
  Tensor<T> g = dy;
  relu_mask(cache.out, g);
  Tensor<T> dc2;
  norm_backward(block.norm2, g, cache.n2, last_mode_, dc2);
  Tensor<T> da1;
  conv_backward(block.conv2, cache.a1, dc2, &da1);
  relu_mask(cache.a1, da1);
  Tensor<T> dc1;
  norm_backward(block.norm1, da1, cache.n1, last_mode_, dc1);
  Tensor<T> dx;
  conv_backward(block.conv1, cache.input, dc1, want_dx ? &dx : nullptr);
  return dx;
}

template <typename T>
void UNet<T>::upconv_forward(const UpConv& up, const Tensor<T>& x, Tensor<T>& y) const {
  y.reshape(x.n, up.out, x.h * 2, x.w * 2);
  const auto plane = static_cast<Eigen::Index>(x.plane());
  const ConstMatMap<T> weight(params_[up.weight].value.data(), up.in, up.out * 4);
  const auto& bias = params_[up.bias].value;
  RowMat<T> z(up.out * 4, plane);
  for (int i = 0; i < x.n; ++i) {
    z.noalias() = weight.transpose() * ConstMatMap<T>(x.sample(i), up.in, plane);
    for (int o = 0; o < up.out; ++o) {
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          const T* row = z.data() + static_cast<std::size_t>((o * 2 + a) * 2 + b) * plane;
          for (int yy = 0; yy < x.h; ++yy) {
            T* dst = &y.at(i, o, 2 * yy + a, b);
            const T* src = row + static_cast<std::size_t>(yy) * x.w;
            for (int xx = 0; xx < x.w; ++xx) dst[2 * xx] = src[xx] + bias[o];
          }
        }
      }
    }
  }
}

template <typename T>
void UNet<T>::upconv_backward(const UpConv& up, const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx) {
  auto& wp = params_[up.weight];
  auto& bp = params_[up.bias];
  if (wp.grad.size() != wp.value.size()) wp.grad.assign(wp.value.size(), T(0));
  if (bp.grad.size() != bp.value.size()) bp.grad.assign(bp.value.size(), T(0));
  dx.reshape(x.n, x.c, x.h, x.w);
  const auto plane = static_cast<Eigen::Index>(x.plane());
  const ConstMatMap<T> weight(wp.value.data(), up.in, up.out * 4);
  MatMap<T> dweight(wp.grad.data(), up.in, up.out * 4);
  RowMat<T> dz(up.out * 4, plane);
  for (int i = 0; i < x.n; ++i) {
    for (int o = 0; o < up.out; ++o) {
      double db = 0.0;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          T* row = dz.data() + static_cast<std::size_t>((o * 2 + a) * 2 + b) * plane;
          for (int yy = 0; yy < x.h; ++yy) {
            const T* src = dy.data.data() + ((static_cast<std::size_t>(i) * dy.c + o) * dy.h + 2 * yy + a) * dy.w + b;
            T* dst = row + static_cast<std::size_t>(yy) * x.w;
            for (int xx = 0; xx < x.w; ++xx) {
              dst[xx] = src[2 * xx];
              db += src[2 * xx];
            }
          }
        }
      }
      bp.grad[o] += static_cast<T>(db);
    }
    const ConstMatMap<T> in(x.sample(i), up.in, plane);
    dweight.noalias() += in * dz.transpose();
    MatMap<T>(dx.sample(i), up.in, plane).noalias() = weight * dz;
  }
}

template <typename T>
const typename UNet<T>::Output& UNet<T>::forward(const Tensor<T>& input, Mode mode) {
  check_input(input);
  last_mode_ = mode;
  const auto depth = static_cast<std::size_t>(config_.depth);
  enc_cache_.resize(depth + 1);
  pooled_.resize(depth);
  pool_argmax_.resize(depth);
  up_out_.resize(depth);
  dec_cache_.resize(depth);

  for (std::size_t level = 0; level <= depth; ++level) {
    const Tensor<T>& x = level == 0 ? input : pooled_[level - 1];
    block_forward(encoders_[level], x, enc_cache_[level], mode);
    if (level == depth) break;
    // 2x2 max pooling
    const Tensor<T>& src = enc_cache_[level].out;
    Tensor<T>& dst = pooled_[level];
    dst.reshape(src.n, src.c, src.h / 2, src.w / 2);
    auto& argmax = pool_argmax_[level];
    argmax.assign(dst.size(), 0);
    std::size_t o = 0;
    for (int i = 0; i < src.n; ++i) {
      for (int c = 0; c < src.c; ++c) {
        for (int yy = 0; yy < dst.h; ++yy) {
          for (int xx = 0; xx < dst.w; ++xx, ++o) {
            std::uint32_t best = 0;
            T best_v = -std::numeric_limits<T>::infinity();
            for (int a = 0; a < 2; ++a) {
              for (int b = 0; b < 2; ++b) {
                const std::size_t idx =
                    ((static_cast<std::size_t>(i) * src.c + c) * src.h + 2 * yy + a) * src.w + 2 * xx + b;
                if (src.data[idx] > best_v) {
                  best_v = src.data[idx];
                  best = static_cast<std::uint32_t>(idx);
                }
              }
            }
            dst.data[o] = best_v;
            argmax[o] = best;
          }
        }
      }
    }
  }

  const Tensor<T>* current = &enc_cache_[depth].out;
  for (std::size_t step = 0; step < depth; ++step) {
    const std::size_t level = depth - 1 - step;
    upconv_forward(ups_[level], *current, up_out_[level]);
    const Tensor<T>& up = up_out_[level];
    const Tensor<T>& skip = enc_cache_[level].out;
    Tensor<T> cat;
    cat.reshape(up.n, up.c + skip.c, up.h, up.w);
    for (int i = 0; i < up.n; ++i) {
      std::copy(up.sample(i), up.sample(i) + up.sample_size(), cat.sample(i));
      std::copy(skip.sample(i), skip.sample(i) + skip.sample_size(), cat.sample(i) + up.sample_size());
    }
    block_forward(decoders_[level], cat, dec_cache_[level], mode);
    current = &dec_cache_[level].out;
  }

  conv_forward(embed_, *current, output_.embeddings);
  conv_forward(head_, output_.embeddings, output_.logits);
  output_.probs = output_.logits;
  constexpr T eps = prob_eps<T>();
  for (auto& v : output_.probs.data) {
    const T p = T(1) / (T(1) + std::exp(-v));
    v = std::clamp(p, eps, T(1) - eps);
  }
  return output_;
}

template <typename T>
Tensor<T> UNet<T>::backward(const Tensor<T>& grad_logits, const Tensor<T>* grad_embeddings, bool want_input_grad) {
  if (enc_cache_.empty()) throw ShapeError("backward() called before forward()");
  if (!grad_logits.same_shape(output_.logits)) throw ShapeError("grad_logits shape differs from logits");
  if (grad_embeddings && !grad_embeddings->same_shape(output_.embeddings)) {
    throw ShapeError("grad_embeddings shape differs from embeddings");
  }
  const auto depth = static_cast<std::size_t>(config_.depth);

  Tensor<T> d_embed;
  conv_backward(head_, output_.embeddings, grad_logits, &d_embed);
  if (grad_embeddings) {
    for (std::size_t i = 0; i < d_embed.data.size(); ++i) d_embed.data[i] += grad_embeddings->data[i];
  }
  Tensor<T> d_current;
  conv_backward(embed_, dec_cache_[0].out, d_embed, &d_current);

  std::vector<Tensor<T>> skip_grads(depth);
  for (std::size_t level = 0; level < depth; ++level) {
    Tensor<T> d_cat = block_backward(decoders_[level], d_current, dec_cache_[level], true);
    const Tensor<T>& up = up_out_[level];
    Tensor<T> d_up(up.n, up.c, up.h, up.w);
    Tensor<T>& d_skip = skip_grads[level];
    d_skip.reshape(up.n, d_cat.c - up.c, up.h, up.w);
    for (int i = 0; i < up.n; ++i) {
      const T* src = d_cat.sample(i);
      std::copy(src, src + up.sample_size(), d_up.sample(i));
      std::copy(src + up.sample_size(), src + d_cat.sample_size(), d_skip.sample(i));
    }
    const Tensor<T>& up_input = level + 1 == depth ? enc_cache_[depth].out : dec_cache_[level + 1].out;
    upconv_backward(ups_[level], up_input, d_up, d_current);
  }

  Tensor<T> d = block_backward(encoders_[depth], d_current, enc_cache_[depth], true);
  for (std::size_t step = 0; step < depth; ++step) {
    const std::size_t level = depth - 1 - step;
    Tensor<T> d_out = skip_grads[level];
    const auto& argmax = pool_argmax_[level];
    for (std::size_t o = 0; o < argmax.size(); ++o) d_out.data[argmax[o]] += d.data[o];
    d = block_backward(encoders_[level], d_out, enc_cache_[level], level > 0 || want_input_grad);
  }
  return want_input_grad ? d : Tensor<T>{};
}

template <typename T>
void UNet<T>::zero_grad() {
  for (auto& p : params_) {
    if (p.trainable) p.grad.assign(p.value.size(), T(0));
  }
}

template <typename T>
void UNet<T>::release_gradients() {
  for (auto& p : params_) {
    p.grad.clear();
    p.grad.shrink_to_fit();
  }
}

template <typename T>
bool UNet<T>::has_gradients() const {
  return std::any_of(params_.begin(), params_.end(), [](const Parameter<T>& p) { return !p.grad.empty(); });
}

template <typename T>
std::size_t UNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

template <typename T>
void ema_copy(const UNet<T>& student, UNet<T>& teacher, double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw ShapeError("EMA momentum must lie in [0, 1]");
  const auto& src = student.parameters();
  auto& dst = teacher.parameters();
  if (src.size() != dst.size()) throw ShapeError("EMA: parameter trees differ in length");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].shape != dst[i].shape || src[i].name != dst[i].name) {
      throw ShapeError("EMA: parameter '" + src[i].name + "' does not match '" + dst[i].name + "'");
    }
  }
  const T m = static_cast<T>(mu);
  const T one_minus = static_cast<T>(1.0 - mu);
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto& t = dst[i].value;
    const auto& s = src[i].value;
    if (mu == 0.0) {
      t = s;
    } else if (mu != 1.0) {
      for (std::size_t j = 0; j < t.size(); ++j) t[j] = m * t[j] + one_minus * s[j];
    }
  }
}

Tensor<float> stack_images(std::span<const ImageGrid* const> images) {
  if (images.empty()) throw ShapeError("cannot stack an empty image list");
  const Size2 size = images.front()->size();
  Tensor<float> out(static_cast<int>(images.size()), 1, size.height, size.width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_same_size(size, images[i]->size(), "stack_images");
    std::copy(images[i]->values().begin(), images[i]->values().end(), out.sample(static_cast<int>(i)));
  }
  return out;
}

ForegroundProbMaps probs_of(const Tensor<float>& probs, int i) {
  ForegroundProbMaps out(probs.c, Size2{probs.h, probs.w});
  const float* src = probs.sample(i);
  std::copy(src, src + probs.sample_size(), out.probs.begin());
  return out;
}

EmbeddingMap embeddings_of(const Tensor<float>& embeddings, int i) {
  EmbeddingMap out(embeddings.c, Size2{embeddings.h, embeddings.w});
  const float* src = embeddings.sample(i);
  std::copy(src, src + embeddings.sample_size(), out.values.begin());
  return out;
}

template class UNet<float>;
template class UNet<double>;
template void ema_copy<float>(const UNet<float>&, UNet<float>&, double);
template void ema_copy<double>(const UNet<double>&, UNet<double>&, double);

}  // namespace ltuda
