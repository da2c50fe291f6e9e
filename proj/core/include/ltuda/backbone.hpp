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

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ltuda/grid.hpp"

namespace ltuda {

/// NCHW tensor.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T{})
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * plane(); }
  std::size_t size() const { return data.size(); }
  T* sample(int i) { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  const T* sample(int i) const { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  T& at(int i, int ch, int y, int x) {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  T at(int i, int ch, int y, int x) const { return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x]; }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  void resize(int n_, int c_, int h_, int w_) {
    n = n_;
    c = c_;
    h = h_;
    w = w_;
    data.assign(static_cast<std::size_t>(n_) * c_ * h_ * w_, T{});
  }
  /// Like resize() but leaves existing storage uninitialised-by-intent:
  /// for outputs that are overwritten in full.
  void reshape(int n_, int c_, int h_, int w_) {
    n = n_;
    c = c_;
    h = h_;
    w = w_;
    data.resize(static_cast<std::size_t>(n_) * c_ * h_ * w_);
  }
};

struct BackboneConfig {
  int in_channels = 1;
  int num_classes = 4;
  int depth = 4;
  int base_width = 16;
  int embed_dim = 64;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

enum class Mode { kTrain, kEval };

/// Named parameter or buffer. Buffers (BN running statistics) are not
/// trained but follow the EMA and are checkpointed.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool trainable = true;
};

/// 2D U-Net: encoder/decoder with skip connections, a 1x1 embedding
/// projection to `embed_dim`, and a 1x1 linear head to C sigmoid maps.
template <typename T>
class UNet {
 public:
  struct Output {
    Tensor<T> embeddings;  // N x D x H x W, raw (not normalized)
    Tensor<T> logits;      // N x C x H x W
    Tensor<T> probs;       // sigmoid(logits), clamped into (0,1)
  };

  UNet() = default;
  UNet(const BackboneConfig& config, std::uint64_t seed);

  const BackboneConfig& config() const { return config_; }

  /// Runs the network and caches activations for backward().
  const Output& forward(const Tensor<T>& input, Mode mode);

  /// Accumulates parameter gradients given dL/dlogits and optionally
  /// dL/dembeddings for the most recent forward(). Returns dL/dinput when
  /// `want_input_grad` is set, else an empty tensor.
  Tensor<T> backward(const Tensor<T>& grad_logits, const Tensor<T>* grad_embeddings, bool want_input_grad = false);

  void zero_grad();
  /// Drops gradient storage (EMA teacher never holds gradients).
  void release_gradients();
  bool has_gradients() const;

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Checks that H and W are divisible by 2^depth.
  void check_input(const Tensor<T>& input) const;

 private:
  struct Conv {
    int in = 0, out = 0, k = 1;
    std::size_t weight = 0, bias = 0;
  };
  struct Norm {
    int channels = 0;
    std::size_t gamma = 0, beta = 0, mean = 0, var = 0;
  };
  struct UpConv {
    int in = 0, out = 0;
    std::size_t weight = 0, bias = 0;
  };
  struct Block {
    Conv conv1, conv2;
    Norm norm1, norm2;
  };
  struct NormCache {
    std::vector<T> inv_std;
    Tensor<T> xhat;
  };
  struct BlockCache {
    Tensor<T> input, c1, a1, c2, out;  // a1 = relu(bn(c1)), out = relu(bn(c2))
    NormCache n1, n2;
  };

  std::size_t add_param(const std::string& name, std::vector<int> shape, bool trainable);
  Conv make_conv(const std::string& name, int in, int out, int k, std::mt19937_64& rng);
  Norm make_norm(const std::string& name, int channels);
  Block make_block(const std::string& name, int in, int out, std::mt19937_64& rng);

  void conv_forward(const Conv& conv, const Tensor<T>& x, Tensor<T>& y) const;
  void conv_backward(const Conv& conv, const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx);
  void norm_forward(const Norm& norm, const Tensor<T>& x, Tensor<T>& y, NormCache& cache, Mode mode);
  void norm_backward(const Norm& norm, const Tensor<T>& dy, const NormCache& cache, Mode mode, Tensor<T>& dx);
  void block_forward(const Block& block, const Tensor<T>& x, BlockCache& cache, Mode mode);
  Tensor<T> block_backward(const Block& block, const Tensor<T>& dy, BlockCache& cache, bool want_dx);
  void upconv_forward(const UpConv& up, const Tensor<T>& x, Tensor<T>& y) const;
  void upconv_backward(const UpConv& up, const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dx);

  BackboneConfig config_{};
  std::vector<Parameter<T>> params_;
  std::vector<Block> encoders_;  // depth encoders + bottleneck
  std::vector<UpConv> ups_;
  std::vector<Block> decoders_;
  Conv embed_{}, head_{};

  // forward caches
  Mode last_mode_ = Mode::kEval;
  std::vector<BlockCache> enc_cache_;
  std::vector<Tensor<T>> pooled_;
  std::vector<std::vector<std::uint32_t>> pool_argmax_;
  std::vector<Tensor<T>> up_out_;
  std::vector<BlockCache> dec_cache_;
  Output output_;
};

/// teacher <- mu * teacher + (1 - mu) * student over parameters and buffers.
template <typename T>
void ema_copy(const UNet<T>& student, UNet<T>& teacher, double mu);

/// Converts records' images into an N x 1 x H x W tensor.
Tensor<float> stack_images(std::span<const ImageGrid* const> images);

/// Extracts sample `i` of a network output into library value types.
ForegroundProbMaps probs_of(const Tensor<float>& probs, int i);
EmbeddingMap embeddings_of(const Tensor<float>& embeddings, int i);

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace ltuda
