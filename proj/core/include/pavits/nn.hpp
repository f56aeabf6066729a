// Copyright 2026 The pavits-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pavits/autograd.hpp"

namespace pavits::nn {

using ag::Index;
using ag::Matrix;
using ag::Tensor;
using Rng = std::mt19937_64;

Matrix uniform(Index rows, Index cols, double bound, Rng& rng);
Matrix standard_normal(Index rows, Index cols, Rng& rng);

// Ordered, named collection of trainable leaves. Order is registration order
// and is what checkpoints and optimizers iterate over.
class ParamStore {
 public:
  Tensor add(const std::string& name, Matrix init);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const Tensor* find(const std::string& name) const;
  std::size_t scalar_count() const;
  std::size_t scalar_count(const std::string& prefix) const;
  void zero_grad();
  // Frozen parameters are treated as constants by graphs recorded afterwards.
  void set_trainable(bool trainable);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Convolution over [channels x time]. A kernel-1 instance is a per-frame linear layer.
class Conv1d {
 public:
  Conv1d() = default;
  // Stride-1 "same" convolution.
  Conv1d(ParamStore& store, const std::string& name, Index in, Index out, Index kernel, Rng& rng,
         Index dilation = 1, double init_scale = 1.0);
  // Explicit geometry, used by the strided discriminator stacks.
  Conv1d(ParamStore& store, const std::string& name, Index in, Index out, const ag::ConvGeometry& geometry,
         Rng& rng, double init_scale = 1.0);

  Tensor operator()(const Tensor& x) const;

  Index in_channels() const { return in_; }
  Index out_channels() const { return out_; }
  const ag::ConvGeometry& geometry() const { return geometry_; }
  Tensor weight;
  Tensor bias;

 private:
  Index in_ = 0, out_ = 0;
  ag::ConvGeometry geometry_;
};

using Linear = Conv1d;
Linear make_linear(ParamStore& store, const std::string& name, Index in, Index out, Rng& rng,
                   double init_scale = 1.0);

// Transposed convolution with kernel = 2 * stride and padding = stride / 2, so the
// output is exactly stride times longer than the input.
class ConvTranspose1d {
 public:
  ConvTranspose1d() = default;
  ConvTranspose1d(ParamStore& store, const std::string& name, Index in, Index out, Index stride, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  Index stride() const { return stride_; }
  Tensor weight;
  Tensor bias;

 private:
  Index kernel_ = 0, stride_ = 1, padding_ = 0;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, Index channels);
  Tensor operator()(const Tensor& x) const { return ag::layer_norm_cols(x, gain, bias); }
  Tensor gain;
  Tensor bias;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamStore& store, const std::string& name, Index vocab, Index dim, Rng& rng);
  // Returns [dim x ids.size()].
  Tensor operator()(std::span<const Index> ids) const;
  Index vocab() const { return table.cols(); }
  Tensor table;  // [dim x vocab]
};

}  // namespace pavits::nn
