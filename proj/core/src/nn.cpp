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

#include "pavits/nn.hpp"

#include <cmath>

#include "pavits/error.hpp"

namespace pavits::nn {

Matrix uniform(Index rows, Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = bound > 0.0 ? dist(rng) : 0.0;
  return m;
}

Matrix standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Tensor ParamStore::add(const std::string& name, Matrix init) {
  if (find(name) != nullptr) throw InputError("duplicate parameter name: " + name);
  Tensor t = Tensor::parameter(std::move(init));
  entries_.emplace_back(name, t);
  return t;
}

const Tensor* ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += static_cast<std::size_t>(t.value().size());
  return n;
}

std::size_t ParamStore::scalar_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) {
    if (name.rfind(prefix, 0) == 0) n += static_cast<std::size_t>(t.value().size());
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

void ParamStore::set_trainable(bool trainable) {
  for (auto& [name, t] : entries_) t.node()->requires_grad = trainable;
}

Conv1d::Conv1d(ParamStore& store, const std::string& name, Index in, Index out, Index kernel, Rng& rng,
               Index dilation, double init_scale)
    : Conv1d(store, name, in, out,
             ag::ConvGeometry{kernel, 1, dilation, dilation * (kernel - 1) / 2,
                              dilation * (kernel - 1) - dilation * (kernel - 1) / 2},
             rng, init_scale) {}

Conv1d::Conv1d(ParamStore& store, const std::string& name, Index in, Index out,
               const ag::ConvGeometry& geometry, Rng& rng, double init_scale)
    : in_(in), out_(out), geometry_(geometry) {
  const double bound = init_scale / std::sqrt(static_cast<double>(in * geometry.kernel));
  weight = store.add(name + ".weight", uniform(out, in * geometry.kernel, bound, rng));
  bias = store.add(name + ".bias", uniform(out, 1, bound, rng));
}

Tensor Conv1d::operator()(const Tensor& x) const {
  if (x.rows() != in_) {
    throw InputError("conv1d: expected " + std::to_string(in_) + " input channels, got " +
                     std::to_string(x.rows()));
  }
  if (geometry_.kernel == 1 && geometry_.stride == 1) {
    return ag::add(ag::matmul(weight, x), bias);
  }
  return ag::conv1d(x, weight, bias, geometry_);
}

Linear make_linear(ParamStore& store, const std::string& name, Index in, Index out, Rng& rng,
                   double init_scale) {
  return Conv1d(store, name, in, out, 1, rng, 1, init_scale);
}

ConvTranspose1d::ConvTranspose1d(ParamStore& store, const std::string& name, Index in, Index out,
                                 Index stride, Rng& rng)
    : kernel_(2 * stride), stride_(stride), padding_(stride / 2) {
  if (stride % 2 != 0) throw InputError("ConvTranspose1d: stride must be even");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel_) / static_cast<double>(stride));
  weight = store.add(name + ".weight", uniform(out * kernel_, in, bound, rng));
  bias = store.add(name + ".bias", Matrix::Zero(out, 1));
}

Tensor ConvTranspose1d::operator()(const Tensor& x) const {
  return ag::conv_transpose1d(x, weight, bias, kernel_, stride_, padding_);
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, Index channels) {
  gain = store.add(name + ".gain", Matrix::Ones(channels, 1));
  bias = store.add(name + ".bias", Matrix::Zero(channels, 1));
}

Embedding::Embedding(ParamStore& store, const std::string& name, Index vocab, Index dim, Rng& rng) {
  Matrix init = standard_normal(dim, vocab, rng) / std::sqrt(static_cast<double>(dim));
  table = store.add(name + ".table", std::move(init));
}

Tensor Embedding::operator()(std::span<const Index> ids) const {
  for (Index id : ids) {
    if (id < 0 || id >= table.cols()) {
      throw InputError("phoneme id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(table.cols()));
    }
  }
  return ag::gather_cols(table, ids);
}

}  // namespace pavits::nn
