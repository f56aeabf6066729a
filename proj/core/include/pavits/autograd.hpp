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

// Minimal reverse-mode automatic differentiation over dense 2-D matrices.
//
// Every tensor is a [rows x cols] matrix stored row-major. Sequence data uses
// the [channels x time] convention, so a row is one channel's time series and
// a column is one frame. Scalars are 1x1.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "pavits/matrix.hpp"

namespace pavits::ag {

using pavits::Index;
using pavits::Matrix;

struct Node {
  Matrix value;
  Matrix grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
  bool is_leaf() const { return parents.empty(); }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor scalar(double v);
  static Tensor zeros(Index rows, Index cols) { return constant(Matrix::Zero(rows, cols)); }

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  // Direct write access, for optimizers and tests. Do not mutate values that
  // already feed a recorded graph.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool has_grad() const { return node_ && node_->grad.size() != 0; }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double item() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Seeds d(this)/d(this) = 1 and propagates to every reachable leaf. Only
  // valid on a 1x1 tensor.
  void backward();
  void zero_grad();
  Tensor detach() const { return constant(value()); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds a result node. The backward closure is only kept when grad mode is on
// and at least one parent requires a gradient.
Tensor make_result(Matrix value, std::vector<Tensor> parents, std::function<void(Node&)> backward);

// ---- elementwise and broadcasting arithmetic -------------------------------
// Binary ops accept b with the same shape as a, a column vector [rows x 1]
// broadcast over columns, a row vector [1 x cols] broadcast over rows, or 1x1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.1);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// ln(max(a, floor)); zero gradient where the floor is active.
Tensor clamp_log(const Tensor& a, double floor);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
// x + sin^2(alpha * x) / alpha with a per-channel alpha [rows x 1].
Tensor snake(const Tensor& x, const Tensor& alpha);

// ---- linear algebra and reductions -----------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_cols(const Tensor& a);  // [rows x 1], average over columns
Tensor sum_rows(const Tensor& a);   // [1 x cols], sum over rows

// ---- structure ---------------------------------------------------------------
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, Index start, Index count);
Tensor slice_cols(const Tensor& a, Index start, Index count);
// out[:, j] = a[:, index[j]]; repeated indices accumulate in backward.
Tensor gather_cols(const Tensor& a, std::span<const Index> index);
Tensor broadcast_cols(const Tensor& column, Index cols);
Tensor reverse_rows(const Tensor& a);

// ---- normalization -----------------------------------------------------------
Tensor softmax_cols(const Tensor& a);      // softmax down each column
Tensor log_softmax_cols(const Tensor& a);  // log-softmax down each column
// Normalizes every column over its rows, then applies gain/bias [rows x 1].
Tensor layer_norm_cols(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// ---- convolution -------------------------------------------------------------
struct ConvGeometry {
  Index kernel = 1;
  Index stride = 1;
  Index dilation = 1;
  Index pad_left = 0;
  Index pad_right = 0;

  Index output_length(Index input_length) const;
};

// x [Cin x T], weight [Cout x Cin*K] (column ci*K + k), bias [Cout x 1] or undefined.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& g);

// x [Cin x T], weight [Cout*K x Cin] (row co*K + k), bias [Cout x 1] or undefined.
// Output length (T - 1) * stride - 2 * padding + kernel.
Tensor conv_transpose1d(const Tensor& x, const Tensor& weight, const Tensor& bias, Index kernel,
                        Index stride, Index padding);

}  // namespace pavits::ag
