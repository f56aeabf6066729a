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


#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "pavits/autograd.hpp"
#include "pavits/nn.hpp"
#include "pavits/optim.hpp"

namespace pavits {
namespace {

using ag::Tensor;
using testing::all_indices;
using testing::grad_check;

Tensor random_param(Index r, Index c, std::uint64_t seed, double scale = 1.0) {
  nn::Rng rng(seed);
  return Tensor::parameter(nn::standard_normal(r, c, rng) * scale);
}

TEST(Autograd, ElementwiseChainMatchesFiniteDifferences) {
  Tensor a = random_param(3, 5, 1);
  Tensor b = random_param(3, 1, 2);
  Tensor rowv = random_param(1, 5, 3);
  auto loss = [&] {
    Tensor x = ag::mul(ag::add(a, b), rowv);
    Tensor y = ag::add(ag::tanh(x), ag::sigmoid(ag::scale(x, 0.7)));
    y = ag::add(y, ag::leaky_relu(ag::sub(a, b), 0.2));
    y = ag::add(y, ag::exp(ag::scale(a, 0.3)));
    y = ag::add(y, ag::log(ag::add_scalar(ag::square(a), 1.0)));
    return ag::mean(ag::square(y));
  };
  EXPECT_LT(grad_check(loss, a, all_indices(a)).relative_error, 1e-6);
  EXPECT_LT(grad_check(loss, b, all_indices(b)).relative_error, 1e-6);
  EXPECT_LT(grad_check(loss, rowv, all_indices(rowv)).relative_error, 1e-6);
}

TEST(Autograd, StructuralOpsRouteGradients) {
  Tensor a = random_param(4, 6, 4);
  Tensor b = random_param(2, 6, 5);
  std::vector<Index> gather{5, 0, 0, 3, 2, 2, 2};
  auto loss = [&] {
    Tensor c = ag::concat_rows({a, b});
    Tensor s = ag::slice_rows(c, 1, 4);
    Tensor g = ag::gather_cols(s, gather);
    Tensor cc = ag::concat_cols({g, ag::slice_cols(a, 2, 3)});
    Tensor m = ag::mean_cols(cc);
    Tensor t = ag::matmul(ag::transpose(cc), ag::broadcast_cols(m, 1));
    return ag::add(ag::sum(ag::square(t)), ag::sum(ag::sum_rows(ag::abs(cc))));
  };
  EXPECT_LT(grad_check(loss, a, all_indices(a)).relative_error, 1e-6);
  EXPECT_LT(grad_check(loss, b, all_indices(b)).relative_error, 1e-6);
}

TEST(Autograd, SoftmaxLayerNormSnake) {
  Tensor a = random_param(5, 4, 6);
  Tensor gain = random_param(5, 1, 7);
  Tensor bias = random_param(5, 1, 8);
  Tensor alpha = Tensor::parameter(Matrix::Constant(5, 1, 0.8));
  Tensor w = random_param(5, 4, 9);
  auto loss = [&] {
    Tensor n = ag::layer_norm_cols(a, gain, bias);
    Tensor s = ag::softmax_cols(n);
    Tensor ls = ag::log_softmax_cols(ag::scale(a, 1.3));
    Tensor sn = ag::snake(a, alpha);
    return ag::sum(ag::mul(ag::add(ag::add(s, ls), sn), w));
  };
  EXPECT_LT(grad_check(loss, a, all_indices(a)).relative_error, 1e-6);
  EXPECT_LT(grad_check(loss, gain, all_indices(gain)).relative_error, 1e-6);
  EXPECT_LT(grad_check(loss, bias, all_indices(bias)).relative_error, 1e-6);
  EXPECT_LT(grad_check(loss, alpha, all_indices(alpha)).relative_error, 1e-6);
}

TEST(Autograd, Conv1dMatchesDirectSumAndGradients) {
  Tensor x = random_param(3, 11, 10);
  Tensor w = random_param(4, 3 * 3, 11);
  Tensor b = random_param(4, 1, 12);
  ag::ConvGeometry geom{3, 2, 2, 2, 1};
  Tensor y = ag::conv1d(x, w, b, geom);
  ASSERT_EQ(y.cols(), geom.output_length(11));
  for (Index co = 0; co < 4; ++co) {
    for (Index t = 0; t < y.cols(); ++t) {
      double acc = b.value()(co, 0);
      for (Index ci = 0; ci < 3; ++ci) {
        for (Index k = 0; k < 3; ++k) {
          const Index s = t * 2 + k * 2 - 2;
          if (s >= 0 && s < 11) acc += w.value()(co, ci * 3 + k) * x.value()(ci, s);
        }
      }
      EXPECT_NEAR(y.value()(co, t), acc, 1e-12);
    }
  }
  Tensor probe = random_param(4, y.cols(), 13);
  auto loss = [&] { return ag::sum(ag::mul(ag::conv1d(x, w, b, geom), probe)); };
  EXPECT_LT(grad_check(loss, x, all_indices(x)).relative_error, 1e-7);
  EXPECT_LT(grad_check(loss, w, all_indices(w)).relative_error, 1e-7);
  EXPECT_LT(grad_check(loss, b, all_indices(b)).relative_error, 1e-7);
}

TEST(Autograd, ConvTransposeLengthAndGradients) {
  Tensor x = random_param(3, 5, 14);
  const Index stride = 4, kernel = 8, pad = 2;
  Tensor w = random_param(2 * kernel, 3, 15);
  Tensor b = random_param(2, 1, 16);
  Tensor y = ag::conv_transpose1d(x, w, b, kernel, stride, pad);
  EXPECT_EQ(y.cols(), 5 * stride);
  // Direct scatter definition.
  Matrix ref = Matrix::Zero(2, y.cols());
  for (Index co = 0; co < 2; ++co) {
    for (Index t = 0; t < 5; ++t) {
      for (Index k = 0; k < kernel; ++k) {
        const Index o = t * stride + k - pad;
        if (o < 0 || o >= y.cols()) continue;
        for (Index ci = 0; ci < 3; ++ci) ref(co, o) += w.value()(co * kernel + k, ci) * x.value()(ci, t);
      }
    }
    ref.row(co).array() += b.value()(co, 0);
  }
  EXPECT_LT((ref - y.value()).cwiseAbs().maxCoeff(), 1e-12);
  Tensor probe = random_param(2, y.cols(), 17);
  auto loss = [&] { return ag::sum(ag::mul(ag::conv_transpose1d(x, w, b, kernel, stride, pad), probe)); };
  EXPECT_LT(grad_check(loss, x, all_indices(x)).relative_error, 1e-7);
  EXPECT_LT(grad_check(loss, w, all_indices(w)).relative_error, 1e-7);
}

TEST(Autograd, NoGradGuardSkipsRecording) {
  Tensor a = random_param(2, 2, 18);
  {
    ag::NoGradGuard guard;
    Tensor y = ag::square(a);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(ag::square(a).requires_grad());
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  Tensor a = Tensor::parameter(Matrix::Constant(1, 1, 3.0));
  Tensor y = ag::mul(a, a);  // reuses the same leaf twice
  Tensor z = ag::add(y, a);
  z.backward();
  EXPECT_DOUBLE_EQ(a.grad()(0, 0), 7.0);
}

TEST(Optim, ClipBoundsGlobalNorm) {
  nn::ParamStore store;
  nn::Rng rng(3);
  Tensor p = store.add("p", nn::standard_normal(4, 4, rng));
  Tensor q = store.add("q", nn::standard_normal(3, 1, rng));
  ag::sum(ag::scale(ag::add(ag::sum(ag::square(p)), ag::sum(ag::square(q))), 50.0)).backward();
  const double before = optim::clip_grad_norm(store, 5.0);
  EXPECT_GT(before, 5.0);
  EXPECT_LE(optim::grad_norm(store), 5.0 + 1e-9);
}

TEST(Optim, ZeroLearningRateLeavesParameters) {
  nn::ParamStore store;
  nn::Rng rng(4);
  Tensor p = store.add("p", nn::standard_normal(3, 3, rng));
  const Matrix before = p.value();
  optim::Adam adam(store, {0.0, 0.8, 0.99, 1e-9});
  ag::sum(ag::square(p)).backward();
  adam.step(store);
  EXPECT_EQ(before, p.value());
}

}  // namespace
}  // namespace pavits
