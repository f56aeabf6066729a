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

#include <string>
#include <vector>

#include "pavits/apm.hpp"
#include "pavits/latent.hpp"
#include "pavits/nn.hpp"

namespace pavits::flowalign {

using ag::Tensor;

struct FlowConfig {
  Index channels = 32;
  Index hidden = 32;
  Index layers = 4;
  Index kernel = 5;
};

struct FlowResult {
  Tensor u;
  Tensor logdet;  // [1 x 1]
};

// Stack of affine coupling layers with a channel flip after each layer. The
// log-scale heads start at zero, so a fresh stack is a pure permutation.
class FlowStack {
 public:
  FlowStack() = default;
  FlowStack(nn::ParamStore& store, const std::string& prefix, const FlowConfig& cfg, nn::Rng& rng);

  FlowResult forward(const Tensor& z) const;
  Tensor inverse(const Tensor& u) const;
  const FlowConfig& config() const { return cfg_; }

 private:
  struct Coupling {
    nn::Linear pre;
    nn::Conv1d conv;
    nn::Linear post;  // -> [shift; log_scale]
  };

  Tensor coupling_stats(const Coupling& c, const Tensor& x0) const;

  FlowConfig cfg_;
  std::vector<Coupling> layers_;
};

// Reverses the channel order of x.
Tensor flip_channels(const Tensor& x);

// Sum over elements of log N(x; mu, exp(log_sigma)).
Tensor gaussian_log_density(const Tensor& x, const Tensor& mu, const Tensor& log_sigma);

// Sum of log N(f(z); mu, sigma) + log|det df/dz| for a frame-level prior.
Tensor prior_log_density(const Tensor& z, const GaussianSequence& prior, const FlowStack& flow);

// L[i, t] = sum over channels of log N(u[:, t]; mu_i, sigma_i).
Matrix log_likelihood_matrix(const Matrix& u, const Matrix& mu, const Matrix& log_sigma);

// Monotonic alignment search. Ties prefer staying on the current phoneme.
AlignmentMatrix mas(const Matrix& log_likelihood);
AlignmentMatrix mas(const Matrix& u, const GaussianSequence& phoneme_prior);

// Closed-form per-element KL(q || p).
double kl_diag_gaussian(const GaussianSequence& q, const GaussianSequence& p);

// Single-sample estimate of KL(q || p_flow), normalized per element.
Tensor prosody_alignment_loss(const apm::PosteriorSample& sample, const GaussianSequence& prior,
                              const FlowStack& flow);

}  // namespace pavits::flowalign
