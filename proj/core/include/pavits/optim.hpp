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

#include <vector>

#include "pavits/nn.hpp"

namespace pavits::optim {

// Rescales all gradients in the store so their global L2 norm is at most
// max_norm. Returns the norm measured before clipping.
double clip_grad_norm(nn::ParamStore& params, double max_norm);
double grad_norm(const nn::ParamStore& params);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double eps = 1e-9;
};

class Adam {
 public:
  Adam() = default;
  Adam(const nn::ParamStore& params, AdamConfig config);

  // Applies one update using the gradients currently stored on each parameter.
  // Parameters without a gradient are left untouched.
  void step(nn::ParamStore& params);

  AdamConfig& config() { return config_; }
  const AdamConfig& config() const { return config_; }
  long steps() const { return t_; }

  // Moment buffers, exposed for checkpointing.
  std::vector<ag::Matrix>& first_moments() { return m_; }
  std::vector<ag::Matrix>& second_moments() { return v_; }
  const std::vector<ag::Matrix>& first_moments() const { return m_; }
  const std::vector<ag::Matrix>& second_moments() const { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  AdamConfig config_;
  std::vector<ag::Matrix> m_;
  std::vector<ag::Matrix> v_;
  long t_ = 0;
};

}  // namespace pavits::optim
