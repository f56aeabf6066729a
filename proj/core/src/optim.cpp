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

#include "pavits/optim.hpp"

#include <cmath>

#include "pavits/error.hpp"

namespace pavits::optim {

double grad_norm(const nn::ParamStore& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params.entries()) {
    if (t.has_grad()) sq += t.grad().squaredNorm();
  }
  return std::sqrt(sq);
}

double clip_grad_norm(nn::ParamStore& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& [name, t] : params.entries()) {
      if (t.has_grad()) t.mutable_grad() *= s;
    }
  }
  return norm;
}

Adam::Adam(const nn::ParamStore& params, AdamConfig config) : config_(config) {
  for (const auto& [name, t] : params.entries()) {
    m_.push_back(ag::Matrix::Zero(t.rows(), t.cols()));
    v_.push_back(ag::Matrix::Zero(t.rows(), t.cols()));
  }
}

void Adam::step(nn::ParamStore& params) {
  if (params.entries().size() != m_.size()) throw InputError("Adam: parameter set changed");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  std::size_t i = 0;
  for (auto& [name, t] : params.entries()) {
    auto& m = m_[i];
    auto& v = v_[i];
    ++i;
    if (!t.has_grad() || config_.lr == 0.0) continue;
    const ag::Matrix& g = t.grad();
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    t.mutable_value().array() -=
        config_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config_.eps);
  }
}

}  // namespace pavits::optim
