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


#include "pavits/flowalign.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "pavits/error.hpp"

namespace pavits::flowalign {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

void require_even(Index channels) {
  if (channels % 2 != 0 || channels == 0) throw InputError("flow: channel count must be even and positive");
}

}  // namespace

FlowStack::FlowStack(nn::ParamStore& store, const std::string& prefix, const FlowConfig& cfg, nn::Rng& rng)
    : cfg_(cfg) {
  require_even(cfg.channels);
  const Index half = cfg.channels / 2;
  for (Index i = 0; i < cfg.layers; ++i) {
    const std::string p = prefix + ".coupling" + std::to_string(i);
    Coupling c;
    c.pre = nn::make_linear(store, p + ".pre", half, cfg.hidden, rng);
    c.conv = nn::Conv1d(store, p + ".conv", cfg.hidden, cfg.hidden, cfg.kernel, rng);
    c.post = nn::make_linear(store, p + ".post", cfg.hidden, 2 * half, rng);
    c.post.weight.mutable_value().setZero();
    c.post.bias.mutable_value().setZero();
    layers_.push_back(std::move(c));
  }
}

Tensor flip_channels(const Tensor& x) { return ag::reverse_rows(x); }

Tensor FlowStack::coupling_stats(const Coupling& c, const Tensor& x0) const {
  return c.post(ag::tanh(c.conv(ag::tanh(c.pre(x0)))));
}

FlowResult FlowStack::forward(const Tensor& z) const {
  require_even(z.rows());
  if (z.rows() != cfg_.channels) throw InputError("flow: channel count does not match the stack");
  const Index half = cfg_.channels / 2;
  Tensor x = z;
  Tensor logdet = Tensor::scalar(0.0);
  for (const Coupling& c : layers_) {
    const Tensor x0 = ag::slice_rows(x, 0, half);
    const Tensor x1 = ag::slice_rows(x, half, half);
    const Tensor stats = coupling_stats(c, x0);
    const Tensor shift = ag::slice_rows(stats, 0, half);
    const Tensor log_scale = ag::slice_rows(stats, half, half);
    const Tensor y1 = ag::add(shift, ag::mul(x1, ag::exp(log_scale)));
    x = flip_channels(ag::concat_rows({x0, y1}));
    logdet = ag::add(logdet, ag::sum(log_scale));
  }
  return {x, logdet};
}

Tensor FlowStack::inverse(const Tensor& u) const {
  require_even(u.rows());
  if (u.rows() != cfg_.channels) throw InputError("flow: channel count does not match the stack");
  const Index half = cfg_.channels / 2;
  Tensor x = u;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    const Tensor y = flip_channels(x);
    const Tensor x0 = ag::slice_rows(y, 0, half);
    const Tensor y1 = ag::slice_rows(y, half, half);
    const Tensor stats = coupling_stats(*it, x0);
    const Tensor shift = ag::slice_rows(stats, 0, half);
    const Tensor log_scale = ag::slice_rows(stats, half, half);
    const Tensor x1 = ag::mul(ag::sub(y1, shift), ag::exp(ag::neg(log_scale)));
    x = ag::concat_rows({x0, x1});
  }
  return x;
}

Tensor gaussian_log_density(const Tensor& x, const Tensor& mu, const Tensor& log_sigma) {
  if (x.rows() != mu.rows() || x.cols() != mu.cols() || mu.rows() != log_sigma.rows() ||
      mu.cols() != log_sigma.cols()) {
    throw InputError("gaussian_log_density: shape mismatch");
  }
  const Tensor standardized = ag::mul(ag::sub(x, mu), ag::exp(ag::neg(log_sigma)));
  const double constant = -kHalfLog2Pi * static_cast<double>(x.rows() * x.cols());
  return ag::add_scalar(ag::neg(ag::add(ag::sum(log_sigma), ag::scale(ag::sum(ag::square(standardized)), 0.5))),
                        constant);
}

Tensor prior_log_density(const Tensor& z, const GaussianSequence& prior, const FlowStack& flow) {
  if (z.cols() != prior.length()) throw InputError("prior_log_density: prior length does not match latent length");
  const FlowResult f = flow.forward(z);
  return ag::add(gaussian_log_density(f.u, prior.mu, prior.log_sigma), f.logdet);
}

Matrix log_likelihood_matrix(const Matrix& u, const Matrix& mu, const Matrix& log_sigma) {
  if (u.rows() != mu.rows() || mu.rows() != log_sigma.rows() || mu.cols() != log_sigma.cols()) {
    throw InputError("mas: channel mismatch between latent and prior");
  }
  const Index n = mu.cols(), t_len = u.cols();
  Matrix out(n, t_len);
  for (Index i = 0; i < n; ++i) {
    const auto inv = (-log_sigma.col(i).array()).exp();
    const double base = -log_sigma.col(i).sum() - kHalfLog2Pi * static_cast<double>(u.rows());
    for (Index t = 0; t < t_len; ++t) {
      out(i, t) = base - 0.5 * ((u.col(t).array() - mu.col(i).array()) * inv).square().sum();
    }
  }
  return out;
}

AlignmentMatrix mas(const Matrix& ll) {
  const Index n = ll.rows(), t_len = ll.cols();
  if (n < 1) throw InputError("mas: no phonemes");
  if (t_len < n) throw InputError("mas: fewer frames than phonemes");
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Matrix q = Matrix::Constant(n, t_len, kNegInf);
  q(0, 0) = ll(0, 0);
  for (Index t = 1; t < t_len; ++t) {
    const Index lo = std::max<Index>(0, n - (t_len - t));
    const Index hi = std::min(n - 1, t);
    for (Index i = lo; i <= hi; ++i) {
      const double stay = q(i, t - 1);
      const double move = i > 0 ? q(i - 1, t - 1) : kNegInf;
      q(i, t) = ll(i, t) + std::max(stay, move);
    }
  }
  std::vector<Index> owner(static_cast<std::size_t>(t_len));
  Index i = n - 1;
  for (Index t = t_len - 1; t >= 0; --t) {
    owner[static_cast<std::size_t>(t)] = i;
    if (t == 0) break;
    if (i > 0 && (i == t || q(i - 1, t - 1) > q(i, t - 1))) --i;
  }
  return {n, std::move(owner)};
}

AlignmentMatrix mas(const Matrix& u, const GaussianSequence& phoneme_prior) {
  return mas(log_likelihood_matrix(u, phoneme_prior.mu.value(), phoneme_prior.log_sigma.value()));
}

double kl_diag_gaussian(const GaussianSequence& q, const GaussianSequence& p) {
  const Matrix& mq = q.mu.value();
  const Matrix& mp = p.mu.value();
  const Matrix& lq = q.log_sigma.value();
  const Matrix& lp = p.log_sigma.value();
  if (mq.rows() != mp.rows() || mq.cols() != mp.cols() || lq.rows() != lp.rows() || lq.cols() != lp.cols() ||
      mq.rows() != lq.rows() || mq.cols() != lq.cols()) {
    throw InputError("kl_diag_gaussian: shape mismatch");
  }
  if (mq.size() == 0) throw InputError("kl_diag_gaussian: empty input");
  const auto var_q = (2.0 * lq.array()).exp();
  const auto var_p = (2.0 * lp.array()).exp();
  const auto terms = (lp - lq).array() + (var_q + (mq - mp).array().square()) / (2.0 * var_p) - 0.5;
  return terms.sum() / static_cast<double>(mq.size());
}

Tensor prosody_alignment_loss(const apm::PosteriorSample& sample, const GaussianSequence& prior,
                              const FlowStack& flow) {
  if (sample.z2.cols() != prior.length() || sample.stats.length() != prior.length()) {
    throw InputError("prosody_alignment_loss: prior length does not match posterior length");
  }
  const double elements = static_cast<double>(sample.z2.rows() * sample.z2.cols());
  const Tensor log_q = gaussian_log_density(sample.z2, sample.stats.mu, sample.stats.log_sigma);
  const Tensor log_p = prior_log_density(sample.z2, prior, flow);
  return ag::scale(ag::sub(log_q, log_p), 1.0 / elements);
}

}  // namespace pavits::flowalign
