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


#include "pavits/apm.hpp"

#include <algorithm>
#include <cmath>

#include "pavits/error.hpp"

namespace pavits::apm {

namespace {

constexpr std::array<VadTriple, kEmotionCount> kStubVad = {{
    {0.50, 0.30, 0.50},  // neutral
    {0.20, 0.90, 0.80},  // angry
    {0.90, 0.80, 0.60},  // happy
    {0.20, 0.20, 0.30},  // sad
    {0.70, 0.90, 0.40},  // surprise
}};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

VadTriple StubVadBackend::vad(Emotion e) const {
  const int i = emotion_index(e);
  if (i < 0 || i >= kEmotionCount) throw InputError("describe_emotion: unknown emotion");
  return kStubVad[static_cast<std::size_t>(i)];
}

VadTriple StubVadBackend::vad(const signal::Waveform&) const {
  throw InputError("describe_emotion: the stub backend needs an emotion label, not audio");
}

EmotionDescriptor::EmotionDescriptor(nn::ParamStore& store, const std::string& prefix, Index dim, nn::Rng& rng,
                                     std::shared_ptr<const EmotionBackend> backend)
    : backend_(backend ? std::move(backend) : std::make_shared<StubVadBackend>()),
      project_(nn::make_linear(store, prefix + ".project", 3 + kEmotionCount, dim, rng)) {}

EmotionEmbedding EmotionDescriptor::embed(const VadTriple& raw, Emotion label) const {
  const VadTriple vad{clamp01(raw.valence), clamp01(raw.arousal), clamp01(raw.dominance)};
  Matrix input = Matrix::Zero(3 + kEmotionCount, 1);
  input(0, 0) = vad.valence;
  input(1, 0) = vad.arousal;
  input(2, 0) = vad.dominance;
  input(3 + emotion_index(label), 0) = 1.0;
  return {vad, project_(Tensor::constant(std::move(input))), backend_->provenance()};
}

EmotionEmbedding EmotionDescriptor::describe(Emotion e) const { return embed(backend_->vad(e), e); }

EmotionEmbedding EmotionDescriptor::describe(const signal::Waveform& w, Emotion label) const {
  return embed(backend_->vad(w), label);
}

Matrix compress_spectrum(const Matrix& magnitude) {
  return (0.2 * (magnitude.array() + 1e-4).log()).matrix();
}

SpeakerEncoder::SpeakerEncoder(nn::ParamStore& store, const std::string& prefix, const ApmConfig& cfg,
                               nn::Rng& rng) {
  // Pointwise trunk, so the pooled vector is a plain mean of per-frame features.
  trunk_.emplace_back(store, prefix + ".trunk0", cfg.bins, cfg.hidden, 1, rng);
  trunk_.emplace_back(store, prefix + ".trunk1", cfg.hidden, cfg.hidden, 1, rng);
  pool_out_ = nn::make_linear(store, prefix + ".pool_out", cfg.hidden, cfg.d_model, rng);
  f0_conv_ = nn::Conv1d(store, prefix + ".f0_conv", cfg.hidden, cfg.hidden, 5, rng);
  f0_out_ = nn::make_linear(store, prefix + ".f0_out", cfg.hidden, 1, rng, 0.1);
  f0_out_.bias.mutable_value().setConstant(std::log(200.0));
}

SpeakerEmbedding SpeakerEncoder::encode(const Tensor& spec) const {
  if (spec.cols() == 0) throw InputError("encode_speaker: empty spectrogram");
  Tensor x = spec;
  for (const nn::Conv1d& c : trunk_) x = ag::leaky_relu(c(x));
  SpeakerEmbedding out;
  out.vector = pool_out_(ag::mean_cols(x));
  out.log_f0 = f0_out_(ag::leaky_relu(f0_conv_(x)));
  return out;
}

ProsodyIntegrator::ProsodyIntegrator(nn::ParamStore& store, const std::string& prefix, const ApmConfig& cfg,
                                     nn::Rng& rng)
    : cfg_(cfg) {
  const Index h = cfg.hidden;
  pre_ = nn::make_linear(store, prefix + ".pre", cfg.bins, h, rng);
  for (Index i = 0; i < cfg.residual_blocks; ++i) {
    const std::string p = prefix + ".wn" + std::to_string(i);
    ResBlock b;
    b.conv = nn::Conv1d(store, p + ".conv", h, 2 * h, cfg.kernel, rng);
    b.cond = nn::make_linear(store, p + ".cond", 2 * cfg.d_model, 2 * h, rng);
    b.res_skip = nn::make_linear(store, p + ".res_skip", h, 2 * h, rng);
    blocks_.push_back(std::move(b));
  }
  proj_ = nn::make_linear(store, prefix + ".proj", h, 2 * cfg.d_latent, rng);
  concat_proj_ = nn::make_linear(store, prefix + ".concat_proj", h + 2 * cfg.d_model, 2 * cfg.d_latent, rng);
}

PosteriorSample ProsodyIntegrator::integrate(const Tensor& spec, const EmotionEmbedding& emo,
                                             const SpeakerEmbedding& spk, const Matrix& noise, bool fused) const {
  const Index frames = spec.cols();
  if (spec.rows() != cfg_.bins) throw InputError("integrate_prosody: spectrogram bin count mismatch");
  if (noise.rows() != cfg_.d_latent || noise.cols() != frames) throw InputError("integrate_prosody: noise shape mismatch");
  const Tensor cond = ag::concat_rows({emo.vector, spk.vector});
  const Index h = cfg_.hidden;

  Tensor x = pre_(spec);
  Tensor stats;
  if (fused) {
    Tensor skip;
    for (const ResBlock& b : blocks_) {
      const Tensor a = ag::add(b.conv(x), b.cond(cond));
      const Tensor gated = ag::mul(ag::tanh(ag::slice_rows(a, 0, h)), ag::sigmoid(ag::slice_rows(a, h, h)));
      const Tensor rs = b.res_skip(gated);
      x = ag::add(x, ag::slice_rows(rs, 0, h));
      const Tensor s = ag::slice_rows(rs, h, h);
      skip = skip.defined() ? ag::add(skip, s) : s;
    }
    stats = proj_(skip);
  } else {
    stats = concat_proj_(ag::concat_rows({x, ag::broadcast_cols(cond, frames)}));
  }

  PosteriorSample out;
  out.stats = {ag::slice_rows(stats, 0, cfg_.d_latent), ag::slice_rows(stats, cfg_.d_latent, cfg_.d_latent),
               Level::kFrame};
  out.noise = noise;
  out.z2 = ag::add(out.stats.mu, ag::mul(ag::exp(out.stats.log_sigma), Tensor::constant(noise)));
  return out;
}

}  // namespace pavits::apm
