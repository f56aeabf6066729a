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

#include <memory>
#include <string>
#include <vector>

#include "pavits/latent.hpp"
#include "pavits/nn.hpp"
#include "pavits/signal.hpp"

namespace pavits::apm {

using ag::Tensor;

struct VadTriple {
  double valence = 0.0;
  double arousal = 0.0;
  double dominance = 0.0;
  bool operator==(const VadTriple&) const = default;
};

enum class Provenance { kStub, kExternal };

struct EmotionEmbedding {
  VadTriple vad;
  Tensor vector;  // [d x 1]
  Provenance provenance = Provenance::kStub;
};

// Source of dimensional emotion values. A real speech emotion recognizer can
// implement the waveform overload.
class EmotionBackend {
 public:
  virtual ~EmotionBackend() = default;
  virtual VadTriple vad(Emotion e) const = 0;
  virtual VadTriple vad(const signal::Waveform& w) const = 0;
  virtual Provenance provenance() const = 0;
};

// Fixed label-to-VAD lookup. Rejects waveform input.
class StubVadBackend final : public EmotionBackend {
 public:
  VadTriple vad(Emotion e) const override;
  VadTriple vad(const signal::Waveform& w) const override;
  Provenance provenance() const override { return Provenance::kStub; }
};

class EmotionDescriptor {
 public:
  EmotionDescriptor() = default;
  EmotionDescriptor(nn::ParamStore& store, const std::string& prefix, Index dim, nn::Rng& rng,
                    std::shared_ptr<const EmotionBackend> backend = nullptr);

  EmotionEmbedding describe(Emotion e) const;
  // Uses the backend's waveform path; the label one-hot is taken from `label`.
  EmotionEmbedding describe(const signal::Waveform& w, Emotion label) const;

 private:
  EmotionEmbedding embed(const VadTriple& vad, Emotion label) const;

  std::shared_ptr<const EmotionBackend> backend_;
  nn::Linear project_;
};

struct SpeakerEmbedding {
  Tensor vector;  // [d x 1]
  Tensor log_f0;  // [1 x T], natural log of Hz
  Matrix predicted_f0() const { return log_f0.value().array().exp().matrix(); }
};

struct PosteriorSample {
  Tensor z2;  // [d_latent x T]
  GaussianSequence stats;
  Matrix noise;
};

struct ApmConfig {
  Index bins = 513;
  Index d_model = 32;
  Index d_latent = 32;
  Index hidden = 32;
  Index residual_blocks = 2;
  Index kernel = 5;
};

// Spectral compression applied before both acoustic encoders.
Matrix compress_spectrum(const Matrix& magnitude);

class SpeakerEncoder {
 public:
  SpeakerEncoder() = default;
  SpeakerEncoder(nn::ParamStore& store, const std::string& prefix, const ApmConfig& cfg, nn::Rng& rng);
  // `spec` is a compressed linear spectrogram [bins x T].
  SpeakerEmbedding encode(const Tensor& spec) const;

 private:
  std::vector<nn::Conv1d> trunk_;
  nn::Linear pool_out_;
  nn::Conv1d f0_conv_;
  nn::Linear f0_out_;
};

class ProsodyIntegrator {
 public:
  ProsodyIntegrator() = default;
  ProsodyIntegrator(nn::ParamStore& store, const std::string& prefix, const ApmConfig& cfg, nn::Rng& rng);

  // `spec` is a compressed linear spectrogram [bins x T]; `noise` is [d_latent x T].
  // With `fused` false the residual stack is bypassed and the conditioning is
  // concatenated with the pre-net output and projected.
  PosteriorSample integrate(const Tensor& spec, const EmotionEmbedding& emo, const SpeakerEmbedding& spk,
                            const Matrix& noise, bool fused = true) const;

 private:
  struct ResBlock {
    nn::Conv1d conv;
    nn::Linear cond;
    nn::Linear res_skip;
  };

  ApmConfig cfg_;
  nn::Linear pre_;
  std::vector<ResBlock> blocks_;
  nn::Linear proj_;
  nn::Linear concat_proj_;
};

}  // namespace pavits::apm
