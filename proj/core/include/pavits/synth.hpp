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

#include <span>
#include <string>
#include <vector>

#include "pavits/apm.hpp"
#include "pavits/latent.hpp"
#include "pavits/nn.hpp"
#include "pavits/signal.hpp"

namespace pavits::synth {

using ag::Tensor;

// Differentiable counterparts of the signal front-end. `wave` is [1 x S].
Tensor stft_magnitude(const Tensor& wave, const signal::FrameConfig& cfg);
Tensor log_mel(const Tensor& wave, const signal::FrameConfig& cfg, int sample_rate);

struct DecoderConfig {
  Index latent = 32;
  Index cond = 32;
  Index channels = 64;
  std::vector<Index> upsample = {8, 8, 2, 2};
  Index kernel_pre = 7;
  Index resblock_kernel = 3;
  Index harmonics = 32;
  Index pitch_hidden = 32;
  int sample_rate = signal::kDefaultSampleRate;
};

// Sum of the first `harmonics` sinusoids of the per-frame pitch, one row per
// harmonic, [harmonics x T * hop]. Frames with f0 <= 0 are silent.
Matrix harmonic_excitation(std::span<const double> f0_hz, Index hop, int sample_rate, Index harmonics);

struct PitchPrediction {
  Tensor log_f0;   // [1 x T], natural log of Hz
  Tensor voicing;  // [1 x T], probability
};

// Hz per frame, 0 where the voicing probability is below one half.
std::vector<double> pitch_track(const PitchPrediction& p);

struct GeneratorOutput {
  Tensor waveform;  // [1 x T * hop]
  Tensor speaker;
  Tensor emotion;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(nn::ParamStore& store, const std::string& prefix, const DecoderConfig& cfg, nn::Rng& rng);

  Index hop() const;
  // Excitation pitch as an offset from `base_log_f0` [1 x T], the source contour
  // (or a flat speaker level when no source frames exist).
  PitchPrediction predict_pitch(const Tensor& z, const Tensor& speaker, const Tensor& emotion,
                                const Tensor& base_log_f0) const;
  GeneratorOutput decode(const Tensor& z, const Tensor& speaker, const Tensor& emotion,
                         std::span<const double> f0_hz) const;

 private:
  struct Stage {
    Tensor alpha_in;
    nn::ConvTranspose1d up;
    nn::Conv1d source;
    Tensor alpha1, alpha2;
    nn::Conv1d res1, res2;
  };

  DecoderConfig cfg_;
  Tensor condition(const Tensor& z, const Tensor& speaker, const Tensor& emotion) const;

  nn::Linear spk_proj_, emo_proj_;
  nn::Conv1d pitch_conv_;
  nn::Linear pitch_out_;
  nn::Conv1d pre_;
  std::vector<Stage> stages_;
  Tensor alpha_post_;
  nn::Conv1d post_;
};

struct DiscriminatorReadout {
  std::vector<Tensor> logits;                     // one per sub-discriminator
  std::vector<std::vector<Tensor>> feature_maps;  // per sub-discriminator, per layer
};

// Raw-scale stack plus a period-2 stack over the two sample phases.
class WaveDiscriminator {
 public:
  WaveDiscriminator() = default;
  WaveDiscriminator(nn::ParamStore& store, const std::string& prefix, nn::Rng& rng);
  DiscriminatorReadout discriminate(const Tensor& wave) const;

 private:
  std::vector<nn::Conv1d> raw_;
  std::vector<nn::Conv1d> periodic_;
};

struct EmotionReadout {
  Tensor logits;  // [5 x 1]
  std::vector<Tensor> feature_maps;
};

class EmotionClassifier {
 public:
  EmotionClassifier() = default;
  EmotionClassifier(nn::ParamStore& store, const std::string& prefix, const signal::FrameConfig& frames,
                    int sample_rate, Index hidden, nn::Rng& rng);
  EmotionReadout classify(const Tensor& wave) const;

 private:
  signal::FrameConfig frames_;
  int sample_rate_ = signal::kDefaultSampleRate;
  std::vector<nn::Conv1d> convs_;
  nn::Linear head_;
};

struct AdversarialLosses {
  Tensor generator;
  Tensor discriminator;
};

AdversarialLosses adversarial_losses(const DiscriminatorReadout& real, const DiscriminatorReadout& fake);

struct ReconstructionLosses {
  Tensor mel;
  Tensor feature_matching;
};

ReconstructionLosses reconstruction_losses(const Tensor& real_mel, const Tensor& fake_mel,
                                           const std::vector<std::vector<Tensor>>& real_fm,
                                           const std::vector<std::vector<Tensor>>& fake_fm);

struct EmotionLosses {
  Tensor classification;
  Tensor feature_matching;
};

EmotionLosses emotion_losses(const EmotionReadout& fake, const EmotionReadout& real, Emotion target);

// -log softmax(logits)[label] for a [5 x 1] logit column.
Tensor cross_entropy(const Tensor& logits, Emotion label);

// Sum over layers of the mean absolute difference.
Tensor feature_matching_loss(const std::vector<Tensor>& real, const std::vector<Tensor>& fake);

}  // namespace pavits::synth
