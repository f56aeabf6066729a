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

#include "pavits/apm.hpp"
#include "pavits/flowalign.hpp"
#include "pavits/latent.hpp"
#include "pavits/nn.hpp"
#include "pavits/signal.hpp"
#include "pavits/synth.hpp"
#include "pavits/tpp.hpp"

namespace pavits {

struct AblationFlags {
  bool no_prosody_predictor = false;
  bool no_prosody_alignment = false;
  bool no_prosody_integrator = false;
  bool any() const { return no_prosody_predictor || no_prosody_alignment || no_prosody_integrator; }
  bool operator==(const AblationFlags&) const = default;
};

// Parses a comma-separated list of flag names. Throws InputError on unknown names.
AblationFlags parse_ablation(const std::string& list);
std::string format_ablation(const AblationFlags& flags);

struct ModelConfig {
  Index vocab = 64;
  Index d_model = 32;
  Index d_latent = 32;
  Index hidden = 32;
  Index blocks = 2;
  Index heads = 2;
  Index flow_layers = 4;
  Index dec_channels = 96;
  std::vector<Index> upsample = {8, 8, 2, 2};
  Index classifier_hidden = 32;
  int sample_rate = signal::kDefaultSampleRate;
  signal::FrameConfig frames;

  void validate() const;
  // Canonical text of every architecture field; equal text means loadable parameters.
  std::string architecture() const;
};

// Generator side (text, acoustic, flow, decoder) and discriminator side
// (waveform discriminator, emotion classifier), with separate parameter stores.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  AblationFlags& ablation() { return ablation_; }
  const AblationFlags& ablation() const { return ablation_; }

  nn::ParamStore& generator_params() { return gen_; }
  nn::ParamStore& discriminator_params() { return disc_; }
  const nn::ParamStore& generator_params() const { return gen_; }
  const nn::ParamStore& discriminator_params() const { return disc_; }

  // Prosody embedding honouring no_prosody_predictor.
  ag::Tensor prosody(const ag::Tensor& h, Emotion e) const;

  tpp::TextualProsodyPredictor text;
  apm::EmotionDescriptor emotion;
  apm::SpeakerEncoder speaker;
  apm::ProsodyIntegrator integrator;
  flowalign::FlowStack flow;
  synth::Decoder decoder;
  synth::WaveDiscriminator discriminator;
  synth::EmotionClassifier classifier;

 private:
  Model(const ModelConfig& cfg, nn::Rng rng);

  ModelConfig cfg_;
  AblationFlags ablation_;
  nn::ParamStore gen_;
  nn::ParamStore disc_;
};

// Applies the flags to the model's forward behaviour. Parameter sets are unchanged.
void apply_ablation(const AblationFlags& flags, Model& model);

}  // namespace pavits
