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


#include "pavits/model.hpp"

#include <sstream>

#include "pavits/error.hpp"

namespace pavits {

AblationFlags parse_ablation(const std::string& list) {
  AblationFlags flags;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "no_prosody_predictor") {
      flags.no_prosody_predictor = true;
    } else if (item == "no_prosody_alignment") {
      flags.no_prosody_alignment = true;
    } else if (item == "no_prosody_integrator") {
      flags.no_prosody_integrator = true;
    } else {
      throw InputError("unknown ablation flag: " + item);
    }
  }
  return flags;
}

std::string format_ablation(const AblationFlags& flags) {
  std::vector<std::string> names;
  if (flags.no_prosody_predictor) names.emplace_back("no_prosody_predictor");
  if (flags.no_prosody_alignment) names.emplace_back("no_prosody_alignment");
  if (flags.no_prosody_integrator) names.emplace_back("no_prosody_integrator");
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ",") + n;
  return out;
}

void ModelConfig::validate() const {
  frames.validate();
  if (vocab < 2 || d_model < 2 || d_latent < 2 || hidden < 1 || blocks < 0 || heads < 1 || flow_layers < 0 ||
      dec_channels < 1 || classifier_hidden < 1) {
    throw InputError("model config: dimensions must be positive");
  }
  if (d_latent % 2 != 0) throw InputError("model config: d_latent must be even");
  if (d_model % heads != 0) throw InputError("model config: d_model must be divisible by heads");
  Index product = 1;
  for (Index s : upsample) {
    if (s < 2 || s % 2 != 0) throw InputError("model config: upsample factors must be even");
    product *= s;
  }
  if (product != frames.hop) throw InputError("model config: upsample factors must multiply to the hop size");
  if (sample_rate <= 0) throw InputError("model config: sample rate must be positive");
}

std::string ModelConfig::architecture() const {
  std::ostringstream os;
  os << "vocab=" << vocab << ";d_model=" << d_model << ";d_latent=" << d_latent << ";hidden=" << hidden
     << ";blocks=" << blocks << ";heads=" << heads << ";flow_layers=" << flow_layers
     << ";dec_channels=" << dec_channels << ";classifier_hidden=" << classifier_hidden << ";upsample=";
  for (std::size_t i = 0; i < upsample.size(); ++i) os << (i ? "," : "") << upsample[i];
  os << ";sample_rate=" << sample_rate << ";fft=" << frames.fft_size << ";win=" << frames.win_size
     << ";hop=" << frames.hop << ";center=" << frames.center_pad;
  return os.str();
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : Model(cfg, nn::Rng(seed)) {}

Model::Model(const ModelConfig& cfg, nn::Rng rng) : cfg_(cfg) {
  cfg_.validate();
  tpp::TppConfig tc;
  tc.vocab = cfg.vocab;
  tc.d_model = cfg.d_model;
  tc.d_latent = cfg.d_latent;
  tc.blocks = cfg.blocks;
  tc.heads = cfg.heads;
  tc.ffn_hidden = 2 * cfg.d_model;
  text = tpp::TextualProsodyPredictor(gen_, "tpp", tc, rng);

  emotion = apm::EmotionDescriptor(gen_, "apm.emotion", cfg.d_model, rng);
  apm::ApmConfig ac;
  ac.bins = cfg.frames.bins();
  ac.d_model = cfg.d_model;
  ac.d_latent = cfg.d_latent;
  ac.hidden = cfg.hidden;
  speaker = apm::SpeakerEncoder(gen_, "apm.speaker", ac, rng);
  integrator = apm::ProsodyIntegrator(gen_, "apm.integrator", ac, rng);

  flowalign::FlowConfig fc;
  fc.channels = cfg.d_latent;
  fc.hidden = cfg.hidden;
  fc.layers = cfg.flow_layers;
  flow = flowalign::FlowStack(gen_, "flow", fc, rng);

  synth::DecoderConfig dc;
  dc.latent = cfg.d_latent;
  dc.cond = cfg.d_model;
  dc.channels = cfg.dec_channels;
  dc.upsample = cfg.upsample;
  dc.sample_rate = cfg.sample_rate;
  decoder = synth::Decoder(gen_, "decoder", dc, rng);

  discriminator = synth::WaveDiscriminator(disc_, "disc", rng);
  classifier = synth::EmotionClassifier(disc_, "emotion_classifier", cfg.frames, cfg.sample_rate,
                                        cfg.classifier_hidden, rng);
}

ag::Tensor Model::prosody(const ag::Tensor& h, Emotion e) const {
  if (ablation_.no_prosody_predictor) return ag::Tensor::zeros(h.rows(), h.cols());
  return text.predict_prosody(h, e);
}

void apply_ablation(const AblationFlags& flags, Model& model) { model.ablation() = flags; }

}  // namespace pavits
