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

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pavits/model.hpp"
#include "pavits/optim.hpp"

namespace pavits::train {

using ag::Tensor;

struct TrainConfig {
  std::uint64_t seed = 1;
  long steps = 2000;
  Index batch_size = 1;
  double lr_g = 1e-3;
  double lr_d = 1e-3;
  double lr_decay = 0.9993;  // per-step multiplicative factor on both learning rates
  double adam_beta1 = 0.8;
  double adam_beta2 = 0.99;
  double clip = 5.0;
  double gamma = 45.0;
  double beta = 2.0;
  // Linear decay of gamma towards gamma_final over `steps`, off by default.
  bool gamma_decay = false;
  double gamma_final = 45.0;
  Index segment_frames = 24;
  double noise_scale = 0.667;
  AblationFlags ablation;
  ModelConfig model;
  // Run-time paths, used by the command-line tool.
  std::string manifest;
  std::string cache_dir;
  std::string checkpoint = "model.ckpt";
  std::string log;
  long log_every = 1;

  void validate() const;
  double gamma_at(long step) const;
  double lr_scale_at(long step) const;
};

// Flat `key = value` text; `#` starts a comment. Unknown keys are errors.
TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::filesystem::path& path);
std::string format_config(const TrainConfig& cfg);

struct LossBundle {
  double recon_cls = 0.0;
  double recon_fm = 0.0;
  double adv_G = 0.0;
  double adv_D = 0.0;
  double emo_cls = 0.0;
  double emo_fm = 0.0;
  double psd = 0.0;
  double f0 = 0.0;
  double dur = 0.0;
  double gamma = 45.0;
  double beta = 2.0;

  static constexpr std::array<std::string_view, 9> kNames = {"recon_cls", "recon_fm", "adv_G", "adv_D", "emo_cls",
                                                             "emo_fm",    "psd",      "f0",    "dur"};
  std::array<double, 9> values() const { return {recon_cls, recon_fm, adv_G, adv_D, emo_cls, emo_fm, psd, f0, dur}; }
};

// Throws DivergenceError naming the first non-finite component.
void check_finite(const LossBundle& b, long step);

// gamma * recon_cls + beta * recon_fm + adv_G + emo_cls + emo_fm + psd + f0 + dur.
double assemble_generator_loss(const LossBundle& b);
// adv_D plus the emotion classifier's cross-entropy on real audio.
double assemble_discriminator_loss(const LossBundle& b, double emotion_real_ce);

struct F0DurationLosses {
  Tensor f0;
  Tensor dur;
};

// Mean squared error on log-Hz over voiced frames (0 when none is voiced) and
// on log durations.
F0DurationLosses f0_and_duration_losses(const Tensor& pred_log_f0, const signal::F0Track& true_f0,
                                        const Tensor& pred_log_durations, std::span<const Index> mas_durations);

// Teaches the decoder's excitation pitch the target recording's contour: squared
// log-Hz error over voiced frames plus squared voicing-probability error.
Tensor excitation_pitch_loss(const synth::PitchPrediction& pred, const signal::F0Track& target);

struct Recording {
  std::string id;
  std::string speaker;
  Emotion emotion = Emotion::kNeutral;
  tpp::PhonemeSequence phonemes;
  signal::Waveform audio;
  signal::FeatureRecord features;
};

struct TrainingItem {
  std::string id;
  std::string speaker;
  Emotion target = Emotion::kNeutral;
  bool conversion = false;  // false: the source is the target recording itself
  tpp::PhonemeSequence phonemes;
  Matrix source_spec;  // compressed linear spectrogram, warped to the target frames
  signal::F0Track source_f0;
  signal::F0Track target_f0;
  std::vector<double> target_samples;
  Index frames() const { return source_spec.cols(); }
};

// For every target frame, the source frame it is matched to on the DTW path.
std::vector<Index> warp_to_target(const signal::DtwResult& path, Index target_frames);

// One identity item per recording, plus a neutral-to-target conversion item for
// every non-neutral recording whose id and speaker have a neutral rendering.
std::vector<TrainingItem> build_training_items(const std::vector<Recording>& recordings);

struct StepRecord {
  long step = 0;
  LossBundle losses;
  double total_G = 0.0;
  double total_D = 0.0;
};

std::string log_header();
std::string format_log_line(const StepRecord& r);

// Utterance-averaged speaker vector and predicted log-F0 level.
struct SpeakerProfile {
  Matrix vector;
  double log_f0 = 0.0;
};

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, tpp::PhonemeInventory inventory);

  const TrainConfig& config() const { return cfg_; }
  Model& model() { return *model_; }
  const Model& model() const { return *model_; }
  const tpp::PhonemeInventory& inventory() const { return inventory_; }
  long step() const { return step_; }

  // One discriminator update followed by one generator update on a batch drawn
  // from `items`. The reported losses are the ones computed inside the step.
  StepRecord train_step(std::span<const TrainingItem> items);

  // Recomputes per-speaker averages from the identity items.
  void refresh_speaker_profiles(std::span<const TrainingItem> items);
  const std::map<std::string, SpeakerProfile>& speaker_profiles() const { return speaker_profiles_; }

  optim::Adam& generator_optimizer() { return opt_g_; }
  optim::Adam& discriminator_optimizer() { return opt_d_; }

 private:
  friend void save_checkpoint(const std::filesystem::path&, const Trainer&);
  friend std::unique_ptr<Trainer> load_checkpoint(const std::filesystem::path&);
  friend void load_checkpoint_into(const std::filesystem::path&, Trainer&);

  TrainConfig cfg_;
  tpp::PhonemeInventory inventory_;
  std::unique_ptr<Model> model_;
  optim::Adam opt_g_;
  optim::Adam opt_d_;
  nn::Rng rng_;
  long step_ = 0;
  std::map<std::string, SpeakerProfile> speaker_profiles_;
};

// Runs `steps` training steps, writing one log line per `log_every` steps.
std::vector<StepRecord> run_training(Trainer& trainer, std::span<const TrainingItem> items, long steps,
                                     std::ostream* log = nullptr);

std::uint64_t config_hash(const ModelConfig& cfg);

void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer);
// Rebuilds the trainer from the configuration stored in the file.
std::unique_ptr<Trainer> load_checkpoint(const std::filesystem::path& path);
// Loads into an existing trainer; a different architecture is a CheckpointError.
void load_checkpoint_into(const std::filesystem::path& path, Trainer& trainer);

}  // namespace pavits::train
