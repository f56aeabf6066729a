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
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pavits/train.hpp"

namespace pavits::runtime {

namespace fs = std::filesystem;

// ---- manifest -----------------------------------------------------------------

inline constexpr const char* kManifestHeader = "id|audio_path|phonemes|emotion|speaker";

struct UtteranceRecord {
  std::string id;
  fs::path audio_path;  // absolute, or relative to the working directory
  std::vector<std::string> phonemes;
  Emotion emotion = Emotion::kNeutral;
  std::string speaker;
};

// Audio paths are resolved relative to the manifest's directory.
std::vector<UtteranceRecord> read_manifest(const fs::path& path);
// Audio paths are written relative to the manifest's directory when possible.
void write_manifest(const fs::path& path, const std::vector<UtteranceRecord>& records);

tpp::PhonemeInventory inventory_from(const std::vector<UtteranceRecord>& records);

// ---- synthetic corpus -------------------------------------------------------

// How an emotion is rendered by the synthetic generator, relative to neutral.
struct EmotionRendering {
  double pitch_scale = 1.0;
  double duration_scale = 1.0;
  double gain = 1.0;
  double pitch_rise = 0.0;  // extra relative pitch reached by the end of the utterance
};

EmotionRendering synthetic_rendering(Emotion e);

inline constexpr int kSyntheticPhonemes = 16;
const std::array<std::string, kSyntheticPhonemes>& synthetic_alphabet();

struct SyntheticCorpusSpec {
  int utterances = 2;
  std::uint64_t seed = 1;
  int sample_rate = signal::kDefaultSampleRate;
  int speakers = 2;
  int min_phonemes = 4;
  int max_phonemes = 6;
};

// Renders every utterance under all five emotions, writes the WAV files and
// `manifest.txt` into `out_dir`, and returns the manifest path.
fs::path generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const fs::path& out_dir);

// ---- features -----------------------------------------------------------------

fs::path cache_path(const fs::path& cache_dir, const UtteranceRecord& r);
// Computes and writes one feature record per manifest entry.
void prepare_cache(const fs::path& manifest, const fs::path& cache_dir, const signal::FrameConfig& cfg);

// Loads audio and features; cached features are used when `cache_dir` holds them.
std::vector<train::Recording> load_recordings(const std::vector<UtteranceRecord>& records,
                                              const tpp::PhonemeInventory& inventory, const signal::FrameConfig& cfg,
                                              const std::optional<fs::path>& cache_dir = std::nullopt);

// ---- conversion ---------------------------------------------------------------

enum class Mode { kFixedLength, kVariableLength };
Mode parse_mode(const std::string& s);
std::string mode_name(Mode m);

struct ConversionRequest {
  Mode mode = Mode::kFixedLength;
  std::optional<signal::Waveform> audio;
  std::optional<std::vector<std::string>> phonemes;
  std::string speaker;
  Emotion target = Emotion::kNeutral;
};

struct VlResult {
  signal::Waveform audio;
  DurationVector durations;
  Matrix prior_mu;  // phoneme-level prior means
};

// Read-only conversion front-end over a trained model.
class Converter {
 public:
  explicit Converter(std::shared_ptr<const train::Trainer> trainer);
  static Converter from_checkpoint(const fs::path& path);

  const train::Trainer& trainer() const { return *trainer_; }

  signal::Waveform convert_fl(const signal::Waveform& source, Emotion target) const;
  VlResult convert_vl(const std::vector<std::string>& phonemes, Emotion target, const signal::Waveform* source,
                      const std::string& speaker, double noise_scale, std::uint64_t seed = 0) const;
  signal::Waveform convert(const ConversionRequest& req) const;

 private:
  train::SpeakerProfile speaker_profile(const signal::Waveform* source, const std::string& speaker) const;

  std::shared_ptr<const train::Trainer> trainer_;
};

// ---- evaluation -----------------------------------------------------------------

inline constexpr std::array<Emotion, 4> kTargetEmotions = {Emotion::kAngry, Emotion::kHappy, Emotion::kSad,
                                                           Emotion::kSurprise};
std::string pair_name(Emotion target);

struct EvalReport {
  Mode mode = Mode::kFixedLength;
  std::map<std::string, double> mean;  // keyed by pair name
  std::map<std::string, int> count;
};

EvalReport evaluate_corpus(const Converter& conv, const std::vector<UtteranceRecord>& records, Mode mode);
std::string format_report(const EvalReport& r);

}  // namespace pavits::runtime
