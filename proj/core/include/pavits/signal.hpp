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

// Deterministic DSP front-end: WAV I/O, STFT magnitudes, log-mel, F0,
// mel-cepstra, DTW and mel-cepstral distortion.
//
// Every function here is pure; nothing holds mutable state between calls.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pavits/matrix.hpp"

namespace pavits::signal {

inline constexpr int kDefaultSampleRate = 22050;
inline constexpr int kMelBands = 80;
inline constexpr double kLogFloor = 1e-5;
inline constexpr int kCepstralOrder = 13;
inline constexpr double kF0Min = 50.0;
inline constexpr double kF0Max = 600.0;
inline constexpr double kVoicingThreshold = 0.3;
// 10 * sqrt(2) / ln(10)
inline constexpr double kMcdScale = 10.0 * std::numbers::sqrt2 / std::numbers::ln10;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

struct FrameConfig {
  int fft_size = 1024;
  int win_size = 1024;
  int hop = 256;
  bool center_pad = true;

  void validate() const;
  int bins() const { return fft_size / 2 + 1; }
  // floor(len / hop) + 1 under center padding.
  Index frame_count(std::size_t length) const;
};

struct LinearSpectrogram {
  Matrix mag;  // [fft_size/2 + 1 x frames]
  Index frames() const { return mag.cols(); }
};

struct MelSpectrogram {
  Matrix logmel;  // [80 x frames], entries >= ln(1e-5)
  Index frames() const { return logmel.cols(); }
};

struct F0Track {
  std::vector<double> f0;           // Hz, 0 where unvoiced
  std::vector<std::uint8_t> voiced;  // 1 where voiced
  std::size_t size() const { return f0.size(); }
  std::size_t voiced_count() const;
  double mean_voiced() const;  // 0 when nothing is voiced
};

struct CepstraSequence {
  Matrix coeffs;  // [13 x frames], c1..c13
  Index frames() const { return coeffs.cols(); }
};

struct DtwResult {
  std::vector<std::pair<Index, Index>> path;
  double cost = 0.0;
};

// ---- audio I/O -------------------------------------------------------------
// 16-bit PCM mono only. Samples are normalized by 1/32768 on load.
Waveform load_wav(const std::filesystem::path& path);
void save_wav(const std::filesystem::path& path, const Waveform& w);

// ---- framing helpers shared with the differentiable mel path ---------------
// Mirror index into [0, length) for any integer position (numpy "reflect").
Index reflect_index(Index position, Index length);
// Periodic Hann of length win_size, zero-padded symmetrically to fft_size.
std::vector<double> analysis_window(const FrameConfig& cfg);
// Center-padded (or raw) signal that frame t reads from at offset t * hop.
std::vector<double> framed_source(std::span<const double> samples, const FrameConfig& cfg);

// ---- spectra -------------------------------------------------------------------
LinearSpectrogram linear_spectrogram(const Waveform& w, const FrameConfig& cfg);
Matrix stft_magnitude(std::span<const double> samples, const FrameConfig& cfg);

// [80 x fft_size/2 + 1] triangular HTK-mel filterbank spanning 0 Hz to sr/2,
// each triangle normalized to unit sum.
Matrix mel_filterbank(int sample_rate, int fft_size, int n_mels = kMelBands);
MelSpectrogram mel_from_linear(const LinearSpectrogram& s, int sample_rate = kDefaultSampleRate);
MelSpectrogram log_mel(const Waveform& w, const FrameConfig& cfg);

// ---- pitch ---------------------------------------------------------------------
class F0Tracker {
 public:
  virtual ~F0Tracker() = default;
  virtual F0Track track(const Waveform& w, const FrameConfig& cfg) const = 0;
};

// Frame-wise normalized autocorrelation over 50-600 Hz lags; voiced when the
// chosen peak reaches the 0.3 periodicity threshold.
class AutocorrelationF0Tracker final : public F0Tracker {
 public:
  F0Track track(const Waveform& w, const FrameConfig& cfg) const override;
};

F0Track extract_f0(const Waveform& w, const FrameConfig& cfg);
F0Track extract_f0(const Waveform& w, const FrameConfig& cfg, const F0Tracker& tracker);

// ---- cepstra, alignment, distortion --------------------------------------------
// Orthonormal DCT-II of each log-mel frame, coefficients 1..13.
CepstraSequence cepstra_from_log_mel(const MelSpectrogram& mel);
CepstraSequence mel_cepstra(const Waveform& w, const FrameConfig& cfg);

// Symmetric-step DTW between frame sequences stored as columns, Euclidean
// frame distance. Throws InputError on an empty sequence.
DtwResult dtw(const Matrix& a, const Matrix& b);

double mcd_from_cepstra(const CepstraSequence& ref, const CepstraSequence& conv);
double mcd(const Waveform& ref, const Waveform& conv, const FrameConfig& cfg = {});

// ---- feature cache ------------------------------------------------------------------
struct FeatureRecord {
  std::string id;
  LinearSpectrogram linear;
  MelSpectrogram mel;
  F0Track f0;
  CepstraSequence cepstra;
};

FeatureRecord compute_features(const std::string& id, const Waveform& w, const FrameConfig& cfg);
void write_feature_record(const std::filesystem::path& path, const FeatureRecord& record);
FeatureRecord read_feature_record(const std::filesystem::path& path);

}  // namespace pavits::signal
