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


#include "pavits/latent.hpp"

#include "pavits/error.hpp"

namespace pavits {

namespace {
constexpr std::array<std::string_view, kEmotionCount> kNames = {"neutral", "angry", "happy", "sad", "surprise"};
}

std::string_view emotion_name(Emotion e) { return kNames[static_cast<std::size_t>(e)]; }

Emotion parse_emotion(std::string_view name) {
  for (int i = 0; i < kEmotionCount; ++i) {
    if (kNames[static_cast<std::size_t>(i)] == name) return static_cast<Emotion>(i);
  }
  throw InputError("unknown emotion label: " + std::string(name));
}

AlignmentMatrix::AlignmentMatrix(Index phonemes, std::vector<Index> frame_to_phoneme)
    : phonemes_(phonemes), owner_(std::move(frame_to_phoneme)) {
  if (phonemes_ < 1 || frames() < phonemes_) throw InputError("alignment: need 1 <= phonemes <= frames");
  if (owner_.front() != 0 || owner_.back() != phonemes_ - 1) throw InputError("alignment: must span every phoneme");
  for (std::size_t t = 1; t < owner_.size(); ++t) {
    const Index step = owner_[t] - owner_[t - 1];
    if (step != 0 && step != 1) throw InputError("alignment: not monotone and contiguous");
  }
}

Matrix AlignmentMatrix::dense() const {
  Matrix a = Matrix::Zero(phonemes_, frames());
  for (Index t = 0; t < frames(); ++t) a(phoneme_at(t), t) = 1.0;
  return a;
}

DurationVector durations_from_alignment(const AlignmentMatrix& a) {
  DurationVector d(static_cast<std::size_t>(a.phonemes()), 0);
  for (Index p : a.frame_to_phoneme()) ++d[static_cast<std::size_t>(p)];
  return d;
}

AlignmentMatrix alignment_from_durations(std::span<const Index> durations) {
  if (durations.empty()) throw InputError("alignment: no phonemes");
  std::vector<Index> owner;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] < 1) throw InputError("alignment: durations must be >= 1");
    owner.insert(owner.end(), static_cast<std::size_t>(durations[i]), static_cast<Index>(i));
  }
  return {static_cast<Index>(durations.size()), std::move(owner)};
}

}  // namespace pavits
