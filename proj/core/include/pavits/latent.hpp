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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pavits/autograd.hpp"

namespace pavits {

enum class Emotion { kNeutral = 0, kAngry = 1, kHappy = 2, kSad = 3, kSurprise = 4 };

inline constexpr int kEmotionCount = 5;
inline constexpr std::array<Emotion, kEmotionCount> kAllEmotions = {
    Emotion::kNeutral, Emotion::kAngry, Emotion::kHappy, Emotion::kSad, Emotion::kSurprise};

std::string_view emotion_name(Emotion e);
// Accepts the lower-case names; throws InputError otherwise.
Emotion parse_emotion(std::string_view name);
inline int emotion_index(Emotion e) { return static_cast<int>(e); }

enum class Level { kPhoneme, kFrame };

// Diagonal Gaussian per column. sigma is always exp(log_sigma).
struct GaussianSequence {
  ag::Tensor mu;         // [d x L]
  ag::Tensor log_sigma;  // [d x L]
  Level level = Level::kPhoneme;

  Index dims() const { return mu.rows(); }
  Index length() const { return mu.cols(); }
  Matrix sigma() const { return log_sigma.value().array().exp().matrix(); }
};

// One phoneme index per frame; monotone, contiguous, surjective.
class AlignmentMatrix {
 public:
  AlignmentMatrix() = default;
  // Throws InputError if the assignment is not a valid monotone alignment.
  AlignmentMatrix(Index phonemes, std::vector<Index> frame_to_phoneme);

  Index phonemes() const { return phonemes_; }
  Index frames() const { return static_cast<Index>(owner_.size()); }
  Index phoneme_at(Index frame) const { return owner_[static_cast<std::size_t>(frame)]; }
  const std::vector<Index>& frame_to_phoneme() const { return owner_; }
  // Dense binary form [N x T].
  Matrix dense() const;

 private:
  Index phonemes_ = 0;
  std::vector<Index> owner_;
};

using DurationVector = std::vector<Index>;

DurationVector durations_from_alignment(const AlignmentMatrix& a);
// Inverse of durations_from_alignment. Throws on zero or negative entries.
AlignmentMatrix alignment_from_durations(std::span<const Index> durations);

}  // namespace pavits
