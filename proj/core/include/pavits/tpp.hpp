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

#include "pavits/latent.hpp"
#include "pavits/nn.hpp"

namespace pavits::tpp {

using ag::Tensor;

struct PhonemeSequence {
  std::vector<Index> ids;
  Index size() const { return static_cast<Index>(ids.size()); }
};

// Symbol table. Id 0 is reserved for padding; symbols take ids 1..n in
// insertion order.
class PhonemeInventory {
 public:
  PhonemeInventory() = default;
  explicit PhonemeInventory(std::vector<std::string> symbols);

  // Adds the symbol if it is new; returns its id.
  Index add(const std::string& symbol);
  // Throws InputError for an unknown symbol.
  Index id(const std::string& symbol) const;
  PhonemeSequence encode(const std::vector<std::string>& symbols) const;
  const std::vector<std::string>& symbols() const { return symbols_; }
  Index vocab_size() const { return static_cast<Index>(symbols_.size()) + 1; }

 private:
  std::vector<std::string> symbols_;
};

struct TppConfig {
  Index vocab = 64;
  Index d_model = 32;
  Index d_latent = 32;
  Index blocks = 2;
  Index heads = 2;
  Index ffn_hidden = 64;
  Index kernel = 3;
};

// Phoneme encoder, emotion-conditioned prosody predictor, prior projection
// and duration predictor.
class TextualProsodyPredictor {
 public:
  TextualProsodyPredictor() = default;
  TextualProsodyPredictor(nn::ParamStore& store, const std::string& prefix, const TppConfig& cfg, nn::Rng& rng);

  const TppConfig& config() const { return cfg_; }

  // [d_model x N]
  Tensor encode_phonemes(const PhonemeSequence& p) const;
  // [d_model x N]
  Tensor predict_prosody(const Tensor& h, Emotion e) const;
  GaussianSequence project_prior(const Tensor& h, const Tensor& prosody) const;
  // Log-domain durations, [1 x N]. Inputs are detached so the duration loss
  // does not reach the encoder.
  Tensor predict_durations(const Tensor& h, const Tensor& prosody) const;

 private:
  struct Block {
    nn::Linear qkv, out;
    nn::LayerNorm norm1, norm2;
    nn::Conv1d ffn1, ffn2;
  };
  struct ConvLayer {
    nn::Conv1d conv;
    nn::LayerNorm norm;
  };

  Tensor attention(const Block& b, const Tensor& x) const;

  TppConfig cfg_;
  nn::Embedding embed_;
  std::vector<Block> blocks_;
  Tensor emotion_table_;  // [d_model x 5]
  std::vector<ConvLayer> prosody_layers_;
  nn::Linear prosody_out_;
  nn::Linear prior_;
  std::vector<ConvLayer> duration_layers_;
  nn::Linear duration_out_;
};

Matrix positional_encoding(Index dim, Index length);

// max(1, round(exp(x))) per phoneme.
DurationVector decode_durations(const Matrix& log_durations);

// Repeats each phoneme's statistics for its duration. Throws InputError on an
// empty expansion or a count mismatch.
GaussianSequence expand_prior(const GaussianSequence& phoneme_prior, std::span<const Index> durations);
GaussianSequence expand_prior(const GaussianSequence& phoneme_prior, const AlignmentMatrix& a);

}  // namespace pavits::tpp
