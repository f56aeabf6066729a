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


#include "pavits/tpp.hpp"

#include <algorithm>
#include <cmath>

#include "pavits/error.hpp"

namespace pavits::tpp {

PhonemeInventory::PhonemeInventory(std::vector<std::string> symbols) {
  for (auto& s : symbols) add(s);
}

Index PhonemeInventory::add(const std::string& symbol) {
  const auto it = std::find(symbols_.begin(), symbols_.end(), symbol);
  if (it != symbols_.end()) return static_cast<Index>(it - symbols_.begin()) + 1;
  if (symbol.empty() || symbol.find_first_of(" \t\n|") != std::string::npos) {
    throw InputError("phoneme inventory: invalid symbol '" + symbol + "'");
  }
  symbols_.push_back(symbol);
  return static_cast<Index>(symbols_.size());
}

Index PhonemeInventory::id(const std::string& symbol) const {
  const auto it = std::find(symbols_.begin(), symbols_.end(), symbol);
  if (it == symbols_.end()) throw InputError("unknown phoneme symbol: " + symbol);
  return static_cast<Index>(it - symbols_.begin()) + 1;
}

PhonemeSequence PhonemeInventory::encode(const std::vector<std::string>& symbols) const {
  PhonemeSequence out;
  for (const auto& s : symbols) out.ids.push_back(id(s));
  return out;
}

Matrix positional_encoding(Index dim, Index length) {
  Matrix pe(dim, length);
  for (Index i = 0; i < dim; ++i) {
    const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
    for (Index t = 0; t < length; ++t) {
      pe(i, t) = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
    }
  }
  return pe;
}

TextualProsodyPredictor::TextualProsodyPredictor(nn::ParamStore& store, const std::string& prefix,
                                                 const TppConfig& cfg, nn::Rng& rng)
    : cfg_(cfg) {
  if (cfg.d_model % cfg.heads != 0) throw InputError("tpp: d_model must be divisible by heads");
  const Index d = cfg.d_model;
  embed_ = nn::Embedding(store, prefix + ".embed", cfg.vocab, d, rng);
  for (Index i = 0; i < cfg.blocks; ++i) {
    const std::string p = prefix + ".block" + std::to_string(i);
    Block b;
    b.qkv = nn::make_linear(store, p + ".qkv", d, 3 * d, rng);
    b.out = nn::make_linear(store, p + ".out", d, d, rng);
    b.norm1 = nn::LayerNorm(store, p + ".norm1", d);
    b.norm2 = nn::LayerNorm(store, p + ".norm2", d);
    b.ffn1 = nn::Conv1d(store, p + ".ffn1", d, cfg.ffn_hidden, cfg.kernel, rng);
    b.ffn2 = nn::Conv1d(store, p + ".ffn2", cfg.ffn_hidden, d, cfg.kernel, rng);
    blocks_.push_back(std::move(b));
  }
  emotion_table_ = store.add(prefix + ".emotion_table", nn::standard_normal(d, kEmotionCount, rng) * 0.3);
  for (int i = 0; i < 2; ++i) {
    const std::string p = prefix + ".prosody" + std::to_string(i);
    prosody_layers_.push_back({nn::Conv1d(store, p + ".conv", d, d, cfg.kernel, rng), nn::LayerNorm(store, p + ".norm", d)});
  }
  prosody_out_ = nn::make_linear(store, prefix + ".prosody_out", d, d, rng);
  prior_ = nn::make_linear(store, prefix + ".prior", 2 * d, 2 * cfg.d_latent, rng);
  for (int i = 0; i < 2; ++i) {
    const std::string p = prefix + ".duration" + std::to_string(i);
    const Index in = i == 0 ? 2 * d : d;
    duration_layers_.push_back({nn::Conv1d(store, p + ".conv", in, d, cfg.kernel, rng), nn::LayerNorm(store, p + ".norm", d)});
  }
  duration_out_ = nn::make_linear(store, prefix + ".duration_out", d, 1, rng);
}

Tensor TextualProsodyPredictor::attention(const Block& b, const Tensor& x) const {
  const Index d = cfg_.d_model, dh = d / cfg_.heads;
  const Tensor qkv = b.qkv(x);
  std::vector<Tensor> heads;
  for (Index h = 0; h < cfg_.heads; ++h) {
    const Tensor q = ag::slice_rows(qkv, h * dh, dh);
    const Tensor k = ag::slice_rows(qkv, d + h * dh, dh);
    const Tensor v = ag::slice_rows(qkv, 2 * d + h * dh, dh);
    // scores(j, i): key j against query i; each column is one query.
    const Tensor scores = ag::scale(ag::matmul(ag::transpose(k), q), 1.0 / std::sqrt(static_cast<double>(dh)));
    heads.push_back(ag::matmul(v, ag::softmax_cols(scores)));
  }
  return b.out(ag::concat_rows(heads));
}

Tensor TextualProsodyPredictor::encode_phonemes(const PhonemeSequence& p) const {
  if (p.ids.empty()) throw InputError("encode_phonemes: empty phoneme sequence");
  Tensor x = ag::add(ag::scale(embed_(p.ids), std::sqrt(static_cast<double>(cfg_.d_model))),
                     Tensor::constant(positional_encoding(cfg_.d_model, p.size())));
  for (const Block& b : blocks_) {
    x = b.norm1(ag::add(x, attention(b, x)));
    x = b.norm2(ag::add(x, b.ffn2(ag::relu(b.ffn1(x)))));
  }
  return x;
}

Tensor TextualProsodyPredictor::predict_prosody(const Tensor& h, Emotion e) const {
  const Index idx = emotion_index(e);
  if (idx < 0 || idx >= kEmotionCount) throw InputError("predict_prosody: unknown emotion");
  Tensor x = ag::add(h, ag::slice_cols(emotion_table_, idx, 1));
  for (const ConvLayer& l : prosody_layers_) x = l.norm(ag::relu(l.conv(x)));
  return prosody_out_(x);
}

GaussianSequence TextualProsodyPredictor::project_prior(const Tensor& h, const Tensor& prosody) const {
  const Tensor stats = prior_(ag::concat_rows({h, prosody}));
  return {ag::slice_rows(stats, 0, cfg_.d_latent), ag::slice_rows(stats, cfg_.d_latent, cfg_.d_latent),
          Level::kPhoneme};
}

Tensor TextualProsodyPredictor::predict_durations(const Tensor& h, const Tensor& prosody) const {
  Tensor x = ag::concat_rows({h.detach(), prosody.detach()});
  for (const ConvLayer& l : duration_layers_) x = l.norm(ag::relu(l.conv(x)));
  return duration_out_(x);
}

DurationVector decode_durations(const Matrix& log_durations) {
  DurationVector d;
  d.reserve(static_cast<std::size_t>(log_durations.size()));
  for (Index i = 0; i < log_durations.size(); ++i) {
    const double v = std::round(std::exp(std::min(log_durations.data()[i], 20.0)));
    d.push_back(std::max<Index>(1, static_cast<Index>(v)));
  }
  return d;
}

namespace {

GaussianSequence gather(const GaussianSequence& g, std::span<const Index> index) {
  return {ag::gather_cols(g.mu, index), ag::gather_cols(g.log_sigma, index), Level::kFrame};
}

}  // namespace

GaussianSequence expand_prior(const GaussianSequence& phoneme_prior, std::span<const Index> durations) {
  if (static_cast<Index>(durations.size()) != phoneme_prior.length()) {
    throw InputError("expand_prior: duration count does not match phoneme count");
  }
  std::vector<Index> index;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] < 0) throw InputError("expand_prior: negative duration");
    index.insert(index.end(), static_cast<std::size_t>(durations[i]), static_cast<Index>(i));
  }
  if (index.empty()) throw InputError("expand_prior: zero-length expansion");
  return gather(phoneme_prior, index);
}

GaussianSequence expand_prior(const GaussianSequence& phoneme_prior, const AlignmentMatrix& a) {
  if (a.phonemes() != phoneme_prior.length()) throw InputError("expand_prior: alignment does not match phoneme count");
  return gather(phoneme_prior, a.frame_to_phoneme());
}

}  // namespace pavits::tpp
