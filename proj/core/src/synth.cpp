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


#include "pavits/synth.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "fft.hpp"
#include "pavits/error.hpp"

namespace pavits::synth {

Tensor stft_magnitude(const Tensor& wave, const signal::FrameConfig& cfg) {
  if (wave.rows() != 1) throw InputError("stft: waveform must be a single row");
  const Matrix& samples = wave.value();
  const std::span<const double> view(samples.data(), static_cast<std::size_t>(samples.cols()));
  Matrix mag = signal::stft_magnitude(view, cfg);

  return ag::make_result(std::move(mag), {wave}, [cfg](ag::Node& self) {
    const Matrix& x = self.parents[0]->value;
    const Index len = x.cols();
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(len));
    const std::vector<double> src = signal::framed_source(xs, cfg);
    const std::vector<double> window = signal::analysis_window(cfg);
    const detail::RealFft fft(cfg.fft_size);
    const int n = cfg.fft_size, bins = cfg.bins();
    std::vector<double> buf(static_cast<std::size_t>(n));
    std::vector<std::complex<double>> spec(static_cast<std::size_t>(bins));
    std::vector<double> padded_grad(src.size(), 0.0);

    for (Index t = 0; t < self.grad.cols(); ++t) {
      const std::size_t start = static_cast<std::size_t>(t * cfg.hop);
      for (int i = 0; i < n; ++i) buf[i] = src[start + i] * window[i];
      fft.forward(buf.data(), spec.data());
      // d|X_k|/dx_n = Re(X_k e^{i 2 pi k n / N}) / |X_k|, evaluated with one inverse FFT.
      for (int k = 0; k < bins; ++k) {
        const double m = std::abs(spec[k]);
        const std::complex<double> g = m > 0.0 ? spec[k] * (self.grad(k, t) / m) : 0.0;
        spec[k] = (k == 0 || k == bins - 1) ? std::complex<double>(g.real(), 0.0) : 0.5 * g;
      }
      fft.inverse(spec.data(), buf.data());
      for (int i = 0; i < n; ++i) padded_grad[start + i] += buf[i] * window[i];
    }

    Matrix g = Matrix::Zero(1, len);
    const Index pad = cfg.center_pad ? cfg.fft_size / 2 : 0;
    for (Index i = 0; i < static_cast<Index>(padded_grad.size()); ++i) {
      const Index target = cfg.center_pad ? signal::reflect_index(i - pad, len) : i;
      if (target < len) g(0, target) += padded_grad[static_cast<std::size_t>(i)];
    }
    self.parents[0]->accumulate(g);
  });
}

Tensor log_mel(const Tensor& wave, const signal::FrameConfig& cfg, int sample_rate) {
  const Tensor fb = Tensor::constant(signal::mel_filterbank(sample_rate, cfg.fft_size));
  return ag::clamp_log(ag::matmul(fb, stft_magnitude(wave, cfg)), signal::kLogFloor);
}

// ---------------------------------------------------------------------------

Matrix harmonic_excitation(std::span<const double> f0_hz, Index hop, int sample_rate, Index harmonics) {
  if (hop < 1 || sample_rate <= 0 || harmonics < 1) throw InputError("excitation: invalid geometry");
  const Index frames = static_cast<Index>(f0_hz.size());
  Matrix e = Matrix::Zero(harmonics, frames * hop);
  const double nyquist = 0.5 * sample_rate;
  double phase = 0.0;  // in cycles of the fundamental
  for (Index t = 0; t < frames; ++t) {
    const double f0 = f0_hz[static_cast<std::size_t>(t)];
    if (!(f0 > 0.0)) {
      phase = 0.0;
      continue;
    }
    for (Index n = t * hop; n < (t + 1) * hop; ++n) {
      phase += f0 / sample_rate;
      phase -= std::floor(phase);
      const std::complex<double> step = std::polar(1.0, 2.0 * std::numbers::pi * phase);
      std::complex<double> rot = step;
      for (Index k = 0; k < harmonics && f0 * static_cast<double>(k + 1) < nyquist; ++k) {
        e(k, n) = rot.imag();
        rot *= step;
      }
    }
  }
  return e;
}

std::vector<double> pitch_track(const PitchPrediction& p) {
  const Matrix& lf = p.log_f0.value();
  const Matrix& v = p.voicing.value();
  std::vector<double> f0(static_cast<std::size_t>(lf.cols()), 0.0);
  for (Index t = 0; t < lf.cols(); ++t) {
    if (v(0, t) >= 0.5) f0[static_cast<std::size_t>(t)] = std::exp(lf(0, t));
  }
  return f0;
}

Decoder::Decoder(nn::ParamStore& store, const std::string& prefix, const DecoderConfig& cfg, nn::Rng& rng)
    : cfg_(cfg) {
  spk_proj_ = nn::make_linear(store, prefix + ".spk_proj", cfg.cond, cfg.latent, rng);
  emo_proj_ = nn::make_linear(store, prefix + ".emo_proj", cfg.cond, cfg.latent, rng);
  pitch_conv_ = nn::Conv1d(store, prefix + ".pitch_conv", cfg.latent + 1, cfg.pitch_hidden, 3, rng);
  pitch_out_ = nn::make_linear(store, prefix + ".pitch_out", cfg.pitch_hidden, 2, rng);
  pre_ = nn::Conv1d(store, prefix + ".pre", cfg.latent, cfg.channels, cfg.kernel_pre, rng);
  Index ch = cfg.channels;
  Index rate = hop();
  for (std::size_t i = 0; i < cfg.upsample.size(); ++i) {
    const std::string p = prefix + ".stage" + std::to_string(i);
    const Index out = std::max<Index>(ch / 2, 1);
    rate /= cfg.upsample[i];
    Stage s;
    s.alpha_in = store.add(p + ".alpha_in", Matrix::Ones(ch, 1));
    s.up = nn::ConvTranspose1d(store, p + ".up", ch, out, cfg.upsample[i], rng);
    // Non-overlapping windows bring the excitation down to this stage's rate.
    s.source = nn::Conv1d(store, p + ".source", cfg.harmonics, out, ag::ConvGeometry{rate, rate, 1, 0, 0}, rng);
    s.alpha1 = store.add(p + ".alpha1", Matrix::Ones(out, 1));
    s.alpha2 = store.add(p + ".alpha2", Matrix::Ones(out, 1));
    s.res1 = nn::Conv1d(store, p + ".res1", out, out, cfg.resblock_kernel, rng);
    s.res2 = nn::Conv1d(store, p + ".res2", out, out, cfg.resblock_kernel, rng, 3);
    stages_.push_back(std::move(s));
    ch = out;
  }
  alpha_post_ = store.add(prefix + ".alpha_post", Matrix::Ones(ch, 1));
  post_ = nn::Conv1d(store, prefix + ".post", ch, 1, 7, rng);
}

Index Decoder::hop() const {
  Index h = 1;
  for (Index s : cfg_.upsample) h *= s;
  return h;
}

Tensor Decoder::condition(const Tensor& z, const Tensor& speaker, const Tensor& emotion) const {
  if (z.rows() != cfg_.latent) throw InputError("decode: latent channel mismatch");
  if (speaker.rows() != cfg_.cond || emotion.rows() != cfg_.cond) throw InputError("decode: conditioning size mismatch");
  if (z.cols() == 0) throw InputError("decode: empty latent");
  return ag::add(ag::add(z, spk_proj_(speaker)), emo_proj_(emotion));
}

PitchPrediction Decoder::predict_pitch(const Tensor& z, const Tensor& speaker, const Tensor& emotion,
                                       const Tensor& base_log_f0) const {
  if (base_log_f0.rows() != 1 || base_log_f0.cols() != z.cols()) throw InputError("pitch: base contour length mismatch");
  // The source level tells an identity request from a conversion.
  const Tensor level = ag::add_scalar(base_log_f0, -std::log(200.0));
  const Tensor in = ag::concat_rows({condition(z, speaker, emotion), level});
  const Tensor out = pitch_out_(ag::tanh(pitch_conv_(in)));
  return {ag::add(base_log_f0, ag::slice_rows(out, 0, 1)), ag::sigmoid(ag::slice_rows(out, 1, 1))};
}

GeneratorOutput Decoder::decode(const Tensor& z, const Tensor& speaker, const Tensor& emotion,
                                std::span<const double> f0_hz) const {
  if (static_cast<Index>(f0_hz.size()) != z.cols()) throw InputError("decode: pitch track length mismatch");
  const Tensor excitation = Tensor::constant(harmonic_excitation(f0_hz, hop(), cfg_.sample_rate, cfg_.harmonics));
  Tensor x = pre_(condition(z, speaker, emotion));
  for (const Stage& s : stages_) {
    x = ag::add(s.up(ag::snake(x, s.alpha_in)), s.source(excitation));
    const Tensor r = s.res2(ag::snake(s.res1(ag::snake(x, s.alpha1)), s.alpha2));
    x = ag::add(x, r);
  }
  return {ag::tanh(post_(ag::snake(x, alpha_post_))), speaker, emotion};
}

// ---------------------------------------------------------------------------

namespace {

ag::ConvGeometry geometry(Index kernel, Index stride) {
  return {kernel, stride, 1, (kernel - 1) / 2, (kernel - 1) / 2};
}

struct StackOutput {
  Tensor logits;
  std::vector<Tensor> features;
};

StackOutput run_stack(const std::vector<nn::Conv1d>& layers, const Tensor& x) {
  StackOutput out;
  Tensor h = x;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    h = ag::leaky_relu(layers[i](h));
    out.features.push_back(h);
  }
  out.logits = layers.back()(h);
  return out;
}

}  // namespace

WaveDiscriminator::WaveDiscriminator(nn::ParamStore& store, const std::string& prefix, nn::Rng& rng) {
  const std::string r = prefix + ".raw";
  raw_.emplace_back(store, r + "0", 1, 8, geometry(15, 1), rng);
  raw_.emplace_back(store, r + "1", 8, 32, geometry(11, 4), rng);
  raw_.emplace_back(store, r + "2", 32, 32, geometry(11, 4), rng);
  raw_.emplace_back(store, r + "3", 32, 32, geometry(5, 1), rng);
  raw_.emplace_back(store, r + "_out", 32, 1, geometry(3, 1), rng);
  const std::string p = prefix + ".period2_";
  periodic_.emplace_back(store, p + "0", 1, 8, geometry(5, 3), rng);
  periodic_.emplace_back(store, p + "1", 8, 32, geometry(5, 3), rng);
  periodic_.emplace_back(store, p + "2", 32, 32, geometry(5, 1), rng);
  periodic_.emplace_back(store, p + "out", 32, 1, geometry(3, 1), rng);
}

DiscriminatorReadout WaveDiscriminator::discriminate(const Tensor& wave) const {
  if (wave.rows() != 1 || wave.cols() < 2) throw InputError("discriminate: need a waveform of at least 2 samples");
  DiscriminatorReadout out;
  StackOutput raw = run_stack(raw_, wave);
  out.logits.push_back(raw.logits);
  out.feature_maps.push_back(std::move(raw.features));

  // Period 2: fold the waveform into its even and odd phases, shared weights.
  const Index half = wave.cols() / 2;
  std::vector<Index> even(static_cast<std::size_t>(half)), odd(static_cast<std::size_t>(half));
  for (Index i = 0; i < half; ++i) {
    even[static_cast<std::size_t>(i)] = 2 * i;
    odd[static_cast<std::size_t>(i)] = 2 * i + 1;
  }
  const StackOutput a = run_stack(periodic_, ag::gather_cols(wave, even));
  const StackOutput b = run_stack(periodic_, ag::gather_cols(wave, odd));
  std::vector<Tensor> features;
  for (std::size_t i = 0; i < a.features.size(); ++i) features.push_back(ag::concat_rows({a.features[i], b.features[i]}));
  out.logits.push_back(ag::concat_rows({a.logits, b.logits}));
  out.feature_maps.push_back(std::move(features));
  return out;
}

// ---------------------------------------------------------------------------

EmotionClassifier::EmotionClassifier(nn::ParamStore& store, const std::string& prefix,
                                     const signal::FrameConfig& frames, int sample_rate, Index hidden,
                                     nn::Rng& rng)
    : frames_(frames), sample_rate_(sample_rate) {
  convs_.emplace_back(store, prefix + ".conv0", signal::kMelBands, hidden, 3, rng);
  convs_.emplace_back(store, prefix + ".conv1", hidden, hidden, 3, rng);
  head_ = nn::make_linear(store, prefix + ".head", hidden, kEmotionCount, rng);
}

EmotionReadout EmotionClassifier::classify(const Tensor& wave) const {
  if (wave.cols() == 0) throw InputError("classify_emotion: empty input");
  // Log-mel centred around zero so the first layer sees a sane range.
  Tensor h = ag::scale(ag::add_scalar(log_mel(wave, frames_, sample_rate_), 5.0), 0.2);
  EmotionReadout out;
  for (const nn::Conv1d& c : convs_) {
    h = ag::leaky_relu(c(h));
    out.feature_maps.push_back(h);
  }
  out.logits = head_(ag::mean_cols(h));
  return out;
}

// ---------------------------------------------------------------------------

AdversarialLosses adversarial_losses(const DiscriminatorReadout& real, const DiscriminatorReadout& fake) {
  if (real.logits.size() != fake.logits.size() || real.logits.empty()) {
    throw InputError("adversarial_losses: readout structure mismatch");
  }
  Tensor g = Tensor::scalar(0.0), d = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < real.logits.size(); ++i) {
    if (real.logits[i].rows() != fake.logits[i].rows() || real.logits[i].cols() != fake.logits[i].cols()) {
      throw InputError("adversarial_losses: logit shape mismatch");
    }
    d = ag::add(d, ag::add(ag::mean(ag::square(ag::add_scalar(real.logits[i], -1.0))),
                           ag::mean(ag::square(fake.logits[i]))));
    g = ag::add(g, ag::mean(ag::square(ag::add_scalar(fake.logits[i], -1.0))));
  }
  return {g, d};
}

Tensor feature_matching_loss(const std::vector<Tensor>& real, const std::vector<Tensor>& fake) {
  if (real.size() != fake.size()) throw InputError("feature matching: layer count mismatch");
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < real.size(); ++i) {
    if (real[i].rows() != fake[i].rows() || real[i].cols() != fake[i].cols()) {
      throw InputError("feature matching: feature map shape mismatch");
    }
    total = ag::add(total, ag::mean(ag::abs(ag::sub(real[i].detach(), fake[i]))));
  }
  return total;
}

ReconstructionLosses reconstruction_losses(const Tensor& real_mel, const Tensor& fake_mel,
                                           const std::vector<std::vector<Tensor>>& real_fm,
                                           const std::vector<std::vector<Tensor>>& fake_fm) {
  if (real_mel.rows() != fake_mel.rows() || real_mel.cols() != fake_mel.cols()) {
    throw InputError("reconstruction_losses: mel shape mismatch");
  }
  if (real_fm.size() != fake_fm.size()) throw InputError("reconstruction_losses: feature map structure mismatch");
  Tensor fm = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < real_fm.size(); ++i) fm = ag::add(fm, feature_matching_loss(real_fm[i], fake_fm[i]));
  return {ag::mean(ag::abs(ag::sub(real_mel.detach(), fake_mel))), fm};
}

Tensor cross_entropy(const Tensor& logits, Emotion label) {
  const int idx = emotion_index(label);
  if (idx < 0 || idx >= kEmotionCount) throw InputError("cross_entropy: unknown emotion");
  if (logits.rows() != kEmotionCount || logits.cols() != 1) throw InputError("cross_entropy: expected [5 x 1] logits");
  return ag::neg(ag::slice_rows(ag::log_softmax_cols(logits), idx, 1));
}

EmotionLosses emotion_losses(const EmotionReadout& fake, const EmotionReadout& real, Emotion target) {
  return {cross_entropy(fake.logits, target), feature_matching_loss(real.feature_maps, fake.feature_maps)};
}

}  // namespace pavits::synth
