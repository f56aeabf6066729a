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


#include "pavits/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "pavits/error.hpp"

namespace pavits::runtime {

// ---------------------------------------------------------------------------
// Manifest

namespace {

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, delim)) out.push_back(item);
  if (!s.empty() && s.back() == delim) out.emplace_back();
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::vector<UtteranceRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest: " + path.string());
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kManifestHeader) {
    throw InputError("manifest " + path.string() + ": missing header line '" + kManifestHeader + "'");
  }
  const fs::path base = path.parent_path();
  std::vector<UtteranceRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split(line, '|');
    if (f.size() != 5) {
      throw InputError("manifest " + path.string() + " line " + std::to_string(lineno) + ": expected 5 fields");
    }
    UtteranceRecord r;
    r.id = f[0];
    r.audio_path = fs::path(f[1]).is_absolute() ? fs::path(f[1]) : base / f[1];
    r.phonemes = split_ws(f[2]);
    r.emotion = parse_emotion(f[3]);
    r.speaker = f[4];
    if (r.id.empty()) throw InputError("manifest line " + std::to_string(lineno) + ": empty id");
    for (const auto& o : out) {
      if (o.id == r.id && o.emotion == r.emotion && o.speaker == r.speaker) {
        throw InputError("manifest line " + std::to_string(lineno) + ": duplicate id '" + r.id + "' for emotion " +
                         std::string(emotion_name(r.emotion)));
      }
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw InputError("manifest " + path.string() + " has no records");
  return out;
}

void write_manifest(const fs::path& path, const std::vector<UtteranceRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write manifest: " + path.string());
  out << kManifestHeader << '\n';
  const fs::path base = path.parent_path();
  for (const auto& r : records) {
    fs::path audio = fs::absolute(r.audio_path).lexically_normal();
    const fs::path rel = audio.lexically_relative(fs::absolute(base).lexically_normal());
    if (!rel.empty()) audio = rel;
    out << r.id << '|' << audio.generic_string() << '|';
    for (std::size_t i = 0; i < r.phonemes.size(); ++i) out << (i ? " " : "") << r.phonemes[i];
    out << '|' << emotion_name(r.emotion) << '|' << r.speaker << '\n';
  }
}

tpp::PhonemeInventory inventory_from(const std::vector<UtteranceRecord>& records) {
  tpp::PhonemeInventory inv;
  for (const auto& r : records) {
    for (const auto& p : r.phonemes) inv.add(p);
  }
  return inv;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

EmotionRendering synthetic_rendering(Emotion e) {
  switch (e) {
    case Emotion::kNeutral:
      return {1.0, 1.0, 1.0, 0.0};
    case Emotion::kAngry:
      return {1.3, 0.8, 1.4, 0.0};
    case Emotion::kHappy:
      return {1.2, 0.9, 1.15, 0.0};
    case Emotion::kSad:
      return {0.85, 1.25, 0.6, 0.0};
    case Emotion::kSurprise:
      return {1.35, 0.9, 1.2, 0.25};
  }
  throw InputError("synthetic_rendering: unknown emotion");
}

const std::array<std::string, kSyntheticPhonemes>& synthetic_alphabet() {
  static const std::array<std::string, kSyntheticPhonemes> symbols = {"a", "e", "i", "o", "u", "m", "n", "l",
                                                                      "r", "w", "y", "j", "v", "z", "b", "d"};
  return symbols;
}

namespace {

struct Formants {
  double f1, f2, f3;
};

constexpr std::array<Formants, kSyntheticPhonemes> kFormants = {{
    {800, 1200, 2500}, {500, 1900, 2600}, {300, 2300, 3000}, {500, 900, 2400},
    {320, 800, 2300},  {280, 1000, 2600}, {300, 1500, 2500}, {380, 1300, 2700},
    {450, 1250, 1700}, {300, 700, 2300},  {280, 2200, 2900}, {350, 2000, 2800},
    {400, 1600, 2500}, {420, 1800, 2700}, {600, 1000, 2400}, {550, 1700, 2600},
}};

struct UtterancePlan {
  std::vector<int> phonemes;
  std::vector<double> durations;  // seconds, neutral
  double f0 = 120.0;
  int speaker = 0;
  std::vector<double> phases;
};

double envelope(double f, const Formants& fm) {
  auto peak = [f](double c, double bw) { return std::exp(-0.5 * (f - c) * (f - c) / (bw * bw)); };
  return (0.3 + peak(fm.f1, 120.0) + 0.7 * peak(fm.f2, 160.0) + 0.4 * peak(fm.f3, 220.0)) / (1.0 + f / 1500.0);
}

Formants lerp(const Formants& a, const Formants& b, double w) {
  return {a.f1 + w * (b.f1 - a.f1), a.f2 + w * (b.f2 - a.f2), a.f3 + w * (b.f3 - a.f3)};
}

signal::Waveform render(const UtterancePlan& plan, const EmotionRendering& style, int sr) {
  std::vector<double> bounds{0.0};
  for (double d : plan.durations) bounds.push_back(bounds.back() + d * style.duration_scale);
  const double total = bounds.back();
  const auto n = static_cast<std::size_t>(std::lround(total * sr));
  const double nyquist = sr / 2.0;
  constexpr double kGlide = 0.015;
  constexpr double kFade = 0.01;
  constexpr std::size_t kBlock = 32;

  signal::Waveform w;
  w.sample_rate = sr;
  w.samples.assign(n, 0.0);
  double phase = 0.0;
  std::vector<double> amp;
  for (std::size_t start = 0; start < n; start += kBlock) {
    const double t = static_cast<double>(start) / sr;
    const double p = t / total;
    const double f0 = plan.f0 * style.pitch_scale * (1.05 - 0.1 * p) * (1.0 + style.pitch_rise * p);

    std::size_t k = 0;
    while (k + 1 < plan.phonemes.size() && t >= bounds[k + 1]) ++k;
    Formants fm = kFormants[static_cast<std::size_t>(plan.phonemes[k])];
    if (k + 1 < plan.phonemes.size() && bounds[k + 1] - t < kGlide) {
      const double wgt = 0.5 * (1.0 - (bounds[k + 1] - t) / kGlide);
      fm = lerp(fm, kFormants[static_cast<std::size_t>(plan.phonemes[k + 1])], wgt);
    } else if (k > 0 && t - bounds[k] < kGlide) {
      const double wgt = 0.5 * (1.0 - (t - bounds[k]) / kGlide);
      fm = lerp(fm, kFormants[static_cast<std::size_t>(plan.phonemes[k - 1])], wgt);
    }

    const std::size_t harmonics = std::min(plan.phases.size(), static_cast<std::size_t>(0.95 * nyquist / f0));
    amp.assign(harmonics, 0.0);
    double norm = 0.0;
    for (std::size_t h = 0; h < harmonics; ++h) {
      amp[h] = envelope(static_cast<double>(h + 1) * f0, fm);
      norm += amp[h] * amp[h];
    }
    const double scale = 0.12 * style.gain / std::sqrt(std::max(norm, 1e-12));
    const double dphi = 2.0 * std::numbers::pi * f0 / sr;
    for (std::size_t i = start; i < std::min(n, start + kBlock); ++i) {
      phase += dphi;
      double s = 0.0;
      for (std::size_t h = 0; h < harmonics; ++h) s += amp[h] * std::sin(static_cast<double>(h + 1) * phase + plan.phases[h]);
      const double ti = static_cast<double>(i) / sr;
      const double fade = std::min({1.0, ti / kFade, (total - ti) / kFade});
      w.samples[i] = std::clamp(s * scale * std::max(fade, 0.0), -0.99, 0.99);
    }
    phase = std::fmod(phase, 2.0 * std::numbers::pi);
  }
  return w;
}

}  // namespace

fs::path generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const fs::path& out_dir) {
  if (spec.utterances < 1) throw InputError("synth-corpus: need at least one utterance");
  if (spec.speakers < 1) throw InputError("synth-corpus: need at least one speaker");
  if (spec.min_phonemes < 1 || spec.max_phonemes < spec.min_phonemes) throw InputError("synth-corpus: bad phoneme range");
  if (spec.sample_rate < 8000) throw InputError("synth-corpus: sample rate too low");
  fs::create_directories(out_dir);
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> length_dist(spec.min_phonemes, spec.max_phonemes);
  std::uniform_int_distribution<int> phoneme_dist(0, kSyntheticPhonemes - 1);
  std::uniform_real_distribution<double> dur_dist(0.055, 0.09);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);

  std::vector<UtteranceRecord> records;
  for (int u = 0; u < spec.utterances; ++u) {
    UtterancePlan plan;
    const int len = length_dist(rng);
    for (int i = 0; i < len; ++i) {
      plan.phonemes.push_back(phoneme_dist(rng));
      plan.durations.push_back(dur_dist(rng));
    }
    plan.speaker = u % spec.speakers;
    plan.f0 = (120.0 + 55.0 * (plan.speaker % 3)) * (1.0 + jitter(rng));
    plan.phases.resize(120);
    for (double& p : plan.phases) p = phase_dist(rng);

    std::ostringstream id;
    id << "utt" << std::setw(4) << std::setfill('0') << u;
    const std::string speaker = "spk" + std::to_string(plan.speaker);
    std::vector<std::string> symbols;
    for (int p : plan.phonemes) symbols.push_back(synthetic_alphabet()[static_cast<std::size_t>(p)]);
    for (Emotion e : kAllEmotions) {
      const signal::Waveform w = render(plan, synthetic_rendering(e), spec.sample_rate);
      const std::string file = speaker + "_" + id.str() + "_" + std::string(emotion_name(e)) + ".wav";
      signal::save_wav(out_dir / file, w);
      records.push_back({id.str(), out_dir / file, symbols, e, speaker});
    }
  }
  const fs::path manifest = out_dir / "manifest.txt";
  write_manifest(manifest, records);
  return manifest;
}

// ---------------------------------------------------------------------------
// Features

fs::path cache_path(const fs::path& cache_dir, const UtteranceRecord& r) {
  return cache_dir / (r.speaker + "_" + r.id + "_" + std::string(emotion_name(r.emotion)) + ".feat");
}

void prepare_cache(const fs::path& manifest, const fs::path& cache_dir, const signal::FrameConfig& cfg) {
  const auto records = read_manifest(manifest);
  fs::create_directories(cache_dir);
  for (const auto& r : records) {
    const signal::Waveform w = signal::load_wav(r.audio_path);
    signal::write_feature_record(cache_path(cache_dir, r), signal::compute_features(r.id, w, cfg));
  }
}

std::vector<train::Recording> load_recordings(const std::vector<UtteranceRecord>& records,
                                              const tpp::PhonemeInventory& inventory, const signal::FrameConfig& cfg,
                                              const std::optional<fs::path>& cache_dir) {
  std::vector<train::Recording> out;
  for (const auto& r : records) {
    train::Recording rec;
    rec.id = r.id;
    rec.speaker = r.speaker;
    rec.emotion = r.emotion;
    if (r.phonemes.empty()) throw InputError("utterance " + r.id + " has no phonemes");
    rec.phonemes = inventory.encode(r.phonemes);
    rec.audio = signal::load_wav(r.audio_path);
    bool cached = false;
    if (cache_dir) {
      const fs::path p = cache_path(*cache_dir, r);
      if (fs::exists(p)) {
        rec.features = signal::read_feature_record(p);
        cached = rec.features.linear.mag.cols() == cfg.frame_count(rec.audio.size()) &&
                 rec.features.linear.mag.rows() == cfg.bins();
      }
    }
    if (!cached) rec.features = signal::compute_features(r.id, rec.audio, cfg);
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conversion

Mode parse_mode(const std::string& s) {
  if (s == "fl") return Mode::kFixedLength;
  if (s == "vl") return Mode::kVariableLength;
  throw InputError("unknown conversion mode: " + s + " (expected fl or vl)");
}

std::string mode_name(Mode m) { return m == Mode::kFixedLength ? "fl" : "vl"; }

Converter::Converter(std::shared_ptr<const train::Trainer> trainer) : trainer_(std::move(trainer)) {
  if (!trainer_) throw CheckpointError("converter: no trained model");
}

Converter Converter::from_checkpoint(const fs::path& path) {
  return Converter(std::shared_ptr<const train::Trainer>(train::load_checkpoint(path)));
}

namespace {

ag::Tensor source_spectrum(const Model& m, const signal::Waveform& w) {
  if (w.empty()) throw InputError("conversion: empty source audio");
  if (w.sample_rate != m.config().sample_rate) {
    throw InputError("conversion: source sample rate " + std::to_string(w.sample_rate) + " does not match the model (" +
                     std::to_string(m.config().sample_rate) + ")");
  }
  return ag::Tensor::constant(apm::compress_spectrum(signal::linear_spectrogram(w, m.config().frames).mag));
}

signal::Waveform to_waveform(const ag::Tensor& t, int sr) {
  signal::Waveform w;
  w.sample_rate = sr;
  w.samples.assign(t.value().data(), t.value().data() + t.value().size());
  return w;
}

}  // namespace

signal::Waveform Converter::convert_fl(const signal::Waveform& source, Emotion target) const {
  ag::NoGradGuard guard;
  const Model& m = trainer_->model();
  const ag::Tensor spec = source_spectrum(m, source);
  const apm::SpeakerEmbedding spk = m.speaker.encode(spec);
  const apm::EmotionEmbedding emo = m.emotion.describe(target);
  const Matrix eps = Matrix::Zero(m.config().d_latent, spec.cols());
  const apm::PosteriorSample post = m.integrator.integrate(spec, emo, spk, eps, !m.ablation().no_prosody_integrator);
  const std::vector<double> f0 =
      synth::pitch_track(m.decoder.predict_pitch(post.z2, spk.vector, emo.vector, spk.log_f0));
  return to_waveform(m.decoder.decode(post.z2, spk.vector, emo.vector, f0).waveform, m.config().sample_rate);
}

train::SpeakerProfile Converter::speaker_profile(const signal::Waveform* source, const std::string& speaker) const {
  const Model& m = trainer_->model();
  if (source != nullptr) {
    const apm::SpeakerEmbedding e = m.speaker.encode(source_spectrum(m, *source));
    return {e.vector.value(), e.log_f0.value().mean()};
  }
  const auto& profiles = trainer_->speaker_profiles();
  const auto it = profiles.find(speaker);
  if (it == profiles.end()) {
    throw InputError("conversion: no source audio and no stored embedding for speaker '" + speaker + "'");
  }
  return it->second;
}

VlResult Converter::convert_vl(const std::vector<std::string>& phonemes, Emotion target,
                               const signal::Waveform* source, const std::string& speaker, double noise_scale,
                               std::uint64_t seed) const {
  if (phonemes.empty()) throw InputError("variable-length conversion needs a phoneme sequence");
  ag::NoGradGuard guard;
  const Model& m = trainer_->model();
  const tpp::PhonemeSequence seq = trainer_->inventory().encode(phonemes);
  const ag::Tensor h = m.text.encode_phonemes(seq);
  const ag::Tensor pr = m.prosody(h, target);
  const GaussianSequence prior = m.text.project_prior(h, pr);
  VlResult out;
  out.durations = tpp::decode_durations(m.text.predict_durations(h, pr).value());
  out.prior_mu = prior.mu.value();
  const GaussianSequence frame_prior = tpp::expand_prior(prior, out.durations);

  nn::Rng rng(seed);
  const Matrix eps = nn::standard_normal(frame_prior.dims(), frame_prior.length(), rng);
  const Matrix u = frame_prior.mu.value() + noise_scale * frame_prior.sigma().cwiseProduct(eps);
  const ag::Tensor z = m.flow.inverse(ag::Tensor::constant(u));
  const train::SpeakerProfile profile = speaker_profile(source, speaker);
  const ag::Tensor spk = ag::Tensor::constant(profile.vector);
  const apm::EmotionEmbedding emo = m.emotion.describe(target);
  const ag::Tensor base = ag::Tensor::constant(Matrix::Constant(1, z.cols(), profile.log_f0));
  const std::vector<double> f0 = synth::pitch_track(m.decoder.predict_pitch(z, spk, emo.vector, base));
  out.audio = to_waveform(m.decoder.decode(z, spk, emo.vector, f0).waveform, m.config().sample_rate);
  return out;
}

signal::Waveform Converter::convert(const ConversionRequest& req) const {
  if (req.mode == Mode::kFixedLength) {
    if (!req.audio) throw InputError("fixed-length conversion needs source audio");
    return convert_fl(*req.audio, req.target);
  }
  if (!req.phonemes) throw InputError("variable-length conversion needs a phoneme sequence");
  return convert_vl(*req.phonemes, req.target, req.audio ? &*req.audio : nullptr, req.speaker,
                    trainer_->config().noise_scale)
      .audio;
}

// ---------------------------------------------------------------------------
// Evaluation

std::string pair_name(Emotion target) {
  switch (target) {
    case Emotion::kAngry:
      return "Neu-Ang";
    case Emotion::kHappy:
      return "Neu-Hap";
    case Emotion::kSad:
      return "Neu-Sad";
    case Emotion::kSurprise:
      return "Neu-Sur";
    case Emotion::kNeutral:
      break;
  }
  throw InputError("pair_name: neutral is not a conversion target");
}

EvalReport evaluate_corpus(const Converter& conv, const std::vector<UtteranceRecord>& records, Mode mode) {
  EvalReport report;
  report.mode = mode;
  for (Emotion e : kTargetEmotions) {
    report.mean[pair_name(e)] = 0.0;
    report.count[pair_name(e)] = 0;
  }
  const double noise = conv.trainer().config().noise_scale;
  int pairs = 0;
  for (const auto& src : records) {
    if (src.emotion != Emotion::kNeutral) continue;
    const signal::Waveform source = signal::load_wav(src.audio_path);
    for (Emotion e : kTargetEmotions) {
      const auto ref = std::find_if(records.begin(), records.end(), [&](const UtteranceRecord& r) {
        return r.emotion == e && r.id == src.id && r.speaker == src.speaker;
      });
      if (ref == records.end()) continue;
      const signal::Waveform reference = signal::load_wav(ref->audio_path);
      const signal::Waveform converted = mode == Mode::kFixedLength
                                             ? conv.convert_fl(source, e)
                                             : conv.convert_vl(src.phonemes, e, &source, src.speaker, noise).audio;
      const std::string key = pair_name(e);
      report.mean[key] += signal::mcd(reference, converted, conv.trainer().model().config().frames);
      ++report.count[key];
      ++pairs;
    }
  }
  if (pairs == 0) throw InputError("evaluate: manifest has no neutral/target pairs sharing an id");
  for (auto& [key, v] : report.mean) {
    if (report.count[key] > 0) v /= report.count[key];
  }
  return report;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << "mode";
  for (Emotion e : kTargetEmotions) os << '\t' << pair_name(e);
  os << '\n' << mode_name(r.mode);
  os << std::fixed << std::setprecision(4);
  for (Emotion e : kTargetEmotions) {
    const std::string k = pair_name(e);
    os << '\t';
    if (r.count.at(k) > 0) {
      os << r.mean.at(k);
    } else {
      os << "nan";
    }
  }
  os << "\ncount";
  for (Emotion e : kTargetEmotions) os << '\t' << r.count.at(pair_name(e));
  os << '\n';
  return os.str();
}

}  // namespace pavits::runtime
