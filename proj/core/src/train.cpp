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


#include "pavits/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "pavits/error.hpp"

namespace pavits::train {

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  model.validate();
  if (steps < 0) throw InputError("config: steps must be >= 0");
  if (batch_size < 1) throw InputError("config: batch_size must be >= 1");
  if (lr_g < 0.0 || lr_d < 0.0) throw InputError("config: learning rates must be >= 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw InputError("config: lr_decay must be in (0, 1]");
  if (clip <= 0.0) throw InputError("config: clip must be positive");
  if (gamma <= 0.0 || beta <= 0.0) throw InputError("config: gamma and beta must be positive");
  if (segment_frames < 1) throw InputError("config: segment_frames must be >= 1");
  if (noise_scale < 0.0) throw InputError("config: noise_scale must be >= 0");
  if (log_every < 1) throw InputError("config: log_every must be >= 1");
}

double TrainConfig::lr_scale_at(long step) const { return std::pow(lr_decay, static_cast<double>(std::max(0L, step - 1))); }

double TrainConfig::gamma_at(long step) const {
  if (!gamma_decay || steps <= 0) return gamma;
  const double f = std::clamp(static_cast<double>(step) / static_cast<double>(steps), 0.0, 1.0);
  return gamma + (gamma_final - gamma) * f;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  is >> out;
  if (!is || !is.eof()) throw InputError("config: bad value for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InputError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<Index> parse_index_list(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<Index>(key, trim(item)));
  if (out.empty()) throw InputError("config: empty list for " + key);
  return out;
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> m;
    auto num = [&m](const std::string& k, auto member) {
      m[k] = [member](TrainConfig& c, const std::string& key, const std::string& v) {
        using T = std::remove_reference_t<decltype(c.*member)>;
        c.*member = parse_number<T>(key, v);
      };
    };
    auto model_num = [&m](const std::string& k, auto member) {
      m[k] = [member](TrainConfig& c, const std::string& key, const std::string& v) {
        using T = std::remove_reference_t<decltype(c.model.*member)>;
        c.model.*member = parse_number<T>(key, v);
      };
    };
    auto frame_num = [&m](const std::string& k, int signal::FrameConfig::*member) {
      m[k] = [member](TrainConfig& c, const std::string& key, const std::string& v) {
        c.model.frames.*member = parse_number<int>(key, v);
      };
    };
    auto text = [&m](const std::string& k, std::string TrainConfig::*member) {
      m[k] = [member](TrainConfig& c, const std::string&, const std::string& v) { c.*member = v; };
    };
    num("seed", &TrainConfig::seed);
    num("steps", &TrainConfig::steps);
    num("batch_size", &TrainConfig::batch_size);
    num("lr_g", &TrainConfig::lr_g);
    num("lr_d", &TrainConfig::lr_d);
    num("lr_decay", &TrainConfig::lr_decay);
    num("adam_beta1", &TrainConfig::adam_beta1);
    num("adam_beta2", &TrainConfig::adam_beta2);
    num("clip", &TrainConfig::clip);
    num("gamma", &TrainConfig::gamma);
    num("beta", &TrainConfig::beta);
    num("gamma_final", &TrainConfig::gamma_final);
    num("segment_frames", &TrainConfig::segment_frames);
    num("noise_scale", &TrainConfig::noise_scale);
    num("log_every", &TrainConfig::log_every);
    m["gamma_decay"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.gamma_decay = parse_bool(k, v); };
    m["ablate"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.ablation = parse_ablation(v); };
    m["no_prosody_predictor"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.ablation.no_prosody_predictor = parse_bool(k, v);
    };
    m["no_prosody_alignment"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.ablation.no_prosody_alignment = parse_bool(k, v);
    };
    m["no_prosody_integrator"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.ablation.no_prosody_integrator = parse_bool(k, v);
    };
    model_num("vocab", &ModelConfig::vocab);
    model_num("d_model", &ModelConfig::d_model);
    model_num("d_latent", &ModelConfig::d_latent);
    model_num("hidden", &ModelConfig::hidden);
    model_num("blocks", &ModelConfig::blocks);
    model_num("heads", &ModelConfig::heads);
    model_num("flow_layers", &ModelConfig::flow_layers);
    model_num("dec_channels", &ModelConfig::dec_channels);
    model_num("classifier_hidden", &ModelConfig::classifier_hidden);
    model_num("sample_rate", &ModelConfig::sample_rate);
    m["upsample"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.upsample = parse_index_list(k, v);
    };
    frame_num("fft_size", &signal::FrameConfig::fft_size);
    frame_num("win_size", &signal::FrameConfig::win_size);
    frame_num("hop", &signal::FrameConfig::hop);
    m["center_pad"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.frames.center_pad = parse_bool(k, v);
    };
    text("manifest", &TrainConfig::manifest);
    text("cache_dir", &TrainConfig::cache_dir);
    text("checkpoint", &TrainConfig::checkpoint);
    text("log", &TrainConfig::log);
    return m;
  }();
  return table;
}

}  // namespace

TrainConfig parse_config(std::istream& in) {
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw InputError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config: " + path.string());
  return parse_config(in);
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  const ModelConfig& m = c.model;
  os << "seed = " << c.seed << "\nsteps = " << c.steps << "\nbatch_size = " << c.batch_size << "\nlr_g = " << c.lr_g
     << "\nlr_d = " << c.lr_d << "\nlr_decay = " << c.lr_decay << "\nadam_beta1 = " << c.adam_beta1 << "\nadam_beta2 = " << c.adam_beta2
     << "\nclip = " << c.clip << "\ngamma = " << c.gamma << "\nbeta = " << c.beta
     << "\ngamma_decay = " << (c.gamma_decay ? "true" : "false") << "\ngamma_final = " << c.gamma_final
     << "\nsegment_frames = " << c.segment_frames << "\nnoise_scale = " << c.noise_scale
     << "\nno_prosody_predictor = " << (c.ablation.no_prosody_predictor ? "true" : "false")
     << "\nno_prosody_alignment = " << (c.ablation.no_prosody_alignment ? "true" : "false")
     << "\nno_prosody_integrator = " << (c.ablation.no_prosody_integrator ? "true" : "false")
     << "\nvocab = " << m.vocab << "\nd_model = " << m.d_model << "\nd_latent = " << m.d_latent
     << "\nhidden = " << m.hidden << "\nblocks = " << m.blocks << "\nheads = " << m.heads
     << "\nflow_layers = " << m.flow_layers << "\ndec_channels = " << m.dec_channels
     << "\nclassifier_hidden = " << m.classifier_hidden << "\nupsample = ";
  for (std::size_t i = 0; i < m.upsample.size(); ++i) os << (i ? "," : "") << m.upsample[i];
  os << "\nsample_rate = " << m.sample_rate << "\nfft_size = " << m.frames.fft_size
     << "\nwin_size = " << m.frames.win_size << "\nhop = " << m.frames.hop
     << "\ncenter_pad = " << (m.frames.center_pad ? "true" : "false") << "\nlog_every = " << c.log_every << '\n';
  if (!c.manifest.empty()) os << "manifest = " << c.manifest << '\n';
  if (!c.cache_dir.empty()) os << "cache_dir = " << c.cache_dir << '\n';
  if (!c.checkpoint.empty()) os << "checkpoint = " << c.checkpoint << '\n';
  if (!c.log.empty()) os << "log = " << c.log << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Losses

void check_finite(const LossBundle& b, long step) {
  const auto v = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw DivergenceError(std::string(LossBundle::kNames[i]), step);
  }
}

namespace {

// Shared by the scalar assembly and the differentiable one in train_step.
template <typename T, typename Add, typename Scale>
T weighted_generator_sum(const T& recon_cls, const T& recon_fm, const T& adv_g, const T& emo_cls, const T& emo_fm,
                         const T& psd, const T& f0, const T& dur, double gamma, double beta, Add add, Scale scale) {
  T total = add(scale(recon_cls, gamma), scale(recon_fm, beta));
  for (const T* t : {&adv_g, &emo_cls, &emo_fm, &psd, &f0, &dur}) total = add(total, *t);
  return total;
}

}  // namespace

double assemble_generator_loss(const LossBundle& b) {
  check_finite(b, -1);
  return weighted_generator_sum<double>(
      b.recon_cls, b.recon_fm, b.adv_G, b.emo_cls, b.emo_fm, b.psd, b.f0, b.dur, b.gamma, b.beta,
      [](double x, double y) { return x + y; }, [](double x, double s) { return x * s; });
}

double assemble_discriminator_loss(const LossBundle& b, double emotion_real_ce) {
  check_finite(b, -1);
  if (!std::isfinite(emotion_real_ce)) throw DivergenceError("emo_real_ce", -1);
  return b.adv_D + emotion_real_ce;
}

F0DurationLosses f0_and_duration_losses(const Tensor& pred_log_f0, const signal::F0Track& true_f0,
                                        const Tensor& pred_log_durations, std::span<const Index> mas_durations) {
  if (pred_log_f0.rows() != 1 || pred_log_f0.cols() != static_cast<Index>(true_f0.size())) {
    throw InputError("f0 loss: predicted and reference lengths differ");
  }
  if (pred_log_durations.rows() != 1 || pred_log_durations.cols() != static_cast<Index>(mas_durations.size())) {
    throw InputError("duration loss: predicted and reference lengths differ");
  }
  F0DurationLosses out;
  const Index frames = pred_log_f0.cols();
  Matrix mask = Matrix::Zero(1, frames), target = Matrix::Zero(1, frames);
  std::size_t voiced = 0;
  for (Index t = 0; t < frames; ++t) {
    if (true_f0.voiced[static_cast<std::size_t>(t)] && true_f0.f0[static_cast<std::size_t>(t)] > 0.0) {
      mask(0, t) = 1.0;
      target(0, t) = std::log(true_f0.f0[static_cast<std::size_t>(t)]);
      ++voiced;
    }
  }
  if (voiced == 0) {
    out.f0 = ag::scale(ag::sum(pred_log_f0), 0.0);
  } else {
    const Tensor diff = ag::mul(ag::sub(pred_log_f0, Tensor::constant(target)), Tensor::constant(mask));
    out.f0 = ag::scale(ag::sum(ag::square(diff)), 1.0 / static_cast<double>(voiced));
  }
  Matrix log_d(1, static_cast<Index>(mas_durations.size()));
  for (std::size_t i = 0; i < mas_durations.size(); ++i) {
    if (mas_durations[i] < 1) throw InputError("duration loss: durations must be >= 1");
    log_d(0, static_cast<Index>(i)) = std::log(static_cast<double>(mas_durations[i]));
  }
  out.dur = ag::mean(ag::square(ag::sub(pred_log_durations, Tensor::constant(log_d))));
  return out;
}

Tensor excitation_pitch_loss(const synth::PitchPrediction& pred, const signal::F0Track& target) {
  const Index frames = pred.log_f0.cols();
  if (frames != static_cast<Index>(target.size())) throw InputError("pitch loss: predicted and reference lengths differ");
  Matrix voiced = Matrix::Zero(1, frames), log_f0 = Matrix::Zero(1, frames);
  for (Index t = 0; t < frames; ++t) {
    const auto i = static_cast<std::size_t>(t);
    if (target.voiced[i] && target.f0[i] > 0.0) {
      voiced(0, t) = 1.0;
      log_f0(0, t) = std::log(target.f0[i]);
    }
  }
  const Tensor v = Tensor::constant(voiced);
  const Tensor voicing = ag::mean(ag::square(ag::sub(pred.voicing, v)));
  const double count = voiced.sum();
  if (count == 0.0) return voicing;
  const Tensor diff = ag::mul(ag::sub(pred.log_f0, Tensor::constant(log_f0)), v);
  return ag::add(voicing, ag::scale(ag::sum(ag::square(diff)), 1.0 / count));
}

// ---------------------------------------------------------------------------
// Training items

std::vector<Index> warp_to_target(const signal::DtwResult& path, Index target_frames) {
  std::vector<std::vector<Index>> matches(static_cast<std::size_t>(target_frames));
  for (const auto& [i, j] : path.path) {
    if (j < 0 || j >= target_frames) throw InputError("warp: path outside the target range");
    matches[static_cast<std::size_t>(j)].push_back(i);
  }
  std::vector<Index> out(static_cast<std::size_t>(target_frames));
  for (std::size_t j = 0; j < matches.size(); ++j) {
    if (matches[j].empty()) throw InputError("warp: target frame not covered by the path");
    out[j] = matches[j][matches[j].size() / 2];
  }
  return out;
}

namespace {

TrainingItem make_item(const Recording& source, const Recording& target, std::span<const Index> source_frames) {
  TrainingItem item;
  item.id = target.id;
  item.speaker = target.speaker;
  item.target = target.emotion;
  item.conversion = &source != &target;
  item.phonemes = target.phonemes;
  const Matrix compressed = apm::compress_spectrum(source.features.linear.mag);
  item.source_spec.resize(compressed.rows(), static_cast<Index>(source_frames.size()));
  for (std::size_t j = 0; j < source_frames.size(); ++j) {
    const Index i = source_frames[j];
    item.source_spec.col(static_cast<Index>(j)) = compressed.col(i);
    item.source_f0.f0.push_back(source.features.f0.f0[static_cast<std::size_t>(i)]);
    item.source_f0.voiced.push_back(source.features.f0.voiced[static_cast<std::size_t>(i)]);
  }
  item.target_f0 = target.features.f0;
  item.target_samples = target.audio.samples;
  return item;
}

}  // namespace

std::vector<TrainingItem> build_training_items(const std::vector<Recording>& recordings) {
  std::vector<TrainingItem> items;
  for (const Recording& r : recordings) {
    std::vector<Index> identity(static_cast<std::size_t>(r.features.linear.mag.cols()));
    for (std::size_t t = 0; t < identity.size(); ++t) identity[t] = static_cast<Index>(t);
    items.push_back(make_item(r, r, identity));
  }
  for (const Recording& target : recordings) {
    if (target.emotion == Emotion::kNeutral) continue;
    const auto src = std::find_if(recordings.begin(), recordings.end(), [&](const Recording& r) {
      return r.emotion == Emotion::kNeutral && r.id == target.id && r.speaker == target.speaker;
    });
    if (src == recordings.end()) continue;
    const signal::DtwResult path = signal::dtw(src->features.mel.logmel, target.features.mel.logmel);
    const std::vector<Index> warp = warp_to_target(path, target.features.mel.logmel.cols());
    items.push_back(make_item(*src, target, warp));
  }
  return items;
}

// ---------------------------------------------------------------------------
// Training loop

std::string log_header() {
  std::string h = "step";
  for (auto n : LossBundle::kNames) h += "\t" + std::string(n);
  return h + "\ttotal_G\ttotal_D";
}

std::string format_log_line(const StepRecord& r) {
  std::ostringstream os;
  os << std::setprecision(9) << r.step;
  for (double v : r.losses.values()) os << '\t' << v;
  os << '\t' << r.total_G << '\t' << r.total_D;
  return os.str();
}

Trainer::Trainer(const TrainConfig& cfg, tpp::PhonemeInventory inventory)
    : cfg_(cfg), inventory_(std::move(inventory)), rng_(cfg.seed) {
  cfg_.validate();
  if (inventory_.vocab_size() > cfg_.model.vocab) {
    throw InputError("config: vocab (" + std::to_string(cfg_.model.vocab) + ") is smaller than the phoneme inventory (" +
                     std::to_string(inventory_.vocab_size()) + ")");
  }
  model_ = std::make_unique<Model>(cfg_.model, cfg_.seed);
  apply_ablation(cfg_.ablation, *model_);
  opt_g_ = optim::Adam(model_->generator_params(), {cfg_.lr_g, cfg_.adam_beta1, cfg_.adam_beta2, 1e-9});
  opt_d_ = optim::Adam(model_->discriminator_params(), {cfg_.lr_d, cfg_.adam_beta1, cfg_.adam_beta2, 1e-9});
  // Separate stream from the initialization draws.
  rng_.seed(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
}

namespace {

struct ItemForward {
  Emotion target;
  Tensor fake;
  Tensor real;
  Tensor fake_mel;
  Tensor real_mel;
  Tensor psd;
  Tensor f0;
  Tensor dur;
};

}  // namespace

StepRecord Trainer::train_step(std::span<const TrainingItem> items) {
  if (items.empty()) throw InputError("train_step: no training items");
  ++step_;
  const Model& m = *model_;
  const ModelConfig& mc = m.config();
  const Index hop = mc.frames.hop;
  const AblationFlags& flags = m.ablation();
  const double inv_b = 1.0 / static_cast<double>(cfg_.batch_size);
  std::uniform_int_distribution<std::size_t> pick(0, items.size() - 1);

  std::vector<ItemForward> batch;
  for (Index b = 0; b < cfg_.batch_size; ++b) {
    const TrainingItem& it = items[pick(rng_)];
    const Index frames = it.frames();
    if (frames < it.phonemes.size()) throw InputError("train_step: utterance " + it.id + " has fewer frames than phonemes");
    ItemForward f;
    f.target = it.target;

    const Tensor h = m.text.encode_phonemes(it.phonemes);
    const Tensor pr = m.prosody(h, it.target);
    const GaussianSequence prior = m.text.project_prior(h, pr);
    const Tensor log_dur = m.text.predict_durations(h, pr);

    const Tensor spec = Tensor::constant(it.source_spec);
    const apm::SpeakerEmbedding spk = m.speaker.encode(spec);
    const apm::EmotionEmbedding emo = m.emotion.describe(it.target);
    const Matrix eps = nn::standard_normal(mc.d_latent, frames, rng_);
    const apm::PosteriorSample post = m.integrator.integrate(spec, emo, spk, eps, !flags.no_prosody_integrator);

    AlignmentMatrix alignment;
    {
      ag::NoGradGuard guard;
      const Tensor u = m.flow.forward(post.z2.detach()).u;
      alignment = flowalign::mas(u.value(), prior);
    }
    const DurationVector durations = durations_from_alignment(alignment);
    f.psd = flags.no_prosody_alignment
                ? Tensor::scalar(0.0)
                : flowalign::prosody_alignment_loss(post, tpp::expand_prior(prior, alignment), m.flow);
    const F0DurationLosses fd = f0_and_duration_losses(spk.log_f0, it.source_f0, log_dur, durations);
    const synth::PitchPrediction pitch =
        m.decoder.predict_pitch(post.stats.mu, spk.vector, emo.vector, spk.log_f0.detach());
    f.f0 = ag::add(fd.f0, excitation_pitch_loss(pitch, it.target_f0));
    f.dur = fd.dur;

    const Index seg = std::min(cfg_.segment_frames, frames);
    std::uniform_int_distribution<Index> start_dist(0, frames - seg);
    const Index start = start_dist(rng_);
    const std::span<const double> seg_f0(it.target_f0.f0.data() + start, static_cast<std::size_t>(seg));
    f.fake = m.decoder.decode(ag::slice_cols(post.z2, start, seg), spk.vector, emo.vector, seg_f0).waveform;
    Matrix real = Matrix::Zero(1, seg * hop);
    for (Index i = 0; i < seg * hop; ++i) {
      const auto src = static_cast<std::size_t>(start * hop + i);
      if (src < it.target_samples.size()) real(0, i) = it.target_samples[src];
    }
    f.real = Tensor::constant(std::move(real));
    {
      ag::NoGradGuard guard;
      f.real_mel = synth::log_mel(f.real, mc.frames, mc.sample_rate);
    }
    f.fake_mel = synth::log_mel(f.fake, mc.frames, mc.sample_rate);
    batch.push_back(std::move(f));
  }

  StepRecord rec;
  rec.step = step_;
  LossBundle& L = rec.losses;
  L.gamma = cfg_.gamma_at(step_);
  L.beta = cfg_.beta;

  // Discriminator update.
  nn::ParamStore& dp = model_->discriminator_params();
  dp.zero_grad();
  Tensor d_total = Tensor::scalar(0.0);
  double emo_real_ce = 0.0;
  for (const ItemForward& f : batch) {
    const synth::AdversarialLosses adv =
        synth::adversarial_losses(m.discriminator.discriminate(f.real), m.discriminator.discriminate(f.fake.detach()));
    const Tensor ce = synth::cross_entropy(m.classifier.classify(f.real).logits, f.target);
    L.adv_D += adv.discriminator.item() * inv_b;
    emo_real_ce += ce.item() * inv_b;
    d_total = ag::add(d_total, ag::scale(ag::add(adv.discriminator, ce), inv_b));
  }
  if (!std::isfinite(L.adv_D)) throw DivergenceError("adv_D", step_);
  if (!std::isfinite(emo_real_ce)) throw DivergenceError("emo_real_ce", step_);
  d_total.backward();
  optim::clip_grad_norm(dp, cfg_.clip);
  opt_d_.config().lr = cfg_.lr_d * cfg_.lr_scale_at(step_);
  opt_d_.step(dp);

  // Generator update against the refreshed discriminators.
  nn::ParamStore& gp = model_->generator_params();
  gp.zero_grad();
  dp.set_trainable(false);
  struct Thaw {
    nn::ParamStore& store;
    ~Thaw() { store.set_trainable(true); }
  } thaw{dp};
  Tensor g_total = Tensor::scalar(0.0);
  for (const ItemForward& f : batch) {
    const synth::DiscriminatorReadout d_fake = m.discriminator.discriminate(f.fake);
    const synth::EmotionReadout e_fake = m.classifier.classify(f.fake);
    synth::DiscriminatorReadout d_real;
    synth::EmotionReadout e_real;
    {
      ag::NoGradGuard guard;
      d_real = m.discriminator.discriminate(f.real);
      e_real = m.classifier.classify(f.real);
    }
    const synth::AdversarialLosses adv = synth::adversarial_losses(d_real, d_fake);
    const synth::ReconstructionLosses recon =
        synth::reconstruction_losses(f.real_mel, f.fake_mel, d_real.feature_maps, d_fake.feature_maps);
    const synth::EmotionLosses emo = synth::emotion_losses(e_fake, e_real, f.target);

    L.recon_cls += recon.mel.item() * inv_b;
    L.recon_fm += recon.feature_matching.item() * inv_b;
    L.adv_G += adv.generator.item() * inv_b;
    L.emo_cls += emo.classification.item() * inv_b;
    L.emo_fm += emo.feature_matching.item() * inv_b;
    L.psd += f.psd.item() * inv_b;
    L.f0 += f.f0.item() * inv_b;
    L.dur += f.dur.item() * inv_b;

    const Tensor item_total = weighted_generator_sum<Tensor>(
        recon.mel, recon.feature_matching, adv.generator, emo.classification, emo.feature_matching, f.psd, f.f0, f.dur,
        L.gamma, L.beta, [](const Tensor& a, const Tensor& b) { return ag::add(a, b); },
        [](const Tensor& a, double s) { return ag::scale(a, s); });
    g_total = ag::add(g_total, ag::scale(item_total, inv_b));
  }
  check_finite(L, step_);
  g_total.backward();
  optim::clip_grad_norm(gp, cfg_.clip);
  opt_g_.config().lr = cfg_.lr_g * cfg_.lr_scale_at(step_);
  opt_g_.step(gp);

  rec.total_G = assemble_generator_loss(L);
  rec.total_D = assemble_discriminator_loss(L, emo_real_ce);
  return rec;
}

void Trainer::refresh_speaker_profiles(std::span<const TrainingItem> items) {
  ag::NoGradGuard guard;
  std::map<std::string, std::pair<SpeakerProfile, int>> acc;
  for (const TrainingItem& it : items) {
    if (it.conversion) continue;
    const apm::SpeakerEmbedding e = model_->speaker.encode(Tensor::constant(it.source_spec));
    auto& [sum, n] = acc[it.speaker];
    if (n == 0) sum.vector = Matrix::Zero(e.vector.rows(), e.vector.cols());
    sum.vector += e.vector.value();
    sum.log_f0 += e.log_f0.value().mean();
    ++n;
  }
  speaker_profiles_.clear();
  for (auto& [name, entry] : acc) {
    const double inv = 1.0 / static_cast<double>(entry.second);
    speaker_profiles_[name] = {entry.first.vector * inv, entry.first.log_f0 * inv};
  }
}

std::vector<StepRecord> run_training(Trainer& trainer, std::span<const TrainingItem> items, long steps,
                                     std::ostream* log) {
  std::vector<StepRecord> history;
  history.reserve(static_cast<std::size_t>(std::max(0L, steps)));
  if (log) *log << log_header() << '\n';
  for (long i = 0; i < steps; ++i) {
    history.push_back(trainer.train_step(items));
    if (log && (history.back().step % trainer.config().log_every == 0 || i + 1 == steps)) {
      *log << format_log_line(history.back()) << '\n';
    }
  }
  if (log) log->flush();
  trainer.refresh_speaker_profiles(items);
  return history;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'P', 'V', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

void write_params(detail::BinaryWriter& out, const nn::ParamStore& store) {
  out.pod<std::uint32_t>(static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& [name, t] : store.entries()) {
    out.str(name);
    out.matrix(t.value());
  }
}

void write_adam(detail::BinaryWriter& out, const optim::Adam& opt) {
  out.pod<std::int64_t>(opt.steps());
  out.pod<std::uint32_t>(static_cast<std::uint32_t>(opt.first_moments().size()));
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    out.matrix(opt.first_moments()[i]);
    out.matrix(opt.second_moments()[i]);
  }
}

using Reader = detail::BinaryReader<CheckpointError>;

void read_params(Reader& in, nn::ParamStore& store) {
  const auto n = in.pod<std::uint32_t>();
  if (n != store.entries().size()) throw CheckpointError("checkpoint: parameter count mismatch in " + in.path());
  for (auto& [name, t] : store.entries()) {
    const std::string stored = in.str();
    Matrix value = in.matrix();
    if (stored != name || value.rows() != t.rows() || value.cols() != t.cols()) {
      throw CheckpointError("checkpoint: parameter '" + stored + "' does not match '" + name + "' in " + in.path());
    }
    t.mutable_value() = std::move(value);
  }
}

void read_adam(Reader& in, optim::Adam& opt) {
  const auto steps = in.pod<std::int64_t>();
  const auto n = in.pod<std::uint32_t>();
  if (n != opt.first_moments().size()) throw CheckpointError("checkpoint: optimizer state mismatch in " + in.path());
  for (std::size_t i = 0; i < n; ++i) {
    Matrix m = in.matrix();
    Matrix v = in.matrix();
    if (m.rows() != opt.first_moments()[i].rows() || m.cols() != opt.first_moments()[i].cols() ||
        v.rows() != m.rows() || v.cols() != m.cols()) {
      throw CheckpointError("checkpoint: optimizer moment shape mismatch in " + in.path());
    }
    opt.first_moments()[i] = std::move(m);
    opt.second_moments()[i] = std::move(v);
  }
  opt.set_steps(steps);
}

struct Header {
  std::uint64_t hash = 0;
  std::int64_t step = 0;
  std::string config;
};

Header read_header(Reader& in) {
  char magic[8];
  in.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not a checkpoint file: " + in.path());
  if (in.pod<std::uint32_t>() != kVersion) throw CheckpointError("unsupported checkpoint version: " + in.path());
  Header h;
  h.hash = in.pod<std::uint64_t>();
  h.step = in.pod<std::int64_t>();
  h.config = in.str();
  return h;
}

void read_body(Reader& in, Trainer& t, Model& model, optim::Adam& og, optim::Adam& od, nn::Rng& rng,
               std::map<std::string, SpeakerProfile>& speakers) {
  std::istringstream rs(in.str());
  rs >> rng;
  if (!rs) throw CheckpointError("checkpoint: bad random state in " + in.path());
  const auto symbols = in.pod<std::uint32_t>();
  std::vector<std::string> stored;
  for (std::uint32_t i = 0; i < symbols; ++i) stored.push_back(in.str());
  if (stored != t.inventory().symbols()) throw CheckpointError("checkpoint: phoneme inventory mismatch in " + in.path());
  read_params(in, model.generator_params());
  read_params(in, model.discriminator_params());
  read_adam(in, og);
  read_adam(in, od);
  speakers.clear();
  const auto n = in.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = in.str();
    SpeakerProfile& p = speakers[name];
    p.vector = in.matrix();
    p.log_f0 = in.pod<double>();
  }
  if (!in.at_end()) throw CheckpointError("checkpoint: trailing bytes in " + in.path());
}

}  // namespace

std::uint64_t config_hash(const ModelConfig& cfg) { return detail::fnv1a(cfg.architecture()); }

void save_checkpoint(const std::filesystem::path& path, const Trainer& t) {
  detail::BinaryWriter out;
  out.bytes(kMagic, sizeof(kMagic));
  out.pod(kVersion);
  out.pod<std::uint64_t>(config_hash(t.model_->config()));
  out.pod<std::int64_t>(t.step_);
  out.str(format_config(t.cfg_));
  std::ostringstream rs;
  rs << t.rng_;
  out.str(rs.str());
  out.pod<std::uint32_t>(static_cast<std::uint32_t>(t.inventory_.symbols().size()));
  for (const auto& s : t.inventory_.symbols()) out.str(s);
  write_params(out, t.model_->generator_params());
  write_params(out, t.model_->discriminator_params());
  write_adam(out, t.opt_g_);
  write_adam(out, t.opt_d_);
  out.pod<std::uint32_t>(static_cast<std::uint32_t>(t.speaker_profiles_.size()));
  for (const auto& [name, p] : t.speaker_profiles_) {
    out.str(name);
    out.matrix(p.vector);
    out.pod<double>(p.log_f0);
  }
  try {
    out.save(path);
  } catch (const InputError& e) {
    throw CheckpointError(e.what());
  }
}

std::unique_ptr<Trainer> load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  Reader in(path);
  const Header h = read_header(in);
  TrainConfig cfg;
  try {
    std::istringstream cs(h.config);
    cfg = parse_config(cs);
  } catch (const InputError& e) {
    throw CheckpointError(std::string("checkpoint: bad stored configuration: ") + e.what());
  }
  if (config_hash(cfg.model) != h.hash) throw CheckpointError("checkpoint: config hash mismatch in " + path.string());
  // The inventory is needed before the body, so peek at it through a second pass.
  Reader probe(path);
  read_header(probe);
  probe.str();
  std::vector<std::string> symbols(probe.pod<std::uint32_t>());
  for (auto& s : symbols) s = probe.str();

  auto t = std::make_unique<Trainer>(cfg, tpp::PhonemeInventory(symbols));
  read_body(in, *t, *t->model_, t->opt_g_, t->opt_d_, t->rng_, t->speaker_profiles_);
  t->step_ = h.step;
  return t;
}

void load_checkpoint_into(const std::filesystem::path& path, Trainer& t) {
  if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  Reader in(path);
  const Header h = read_header(in);
  if (h.hash != config_hash(t.model_->config())) {
    throw CheckpointError("checkpoint: config hash mismatch (architecture differs) in " + path.string());
  }
  read_body(in, t, *t.model_, t.opt_g_, t.opt_d_, t.rng_, t.speaker_profiles_);
  t.step_ = h.step;
}

}  // namespace pavits::train
