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


#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "pavits/error.hpp"
#include "pavits/runtime.hpp"
#include "pavits/train.hpp"

namespace pavits::train {
namespace {

namespace fs = std::filesystem;

TrainConfig tiny_config(std::uint64_t seed = 3) {
  TrainConfig c;
  c.seed = seed;
  c.model.d_model = 8;
  c.model.d_latent = 8;
  c.model.hidden = 8;
  c.model.heads = 2;
  c.model.blocks = 1;
  c.model.flow_layers = 2;
  c.model.dec_channels = 16;
  c.model.classifier_hidden = 8;
  c.segment_frames = 6;
  return c;
}

class TrainTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "pavits_train_test";
    fs::remove_all(dir_);
    runtime::SyntheticCorpusSpec spec;
    spec.utterances = 2;
    spec.seed = 5;
    const auto records = runtime::read_manifest(runtime::generate_synthetic_corpus(spec, dir_));
    inventory_ = new tpp::PhonemeInventory(runtime::inventory_from(records));
    items_ = new std::vector<TrainingItem>(
        build_training_items(runtime::load_recordings(records, *inventory_, signal::FrameConfig{})));
  }
  static void TearDownTestSuite() {
    delete items_;
    delete inventory_;
    fs::remove_all(dir_);
  }

  static std::unique_ptr<Trainer> trainer(const TrainConfig& c = tiny_config()) {
    return std::make_unique<Trainer>(c, *inventory_);
  }

  static inline fs::path dir_;
  static inline tpp::PhonemeInventory* inventory_ = nullptr;
  static inline std::vector<TrainingItem>* items_ = nullptr;
};

LossBundle filled(double v) {
  LossBundle b;
  b.recon_cls = b.recon_fm = b.adv_G = b.adv_D = b.emo_cls = b.emo_fm = b.psd = b.f0 = b.dur = v;
  return b;
}

TEST(Assembly, GeneratorExamples) {
  LossBundle b = filled(1.0);
  b.gamma = 2.0;
  b.beta = 3.0;
  EXPECT_EQ(assemble_generator_loss(b), 11.0);
  b = filled(0.0);
  EXPECT_EQ(assemble_generator_loss(b), 0.0);
  b.recon_cls = 0.1;
  b.gamma = 45.0;
  b.beta = 2.0;
  EXPECT_NEAR(assemble_generator_loss(b), 4.5, 1e-12);
}

TEST(Assembly, GeneratorMatchesWeightedSumForRandomBundles) {
  nn::Rng rng(7);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    LossBundle b;
    b.recon_cls = u(rng), b.recon_fm = u(rng), b.adv_G = u(rng), b.adv_D = u(rng), b.emo_cls = u(rng);
    b.emo_fm = u(rng), b.psd = u(rng), b.f0 = u(rng), b.dur = u(rng), b.gamma = 0.1 + u(rng), b.beta = 0.1 + u(rng);
    const double expected = b.gamma * b.recon_cls + b.beta * b.recon_fm + b.adv_G + b.emo_cls + b.emo_fm + b.psd +
                            b.f0 + b.dur;
    EXPECT_NEAR(assemble_generator_loss(b), expected, 1e-12 * expected);
  }
}

TEST(Assembly, DiscriminatorExamples) {
  LossBundle b = filled(0.0);
  b.adv_D = 0.5;
  EXPECT_EQ(assemble_discriminator_loss(b, 0.0), 0.5);
  b.adv_D = 0.0;
  EXPECT_EQ(assemble_discriminator_loss(b, 0.0), 0.0);
  b.adv_D = 0.5;
  EXPECT_NEAR(assemble_discriminator_loss(b, std::log(5.0)), 0.5 + 1.6094, 1e-4);
}

TEST(Assembly, NonFiniteComponentIsNamed) {
  LossBundle b = filled(0.0);
  b.emo_fm = std::nan("");
  try {
    assemble_generator_loss(b);
    FAIL() << "expected a divergence error";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("emo_fm"), std::string::npos);
  }
}

signal::F0Track track(std::vector<double> f0) {
  signal::F0Track t;
  t.f0 = std::move(f0);
  for (double f : t.f0) t.voiced.push_back(f > 0.0 ? 1 : 0);
  return t;
}

TEST(F0DurationLosses, Examples) {
  const signal::F0Track truth = track({100.0, 0.0, 200.0});
  const Tensor pred = Tensor::constant((Matrix(1, 3) << std::log(100.0), 7.0, std::log(200.0)).finished());
  const std::vector<Index> dur{2, 3};
  const Tensor pred_dur = Tensor::constant((Matrix(1, 2) << std::log(2.0), std::log(3.0)).finished());
  F0DurationLosses l = f0_and_duration_losses(pred, truth, pred_dur, dur);
  EXPECT_NEAR(l.f0.item(), 0.0, 1e-15);
  EXPECT_NEAR(l.dur.item(), 0.0, 1e-15);

  l = f0_and_duration_losses(Tensor::constant(Matrix::Constant(1, 3, 4.0)), track({0.0, 0.0, 0.0}), pred_dur, dur);
  EXPECT_EQ(l.f0.item(), 0.0);

  const std::vector<Index> four{4};
  l = f0_and_duration_losses(pred, truth, Tensor::constant(Matrix::Constant(1, 1, std::log(2.0))), four);
  EXPECT_NEAR(l.dur.item(), std::pow(std::log(2.0), 2), 1e-12);

  // Voiced frames only: the error on the unvoiced middle frame does not count.
  const Tensor off = Tensor::constant((Matrix(1, 3) << std::log(100.0) + 0.3, 0.0, std::log(200.0) - 0.1).finished());
  l = f0_and_duration_losses(off, truth, pred_dur, dur);
  EXPECT_NEAR(l.f0.item(), (0.09 + 0.01) / 2.0, 1e-12);

  EXPECT_THROW(f0_and_duration_losses(Tensor::zeros(1, 2), truth, pred_dur, dur), InputError);
  EXPECT_THROW(f0_and_duration_losses(pred, truth, Tensor::zeros(1, 3), dur), InputError);
}

TEST(ExcitationPitchLoss, ZeroAtEqualityAndCountsVoicing) {
  const signal::F0Track truth = track({120.0, 0.0, 240.0, 0.0});
  synth::PitchPrediction p{
      Tensor::constant((Matrix(1, 4) << std::log(120.0), 3.0, std::log(240.0), 1.0).finished()),
      Tensor::constant((Matrix(1, 4) << 1.0, 0.0, 1.0, 0.0).finished())};
  EXPECT_NEAR(excitation_pitch_loss(p, truth).item(), 0.0, 1e-15);
  p.voicing = Tensor::constant(Matrix::Constant(1, 4, 0.5));
  EXPECT_NEAR(excitation_pitch_loss(p, truth).item(), 0.25, 1e-15);
  EXPECT_THROW(excitation_pitch_loss(p, track({1.0})), InputError);
}

TEST(Clip, GlobalNormBounded) {
  nn::ParamStore store;
  Tensor a = store.add("a", Matrix::Zero(3, 4));
  Tensor b = store.add("b", Matrix::Zero(5, 1));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    store.zero_grad();
    ag::add(ag::sum(ag::mul(a, Tensor::constant(testing::gaussian_matrix(3, 4, seed, 10.0)))),
            ag::sum(ag::mul(b, Tensor::constant(testing::gaussian_matrix(5, 1, seed + 1, 10.0)))))
        .backward();
    const double before = optim::grad_norm(store);
    optim::clip_grad_norm(store, 5.0);
    EXPECT_LE(optim::grad_norm(store), 5.0 + 1e-9);
    if (before <= 5.0) EXPECT_NEAR(optim::grad_norm(store), before, 1e-12);
  }
}

TEST(Config, RoundTripAndValidation) {
  TrainConfig c = tiny_config(9);
  c.lr_decay = 0.999;
  c.ablation.no_prosody_alignment = true;
  c.model.frames.fft_size = 512;
  c.model.frames.win_size = 512;
  std::istringstream in(format_config(c));
  const TrainConfig back = parse_config(in);
  EXPECT_EQ(format_config(back), format_config(c));
  EXPECT_EQ(back.seed, 9u);
  EXPECT_TRUE(back.ablation.no_prosody_alignment);
  EXPECT_EQ(back.model.frames.fft_size, 512);

  std::istringstream unknown("seed = 1\nwidth = 3\n");
  EXPECT_THROW(parse_config(unknown), InputError);
  std::istringstream decay("lr_decay = 1.5\n");
  EXPECT_THROW(parse_config(decay), InputError);
  std::istringstream zero("lr_decay = 0\n");
  EXPECT_THROW(parse_config(zero), InputError);
  std::istringstream comment("# comment\n\nsteps = 7\n");
  EXPECT_EQ(parse_config(comment).steps, 7);
}

TEST(Config, LearningRateSchedule) {
  TrainConfig c;
  c.lr_decay = 0.5;
  EXPECT_EQ(c.lr_scale_at(1), 1.0);
  EXPECT_EQ(c.lr_scale_at(3), 0.25);
}

TEST(LogFormat, FixedFieldOrder) {
  EXPECT_EQ(log_header(),
            "step\trecon_cls\trecon_fm\tadv_G\tadv_D\temo_cls\temo_fm\tpsd\tf0\tdur\ttotal_G\ttotal_D");
  StepRecord r;
  r.step = 4;
  r.losses = filled(1.0);
  const std::string line = format_log_line(r);
  EXPECT_EQ(line.substr(0, 2), "4\t");
  EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 11);
}

TEST_F(TrainTest, ItemsCoverIdentityAndConversion) {
  ASSERT_FALSE(items_->empty());
  std::size_t identity = 0;
  for (const TrainingItem& it : *items_) {
    if (!it.conversion) ++identity;
    EXPECT_EQ(it.source_f0.size(), static_cast<std::size_t>(it.frames()));
    EXPECT_EQ(it.target_f0.size(), static_cast<std::size_t>(it.frames()));
    EXPECT_GE(it.frames(), static_cast<Index>(it.phonemes.size()));
  }
  EXPECT_EQ(identity, 10u);
  EXPECT_GT(items_->size(), identity);
}

TEST_F(TrainTest, SeedDeterminism) {
  auto a = trainer();
  auto b = trainer();
  const auto ha = run_training(*a, *items_, 5);
  const auto hb = run_training(*b, *items_, 5);
  for (std::size_t i = 0; i < ha.size(); ++i) {
    EXPECT_EQ(ha[i].losses.values(), hb[i].losses.values());
    EXPECT_EQ(ha[i].total_G, hb[i].total_G);
  }
  for (const double v : ha.back().losses.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST_F(TrainTest, ZeroLearningRateLeavesParametersUnchanged) {
  TrainConfig c = tiny_config();
  c.lr_g = 0.0;
  c.lr_d = 0.0;
  auto t = trainer(c);
  std::vector<Matrix> before;
  for (auto* store : {&t->model().generator_params(), &t->model().discriminator_params()}) {
    for (const auto& [name, p] : store->entries()) before.push_back(p.value());
  }
  run_training(*t, *items_, 3);
  std::size_t k = 0;
  for (auto* store : {&t->model().generator_params(), &t->model().discriminator_params()}) {
    for (const auto& [name, p] : store->entries()) EXPECT_EQ(p.value(), before[k++]) << name;
  }
}

TEST_F(TrainTest, AblationSmokeRuns) {
  const auto reference = trainer();
  for (int flag = 0; flag < 3; ++flag) {
    TrainConfig c = tiny_config();
    c.ablation.no_prosody_predictor = flag == 0;
    c.ablation.no_prosody_alignment = flag == 1;
    c.ablation.no_prosody_integrator = flag == 2;
    auto t = trainer(c);
    for (const char* prefix : {"tpp", "apm.emotion", "apm.speaker", "apm.integrator", "flow", "decoder"}) {
      EXPECT_EQ(t->model().generator_params().scalar_count(prefix),
                reference->model().generator_params().scalar_count(prefix))
          << prefix;
    }
    EXPECT_EQ(t->model().discriminator_params().scalar_count(), reference->model().discriminator_params().scalar_count());
    const auto history = run_training(*t, *items_, 50);
    for (const StepRecord& r : history) {
      for (const double v : r.losses.values()) ASSERT_TRUE(std::isfinite(v)) << "flag " << flag << " step " << r.step;
      if (flag == 1) ASSERT_EQ(r.losses.psd, 0.0);
    }
  }
}

TEST_F(TrainTest, NoFlagsIsIdentity) {
  auto a = trainer();
  apply_ablation(AblationFlags{}, a->model());
  auto b = trainer();
  const auto ha = run_training(*a, *items_, 2);
  const auto hb = run_training(*b, *items_, 2);
  EXPECT_EQ(ha.back().losses.values(), hb.back().losses.values());
}

TEST_F(TrainTest, CheckpointRoundTrip) {
  auto t = trainer();
  run_training(*t, *items_, 3);
  const fs::path path = dir_ / "model.ckpt";
  save_checkpoint(path, *t);
  std::shared_ptr<Trainer> loaded = load_checkpoint(path);
  EXPECT_EQ(loaded->step(), t->step());
  const auto& p = t->speaker_profiles();
  ASSERT_EQ(loaded->speaker_profiles().size(), p.size());
  for (const auto& [name, profile] : p) {
    EXPECT_EQ(loaded->speaker_profiles().at(name).vector, profile.vector);
    EXPECT_EQ(loaded->speaker_profiles().at(name).log_f0, profile.log_f0);
  }

  // Probe: convert a fixed waveform through both models.
  signal::Waveform probe;
  const Matrix x = testing::gaussian_matrix(1, 4096, 77, 0.1);
  probe.samples.assign(x.data(), x.data() + x.size());
  const runtime::Converter original(std::shared_ptr<const Trainer>(std::move(t)));
  const runtime::Converter restored(loaded);
  EXPECT_EQ(original.convert_fl(probe, Emotion::kHappy).samples, restored.convert_fl(probe, Emotion::kHappy).samples);

  // Training continues identically from the restored state.
  auto again = load_checkpoint(path);
  auto third = load_checkpoint(path);
  EXPECT_EQ(run_training(*again, *items_, 2).back().losses.values(),
            run_training(*third, *items_, 2).back().losses.values());
}

TEST_F(TrainTest, CheckpointErrors) {
  auto t = trainer();
  const fs::path path = dir_ / "errors.ckpt";
  save_checkpoint(path, *t);

  const auto size = fs::file_size(path);
  const fs::path truncated = dir_ / "truncated.ckpt";
  fs::copy_file(path, truncated, fs::copy_options::overwrite_existing);
  fs::resize_file(truncated, size / 2);
  EXPECT_THROW(load_checkpoint(truncated), CheckpointError);

  const fs::path flipped = dir_ / "flipped.ckpt";
  fs::copy_file(path, flipped, fs::copy_options::overwrite_existing);
  {
    std::fstream f(flipped, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(static_cast<std::streamoff>(size / 3));
    const char c = static_cast<char>(f.get());
    f.seekp(static_cast<std::streamoff>(size / 3));
    f.put(static_cast<char>(c ^ 0x10));
  }
  EXPECT_THROW(load_checkpoint(flipped), CheckpointError);

  const fs::path garbage = dir_ / "garbage.ckpt";
  std::ofstream(garbage) << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(garbage), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir_ / "missing.ckpt"), CheckpointError);

  TrainConfig wider = tiny_config();
  wider.model.hidden = 12;
  auto other = trainer(wider);
  try {
    load_checkpoint_into(path, *other);
    FAIL() << "expected a hash mismatch";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("hash"), std::string::npos);
  }
}

TEST(ConfigHash, TracksArchitecture) {
  ModelConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.dec_channels = 48;
  EXPECT_NE(config_hash(a), config_hash(b));
}

}  // namespace
}  // namespace pavits::train
