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

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "pavits/error.hpp"
#include "pavits/tpp.hpp"

namespace pavits::tpp {
namespace {

using testing::grad_check;

struct Fixture {
  explicit Fixture(std::uint64_t seed, TppConfig cfg = {}) : rng(seed), net(store, "tpp", cfg, rng) {}
  nn::ParamStore store;
  nn::Rng rng;
  TextualProsodyPredictor net;
};

PhonemeSequence seq(std::vector<Index> ids) { return {std::move(ids)}; }

TEST(Inventory, PadIsZeroAndUnknownThrows) {
  PhonemeInventory inv;
  EXPECT_EQ(inv.add("a"), 1);
  EXPECT_EQ(inv.add("b"), 2);
  EXPECT_EQ(inv.add("a"), 1);
  EXPECT_EQ(inv.vocab_size(), 3);
  EXPECT_EQ(inv.encode({"b", "a", "b"}).ids, (std::vector<Index>{2, 1, 2}));
  EXPECT_THROW(inv.id("zz"), InputError);
}

TEST(EncodePhonemes, ShapeAndDeterminism) {
  Fixture f(1);
  const auto p = seq({3, 5, 7, 1, 2, 9, 4});
  const Tensor a = f.net.encode_phonemes(p);
  EXPECT_EQ(a.rows(), 32);
  EXPECT_EQ(a.cols(), 7);
  EXPECT_EQ(a.value(), f.net.encode_phonemes(p).value());
  EXPECT_TRUE(a.value().allFinite());
}

TEST(EncodePhonemes, PermutationChangesOutput) {
  Fixture f(2);
  const Tensor a = f.net.encode_phonemes(seq({3, 5, 7}));
  const Tensor b = f.net.encode_phonemes(seq({5, 3, 7}));
  EXPECT_GT((a.value() - b.value()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(EncodePhonemes, RejectsOutOfVocabularyAndEmpty) {
  Fixture f(3);
  EXPECT_THROW(f.net.encode_phonemes(seq({64})), InputError);
  EXPECT_THROW(f.net.encode_phonemes(seq({-1})), InputError);
  EXPECT_THROW(f.net.encode_phonemes(seq({})), InputError);
}

TEST(PredictProsody, EmotionChangesOutput) {
  Fixture f(4);
  const Tensor h = f.net.encode_phonemes(seq({1, 2, 3, 4}));
  const Matrix neu = f.net.predict_prosody(h, Emotion::kNeutral).value();
  for (Emotion e : {Emotion::kAngry, Emotion::kHappy, Emotion::kSad, Emotion::kSurprise}) {
    EXPECT_GT((f.net.predict_prosody(h, e).value() - neu).cwiseAbs().maxCoeff(), 0.0) << emotion_name(e);
  }
}

TEST(PredictProsody, SingleFrameAndZeroInput) {
  Fixture f(5);
  const Tensor one = f.net.predict_prosody(f.net.encode_phonemes(seq({6})), Emotion::kSad);
  EXPECT_EQ(one.cols(), 1);
  const Tensor zero = f.net.predict_prosody(Tensor::zeros(32, 3), Emotion::kNeutral);
  EXPECT_EQ(zero.cols(), 3);
  EXPECT_TRUE(zero.value().allFinite());
}

TEST(ProjectPrior, SigmaPositiveAndEmotionSensitive) {
  Fixture f(6);
  const Tensor h = f.net.encode_phonemes(seq({2, 4, 6, 8}));
  const GaussianSequence a = f.net.project_prior(h, f.net.predict_prosody(h, Emotion::kNeutral));
  const GaussianSequence b = f.net.project_prior(h, f.net.predict_prosody(h, Emotion::kAngry));
  EXPECT_EQ(a.length(), 4);
  EXPECT_EQ(a.level, Level::kPhoneme);
  EXPECT_TRUE((a.sigma().array() > 0.0).all());
  EXPECT_GT((a.mu.value() - b.mu.value()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ProjectPrior, ZeroParametersGiveStandardNormal) {
  Fixture f(7);
  for (auto& [name, t] : f.store.entries()) t.mutable_value().setZero();
  const Tensor h = Tensor::constant(testing::gaussian_matrix(32, 3, 70));
  const GaussianSequence g = f.net.project_prior(h, Tensor::constant(testing::gaussian_matrix(32, 3, 71)));
  EXPECT_TRUE(g.mu.value().isZero(0.0));
  EXPECT_TRUE(g.sigma().isOnes(0.0));
}

TEST(PredictDurations, ShapeAndDecoding) {
  Fixture f(8);
  const Tensor h = f.net.encode_phonemes(seq({1, 2, 3}));
  const Tensor d = f.net.predict_durations(h, f.net.predict_prosody(h, Emotion::kHappy));
  EXPECT_EQ(d.rows(), 1);
  EXPECT_EQ(d.cols(), 3);

  Matrix raw(1, 5);
  raw << 0.0, std::log(3.0), -10.0, 1e6, std::log(2.4);
  EXPECT_EQ(decode_durations(raw), (DurationVector{1, 3, 1, static_cast<Index>(std::round(std::exp(20.0))), 2}));
}

TEST(PredictDurations, DecodedAlwaysAtLeastOne) {
  nn::Rng rng(9);
  std::normal_distribution<double> n(0.0, 4.0);
  Matrix raw(1, 500);
  for (Index i = 0; i < raw.size(); ++i) raw.data()[i] = n(rng);
  for (Index d : decode_durations(raw)) EXPECT_GE(d, 1);
}

TEST(PredictDurations, InputsAreDetached) {
  Fixture f(10);
  const Tensor h = f.net.encode_phonemes(seq({1, 2, 3}));
  const Tensor pr = f.net.predict_prosody(h, Emotion::kHappy);
  f.store.zero_grad();
  ag::sum(f.net.predict_durations(h, pr)).backward();
  const Tensor* embed = f.store.find("tpp.embed.table");
  ASSERT_NE(embed, nullptr);
  EXPECT_FALSE(embed->has_grad() && !embed->grad().isZero(0.0));
}

GaussianSequence ramp_prior(Index n) {
  Matrix mu(2, n), ls(2, n);
  for (Index i = 0; i < n; ++i) {
    mu.col(i) << static_cast<double>(i), -static_cast<double>(i);
    ls.col(i) << 0.1 * static_cast<double>(i), 0.0;
  }
  return {Tensor::constant(mu), Tensor::constant(ls), Level::kPhoneme};
}

TEST(ExpandPrior, RepetitionSemantics) {
  const GaussianSequence g = expand_prior(ramp_prior(3), DurationVector{2, 1, 3});
  EXPECT_EQ(g.length(), 6);
  EXPECT_EQ(g.level, Level::kFrame);
  const std::vector<Index> owner{0, 0, 1, 2, 2, 2};
  for (Index t = 0; t < 6; ++t) {
    EXPECT_EQ(g.mu.value()(0, t), static_cast<double>(owner[static_cast<std::size_t>(t)]));
    EXPECT_EQ(g.log_sigma.value()(0, t), 0.1 * static_cast<double>(owner[static_cast<std::size_t>(t)]));
  }
}

TEST(ExpandPrior, UnitDurationsAreIdentity) {
  const GaussianSequence p = ramp_prior(4);
  const GaussianSequence g = expand_prior(p, DurationVector{1, 1, 1, 1});
  EXPECT_EQ(g.mu.value(), p.mu.value());
  EXPECT_EQ(g.log_sigma.value(), p.log_sigma.value());
}

TEST(ExpandPrior, AlignmentAndDurationPathsAgree) {
  const AlignmentMatrix a(3, {0, 1, 1, 1, 2, 2});
  const GaussianSequence p = ramp_prior(3);
  const GaussianSequence x = expand_prior(p, a);
  const GaussianSequence y = expand_prior(p, durations_from_alignment(a));
  EXPECT_EQ(x.mu.value(), y.mu.value());
  EXPECT_EQ(x.log_sigma.value(), y.log_sigma.value());
  // Frame prior equals the transposed alignment applied to the phoneme prior.
  EXPECT_TRUE(x.mu.value().isApprox(p.mu.value() * a.dense(), 0.0));
}

TEST(ExpandPrior, RejectsBadDurations) {
  EXPECT_THROW(expand_prior(ramp_prior(2), DurationVector{1}), InputError);
  EXPECT_THROW(expand_prior(ramp_prior(2), DurationVector{0, 0}), InputError);
}

TEST(Tpp, PriorMeanGradientMatchesFiniteDifferences) {
  TppConfig cfg;
  cfg.vocab = 12;
  cfg.d_model = 8;
  cfg.d_latent = 4;
  cfg.ffn_hidden = 8;
  Fixture f(11, cfg);
  const auto p = seq({1, 4, 2, 7});
  auto loss = [&] {
    const Tensor h = f.net.encode_phonemes(p);
    return ag::sum(f.net.project_prior(h, f.net.predict_prosody(h, Emotion::kSurprise)).mu);
  };
  for (const char* name : {"tpp.block0.qkv.weight", "tpp.prosody0.conv.weight", "tpp.emotion_table", "tpp.prior.weight"}) {
    const Tensor* t = f.store.find(name);
    ASSERT_NE(t, nullptr) << name;
    EXPECT_LT(grad_check(loss, *t, testing::strided_indices(*t, 7, 1)).relative_error, 1e-3) << name;
  }
}

}  // namespace
}  // namespace pavits::tpp
