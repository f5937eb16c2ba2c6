#include <gtest/gtest.h>

#include "radur/detection_network.hpp"
#include "radur/losses.hpp"
#include "radur/model.hpp"
#include "test_util.hpp"

using namespace radur;
using namespace radur::testing;

namespace {

DetectorConfig tiny_detector() {
  DetectorConfig d;
  d.n_mels = 8;
  d.kernels = {1, 3};
  d.scale_channels = 2;
  d.block_channels = {3, 4, 4};
  d.gru_hidden = 3;
  d.classifier_hidden = 4;
  return d;
}

}  // namespace

TEST(Detector, MiniProfileOutputsOneScorePerFeatureFrame) {
  RadurModel model(ModelConfig::mini(), 1);
  std::mt19937_64 rng(1);
  const MelSpectrogram mel{1001, 8, 320, kSampleRate, random_values(rng, 1001 * 8, -10, 0)};
  const auto scores = model.detector.detect(mel, Var::constant({16}, random_values(rng, 16)));
  EXPECT_EQ(scores.values.size(), 250u);
  EXPECT_NEAR(scores.frame_resolution, 0.04, 1e-12);
  for (double s : scores.values) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  EXPECT_THROW(model.detector.detect(mel, Var::constant({15}, 0.0)), ShapeError);
}

TEST(Detector, OutputLengthMatchesEncoderForAnyLength) {
  RadurModel model(ModelConfig::mini(), 2);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t t = 4 + rng() % 200;
    const Var x = random_const(rng, {1, 1, t, 8});
    const Var e = random_const(rng, {1, 16});
    EXPECT_EQ(model.detector.forward(x, e, false).dim(1), model.conditional.encoder().forward(x, false).dim(1));
  }
}

TEST(Detector, SoftmaxRowsSumToOneAndZeroEmbeddingIgnoresInput) {
  nn::ParameterStore store(3);
  const DetectionNetwork det(store, tiny_detector(), 5);
  std::mt19937_64 rng(3);
  const Var x = random_const(rng, {2, 1, 24, 8});
  const Var probs = det.classify(det.fuse(det.frame_features(x, false), random_const(rng, {2, 5})));
  for (std::size_t i = 0; i < probs.size(); i += 2) EXPECT_NEAR(probs[i] + probs[i + 1], 1.0, 1e-12);

  const Var zero = det.forward(x, Var::constant({2, 5}, 0.0), false);
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t t = 0; t < zero.dim(1); ++t) {
      // A zero embedding erases the mixture; both clips then score alike.
      EXPECT_EQ(zero[n * zero.dim(1) + t], zero[t]);
    }
  }
}

TEST(Detector, AllOnesProjectionLeavesFeaturesUnchanged) {
  nn::ParameterStore store(4);
  const DetectionNetwork det(store, tiny_detector(), 4);
  Var w = store.at("detector.fusion.w");
  std::fill(w.mutable_value().begin(), w.mutable_value().end(), 0.0);
  for (std::size_t c = 0; c < 4; ++c) w.mutable_value()[c * 4 + c] = 1.0;  // identity
  std::mt19937_64 rng(4);
  const Var feats = random_const(rng, {1, 6, 4});
  const Var fused = det.fuse(feats, Var::constant({1, 4}, 1.0));
  for (std::size_t i = 0; i < feats.size(); ++i) EXPECT_EQ(fused[i], feats[i]);
}

TEST(Detector, IsDeterministic) {
  RadurModel model(ModelConfig::mini(), 5);
  std::mt19937_64 rng(5);
  const MelSpectrogram mel{101, 8, 320, kSampleRate, random_values(rng, 808)};
  const Var e = random_const(rng, {16});
  EXPECT_EQ(model.detector.detect(mel, e).values, model.detector.detect(mel, e).values);
}

TEST(Glu, ZeroGateHalvesAndElementwiseOracle) {
  std::mt19937_64 rng(6);
  std::vector<double> v = random_values(rng, 2 * 4);
  for (std::size_t i = 4; i < 8; ++i) v[i] = 0.0;
  const Var y = nn::glu(Var::constant({1, 2, 2, 2}, v), 1);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[i], 0.5 * v[i]);

  const auto r = random_values(rng, 8, -3, 3);
  const Var z = nn::glu(Var::constant({1, 2, 2, 2}, r), 1);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(z[i], r[i] / (1 + std::exp(-r[i + 4])), 1e-15);
  const Var sat = nn::glu(Var::constant({1, 2, 1, 1}, {0.7, 50.0}), 1);
  EXPECT_NEAR(sat[0], 0.7, 1e-15);
}

TEST(Detector, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    nn::ParameterStore store(100 + trial);
    const DetectionNetwork det(store, tiny_detector(), 3);
    const Var x = random_const(rng, {2, 1, 8, 8});
    Var e = random_param(rng, {2, 3});
    const auto labels = random_values(rng, 4, 0, 1);
    std::vector<double> y;
    for (double l : labels) y.push_back(l > 0.5 ? 1.0 : 0.0);
    std::vector<Var> params{e};
    for (const auto& [name, p] : store.parameters()) params.push_back(p);
    // Eval-mode batch norm keeps the function smooth in its inputs.
    const auto loss = [&] {
      return focal_loss(ad::reshape(det.forward(x, e, false), {4}), y, FocalConfig{});
    };
    EXPECT_LT(gradient_error(loss, params), 1e-4) << "trial " << trial;
  }
}
