#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "radur/conditional_network.hpp"
#include "test_util.hpp"

using namespace radur;
using namespace radur::testing;

namespace {

constexpr double kTol = 1e-4;

EncoderConfig tiny_encoder() {
  EncoderConfig e;
  e.n_mels = 8;
  e.channels = {4, 4, 8};
  e.convs_per_block = 1;
  return e;
}

EnhancementParams random_enhancement(std::mt19937_64& rng, std::size_t d, std::size_t c, std::size_t q) {
  EnhancementParams p;
  p.w_q = random_param(rng, {d, q});
  p.w_k = random_param(rng, {c, q});
  p.fusion_a_w = random_param(rng, {d});
  p.fusion_a_b = random_param(rng, {d});
  p.fusion_b_w = random_param(rng, {d});
  p.fusion_b_b = random_param(rng, {d});
  return p;
}

nn::Linear random_projection(std::mt19937_64& rng, std::size_t c, std::size_t d) {
  return {random_param(rng, {c, d}), random_param(rng, {d})};
}

}  // namespace

TEST(Encoder, ShapeFollowsTimePooling) {
  nn::ParameterStore store(1);
  const ReferenceEncoder enc(store, tiny_encoder());
  const Var x = Var::constant({2, 1, 1001, 8}, 0.5);
  EXPECT_EQ(enc.forward(x, false).shape(), (ad::Shape{2, 250, 8}));
  EXPECT_THROW(enc.forward(Var::constant({1, 1, 40, 6}, 0.0), false), ShapeError);
}

TEST(Encoder, PaperProfileMapsFullInputTo250By1024) {
  // Shape propagation only: a short clip keeps the cost down, and the time
  // axis is checked by the formula on the full length.
  nn::ParameterStore store(1);
  const ReferenceEncoder enc(store, ModelConfig::paper().conditional.encoder);
  EXPECT_EQ(enc.forward(Var::constant({1, 1, 9, 64}, 0.1), false).shape(), (ad::Shape{1, 2, 1024}));
  EXPECT_EQ(1001u / ModelConfig::paper().time_pool_total(), 250u);
}

TEST(Encoder, IsDeterministicAndZeroWeightsGiveZeroMap) {
  nn::ParameterStore store(3);
  const ReferenceEncoder enc(store, tiny_encoder());
  std::mt19937_64 rng(3);
  const Var x = random_const(rng, {1, 1, 40, 8});
  const Var a = enc.forward(x, false), b = enc.forward(x, false);
  EXPECT_TRUE(std::equal(a.value().begin(), a.value().end(), b.value().begin()));
  for (auto& [name, p] : store.parameters()) {
    if (name.ends_with(".w") && name.find("conv") != std::string::npos) {
      Var v = p;
      std::fill(v.mutable_value().begin(), v.mutable_value().end(), 0.0);
    }
  }
  const Var zeroed = enc.forward(x, false);
  for (double v : zeroed.value()) EXPECT_EQ(v, 0.0);
}

TEST(AttentionPool, IdenticalRowsGiveUniformWeights) {
  std::mt19937_64 rng(4);
  const auto row = random_values(rng, 6);
  std::vector<double> values;
  for (int i = 0; i < 5; ++i) values.insert(values.end(), row.begin(), row.end());
  const AttentionPoolParams p{random_const(rng, {6, 4}), random_const(rng, {6, 4})};
  const auto r = attention_pool(Var::constant({5, 6}, values), p);
  for (double w : r.weights.value()) EXPECT_EQ(w, 0.2);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(r.embedding[i], row[i], 1e-15);
  for (std::size_t t : {3u, 17u, 64u, 250u}) {
    const auto wide = random_values(rng, 32, -10, 10);
    std::vector<double> many;
    for (std::size_t i = 0; i < t; ++i) many.insert(many.end(), wide.begin(), wide.end());
    const AttentionPoolParams q{random_const(rng, {32, 16}), random_const(rng, {32, 16})};
    const auto u = attention_pool(Var::constant({t, 32}, many), q);
    for (double w : u.weights.value()) EXPECT_EQ(w, 1.0 / static_cast<double>(t));
  }
}

TEST(AttentionPool, SingleFrame) {
  std::mt19937_64 rng(5);
  const Var e = random_const(rng, {1, 3});
  const auto r = attention_pool(e, {random_const(rng, {3, 2}), random_const(rng, {3, 2})});
  EXPECT_EQ(r.weights[0], 1.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.embedding[i], e[i]);
}

TEST(AttentionPool, ThreeByTwoOracle) {
  const Var e = Var::constant({3, 2}, {1, 0, 0, 1, 1, 1});
  const Var eye = Var::constant({2, 2}, {1, 0, 0, 1});
  const auto r = attention_pool(e, {eye, eye});
  // e_g = (2/3, 2/3); logits = rows . e_g / sqrt(2)
  const double g = 2.0 / 3.0;
  const double l[3] = {g / std::sqrt(2.0), g / std::sqrt(2.0), 2 * g / std::sqrt(2.0)};
  const double z = std::exp(l[0]) + std::exp(l[1]) + std::exp(l[2]);
  const double w[3] = {std::exp(l[0]) / z, std::exp(l[1]) / z, std::exp(l[2]) / z};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.weights[i], w[i], 1e-12);
  EXPECT_NEAR(r.embedding[0], w[0] + w[2], 1e-12);
  EXPECT_NEAR(r.embedding[1], w[1] + w[2], 1e-12);
}

TEST(AttentionPool, OutputInConvexHullAndRejectsNonFinite) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t t = 1 + rng() % 7, c = 1 + rng() % 5;
    const Var e = random_const(rng, {t, c}, -3, 3);
    const auto r = attention_pool(e, {random_const(rng, {c, 3}), random_const(rng, {c, 3})});
    for (std::size_t j = 0; j < c; ++j) {
      double lo = 1e9, hi = -1e9;
      for (std::size_t i = 0; i < t; ++i) {
        lo = std::min(lo, e[i * c + j]);
        hi = std::max(hi, e[i * c + j]);
      }
      EXPECT_GE(r.embedding[j], lo - 1e-12);
      EXPECT_LE(r.embedding[j], hi + 1e-12);
    }
  }
  const Var bad = Var::constant({2, 1}, {1.0, std::nan("")});
  const Var w = Var::constant({1, 1}, 1.0);
  EXPECT_THROW(attention_pool(bad, {w, w}), NumericError);
}

TEST(AttentionPool, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Var e = random_param(rng, {5, 8});
    AttentionPoolParams p{random_param(rng, {8, 4}), random_param(rng, {8, 4})};
    EXPECT_LT(gradient_error([&] { return probe(attention_pool(e, p).embedding, trial); }, {e, p.w_q, p.w_k}), kTol);
  }
}

TEST(Projection, DenseOracleAndErrors) {
  std::mt19937_64 rng(8);
  const auto proj = random_projection(rng, 6, 4);
  const Var x = random_const(rng, {6});
  const Var y = project_embedding(x, proj);
  for (std::size_t j = 0; j < 4; ++j) {
    double s = proj.b[j];
    for (std::size_t i = 0; i < 6; ++i) s += x[i] * proj.w[i * 4 + j];
    EXPECT_NEAR(y[j], s, 1e-12);
  }
  const nn::Linear zero{Var::constant({6, 4}, 0.0), Var::constant({4}, 0.0)};
  const Var projected = project_embedding(Var::constant({6}, 0.0), zero);
  for (double v : projected.value()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(project_embedding(Var::constant({5}, 0.0), proj), ShapeError);
}

TEST(SelectTopK, SortOracle) {
  const Var e = Var::constant({3, 1}, {10, 11, 12});
  const std::vector<double> s{0.1, 0.9, 0.5};
  const auto top = select_topk(e, s, 2);
  EXPECT_EQ(top.indices, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(top.scores, (std::vector<double>{0.9, 0.5}));
  EXPECT_EQ(top.rows[0], 11);
  EXPECT_EQ(top.rows[1], 12);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = 1 + rng() % 10, k = 1 + rng() % t;
    std::vector<double> scores(t);
    for (auto& x : scores) x = static_cast<double>(rng() % 4) / 4.0;  // many ties
    std::vector<std::pair<double, std::size_t>> keyed;
    for (std::size_t i = 0; i < t; ++i) keyed.emplace_back(-scores[i], i);
    std::sort(keyed.begin(), keyed.end());
    const auto got = select_topk(Var::constant({t, 1}, 0.0), scores, k);
    for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(got.indices[i], keyed[i].second);
  }
}

TEST(SelectTopK, EqualScoresTakeFirstFramesAndErrors) {
  const std::vector<double> s(5, 0.3);
  EXPECT_EQ(select_topk(Var::constant({5, 2}, 0.0), s, 3).indices, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(select_topk(Var::constant({5, 2}, 0.0), s, 6), std::invalid_argument);
  EXPECT_THROW(select_topk(Var::constant({5, 2}, 0.0), s, 0), std::invalid_argument);
  EXPECT_THROW(select_topk(Var::constant({4, 2}, 0.0), s, 1), ShapeError);
}

TEST(Enhancement, ThresholdOracle) {
  EXPECT_EQ(threshold_scores(std::vector<double>{0.9, 0.5}, 0.7), (std::vector<double>{0.9, 0.0}));
}

TEST(Enhancement, AllScoresBelowTauGiveZeroEnhancedBranch) {
  std::mt19937_64 rng(10);
  const auto proj = random_projection(rng, 6, 4);
  auto p = random_enhancement(rng, 4, 6, 3);
  p.tau = 0.7;
  const Var e = random_const(rng, {4}), sel = random_const(rng, {2, 6});
  const auto r = enhance_embedding(e, sel, std::vector<double>{0.6, 0.3}, p, proj);
  for (double v : r.filtered_attention.value()) EXPECT_EQ(v, 0.0);
  for (double v : r.enhanced.value()) EXPECT_EQ(v, 0.0);
  const Var zero_proj = project_embedding(Var::constant({6}, 0.0), proj);
  for (std::size_t i = 0; i < 4; ++i) {
    const double expect = (p.fusion_a_w[i] * e[i] + p.fusion_a_b[i]) * (p.fusion_b_w[i] * zero_proj[i] + p.fusion_b_b[i]);
    EXPECT_NEAR(r.embedding[i], expect, 1e-12);
  }
}

TEST(Enhancement, SingleFrameAndUnitScores) {
  std::mt19937_64 rng(11);
  const auto proj = random_projection(rng, 3, 4);
  auto p = random_enhancement(rng, 4, 3, 2);
  p.tau = 0.0;
  const Var sel = random_const(rng, {1, 3});
  const auto r = enhance_embedding(random_const(rng, {4}), sel, std::vector<double>{1.0}, p, proj);
  EXPECT_EQ(r.attention[0], 1.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.enhanced[i], sel[i]);

  // All scores 1 with tau 0: e_f'' is the plain attention-weighted sum.
  const Var sel3 = random_const(rng, {3, 3});
  const auto r3 = enhance_embedding(random_const(rng, {4}), sel3, std::vector<double>{1, 1, 1}, p, proj);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 3; ++i) s += r3.attention[i] * sel3[i * 3 + j];
    EXPECT_NEAR(r3.enhanced[j], s, 1e-14);
  }
}

TEST(Enhancement, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 1 + trial % 3;
    auto proj = random_projection(rng, 8, 4);
    auto p = random_enhancement(rng, 4, 8, 3);
    p.tau = 0.5;
    Var e = random_param(rng, {4}), sel = random_param(rng, {k, 8});
    const auto scores = random_values(rng, k, 0.0, 1.0);
    std::vector<Var> inputs{e, sel, p.w_q, p.w_k, p.fusion_a_w, p.fusion_a_b, p.fusion_b_w, p.fusion_b_b, proj.w, proj.b};
    EXPECT_LT(gradient_error([&] { return probe(enhance_embedding(e, sel, scores, p, proj).embedding, trial); }, inputs),
              kTol);
  }
}

TEST(ConditionalNetwork, WarmupAndMissingCacheGivePlainEmbedding) {
  nn::ParameterStore store(13);
  ConditionalConfig cfg;
  cfg.encoder = tiny_encoder();
  cfg.embedding_dim = 6;
  cfg.attention_dim = 4;
  const ConditionalNetwork net(store, cfg);
  std::mt19937_64 rng(13);
  MelSpectrogram ref{40, 8, 320, kSampleRate, random_values(rng, 320)};
  MelSpectrogram mix{40, 8, 320, kSampleRate, random_values(rng, 320)};
  const Var plain = ad::take(net.reference_embeddings(spectrogram_input(ref), false), 0, 0);
  const std::vector<double> scores(10, 0.9);
  for (const auto& [cache, epoch] : {std::pair{std::optional(scores), std::size_t{0}},
                                     std::pair{std::optional<std::vector<double>>(), std::size_t{20}}}) {
    const Var e = net.build_embedding(ref, mix, cache, epoch);
    EXPECT_TRUE(std::equal(e.value().begin(), e.value().end(), plain.value().begin()));
  }
  EXPECT_THROW(net.build_embedding(ref, mix, std::vector<double>(9, 0.9), 20), CacheInvalid);
}

TEST(ConditionalNetwork, ActiveCacheComposesTopKAndEnhancement) {
  nn::ParameterStore store(14);
  ConditionalConfig cfg;
  cfg.encoder = tiny_encoder();
  cfg.embedding_dim = 6;
  cfg.attention_dim = 4;
  const ConditionalNetwork net(store, cfg);
  std::mt19937_64 rng(14);
  MelSpectrogram ref{40, 8, 320, kSampleRate, random_values(rng, 320)};
  MelSpectrogram mix{40, 8, 320, kSampleRate, random_values(rng, 320)};
  const auto scores = random_values(rng, 10, 0.0, 1.0);
  const Var got = net.build_embedding(ref, mix, scores, 20);

  const Var plain = ad::take(net.reference_embeddings(spectrogram_input(ref), false), 0, 0);
  const FrameFeatureMap em = net.encoder().encode(mix);
  const auto top = select_topk(em.values, scores, cfg.top_k);
  const auto expect = enhance_embedding(plain, top.rows, top.scores, net.enhancement(), net.projection()).embedding;
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(got[i], expect[i]);
}
