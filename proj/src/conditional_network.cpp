#include "radur/conditional_network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace radur {

namespace {

void require_finite(const Var& v, const char* what) {
  for (double x : v.value()) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite value");
  }
}

Var as_row(const Var& v) { return ad::reshape(v, {1, v.size()}); }

}  // namespace

Var spectrogram_batch(std::span<const MelSpectrogram* const> mels) {
  if (mels.empty()) throw ShapeError("empty spectrogram batch");
  const std::size_t T = mels.front()->frames, F = mels.front()->n_mels;
  std::vector<double> values;
  values.reserve(mels.size() * T * F);
  for (const auto* m : mels) {
    if (m->frames != T || m->n_mels != F) {
      throw ShapeError("spectrogram batch: mixed shapes " + std::to_string(m->frames) + "x" +
                       std::to_string(m->n_mels) + " vs " + std::to_string(T) + "x" + std::to_string(F));
    }
    values.insert(values.end(), m->values.begin(), m->values.end());
  }
  return Var::constant({mels.size(), 1, T, F}, std::move(values));
}

Var spectrogram_input(const MelSpectrogram& mel) {
  const MelSpectrogram* one[] = {&mel};
  return spectrogram_batch(one);
}

ReferenceEncoder::ReferenceEncoder(nn::ParameterStore& store, const EncoderConfig& cfg) : cfg_(cfg) {
  if (cfg.channels.empty()) throw std::invalid_argument("encoder needs at least one block");
  std::size_t in = 1;
  std::size_t freq = cfg.n_mels;
  for (std::size_t b = 0; b < cfg.channels.size(); ++b) {
    Block block;
    const std::string prefix = "encoder.block" + std::to_string(b + 1);
    for (std::size_t c = 0; c < cfg.convs_per_block; ++c) {
      const std::string name = prefix + ".conv" + std::to_string(c + 1);
      block.convs.push_back(nn::Conv2d::create(store, name, in, cfg.channels[b], 3));
      block.norms.push_back(nn::BatchNorm2d::create(store, name + ".bn", cfg.channels[b]));
      in = cfg.channels[b];
    }
    block.time_pool = b < cfg.time_pool_blocks ? 2 : 1;
    block.freq_pool = freq >= 2 ? 2 : 1;
    freq /= block.freq_pool;
    blocks_.push_back(std::move(block));
  }
}

Var ReferenceEncoder::forward(const Var& x, bool training) const {
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(3) != cfg_.n_mels) {
    throw ShapeError("encoder expects [N, 1, T, " + std::to_string(cfg_.n_mels) + "], got " +
                     ad::shape_str(x.shape()));
  }
  Var h = x;
  for (const auto& block : blocks_) {
    for (std::size_t c = 0; c < block.convs.size(); ++c) {
      h = ad::relu(block.norms[c](block.convs[c](h), training));
    }
    h = ad::avg_pool2d(h, block.time_pool, block.freq_pool);
  }
  // [N, C, T', F'] -> mean over frequency -> [N, T', C]
  return ad::transpose_last2(ad::mean_last(h));
}

FrameFeatureMap ReferenceEncoder::encode(const MelSpectrogram& x, bool training) const {
  const Var out = forward(spectrogram_input(x), training);
  FrameFeatureMap map;
  map.values = ad::take(out, 0, 0);
  map.frame_resolution = x.frame_seconds() * static_cast<double>(x.frames - 1) / static_cast<double>(map.frames());
  return map;
}

AttentionPoolResult attention_pool(const Var& features, const AttentionPoolParams& params) {
  if (features.rank() != 2 || features.dim(0) < 1) {
    throw ShapeError("attention_pool expects [t', C_r] with t' >= 1, got " + ad::shape_str(features.shape()));
  }
  require_finite(features, "attention_pool");
  const std::size_t channels = features.dim(1);
  const Var global = ad::mean_rows(features);                        // e_g [C_r]
  const Var query = ad::matvec(ad::transpose_last2(params.w_q), global);  // [C_q]
  // K q computed as F (W_k q): every frame goes through the same arithmetic.
  const Var logits = ad::matvec(features, ad::matvec(params.w_k, query));  // [t']
  const Var weights = ad::softmax(ad::scale(logits, 1.0 / std::sqrt(static_cast<double>(channels))));
  const Var pooled = ad::matmul(as_row(weights), features);          // [1, C_r]
  return {ad::reshape(pooled, {channels}), weights};
}

Var project_embedding(const Var& pooled, const nn::Linear& projection) {
  if (pooled.rank() != 1 || pooled.size() != projection.w.dim(0)) {
    throw ShapeError("project_embedding: input " + ad::shape_str(pooled.shape()) + " vs projection " +
                     ad::shape_str(projection.w.shape()));
  }
  return projection(pooled);
}

TopKFrames select_topk(const Var& features, std::span<const double> scores, std::size_t k) {
  if (features.rank() != 2) throw ShapeError("select_topk expects [t', C_r]");
  const std::size_t frames = features.dim(0);
  if (scores.size() != frames) {
    throw ShapeError("select_topk: " + std::to_string(scores.size()) + " scores for " + std::to_string(frames) +
                     " frames");
  }
  if (k == 0 || k > frames) {
    throw std::invalid_argument("select_topk: k = " + std::to_string(k) + " outside [1, " + std::to_string(frames) + "]");
  }
  std::vector<std::size_t> order(frames);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  TopKFrames out;
  out.indices = order;
  for (auto i : order) out.scores.push_back(scores[i]);
  out.rows = ad::select_rows(features, order);
  return out;
}

std::vector<double> threshold_scores(std::span<const double> scores, double tau) {
  std::vector<double> out(scores.begin(), scores.end());
  for (auto& s : out) {
    if (s < tau) s = 0.0;
  }
  return out;
}

EnhancementResult enhance_embedding(const Var& embedding, const Var& selected,
                                    std::span<const double> selected_scores,
                                    const EnhancementParams& params, const nn::Linear& projection) {
  if (selected.rank() != 2 || selected.dim(0) != selected_scores.size()) {
    throw ShapeError("enhance_embedding: selected frames " + ad::shape_str(selected.shape()) + " vs " +
                     std::to_string(selected_scores.size()) + " scores");
  }
  if (embedding.rank() != 1 || embedding.size() != params.w_q.dim(0)) {
    throw ShapeError("enhance_embedding: embedding " + ad::shape_str(embedding.shape()) + " vs W'_q " +
                     ad::shape_str(params.w_q.shape()));
  }
  if (selected.dim(1) != params.w_k.dim(0)) {
    throw ShapeError("enhance_embedding: frame width " + std::to_string(selected.dim(1)) + " vs W'_k " +
                     ad::shape_str(params.w_k.shape()));
  }
  require_finite(embedding, "enhance_embedding");
  require_finite(selected, "enhance_embedding");
  const std::size_t k = selected.dim(0), channels = selected.dim(1);

  const Var query = ad::matmul(as_row(embedding), params.w_q);      // [1, C_q]
  const Var keys = ad::matmul(selected, params.w_k);                // [k, C_k]
  const Var logits = ad::reshape(ad::matmul(keys, ad::transpose_last2(query)), {k});
  const Var attention = ad::softmax(ad::scale(logits, 1.0 / std::sqrt(static_cast<double>(channels))));

  EnhancementResult out;
  out.filtered_scores = threshold_scores(selected_scores, params.tau);
  out.attention = attention;
  out.filtered_attention = ad::mul(attention, Var::constant({k}, out.filtered_scores));
  out.enhanced = ad::reshape(ad::matmul(as_row(out.filtered_attention), selected), {channels});

  const Var gate_a = ad::add(ad::mul(params.fusion_a_w, embedding), params.fusion_a_b);
  const Var gate_b = ad::add(ad::mul(params.fusion_b_w, project_embedding(out.enhanced, projection)), params.fusion_b_b);
  out.embedding = ad::mul(gate_a, gate_b);
  return out;
}

ConditionalNetwork::ConditionalNetwork(nn::ParameterStore& store, const ConditionalConfig& cfg)
    : cfg_(cfg), encoder_(store, cfg.encoder) {
  const std::size_t c = encoder_.output_channels();
  const std::size_t d = cfg.embedding_dim;
  const std::size_t q = cfg.attention_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(c));
  attention_.w_q = store.add_uniform("conditional.attention.w_q", {c, q}, bound);
  attention_.w_k = store.add_uniform("conditional.attention.w_k", {c, q}, bound);
  projection_ = nn::Linear::create(store, "conditional.projection", c, d);
  enhancement_.w_q = store.add_uniform("conditional.enhancement.w_q", {d, q}, 1.0 / std::sqrt(static_cast<double>(d)));
  enhancement_.w_k = store.add_uniform("conditional.enhancement.w_k", {c, q}, bound);
  enhancement_.fusion_a_w = store.add_constant("conditional.enhancement.fusion_a.w", {d}, 1.0);
  enhancement_.fusion_a_b = store.add_constant("conditional.enhancement.fusion_a.b", {d}, 0.0);
  enhancement_.fusion_b_w = store.add_constant("conditional.enhancement.fusion_b.w", {d}, 1.0);
  enhancement_.fusion_b_b = store.add_constant("conditional.enhancement.fusion_b.b", {d}, 1.0);
  enhancement_.k = cfg.top_k;
  enhancement_.tau = cfg.tau;
  enhancement_.warmup_epochs = cfg.warmup_epochs;
}

Var ConditionalNetwork::pooled_embedding(const Var& features) const {
  std::vector<Var> pooled;
  pooled.reserve(features.dim(0));
  for (std::size_t n = 0; n < features.dim(0); ++n) {
    const Var frames = ad::take(features, 0, n);
    pooled.push_back(cfg_.attention_pooling ? attention_pool(frames, attention_).embedding : ad::mean_rows(frames));
  }
  return projection_(ad::stack(pooled, 0));
}

Var ConditionalNetwork::reference_embeddings(const Var& references, bool training) const {
  return pooled_embedding(encoder_.forward(references, training));
}

Var ConditionalNetwork::enhance_batch(const Var& embeddings, const Var& mixture_features,
                                      std::span<const std::optional<std::vector<double>>> cached) const {
  const std::size_t N = embeddings.dim(0);
  if (cached.size() != N || mixture_features.dim(0) != N) {
    throw ShapeError("enhance_batch: batch size mismatch");
  }
  if (std::none_of(cached.begin(), cached.end(), [](const auto& c) { return c.has_value(); })) return embeddings;
  std::vector<Var> rows;
  rows.reserve(N);
  for (std::size_t n = 0; n < N; ++n) {
    Var e = ad::take(embeddings, 0, n);
    if (cached[n]) {
      const Var frames = ad::take(mixture_features, 0, n);
      if (cached[n]->size() != frames.dim(0)) {
        throw CacheInvalid("cached scores have " + std::to_string(cached[n]->size()) + " frames, mixture has " +
                           std::to_string(frames.dim(0)));
      }
      const auto top = select_topk(frames, *cached[n], enhancement_.k);
      e = enhance_embedding(e, top.rows, top.scores, enhancement_, projection_).embedding;
    }
    rows.push_back(e);
  }
  return ad::stack(rows, 0);
}

Var ConditionalNetwork::build_embedding(const MelSpectrogram& reference, const MelSpectrogram& mixture,
                                        const std::optional<std::vector<double>>& cached_scores,
                                        std::size_t epoch, bool training) const {
  const Var ef = reference_embeddings(spectrogram_input(reference), training);
  if (!cached_scores || !enhancement_active(epoch)) return ad::take(ef, 0, 0);
  const Var features = encoder_.forward(spectrogram_input(mixture), training);
  const std::optional<std::vector<double>> one[] = {cached_scores};
  return ad::take(enhance_batch(ef, features, one), 0, 0);
}

}  // namespace radur
