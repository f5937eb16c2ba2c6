#include "radur/detection_network.hpp"

#include <string>

#include "radur/conditional_network.hpp"

namespace radur {

DetectionNetwork::DetectionNetwork(nn::ParameterStore& store, const DetectorConfig& cfg, std::size_t embedding_dim)
    : cfg_(cfg), embedding_dim_(embedding_dim) {
  if (cfg.kernels.empty() || cfg.block_channels.empty()) throw std::invalid_argument("detector needs kernels and blocks");
  for (std::size_t k : cfg.kernels) {
    const std::string name = "detector.scale" + std::to_string(k);
    // Twice the channels: half linear path, half GLU gate.
    branches_.push_back({nn::Conv2d::create(store, name + ".conv", 1, 2 * cfg.scale_channels, k),
                         nn::BatchNorm2d::create(store, name + ".bn", 2 * cfg.scale_channels)});
  }
  std::size_t in = cfg.scale_channels * cfg.kernels.size();
  std::size_t freq = cfg.n_mels;
  for (std::size_t b = 0; b < cfg.block_channels.size(); ++b) {
    const std::string name = "detector.block" + std::to_string(b + 1);
    Block block{nn::Conv2d::create(store, name + ".conv", in, cfg.block_channels[b], 3),
                nn::BatchNorm2d::create(store, name + ".bn", cfg.block_channels[b])};
    block.time_pool = b < cfg.time_pool_blocks ? 2 : 1;
    block.freq_pool = freq >= 2 ? 2 : 1;
    freq /= block.freq_pool;
    in = cfg.block_channels[b];
    blocks_.push_back(std::move(block));
  }
  fusion_ = nn::Linear::create(store, "detector.fusion", embedding_dim, in, /*bias=*/false);
  gru_ = nn::BiGru::create(store, "detector.gru", in, cfg.gru_hidden);
  hidden_ = nn::Linear::create(store, "detector.classifier.hidden", 2 * cfg.gru_hidden, cfg.classifier_hidden);
  output_ = nn::Linear::create(store, "detector.classifier.output", cfg.classifier_hidden, 2);
}

Var DetectionNetwork::frame_features(const Var& x, bool training) const {
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(3) != cfg_.n_mels) {
    throw ShapeError("detector expects [N, 1, T, " + std::to_string(cfg_.n_mels) + "], got " + ad::shape_str(x.shape()));
  }
  std::vector<Var> scales;
  scales.reserve(branches_.size());
  for (const auto& br : branches_) scales.push_back(nn::glu(br.norm(br.conv(x), training), 1));
  Var h = ad::concat(scales, 1);
  for (const auto& block : blocks_) {
    h = ad::relu(block.norm(block.conv(h), training));
    h = ad::avg_pool2d(h, block.time_pool, block.freq_pool);
  }
  return ad::transpose_last2(ad::mean_last(h));
}

Var DetectionNetwork::fuse(const Var& features, const Var& embeddings) const {
  if (embeddings.rank() != 2 || embeddings.dim(1) != embedding_dim_) {
    throw ShapeError("detector: embedding " + ad::shape_str(embeddings.shape()) + ", expected [N, " +
                     std::to_string(embedding_dim_) + "]");
  }
  return ad::mul_broadcast_frames(features, fusion_(embeddings));
}

Var DetectionNetwork::classify(const Var& fused) const {
  const Var seq = gru_(fused);
  return ad::softmax(output_(ad::relu(hidden_(seq))));
}

Var DetectionNetwork::forward(const Var& x, const Var& embeddings, bool training) const {
  if (embeddings.rank() != 2 || embeddings.dim(0) != x.dim(0)) {
    throw ShapeError("detector: " + std::to_string(x.dim(0)) + " mixtures vs embeddings " +
                     ad::shape_str(embeddings.shape()));
  }
  const Var probs = classify(fuse(frame_features(x, training), embeddings));
  return ad::take(probs, 2, 1);
}

FrameScores DetectionNetwork::detect(const MelSpectrogram& mixture, const Var& embedding) const {
  if (embedding.size() != embedding_dim_) {
    throw ShapeError("detect: embedding length " + std::to_string(embedding.size()) + ", expected " +
                     std::to_string(embedding_dim_));
  }
  const Var e = Var::constant({1, embedding_dim_}, std::vector<double>(embedding.value().begin(), embedding.value().end()));
  const Var p = forward(spectrogram_input(mixture), e, false);
  FrameScores out;
  out.values.assign(p.value().begin(), p.value().end());
  out.frame_resolution = mixture.frame_seconds() * static_cast<double>(mixture.frames - 1) / static_cast<double>(out.values.size());
  return out;
}

}  // namespace radur
