#pragma once

// Mixture-side network: multi-scale GLU front end, conv blocks, multiplicative
// embedding fusion, one Bi-GRU layer and a per-frame two-class classifier.

#include <vector>

#include "radur/features.hpp"
#include "radur/model_config.hpp"
#include "radur/nn.hpp"

namespace radur {

using ad::Var;

/// Per-frame target-presence probabilities at network resolution.
struct FrameScores {
  std::vector<double> values;
  double frame_resolution = 0.0;
};

class DetectionNetwork {
 public:
  DetectionNetwork(nn::ParameterStore& store, const DetectorConfig& cfg, std::size_t embedding_dim);

  /// Conv stack only: x[N, 1, T, F] -> [N, t', C].
  Var frame_features(const Var& x, bool training) const;
  /// features[N, t', C] scaled frame-wise by the projected embedding.
  Var fuse(const Var& features, const Var& embeddings) const;
  /// Bi-GRU and classifier: fused[N, t', C] -> class probabilities [N, t', 2].
  Var classify(const Var& fused) const;

  /// Positive-class probability per frame: [N, t'].
  Var forward(const Var& x, const Var& embeddings, bool training) const;

  /// Single-clip inference with frozen statistics.
  FrameScores detect(const MelSpectrogram& mixture, const Var& embedding) const;

  std::size_t feature_channels() const { return cfg_.block_channels.back(); }
  const DetectorConfig& config() const { return cfg_; }

 private:
  struct Branch {
    nn::Conv2d conv;
    nn::BatchNorm2d norm;
  };
  struct Block {
    nn::Conv2d conv;
    nn::BatchNorm2d norm;
    std::size_t time_pool = 1;
    std::size_t freq_pool = 1;
  };

  DetectorConfig cfg_;
  std::size_t embedding_dim_;
  std::vector<Branch> branches_;
  std::vector<Block> blocks_;
  nn::Linear fusion_;
  nn::BiGru gru_;
  nn::Linear hidden_;
  nn::Linear output_;
};

}  // namespace radur
