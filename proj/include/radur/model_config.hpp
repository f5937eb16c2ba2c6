#pragma once

#include <cstddef>
#include <vector>

namespace radur {

struct EncoderConfig {
  std::size_t n_mels = 64;
  std::vector<std::size_t> channels{64, 128, 256, 512, 1024};
  std::size_t convs_per_block = 2;
  /// Leading blocks that halve the time axis; 2 gives t' = floor(t / 4).
  std::size_t time_pool_blocks = 2;
};

struct ConditionalConfig {
  EncoderConfig encoder;
  std::size_t embedding_dim = 128;
  std::size_t attention_dim = 128;  // C_q = C_k
  bool attention_pooling = true;    // false: plain global average pooling
  std::size_t top_k = 2;
  double tau = 0.7;
  std::size_t warmup_epochs = 10;
};

struct DetectorConfig {
  std::size_t n_mels = 64;
  std::vector<std::size_t> kernels{1, 3, 5};
  std::size_t scale_channels = 64;
  std::vector<std::size_t> block_channels{128, 256, 512};
  std::size_t time_pool_blocks = 2;
  std::size_t gru_hidden = 512;
  std::size_t classifier_hidden = 256;
};

struct ModelConfig {
  ConditionalConfig conditional;
  DetectorConfig detector;

  /// Published architecture: 64 mels, 64..1024 encoder, 512-unit Bi-GRU.
  static ModelConfig paper();
  /// Desk-scale profile: 8 mels and narrow layers, same topology.
  static ModelConfig mini();

  std::size_t n_mels() const { return conditional.encoder.n_mels; }
  /// Total time downsampling shared by encoder and detector.
  std::size_t time_pool_total() const;
};

}  // namespace radur
