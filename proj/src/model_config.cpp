#include "radur/model_config.hpp"

#include <algorithm>

namespace radur {

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::mini() {
  ModelConfig m;
  m.conditional.encoder.n_mels = 8;
  m.conditional.encoder.channels = {8, 16, 16, 32, 32};
  m.conditional.encoder.convs_per_block = 1;
  m.conditional.embedding_dim = 16;
  m.conditional.attention_dim = 16;
  m.detector.n_mels = 8;
  m.detector.scale_channels = 8;
  m.detector.block_channels = {16, 32, 32};
  m.detector.gru_hidden = 16;
  m.detector.classifier_hidden = 16;
  return m;
}

std::size_t ModelConfig::time_pool_total() const {
  const auto pools = [](std::size_t blocks, std::size_t n) { return std::size_t{1} << std::min(blocks, n); };
  return pools(conditional.encoder.time_pool_blocks, conditional.encoder.channels.size());
}

}  // namespace radur
