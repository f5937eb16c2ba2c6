#pragma once

// Reference-side network: a VGG-style encoder shared by reference and mixture
// audio, attention pooling over its frames, a projection to the conditional
// embedding, and the mixture-driven embedding enhancement.

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "radur/features.hpp"
#include "radur/model_config.hpp"
#include "radur/nn.hpp"

namespace radur {

using ad::Var;

/// Thrown when cached detection scores do not fit the current mixture.
class CacheInvalid : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Encoder output for one clip: t' frames x C_r channels.
struct FrameFeatureMap {
  Var values;  // [t', C_r]
  double frame_resolution = 0.0;

  std::size_t frames() const { return values.dim(0); }
  std::size_t channels() const { return values.dim(1); }
};

/// Stacks equally sized spectrograms into a network input [N, 1, T, F].
Var spectrogram_batch(std::span<const MelSpectrogram* const> mels);
Var spectrogram_input(const MelSpectrogram& mel);

class ReferenceEncoder {
 public:
  ReferenceEncoder(nn::ParameterStore& store, const EncoderConfig& cfg);

  /// x[N, 1, T, F] -> [N, floor(T / 4), C_r] with the default pooling.
  Var forward(const Var& x, bool training) const;
  FrameFeatureMap encode(const MelSpectrogram& x, bool training = false) const;

  std::size_t output_channels() const { return cfg_.channels.back(); }
  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Block {
    std::vector<nn::Conv2d> convs;
    std::vector<nn::BatchNorm2d> norms;
    std::size_t time_pool = 1;
    std::size_t freq_pool = 1;
  };
  EncoderConfig cfg_;
  std::vector<Block> blocks_;
};

struct AttentionPoolParams {
  Var w_q;  // [C_r, C_q]
  Var w_k;  // [C_r, C_k]
};

struct AttentionPoolResult {
  Var embedding;  // [C_r]
  Var weights;    // [t']
};

/// Global-average query against per-frame keys; softmax weights scaled by
/// 1/sqrt(C_r) pool the frames into one vector.
AttentionPoolResult attention_pool(const Var& features, const AttentionPoolParams& params);

/// Fully connected map from the pooled C_r vector to the embedding.
Var project_embedding(const Var& pooled, const nn::Linear& projection);

struct TopKFrames {
  Var rows;                          // [k, C_r]
  std::vector<double> scores;        // descending
  std::vector<std::size_t> indices;  // frame index of each row
};

/// Rows of `features` at the k highest scores; ties go to the lower index.
TopKFrames select_topk(const Var& features, std::span<const double> scores, std::size_t k);

struct EnhancementParams {
  Var w_q;         // [D, C_q]
  Var w_k;         // [C_r, C_k]
  Var fusion_a_w;  // [D] kernel-size-1 convolution on e_f
  Var fusion_a_b;  // [D]
  Var fusion_b_w;  // [D] kernel-size-1 convolution on the projected e_f''
  Var fusion_b_b;  // [D]
  std::size_t k = 2;
  double tau = 0.7;
  std::size_t warmup_epochs = 10;
};

struct EnhancementResult {
  Var embedding;           // e_f*, [D]
  Var attention;           // a', [k]
  Var filtered_attention;  // a'', [k]
  Var enhanced;            // e_f'', [C_r]
  std::vector<double> filtered_scores;
};

/// Scores below tau are zeroed (they are treated as constants).
std::vector<double> threshold_scores(std::span<const double> scores, double tau);

/// Attends from e_f over the selected mixture frames, gates the attention by
/// the tau-filtered detection scores, and fuses the result with e_f by an
/// element-wise product of two kernel-size-1 convolutions.
EnhancementResult enhance_embedding(const Var& embedding, const Var& selected,
                                    std::span<const double> selected_scores,
                                    const EnhancementParams& params, const nn::Linear& projection);

class ConditionalNetwork {
 public:
  ConditionalNetwork(nn::ParameterStore& store, const ConditionalConfig& cfg);

  /// Plain e_f for every reference in the batch: [N, D].
  Var reference_embeddings(const Var& references, bool training) const;

  /// Replaces row n of `embeddings` by e_f* whenever cached[n] is set.
  /// `mixture_features` is [N, t', C_r].
  Var enhance_batch(const Var& embeddings, const Var& mixture_features,
                    std::span<const std::optional<std::vector<double>>> cached) const;

  /// Algorithm 1 for one (reference, mixture) pair. EE runs only when
  /// epoch >= warmup_epochs and scores from an earlier pass are available.
  Var build_embedding(const MelSpectrogram& reference, const MelSpectrogram& mixture,
                      const std::optional<std::vector<double>>& cached_scores, std::size_t epoch,
                      bool training = false) const;

  bool enhancement_active(std::size_t epoch) const { return epoch >= enhancement_.warmup_epochs; }

  const ReferenceEncoder& encoder() const { return encoder_; }
  const AttentionPoolParams& attention() const { return attention_; }
  const nn::Linear& projection() const { return projection_; }
  const EnhancementParams& enhancement() const { return enhancement_; }
  EnhancementParams& enhancement() { return enhancement_; }
  const ConditionalConfig& config() const { return cfg_; }

 private:
  Var pooled_embedding(const Var& features) const;

  ConditionalConfig cfg_;
  ReferenceEncoder encoder_;
  AttentionPoolParams attention_;
  nn::Linear projection_;
  EnhancementParams enhancement_;
};

}  // namespace radur
