#pragma once

// The complete detector: one parameter store shared by the conditional and
// detection networks, plus single-file checkpoints.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "radur/conditional_network.hpp"
#include "radur/detection_network.hpp"
#include "radur/features.hpp"
#include "radur/losses.hpp"
#include "radur/model_config.hpp"

namespace radur {

inline constexpr const char* kInitScheme = "mt19937_64/linear-uniform-fanin/conv-he-uniform/bn-unit";

class RadurModel {
 public:
  RadurModel(const ModelConfig& cfg, std::uint64_t seed);
  RadurModel(const RadurModel&) = delete;
  RadurModel& operator=(const RadurModel&) = delete;

  MelSpectrogram features(const AudioClip& clip) const { return extract_logmel(clip, mel); }

  /// Single-clip inference. With `enhance_from` set, the embedding is
  /// enhanced using those scores (second pass).
  FrameScores detect(const MelSpectrogram& mixture, const MelSpectrogram& reference,
                     const std::vector<double>* enhance_from = nullptr) const;

  ModelConfig config;
  std::uint64_t seed;
  MelConfig mel;
  nn::ParameterStore store;
  ConditionalNetwork conditional;
  DetectionNetwork detector;
};

/// Adam with bias correction, iterating parameters in store order.
class Adam {
 public:
  explicit Adam(const nn::ParameterStore& store, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void step();

  double lr;
  double beta1;
  double beta2;
  double eps;
  std::size_t steps = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;

 private:
  std::map<std::string, Var> params_;
};

struct CheckpointMeta {
  std::size_t epoch = 0;  // epochs completed
  bool ee_trained = false;
  nlohmann::json run_config = nlohmann::json::object();
  DurationStats duration_stats;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::filesystem::path& path, const RadurModel& model, const Adam* optimizer,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::unique_ptr<RadurModel> model;
  std::unique_ptr<Adam> optimizer;  // null when none was stored
  CheckpointMeta meta;
  std::string config_hash;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

}  // namespace radur
