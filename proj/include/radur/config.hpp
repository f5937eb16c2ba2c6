#pragma once

// Declarative run configuration. Every tunable lives in one flat JSON object;
// values resolve as defaults <- config file <- command-line overrides.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "radur/dataset_builder.hpp"
#include "radur/model_config.hpp"
#include "radur/training.hpp"

namespace radur {

/// Bad configuration input: unknown keys, wrong types, out-of-range values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string profile = "paper";  // paper | mini
  std::uint64_t seed = 0;
  std::string run_dir = "runs/default";

  // Data.
  std::string data_dir = "data";
  std::string bank_dir;  // empty: synthetic bank
  std::size_t classes = 4;
  std::vector<std::size_t> sizes{200, 50, 50};
  double negative_ratio = 0.2;
  double clip_duration = 10.0;
  double snr_low_db = -5.0;
  double snr_high_db = 15.0;
  std::size_t min_events = 1;
  std::size_t max_events = 3;
  std::size_t events_per_class = 24;
  std::size_t references_per_class = 6;

  // Training.
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  std::size_t warmup_epochs = 10;
  std::string loss = "du_focal";
  bool ee = true;
  bool attention_pooling = true;
  std::size_t k = 2;
  double tau = 0.7;
  double alpha = 1.5;
  double beta = 0.65;
  double gamma = 2.0;
  std::string duration_mode = "intent";
  double w_short = 0.0;
  double w_long = 10.0;

  // Evaluation.
  std::string split = "test";
  bool two_pass = true;
  double threshold = 0.5;
  std::size_t median_window = 5;
  double segment_length = 1.0;
  double collar = 0.2;
  double offset_ratio = 0.2;

  /// Range and enum checks; throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Strict: unknown keys and type mismatches throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Reads a JSON config file; every key must be known.
nlohmann::json read_config_file(const std::filesystem::path& path);

/// defaults <- file <- overrides, then validated.
RunConfig resolve_config(const nlohmann::json& file, const nlohmann::json& overrides);

/// Parses a command-line string into the JSON type of `key`'s default.
nlohmann::json parse_override(const std::string& key, const std::string& text);

ModelConfig model_config(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);
EvalConfig eval_config(const RunConfig& cfg);
DatasetSizes dataset_sizes(const RunConfig& cfg);
DatasetConfig dataset_config(const RunConfig& cfg);

}  // namespace radur
