#include "radur/config.hpp"

#include <fstream>
#include <sstream>

namespace radur {

using json = nlohmann::json;

#define RADUR_CONFIG_FIELDS(X)                                                                                   \
  X(profile) X(seed) X(run_dir) X(data_dir) X(bank_dir) X(classes) X(sizes) X(negative_ratio) X(clip_duration)   \
  X(snr_low_db) X(snr_high_db) X(min_events) X(max_events) X(events_per_class) X(references_per_class) X(lr)     \
  X(batch_size) X(epochs) X(warmup_epochs) X(loss) X(ee) X(attention_pooling) X(k) X(tau) X(alpha) X(beta)       \
  X(gamma) X(duration_mode) X(w_short) X(w_long) X(split) X(two_pass) X(threshold) X(median_window)              \
  X(segment_length) X(collar) X(offset_ratio)

json to_json(const RunConfig& cfg) {
  json j = json::object();
#define X(name) j[#name] = cfg.name;
  RADUR_CONFIG_FIELDS(X)
#undef X
  return j;
}

namespace {

bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  const json& v = *it;
  // nlohmann converts between number kinds silently; keep the kinds apart.
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(std::string("config key '") + key + "' must be a boolean");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(std::string("config key '") + key + "' must be a string");
  } else if constexpr (std::is_integral_v<T>) {
    if (!is_count(v)) throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(std::string("config key '") + key + "' must be a number");
  } else {
    if (!v.is_array()) throw ConfigError(std::string("config key '") + key + "' must be a list");
    for (const auto& e : v) {
      if (!is_count(e)) throw ConfigError(std::string("config key '") + key + "' must list non-negative integers");
    }
  }
  out = v.get<T>();
}

void reject_unknown(const json& j, const std::string& origin) {
  if (!j.is_object()) throw ConfigError(origin + ": expected a JSON object");
  const json known = to_json(RunConfig{});
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError(origin + ": unknown key '" + key + "'");
  }
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, "config");
  RunConfig cfg;
#define X(name) read_field(j, #name, cfg.name);
  RADUR_CONFIG_FIELDS(X)
#undef X
  return cfg;
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  check(profile == "paper" || profile == "mini", "profile must be 'paper' or 'mini'");
  check(classes >= 2, "classes must be >= 2");
  check(sizes.size() == 3, "sizes must list train,val,test");
  check(negative_ratio >= 0.0 && negative_ratio < 1.0, "negative_ratio must lie in [0, 1)");
  check(clip_duration > 0.0, "clip_duration must be positive");
  check(snr_low_db <= snr_high_db, "snr_low_db must not exceed snr_high_db");
  check(min_events >= 1 && min_events <= max_events, "need 1 <= min_events <= max_events");
  check(events_per_class >= 1 && references_per_class >= 1, "bank needs event and reference clips");
  check(lr > 0.0, "lr must be positive");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(k >= 1, "k must be >= 1");
  check(tau >= 0.0 && tau <= 1.0, "tau must lie in [0, 1]");
  check(split == "train" || split == "val" || split == "test", "split must be train, val or test");
  check(segment_length > 0.0, "segment_length must be positive");
  check(collar >= 0.0 && offset_ratio >= 0.0, "collar and offset_ratio must be >= 0");
  try {
    parse_loss_kind(loss);
    parse_duration_mode(duration_mode);
    train_config(*this).validate();
    eval_config(*this).decoding.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  reject_unknown(j, path.string());
  return j;
}

RunConfig resolve_config(const json& file, const json& overrides) {
  json merged = to_json(RunConfig{});
  for (const json* layer : {&file, &overrides}) {
    if (layer->is_null()) continue;
    reject_unknown(*layer, "config");
    for (const auto& [key, value] : layer->items()) merged[key] = value;
  }
  RunConfig cfg = run_config_from_json(merged);
  cfg.validate();
  return cfg;
}

json parse_override(const std::string& key, const std::string& text) {
  const json defaults = to_json(RunConfig{});
  if (!defaults.contains(key)) throw ConfigError("unknown key '" + key + "'");
  const json& d = defaults[key];
  try {
    if (d.is_boolean()) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw ConfigError("expected true or false");
    }
    if (d.is_string()) return text;
    if (d.is_array()) {
      json out = json::array();
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        const auto v = std::stoull(item, &used);
        if (used != item.size() || item.starts_with('-')) throw ConfigError("bad integer '" + item + "'");
        out.push_back(v);
      }
      return out;
    }
    std::size_t used = 0;
    if (d.is_number_unsigned()) {
      const auto v = std::stoull(text, &used);
      if (used != text.size() || text.starts_with('-')) throw ConfigError("expected a non-negative integer");
      return v;
    }
    const double v = std::stod(text, &used);
    if (used != text.size()) throw ConfigError("expected a number");
    return v;
  } catch (const ConfigError& e) {
    throw ConfigError("--" + key + " '" + text + "': " + e.what());
  } catch (const std::exception&) {
    throw ConfigError("--" + key + " '" + text + "': not a valid value");
  }
}

ModelConfig model_config(const RunConfig& cfg) {
  ModelConfig m = cfg.profile == "mini" ? ModelConfig::mini() : ModelConfig::paper();
  m.conditional.top_k = cfg.k;
  m.conditional.tau = cfg.tau;
  m.conditional.warmup_epochs = cfg.warmup_epochs;
  m.conditional.attention_pooling = cfg.attention_pooling;
  return m;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.lr = cfg.lr;
  t.batch_size = cfg.batch_size;
  t.epochs = cfg.epochs;
  t.warmup_epochs = cfg.warmup_epochs;
  t.loss = parse_loss_kind(cfg.loss);
  t.ee_enabled = cfg.ee;
  t.seed = cfg.seed;
  t.focal = {cfg.beta, cfg.gamma};
  t.duration = {cfg.alpha, cfg.w_short, cfg.w_long, parse_duration_mode(cfg.duration_mode)};
  t.validate_two_pass = cfg.two_pass;
  return t;
}

EvalConfig eval_config(const RunConfig& cfg) {
  EvalConfig e;
  e.two_pass = cfg.two_pass;
  e.decoding = {cfg.threshold, cfg.median_window};
  e.segment = {cfg.segment_length};
  e.event = {cfg.collar, cfg.offset_ratio};
  return e;
}

DatasetSizes dataset_sizes(const RunConfig& cfg) { return {cfg.sizes.at(0), cfg.sizes.at(1), cfg.sizes.at(2)}; }

DatasetConfig dataset_config(const RunConfig& cfg) {
  DatasetConfig d;
  d.clip_duration = cfg.clip_duration;
  d.snr_low_db = cfg.snr_low_db;
  d.snr_high_db = cfg.snr_high_db;
  d.min_events = cfg.min_events;
  d.max_events = cfg.max_events;
  return d;
}

}  // namespace radur
