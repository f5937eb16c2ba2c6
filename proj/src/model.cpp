#include "radur/model.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace radur {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'R', 'A', 'D', 'U', 'R', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

MelConfig mel_for(const ModelConfig& cfg) {
  MelConfig mel;
  mel.n_mels = cfg.n_mels();
  return mel;
}

json mel_to_json(const MelConfig& m) {
  return {{"window", m.window}, {"hop", m.hop}, {"n_mels", m.n_mels},
          {"f_min", m.f_min},   {"f_max", m.f_max}, {"log_floor", m.log_floor}};
}

MelConfig mel_from_json(const json& j) {
  MelConfig m;
  m.window = j.at("window");
  m.hop = j.at("hop");
  m.n_mels = j.at("n_mels");
  m.f_min = j.at("f_min");
  m.f_max = j.at("f_max");
  m.log_floor = j.at("log_floor");
  return m;
}

void write_blob(std::ostream& out, std::span<const double> values) {
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
}

void read_blob(std::istream& in, std::span<double> values, const std::string& name) {
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in) throw CheckpointError("checkpoint truncated while reading '" + name + "'");
}

}  // namespace

RadurModel::RadurModel(const ModelConfig& cfg, std::uint64_t seed_)
    : config(cfg),
      seed(seed_),
      mel(mel_for(cfg)),
      store(seed_),
      conditional(store, cfg.conditional),
      detector(store, cfg.detector, cfg.conditional.embedding_dim) {
  if (cfg.conditional.encoder.n_mels != cfg.detector.n_mels) {
    throw std::invalid_argument("encoder and detector must use the same number of mel bands");
  }
  if (cfg.conditional.encoder.time_pool_blocks != cfg.detector.time_pool_blocks) {
    throw std::invalid_argument("encoder and detector must pool time identically");
  }
}

FrameScores RadurModel::detect(const MelSpectrogram& mixture, const MelSpectrogram& reference,
                               const std::vector<double>* enhance_from) const {
  ad::NoGradGuard no_grad;
  Var e = conditional.reference_embeddings(spectrogram_input(reference), false);
  if (enhance_from) {
    const Var feats = conditional.encoder().forward(spectrogram_input(mixture), false);
    const std::optional<std::vector<double>> cached[] = {*enhance_from};
    e = conditional.enhance_batch(e, feats, cached);
  }
  return detector.detect(mixture, ad::take(e, 0, 0));
}

Adam::Adam(const nn::ParameterStore& store, double lr_, double beta1_, double beta2_, double eps_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_), params_(store.parameters()) {
  for (const auto& [name, p] : params_) {
    m[name].assign(p.size(), 0.0);
    v[name].assign(p.size(), 0.0);
  }
}

void Adam::step() {
  ++steps;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (auto& [name, p] : params_) {
    auto value = p.mutable_value();
    const auto grad = p.grad();
    if (grad.size() != value.size()) continue;  // never reached by the loss
    auto& mm = m.at(name);
    auto& vv = v.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      mm[i] = beta1 * mm[i] + (1 - beta1) * grad[i];
      vv[i] = beta2 * vv[i] + (1 - beta2) * grad[i] * grad[i];
      value[i] -= lr * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + eps);
    }
  }
}

json model_config_to_json(const ModelConfig& cfg) {
  const auto& c = cfg.conditional;
  const auto& d = cfg.detector;
  return {{"encoder",
           {{"n_mels", c.encoder.n_mels},
            {"channels", c.encoder.channels},
            {"convs_per_block", c.encoder.convs_per_block},
            {"time_pool_blocks", c.encoder.time_pool_blocks}}},
          {"embedding_dim", c.embedding_dim},
          {"attention_dim", c.attention_dim},
          {"attention_pooling", c.attention_pooling},
          {"top_k", c.top_k},
          {"tau", c.tau},
          {"warmup_epochs", c.warmup_epochs},
          {"detector",
           {{"n_mels", d.n_mels},
            {"kernels", d.kernels},
            {"scale_channels", d.scale_channels},
            {"block_channels", d.block_channels},
            {"time_pool_blocks", d.time_pool_blocks},
            {"gru_hidden", d.gru_hidden},
            {"classifier_hidden", d.classifier_hidden}}}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  auto& c = cfg.conditional;
  auto& d = cfg.detector;
  const auto& e = j.at("encoder");
  c.encoder.n_mels = e.at("n_mels");
  c.encoder.channels = e.at("channels").get<std::vector<std::size_t>>();
  c.encoder.convs_per_block = e.at("convs_per_block");
  c.encoder.time_pool_blocks = e.at("time_pool_blocks");
  c.embedding_dim = j.at("embedding_dim");
  c.attention_dim = j.at("attention_dim");
  c.attention_pooling = j.at("attention_pooling");
  c.top_k = j.at("top_k");
  c.tau = j.at("tau");
  c.warmup_epochs = j.at("warmup_epochs");
  const auto& dj = j.at("detector");
  d.n_mels = dj.at("n_mels");
  d.kernels = dj.at("kernels").get<std::vector<std::size_t>>();
  d.scale_channels = dj.at("scale_channels");
  d.block_channels = dj.at("block_channels").get<std::vector<std::size_t>>();
  d.time_pool_blocks = dj.at("time_pool_blocks");
  d.gru_hidden = dj.at("gru_hidden");
  d.classifier_hidden = dj.at("classifier_hidden");
  return cfg;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return out.str();
}

void save_checkpoint(const std::filesystem::path& path, const RadurModel& model, const Adam* optimizer,
                     const CheckpointMeta& meta) {
  json tensors = json::array();
  std::vector<std::span<const double>> blobs;
  for (const auto& [name, p] : model.store.parameters()) {
    tensors.push_back({{"name", name}, {"kind", "parameter"}, {"shape", p.shape()}});
    blobs.push_back(p.value());
  }
  for (const auto& [name, b] : model.store.buffers()) {
    tensors.push_back({{"name", name}, {"kind", "buffer"}, {"shape", {b.size()}}});
    blobs.push_back(b);
  }
  if (optimizer) {
    for (const auto& [name, mm] : optimizer->m) {
      tensors.push_back({{"name", name}, {"kind", "adam_m"}, {"shape", {mm.size()}}});
      blobs.push_back(mm);
    }
    for (const auto& [name, vv] : optimizer->v) {
      tensors.push_back({{"name", name}, {"kind", "adam_v"}, {"shape", {vv.size()}}});
      blobs.push_back(vv);
    }
  }
  const json model_json = model_config_to_json(model.config);
  json header = {{"model", model_json},
                 {"mel", mel_to_json(model.mel)},
                 {"seed", model.seed},
                 {"init_scheme", kInitScheme},
                 {"epoch", meta.epoch},
                 {"ee_trained", meta.ee_trained},
                 {"run_config", meta.run_config},
                 {"duration_stats", meta.duration_stats},
                 {"config_hash", sha256_hex(model_json.dump() + meta.run_config.dump())},
                 {"tensors", tensors}};
  if (optimizer) {
    header["optimizer"] = {{"lr", optimizer->lr},
                           {"beta1", optimizer->beta1},
                           {"beta2", optimizer->beta2},
                           {"eps", optimizer->eps},
                           {"steps", optimizer->steps}};
  }
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint32_t version = kVersion;
    const std::uint64_t header_len = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : blobs) write_blob(out, b);
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw CheckpointError(path.string() + " is not a checkpoint");
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw CheckpointError("checkpoint header truncated");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  LoadedCheckpoint out;
  out.model = std::make_unique<RadurModel>(model_config_from_json(header.at("model")), header.at("seed").get<std::uint64_t>());
  out.model->mel = mel_from_json(header.at("mel"));
  out.meta.epoch = header.at("epoch");
  out.meta.ee_trained = header.at("ee_trained");
  out.meta.run_config = header.at("run_config");
  out.meta.duration_stats = header.at("duration_stats").get<DurationStats>();
  out.config_hash = header.at("config_hash");
  if (header.contains("optimizer")) {
    const auto& o = header["optimizer"];
    out.optimizer = std::make_unique<Adam>(out.model->store, o.at("lr"), o.at("beta1"), o.at("beta2"), o.at("eps"));
    out.optimizer->steps = o.at("steps");
  }
  auto& params = out.model->store;
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name");
    const std::string kind = t.at("kind");
    std::size_t size = 1;
    for (std::size_t d : t.at("shape").get<std::vector<std::size_t>>()) size *= d;
    std::span<double> dst;
    if (kind == "parameter") {
      dst = params.at(name).mutable_value();
    } else if (kind == "buffer") {
      auto it = params.buffers().find(name);
      if (it == params.buffers().end()) throw CheckpointError("unknown buffer '" + name + "'");
      dst = it->second;
    } else if ((kind == "adam_m" || kind == "adam_v") && out.optimizer) {
      auto& map = kind == "adam_m" ? out.optimizer->m : out.optimizer->v;
      auto it = map.find(name);
      if (it == map.end()) throw CheckpointError("unknown optimizer slot '" + name + "'");
      dst = it->second;
    } else {
      throw CheckpointError("unknown tensor kind '" + kind + "'");
    }
    if (dst.size() != size) throw CheckpointError("size mismatch for '" + name + "'");
    read_blob(in, dst, name);
  }
  return out;
}

}  // namespace radur
