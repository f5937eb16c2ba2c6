#include "radur/dataset_builder.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "radur/wav.hpp"

namespace radur {

using json = nlohmann::json;

namespace {

// Minimum silence between two events of one class in a mixture, in seconds.
constexpr double kSameClassGap = 0.25;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  // splitmix64 over the combined words.
  std::uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ull) ^ (b * 0xC2B2AE3D27D4EB4Full);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double energy(std::span<const double> x) {
  double e = 0;
  for (double v : x) e += v * v;
  return e;
}

void scale_to_rms(std::vector<double>& x, double rms) {
  const double cur = std::sqrt(energy(x) / static_cast<double>(std::max<std::size_t>(1, x.size())));
  if (cur > 0) {
    for (auto& v : x) v *= rms / cur;
  }
}

// Narrow-band texture around `centre`: three close partials plus a slow
// amplitude modulation whose rate differs per class.
AudioClip class_texture(double centre, double am_rate, double duration, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(std::llround(duration * kSampleRate));
  AudioClip clip;
  clip.samples.assign(n, 0.0);
  const double spread[] = {-0.015, 0.0, 0.015};
  for (double d : spread) {
    const double f = centre * (1.0 + d);
    const double phase = uniform(rng, 0.0, 2 * std::numbers::pi);
    const double w = 2 * std::numbers::pi * f / kSampleRate;
    for (std::size_t i = 0; i < n; ++i) clip.samples[i] += std::sin(w * static_cast<double>(i) + phase);
  }
  const double am_phase = uniform(rng, 0.0, 2 * std::numbers::pi);
  const auto fade = std::min<std::size_t>(n / 2, kSampleRate / 100);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    double env = 1.0 - 0.3 * (0.5 + 0.5 * std::sin(2 * std::numbers::pi * am_rate * t + am_phase));
    if (i < fade) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(fade));
    if (n - 1 - i < fade) {
      env *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(n - 1 - i) / static_cast<double>(fade));
    }
    clip.samples[i] *= env;
  }
  scale_to_rms(clip.samples, 0.1);
  return clip;
}

// Adds `event` into `dst` starting at `start` with the requested SNR against
// the current content of `background` over the same span.
void add_at_snr(std::vector<double>& dst, std::span<const double> background, std::span<const double> event,
                std::size_t start, double snr_db) {
  const double e_bg = energy(background.subspan(start, event.size()));
  const double e_ev = energy(event);
  double gain = 1.0;
  if (e_ev > 0 && e_bg > 0) gain = std::sqrt(e_bg * std::pow(10.0, snr_db / 10.0) / e_ev);
  for (std::size_t i = 0; i < event.size(); ++i) dst[start + i] += gain * event[i];
}

json event_to_json(const Event& e) { return {{"onset", e.onset}, {"offset", e.offset}, {"class", e.label}}; }

Event event_from_json(const json& j) {
  return {j.at("onset").get<double>(), j.at("offset").get<double>(), j.at("class").get<std::string>()};
}

json record_to_json(const ManifestRecord& r) {
  json events = json::array();
  for (const auto& e : r.events) events.push_back(event_to_json(e));
  return {{"sample_id", r.sample_id},       {"mixture_path", r.mixture_path}, {"reference_path", r.reference_path},
          {"target_class", r.target_class}, {"events", events},               {"is_negative", r.is_negative}};
}

ManifestRecord record_from_json(const json& j) {
  static const std::set<std::string> known{"sample_id", "mixture_path", "reference_path",
                                           "target_class", "events", "is_negative"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw std::runtime_error("manifest: unknown field '" + key + "'");
  }
  ManifestRecord r;
  r.sample_id = j.at("sample_id").get<std::string>();
  r.mixture_path = j.at("mixture_path").get<std::string>();
  r.reference_path = j.at("reference_path").get<std::string>();
  r.target_class = j.at("target_class").get<std::string>();
  for (const auto& e : j.at("events")) r.events.push_back(event_from_json(e));
  r.is_negative = j.at("is_negative").get<bool>();
  return r;
}

}  // namespace

void EventBank::validate() const {
  if (classes.size() < 2) throw InvalidSpec("event bank needs at least two classes");
  for (const auto& c : classes) {
    auto it = audio.find(c);
    if (it == audio.end() || it->second.events.empty() || it->second.references.empty()) {
      throw InvalidSpec("class '" + c + "' needs at least one event clip and one reference clip");
    }
  }
}

AudioClip synthesize_background(double duration, double rms, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, rms);
  AudioClip clip;
  clip.samples.resize(static_cast<std::size_t>(std::llround(duration * kSampleRate)));
  for (auto& s : clip.samples) s = noise(rng);
  return clip;
}

EventBank synthesize_event_bank(std::size_t n_classes, std::uint64_t seed, const BankConfig& cfg) {
  if (n_classes < 2) throw std::invalid_argument("synthetic bank needs at least two classes");
  if (cfg.duration_ranges.empty()) throw std::invalid_argument("no event duration ranges configured");
  for (const auto& [lo, hi] : cfg.duration_ranges) {
    if (!(lo > 0 && lo <= hi)) throw std::invalid_argument("invalid event duration range");
  }
  EventBank bank;
  const double mel_lo = hz_to_mel(cfg.lowest_hz), mel_hi = hz_to_mel(cfg.highest_hz);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::ostringstream name;
    name << "class" << std::setw(2) << std::setfill('0') << c;
    const ClassId label = name.str();
    bank.classes.push_back(label);
    const double centre =
        mel_to_hz(mel_lo + (static_cast<double>(c) + 0.5) / static_cast<double>(n_classes) * (mel_hi - mel_lo));
    const double am_rate = 2.0 + 1.5 * static_cast<double>(c % 5);
    const auto [dlo, dhi] = cfg.duration_ranges[c % cfg.duration_ranges.size()];
    std::mt19937_64 rng(mix_seed(seed, c + 1));
    auto& audio = bank.audio[label];
    for (std::size_t i = 0; i < cfg.events_per_class; ++i) {
      audio.events.push_back(class_texture(centre, am_rate, uniform(rng, dlo, dhi), rng));
    }
    for (std::size_t i = 0; i < cfg.references_per_class; ++i) {
      // Held-out instance in light noise, cropped to the reference length.
      AudioClip inst = class_texture(centre, am_rate, uniform(rng, dlo, dhi), rng);
      const auto ref_len = static_cast<std::size_t>(std::llround(cfg.reference_duration * kSampleRate));
      if (inst.samples.size() > ref_len) inst.samples.resize(ref_len);
      AudioClip ref = synthesize_background(cfg.reference_duration, 0.05, mix_seed(seed, c + 1, i + 1000));
      const std::vector<double> bg = ref.samples;
      const std::size_t start = uniform_index(rng, ref_len - inst.samples.size() + 1);
      add_at_snr(ref.samples, bg, inst.samples, start, cfg.reference_snr_db);
      audio.references.push_back(std::move(ref));
    }
  }
  return bank;
}

EventBank load_event_bank(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("event bank directory not found: " + dir.string());
  auto wavs_in = [](const fs::path& d) {
    std::vector<fs::path> files;
    if (fs::is_directory(d)) {
      for (const auto& e : fs::directory_iterator(d)) {
        if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    return files;
  };
  EventBank bank;
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && e.path().filename() != "_background") class_dirs.push_back(e.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  for (const auto& cd : class_dirs) {
    const ClassId label = cd.filename().string();
    auto& audio = bank.audio[label];
    for (const auto& f : wavs_in(cd / "events")) audio.events.push_back(load_audio(f));
    for (const auto& f : wavs_in(cd / "references")) audio.references.push_back(load_audio(f));
    bank.classes.push_back(label);
  }
  for (const auto& f : wavs_in(dir / "_background")) bank.backgrounds.push_back(load_audio(f));
  bank.validate();
  return bank;
}

Mixture build_mixture(const MixtureSpec& spec, const EventBank& bank, std::uint64_t seed) {
  if (!(spec.duration > 0)) throw InvalidSpec("mixture duration must be positive");
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * kSampleRate));
  std::vector<double> background;
  if (spec.background.samples.empty()) {
    background = synthesize_background(spec.duration, spec.background_rms, seed).samples;
  } else {
    if (spec.background.samples.size() < n) throw InvalidSpec("background shorter than the mixture");
    background.assign(spec.background.samples.begin(), spec.background.samples.begin() + static_cast<long>(n));
  }
  Mixture out;
  out.audio.samples = background;
  for (const auto& ev : spec.events) {
    auto it = bank.audio.find(ev.label);
    if (it == bank.audio.end()) throw InvalidSpec("unknown class '" + ev.label + "'");
    if (ev.source >= it->second.events.size()) throw InvalidSpec("event source index out of range");
    if (!std::isfinite(ev.onset) || !std::isfinite(ev.snr_db) || ev.onset < 0) {
      throw InvalidSpec("event onset and SNR must be finite, onset >= 0");
    }
    const auto& src = it->second.events[ev.source].samples;
    const auto start = static_cast<std::size_t>(std::llround(ev.onset * kSampleRate));
    if (start + src.size() > n) throw InvalidSpec("event of class '" + ev.label + "' runs past the clip end");
    add_at_snr(out.audio.samples, background, src, start, ev.snr_db);
    out.events.push_back({static_cast<double>(start) / kSampleRate,
                          static_cast<double>(start + src.size()) / kSampleRate, ev.label});
  }
  double peak = 0;
  for (double v : out.audio.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.99) {
    for (auto& v : out.audio.samples) v *= 0.99 / peak;
  }
  sort_by_onset(out.events);
  return out;
}

const std::vector<ManifestRecord>& DatasetManifest::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) throw std::out_of_range("manifest has no split '" + name + "'");
  return it->second;
}

DatasetManifest build_dataset(const EventBank& bank, const DatasetSizes& sizes, double negative_ratio,
                              std::uint64_t seed, const std::filesystem::path& out_dir, const DatasetConfig& cfg) {
  bank.validate();
  if (!(negative_ratio >= 0.0 && negative_ratio < 1.0)) throw std::invalid_argument("negative ratio must lie in [0, 1)");
  if (cfg.min_events < 1 || cfg.max_events < cfg.min_events) throw std::invalid_argument("invalid events-per-clip range");
  const std::size_t split_sizes[] = {sizes.train, sizes.val, sizes.test};

  // Partition every class's event instances across the splits.
  std::map<ClassId, std::array<std::pair<std::size_t, std::size_t>, 3>> partitions;
  for (const auto& c : bank.classes) {
    const std::size_t total = bank.audio.at(c).events.size();
    const std::size_t held = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(total))));
    const std::size_t val = sizes.val ? held : 0, test = sizes.test ? held : 0;
    if (total < val + test + (sizes.train ? 1 : 0)) {
      throw CapacityError("class '" + c + "' has " + std::to_string(total) + " event clips, too few to split");
    }
    const std::size_t train = total - val - test;
    partitions[c] = {std::pair{std::size_t{0}, train}, std::pair{train, train + val},
                     std::pair{train + val, total}};
    for (const auto& clip : bank.audio.at(c).events) {
      if (clip.duration() > cfg.clip_duration) throw CapacityError("event clip of class '" + c + "' longer than a mixture");
    }
  }

  DatasetManifest manifest;
  manifest.root = out_dir;
  std::filesystem::create_directories(out_dir);

  // References are written once per bank clip.
  for (const auto& c : bank.classes) {
    const auto& refs = bank.audio.at(c).references;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      std::ostringstream rel;
      rel << "references/" << c << "/" << std::setw(3) << std::setfill('0') << i << ".wav";
      write_wav(out_dir / rel.str(), refs[i]);
    }
  }

  const std::size_t n_classes = bank.classes.size();
  for (std::size_t s = 0; s < kSplits.size(); ++s) {
    const std::string& split = kSplits[s];
    const std::size_t m = split_sizes[s];
    auto& records = manifest.splits[split];
    std::mt19937_64 rng(mix_seed(seed, 0x5eed, s + 1));

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_neg = static_cast<std::size_t>(std::llround(negative_ratio * static_cast<double>(m)));
    std::vector<bool> negative(m, false);
    for (std::size_t i = 0; i < n_neg; ++i) negative[order[i]] = true;
    const std::size_t class_offset = m ? uniform_index(rng, n_classes) : 0;

    for (std::size_t i = 0; i < m; ++i) {
      std::mt19937_64 rec_rng(mix_seed(seed, s + 1, i + 1));
      const ClassId target = bank.classes[(class_offset + i) % n_classes];
      std::vector<ClassId> others;
      for (const auto& c : bank.classes) {
        if (c != target) others.push_back(c);
      }
      const std::size_t n_events = cfg.min_events + uniform_index(rec_rng, cfg.max_events - cfg.min_events + 1);
      MixtureSpec spec;
      spec.duration = cfg.clip_duration;
      spec.background_rms = cfg.background_rms;
      if (!bank.backgrounds.empty()) {
        const auto& bg = bank.backgrounds[uniform_index(rec_rng, bank.backgrounds.size())];
        const auto need = static_cast<std::size_t>(std::llround(cfg.clip_duration * kSampleRate));
        spec.background.samples.resize(need);
        for (std::size_t k = 0; k < need; ++k) spec.background.samples[k] = bg.samples[k % bg.samples.size()];
      }
      for (std::size_t e = 0; e < n_events; ++e) {
        ClassId label;
        if (negative[i]) {
          label = others[uniform_index(rec_rng, others.size())];
        } else {
          label = e == 0 ? target : bank.classes[uniform_index(rec_rng, n_classes)];
        }
        const auto [lo, hi] = partitions.at(label)[s];
        const std::size_t source = lo + uniform_index(rec_rng, hi - lo);
        const double dur = bank.audio.at(label).events[source].duration();
        PlacedEvent pe;
        pe.label = label;
        pe.source = source;
        pe.snr_db = uniform(rec_rng, cfg.snr_low_db, cfg.snr_high_db);
        // Same-class instances stay apart so frame targets keep them distinct;
        // an event with no free slot is dropped.
        bool placed = false;
        for (int attempt = 0; attempt < 32 && !placed; ++attempt) {
          pe.onset = std::floor(uniform(rec_rng, 0.0, cfg.clip_duration - dur) * kSampleRate) / kSampleRate;
          placed = std::none_of(spec.events.begin(), spec.events.end(), [&](const PlacedEvent& other) {
            if (other.label != label) return false;
            const double other_dur = bank.audio.at(label).events[other.source].duration();
            return pe.onset < other.onset + other_dur + kSameClassGap && other.onset < pe.onset + dur + kSameClassGap;
          });
        }
        if (placed) spec.events.push_back(pe);
      }
      const Mixture mix = build_mixture(spec, bank, mix_seed(seed, s + 1, i + 1) ^ 0xb6);

      ManifestRecord rec;
      std::ostringstream id;
      id << split << "_" << std::setw(5) << std::setfill('0') << i;
      rec.sample_id = id.str();
      rec.mixture_path = "audio/" + split + "/" + rec.sample_id + ".wav";
      const std::size_t ref_index = uniform_index(rec_rng, bank.audio.at(target).references.size());
      std::ostringstream ref;
      ref << "references/" << target << "/" << std::setw(3) << std::setfill('0') << ref_index << ".wav";
      rec.reference_path = ref.str();
      rec.target_class = target;
      rec.events = mix.events;
      rec.is_negative = negative[i];
      write_wav(out_dir / rec.mixture_path, mix.audio);
      records.push_back(std::move(rec));
    }
  }
  write_manifest(manifest);
  if (!manifest.split("train").empty()) {
    write_duration_stats(out_dir / "duration_stats.json", compute_duration_stats(manifest));
  }
  return manifest;
}

DurationStats compute_duration_stats(const DatasetManifest& manifest) {
  std::map<ClassId, std::pair<double, std::size_t>> acc;
  std::set<ClassId> targets;
  for (const auto& rec : manifest.split("train")) {
    targets.insert(rec.target_class);
    for (const auto& e : rec.events) {
      auto& [sum, count] = acc[e.label];
      sum += e.duration();
      ++count;
    }
  }
  for (const auto& t : targets) {
    if (!acc.contains(t)) throw MissingStats("class '" + t + "' has no events in the training split");
  }
  DurationStats stats;
  for (const auto& [label, sc] : acc) {
    stats[label] = std::clamp(sc.first / static_cast<double>(sc.second), 0.0, 10.0);
  }
  return stats;
}

void write_manifest(const DatasetManifest& manifest) {
  for (const auto& [split, records] : manifest.splits) {
    std::ofstream out(manifest.root / (split + ".jsonl"));
    if (!out) throw std::runtime_error("cannot write manifest in " + manifest.root.string());
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
  }
}

DatasetManifest read_manifest(const std::filesystem::path& root) {
  DatasetManifest manifest;
  manifest.root = root;
  bool any = false;
  for (const auto& split : kSplits) {
    const auto path = root / (split + ".jsonl");
    if (!std::filesystem::exists(path)) continue;
    any = true;
    std::ifstream in(path);
    std::string line;
    auto& records = manifest.splits[split];
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      records.push_back(record_from_json(json::parse(line)));
    }
  }
  if (!any) throw std::runtime_error("no manifest files found in " + root.string());
  return manifest;
}

void write_duration_stats(const std::filesystem::path& path, const DurationStats& stats) {
  json j = json::object();
  for (const auto& [label, w] : stats) j[label] = w;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

DurationStats read_duration_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const json j = json::parse(in);
  DurationStats stats;
  for (const auto& [label, w] : j.items()) stats[label] = w.get<double>();
  return stats;
}

}  // namespace radur
