#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "radur/commands.hpp"
#include "radur/dataset_builder.hpp"
#include "radur/features.hpp"

using namespace radur;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("radur_test_dataset_" + name);
  fs::remove_all(p);
  return p;
}

double energy(const std::vector<double>& x, std::size_t from, std::size_t to) {
  double e = 0;
  for (std::size_t i = from; i < to; ++i) e += x[i] * x[i];
  return e;
}

std::set<ClassId> classes_in(const EventList& events) {
  std::set<ClassId> out;
  for (const auto& e : events) out.insert(e.label);
  return out;
}

}  // namespace

TEST(EventBank, SameSeedGivesIdenticalBanks) {
  const auto a = synthesize_event_bank(4, 7), b = synthesize_event_bank(4, 7);
  ASSERT_EQ(a.classes, b.classes);
  for (const auto& c : a.classes) {
    ASSERT_EQ(a.audio.at(c).events.size(), b.audio.at(c).events.size());
    for (std::size_t i = 0; i < a.audio.at(c).events.size(); ++i) {
      EXPECT_EQ(a.audio.at(c).events[i].samples, b.audio.at(c).events[i].samples);
    }
    EXPECT_EQ(a.audio.at(c).references[0].samples, b.audio.at(c).references[0].samples);
  }
  EXPECT_NE(synthesize_event_bank(4, 8).audio.at(a.classes[0]).events[0].samples,
            a.audio.at(a.classes[0]).events[0].samples);
}

TEST(EventBank, ClassSpectraAreDistinct) {
  const auto bank = synthesize_event_bank(4, 1);
  std::vector<std::vector<double>> profiles;
  for (const auto& c : bank.classes) {
    const auto mel = extract_logmel(bank.audio.at(c).events[0]);
    std::vector<double> mean(mel.n_mels, 0.0);
    for (std::size_t t = 0; t < mel.frames; ++t) {
      for (std::size_t f = 0; f < mel.n_mels; ++f) mean[f] += std::exp(mel.at(t, f)) / mel.frames;
    }
    profiles.push_back(mean);
  }
  const auto pearson = [](const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += (a[i] - ma) * (b[i] - mb);
      aa += (a[i] - ma) * (a[i] - ma);
      bb += (b[i] - mb) * (b[i] - mb);
    }
    return ab / std::sqrt(aa * bb);
  };
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    for (std::size_t j = i + 1; j < profiles.size(); ++j) {
      EXPECT_LT(pearson(profiles[i], profiles[j]), 0.5) << i << " vs " << j;
    }
  }
}

TEST(EventBank, DurationsStayInConfiguredRange) {
  BankConfig cfg;
  cfg.duration_ranges = {{0.3, 0.9}};
  const auto bank = synthesize_event_bank(3, 2, cfg);
  for (const auto& c : bank.classes) {
    for (const auto& clip : bank.audio.at(c).events) {
      EXPECT_GE(clip.duration(), 0.3 - 1.0 / kSampleRate);
      EXPECT_LE(clip.duration(), 0.9 + 1.0 / kSampleRate);
    }
  }
  EXPECT_THROW(synthesize_event_bank(1, 0), std::invalid_argument);
}

TEST(Mixture, EmptyEventListIsBackground) {
  const auto bank = synthesize_event_bank(2, 3);
  MixtureSpec spec;
  spec.background = synthesize_background(10.0, 0.05, 9);
  const auto mix = build_mixture(spec, bank, 4);
  EXPECT_EQ(mix.audio.samples, spec.background.samples);
  EXPECT_TRUE(mix.events.empty());
}

TEST(Mixture, EventBookkeeping) {
  BankConfig cfg;
  cfg.duration_ranges = {{1.0, 1.0}};
  const auto bank = synthesize_event_bank(2, 3, cfg);
  MixtureSpec spec;
  spec.events = {{bank.classes[1], 2.0, 0, 0.0}};
  const auto mix = build_mixture(spec, bank, 5);
  ASSERT_EQ(mix.events.size(), 1u);
  EXPECT_EQ(mix.events[0].label, bank.classes[1]);
  EXPECT_NEAR(mix.events[0].onset, 2.0, 1e-12);
  EXPECT_NEAR(mix.events[0].offset, 3.0, 1e-12);
  EXPECT_EQ(mix.audio.samples.size(), static_cast<std::size_t>(10 * kSampleRate));

  spec.events = {{bank.classes[0], 9.5, 0, 0.0}};
  EXPECT_THROW(build_mixture(spec, bank, 5), InvalidSpec);
  spec.events = {{"nope", 1.0, 0, 0.0}};
  EXPECT_THROW(build_mixture(spec, bank, 5), InvalidSpec);
}

TEST(Mixture, SnrMatchesEnergyRatio) {
  const auto bank = synthesize_event_bank(2, 6);
  MixtureSpec spec;
  spec.background = synthesize_background(10.0, 0.01, 11);
  for (double snr : {20.0, 0.0, -5.0}) {
    spec.events = {{bank.classes[0], 3.0, 0, snr}};
    const auto mix = build_mixture(spec, bank, 5);
    const std::size_t from = 3 * kSampleRate;
    const std::size_t to = from + bank.audio.at(bank.classes[0]).events[0].samples.size();
    std::vector<double> event(mix.audio.samples.size());
    for (std::size_t i = 0; i < event.size(); ++i) event[i] = mix.audio.samples[i] - spec.background.samples[i];
    const double measured = 10 * std::log10(energy(event, from, to) / energy(spec.background.samples, from, to));
    EXPECT_NEAR(measured, snr, 1.0);
  }
}

TEST(Dataset, ManifestInvariants) {
  const auto bank = synthesize_event_bank(4, 21);
  const fs::path out = scratch("full");
  const auto manifest = build_dataset(bank, {200, 50, 50}, 0.2, 5, out);
  std::set<std::string> ids, paths;
  std::map<std::string, std::size_t> expected{{"train", 200}, {"val", 50}, {"test", 50}};
  for (const auto& split : kSplits) {
    const auto& records = manifest.split(split);
    ASSERT_EQ(records.size(), expected[split]);
    std::size_t negatives = 0;
    std::set<ClassId> targets;
    for (const auto& r : records) {
      ids.insert(r.sample_id);
      EXPECT_TRUE(paths.insert(r.mixture_path).second);
      EXPECT_TRUE(fs::exists(out / r.mixture_path));
      EXPECT_TRUE(fs::exists(out / r.reference_path));
      const auto present = classes_in(r.events);
      EXPECT_EQ(present.contains(r.target_class), !r.is_negative) << r.sample_id;
      for (const auto& e : r.events) {
        EXPECT_GE(e.onset, 0.0);
        EXPECT_LT(e.onset, e.offset);
        EXPECT_LE(e.offset, 10.0 + 1e-9);
      }
      for (std::size_t a = 0; a < r.events.size(); ++a) {
        for (std::size_t b = a + 1; b < r.events.size(); ++b) {
          if (r.events[a].label != r.events[b].label) continue;
          const bool apart = r.events[b].onset >= r.events[a].offset + 0.25 - 1e-9 ||
                             r.events[a].onset >= r.events[b].offset + 0.25 - 1e-9;
          EXPECT_TRUE(apart) << r.sample_id;
        }
      }
      negatives += r.is_negative;
      if (!r.is_negative) targets.insert(r.target_class);
    }
    const double want = 0.2 * records.size();
    EXPECT_NEAR(static_cast<double>(negatives), want, 1.0) << split;
    EXPECT_EQ(targets.size(), 4u) << split;
  }
  EXPECT_EQ(ids.size(), 300u);

  const auto reread = read_manifest(out);
  EXPECT_EQ(reread.split("test").size(), 50u);
  EXPECT_EQ(reread.split("train")[3].events, manifest.split("train")[3].events);
  EXPECT_EQ(read_duration_stats(out / "duration_stats.json"), compute_duration_stats(manifest));
  fs::remove_all(out);
}

TEST(Dataset, NoNegativesAtZeroRatio) {
  const auto bank = synthesize_event_bank(2, 4);
  const fs::path out = scratch("zero");
  const auto manifest = build_dataset(bank, {10, 4, 4}, 0.0, 5, out);
  for (const auto& split : kSplits) {
    for (const auto& r : manifest.split(split)) EXPECT_FALSE(r.is_negative);
  }
  EXPECT_THROW(build_dataset(bank, {10, 4, 4}, 1.0, 5, out), std::invalid_argument);
  fs::remove_all(out);
}

TEST(Dataset, SameSeedSameManifestHash) {
  const auto bank = synthesize_event_bank(2, 4);
  const fs::path a = scratch("hash_a"), b = scratch("hash_b"), c = scratch("hash_c");
  build_dataset(bank, {8, 4, 4}, 0.25, 9, a);
  build_dataset(bank, {8, 4, 4}, 0.25, 9, b);
  build_dataset(bank, {8, 4, 4}, 0.25, 10, c);
  EXPECT_EQ(cli::manifest_hash(a), cli::manifest_hash(b));
  EXPECT_NE(cli::manifest_hash(a), cli::manifest_hash(c));
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST(Dataset, TooSmallBankIsCapacityError) {
  BankConfig cfg;
  cfg.events_per_class = 2;
  const auto bank = synthesize_event_bank(2, 4, cfg);
  const fs::path out = scratch("small");
  EXPECT_THROW(build_dataset(bank, {8, 4, 4}, 0.2, 1, out), CapacityError);
  fs::remove_all(out);
}

TEST(DurationStats, MeansOverTrainingEvents) {
  DatasetManifest m;
  ManifestRecord r;
  r.target_class = "a";
  r.events = {{1.0, 2.0, "a"}, {4.0, 7.0, "a"}, {0.0, 10.0, "b"}};
  m.splits["train"] = {r};
  ManifestRecord v = r;
  v.events = {{0.0, 9.0, "a"}};
  m.splits["val"] = {v};
  const auto stats = compute_duration_stats(m);
  EXPECT_NEAR(stats.at("a"), 2.0, 1e-12);
  EXPECT_NEAR(stats.at("b"), 10.0, 1e-12);

  ManifestRecord lonely;
  lonely.target_class = "c";
  lonely.is_negative = true;
  m.splits["train"].push_back(lonely);
  EXPECT_THROW(compute_duration_stats(m), MissingStats);
}
