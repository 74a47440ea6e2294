#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fusim/datagen.hpp"

using namespace fusim;

namespace {

GenConfig small_config() {
  GenConfig c;
  c.n_frames = 1000;
  c.modalities = {{"rgb", 8, 3072}, {"depth", 8, 1024}};
  c.seed = 3;
  return c;
}

std::string dump(const Dataset& ds) {
  auto p = std::filesystem::temp_directory_path() / "fusim_ds_dump.txt";
  save_dataset(ds, p);
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  std::filesystem::remove(p);
  return ss.str();
}

}  // namespace

TEST_CASE("config validation rejects bad values") {
  GenConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.foi_prevalence = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.train_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.modalities[0].feature_width = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.corruption_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.n_labels = 0;
  CHECK_THROWS_AS(generate(c), ConfigError);
}

TEST_CASE("train/test split respects train_fraction") {
  Dataset ds = generate(small_config());
  CHECK(ds.train.size() == 800);
  CHECK(ds.test.size() == 200);
  // Splits disjoint by frame_id.
  for (const auto& f : ds.train) CHECK(f.frame_id < 800);
  for (const auto& f : ds.test) CHECK(f.frame_id >= 800);
}

TEST_CASE("foi bit is set iff a label bit is set, widths match config") {
  GenConfig c = small_config();
  c.corruption_rate = 0.1;
  Dataset ds = generate(c);
  auto check_frames = [&](const std::vector<Frame>& frames) {
    for (const Frame& f : frames) {
      bool any = false;
      for (auto b : f.labels) any = any || b;
      CHECK(int(f.foi) == int(any));
      REQUIRE(f.features.size() == 2);
      CHECK(f.features[0].size() == 8);
      CHECK(f.features[1].size() == 8);
      CHECK(f.labels.size() == 6);
    }
  };
  check_frames(ds.train);
  check_frames(ds.test);
}

TEST_CASE("redundancy=1 with no corruption embeds signal in every modality") {
  GenConfig c = small_config();
  c.redundancy = 1.0;
  c.corruption_rate = 0.0;
  Dataset ds = generate(c);
  int foi_count = 0;
  for (const Frame& f : ds.train) {
    if (!f.foi) continue;
    ++foi_count;
    CHECK(f.signal_in == std::vector<std::uint8_t>{1, 1});
  }
  CHECK(foi_count > 0);
}

TEST_CASE("redundancy=0 embeds signal in exactly one modality") {
  GenConfig c = small_config();
  c.redundancy = 0.0;
  c.corruption_rate = 0.0;
  Dataset ds = generate(c);
  for (const Frame& f : ds.train) {
    int bearing = int(f.signal_in[0]) + int(f.signal_in[1]);
    CHECK(bearing == (f.foi ? 1 : 0));
  }
}

TEST_CASE("corrupted modalities are flagged and lose their signal bit") {
  GenConfig c = small_config();
  c.corruption_rate = 0.5;
  c.redundancy = 1.0;
  Dataset ds = generate(c);
  int corrupted = 0;
  for (const Frame& f : ds.train)
    for (int m = 0; m < 2; ++m)
      if (f.corrupted[m]) {
        ++corrupted;
        CHECK(f.signal_in[m] == 0);
      }
  CHECK(corrupted > 300);  // ~50% of 1600 modality slots
}

TEST_CASE("foi count at p=0.01 lands in the binomial 99% interval") {
  GenConfig c = small_config();
  c.n_frames = 10000;
  c.foi_prevalence = 0.01;
  auto frames = generate_frames(c);
  int count = 0;
  for (const Frame& f : frames) count += f.foi;
  // n=10000, p=0.01: mean 100, sigma 9.95, z(99%) = 2.576 -> [74.4, 125.6].
  CHECK(count >= 74);
  CHECK(count <= 126);
}

TEST_CASE("empirical_foi_rate basics") {
  GenConfig c = small_config();
  c.n_frames = 4;
  c.foi_prevalence = 0.999999;
  auto all_foi = generate_frames(c);
  CHECK(empirical_foi_rate(all_foi) == 1.0);
  c.foi_prevalence = 1e-9;
  auto none = generate_frames(c);
  CHECK(empirical_foi_rate(none) == 0.0);
  CHECK_THROWS_AS(empirical_foi_rate(std::span<const Frame>{}), UsageError);
}

TEST_CASE("empirical_foi_rate tracks p on a large stream") {
  GenConfig c = small_config();
  c.n_frames = 10000;
  c.foi_prevalence = 0.10;
  auto frames = generate_frames(c);
  double rate = empirical_foi_rate(frames);
  CHECK(rate > 0.08);
  CHECK(rate < 0.12);
}

TEST_CASE("equal config and seed give identical datasets") {
  GenConfig c = small_config();
  Dataset a = generate(c);
  Dataset b = generate(c);
  CHECK(dump(a) == dump(b));
  c.seed = 4;
  Dataset d = generate(c);
  CHECK(dump(a) != dump(d));
}

TEST_CASE("dataset export/import round-trip") {
  GenConfig c = small_config();
  c.n_frames = 120;
  Dataset ds = generate(c);
  auto p = std::filesystem::temp_directory_path() / "fusim_ds_roundtrip.txt";
  save_dataset(ds, p);
  Dataset back = load_dataset(p);
  CHECK(back.train.size() == ds.train.size());
  CHECK(back.test.size() == ds.test.size());
  CHECK(back.config.modalities[1].name == "depth");
  CHECK(back.config.modalities[0].bytes_per_frame == 3072);
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(back.train[i].frame_id == ds.train[i].frame_id);
    CHECK(back.train[i].labels == ds.train[i].labels);
    CHECK(back.train[i].foi == ds.train[i].foi);
    CHECK(back.train[i].corrupted == ds.train[i].corrupted);
    CHECK(back.train[i].features == ds.train[i].features);
  }
  // Re-export of the import is byte-identical.
  CHECK(dump(back) == dump(ds));
  std::filesystem::remove(p);
}

TEST_CASE("templates are deterministic per seed and sized per modality") {
  GenConfig c = small_config();
  auto t1 = make_templates(c);
  auto t2 = make_templates(c);
  CHECK(t1 == t2);
  REQUIRE(t1.size() == 2);
  REQUIRE(t1[0].size() == 6);
  CHECK(t1[0][0].size() == 8);
}
