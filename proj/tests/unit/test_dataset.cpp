// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "upgan/dataset.hpp"
#include "upgan/io.hpp"

using namespace upgan;

namespace {

PhantomParams small(int subjects, int slices = 3, int size = 16) {
  PhantomParams p;
  p.subjects = subjects;
  p.slices_per_subject = slices;
  p.size = size;
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_disjoint(const SubjectSplits& s, std::size_t total) {
  std::set<std::string> all;
  for (Split k : {Split::train, Split::val, Split::test}) {
    for (const auto& id : s.get(k)) CHECK(all.insert(id).second);
  }
  CHECK(all.size() == total);
}

}  // namespace

TEST_CASE("normalization round trip") {
  std::mt19937_64 rng(1);
  const Image raw = testing::random_image(rng, 8, 8, 3.0, 250.0);
  NormRange r;
  const Image n = normalize(raw, &r);
  CHECK(*std::min_element(n.pixels.begin(), n.pixels.end()) == doctest::Approx(-1.0));
  CHECK(*std::max_element(n.pixels.begin(), n.pixels.end()) == doctest::Approx(1.0));
  const Image back = denormalize(n, r);
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK(back.pixels[i] == doctest::Approx(raw.pixels[i]).epsilon(1e-12));

  const Image flat = normalize(Image(3, 3, 5.0), &r);
  for (double v : flat.pixels) CHECK(v == 0.0);
  CHECK(r.hi == r.lo + 2.0);
  CHECK(denormalize(flat, r).pixels == Image(3, 3, 5.0).pixels);
}

TEST_CASE("procedural pairs are reproducible and pixel aligned") {
  const Dataset a = procedural_pairs(small(10), 42);
  const Dataset b = procedural_pairs(small(10), 42);
  REQUIRE(a.samples.size() == 30);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].input_a.pixels == b.samples[i].input_a.pixels);
    CHECK(a.samples[i].target_b.pixels == b.samples[i].target_b.pixels);
    CHECK(a.samples[i].input_a.same_shape(a.samples[i].target_b));
  }
  CHECK(procedural_pairs(small(10), 43).samples[0].target_b.pixels != a.samples[0].target_b.pixels);

  // Without blur the relation is exactly A = 1 − B^γ, pixel by pixel.
  PhantomParams p = small(3, 2);
  p.blur_sigma = 0.0;
  const Dataset d = procedural_pairs(p, 5);
  for (const auto& s : d.samples) {
    const Image ra = denormalize(s.input_a, s.a_range), rb = denormalize(s.target_b, s.b_range);
    for (std::size_t i = 0; i < ra.size(); ++i) {
      CHECK(ra.pixels[i] == doctest::Approx(1.0 - std::pow(rb.pixels[i], p.gamma)).epsilon(1e-9));
    }
  }
  // Values stay in range after normalization.
  for (const auto& s : a.samples) {
    for (double v : s.input_a.pixels) CHECK(std::abs(v) <= 1.0 + 1e-12);
    for (double v : s.target_b.pixels) CHECK(std::abs(v) <= 1.0 + 1e-12);
  }
}

TEST_CASE("ten subjects split 6/2/2 by subject") {
  const Dataset d = procedural_pairs(small(10), 7);
  const auto& s = d.manifest.splits;
  CHECK(s.train.size() == 6);
  CHECK(s.val.size() == 2);
  CHECK(s.test.size() == 2);
  check_disjoint(s, 10);
  CHECK(d.manifest.supervision_level == 6);
  for (Split k : {Split::train, Split::val, Split::test}) {
    std::set<std::string> ids(s.get(k).begin(), s.get(k).end());
    for (const auto* sample : d.select(k)) CHECK(ids.count(sample->subject_id) == 1);
  }
}

TEST_CASE("splits are disjoint for every subject count and seed") {
  for (int n = 3; n < 40; ++n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("p" + std::to_string(i));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = split_subjects(ids, seed);
      check_disjoint(s, static_cast<std::size_t>(n));
      CHECK(!s.train.empty());
      CHECK(!s.val.empty());
      CHECK(!s.test.empty());
    }
  }
  CHECK_THROWS_AS(split_subjects({"a", "b"}, 0), DataError);
  CHECK_THROWS_AS(procedural_pairs(small(2), 0), DataError);
}

TEST_CASE("supervision subsets") {
  const Dataset d = procedural_pairs(small(16), 3);
  const auto& m = d.manifest;
  REQUIRE(m.splits.train.size() == 10);
  const auto full = subset_supervision(m, 10, 1);
  CHECK(full.splits.train == m.splits.train);
  const auto five = subset_supervision(m, 5, 1);
  CHECK(five.splits.train.size() == 5);
  CHECK(five.supervision_level == 5);
  CHECK(five.splits.val == m.splits.val);
  CHECK(five.splits.test == m.splits.test);
  for (const auto& id : five.splits.train) {
    CHECK(std::find(m.splits.train.begin(), m.splits.train.end(), id) != m.splits.train.end());
  }
  CHECK(subset_supervision(m, 5, 1).splits.train == five.splits.train);
  CHECK_THROWS_AS(subset_supervision(m, 11, 1), DataError);
  CHECK_THROWS_AS(subset_supervision(m, 0, 1), DataError);
  CHECK(subset_supervision(d, 3, 9).select(Split::train).size() == 3u * 3u);
}

TEST_CASE("save and load round trip; manifests are byte identical across runs") {
  testing::ScratchDir dir("dataset");
  const Dataset d = procedural_pairs(small(5, 2, 16), 11);
  save_dataset(dir.path() / "a", d);
  save_dataset(dir.path() / "b", procedural_pairs(small(5, 2, 16), 11));
  CHECK(slurp(dir.path() / "a" / "manifest.json") == slurp(dir.path() / "b" / "manifest.json"));

  const Dataset back = load_dataset(dir.path() / "a" / "manifest.json");
  CHECK(back.manifest.task == "procedural");
  CHECK(back.manifest.splits.train == d.manifest.splits.train);
  CHECK(back.manifest.seed == 11);
  REQUIRE(back.samples.size() == d.samples.size());
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    CHECK(back.samples[i].subject_id == d.samples[i].subject_id);
    CHECK(back.samples[i].slice_index == d.samples[i].slice_index);
    CHECK(back.samples[i].b_range.hi == d.samples[i].b_range.hi);
    for (std::size_t k = 0; k < d.samples[i].target_b.size(); ++k) {
      CHECK(back.samples[i].target_b.pixels[k] == static_cast<float>(d.samples[i].target_b.pixels[k]));
    }
  }
}

TEST_CASE("broken manifests are data errors") {
  testing::ScratchDir dir("badmanifest");
  CHECK_THROWS_AS(load_dataset(dir.path() / "missing.json"), DataError);
  std::ofstream(dir.path() / "m.json") << "{\"schema\": \"something-else\"}";
  CHECK_THROWS_AS(load_dataset(dir.path() / "m.json"), DataError);
  std::ofstream(dir.path() / "n.json") << "not json";
  CHECK_THROWS_AS(load_dataset(dir.path() / "n.json"), DataError);

  save_dataset(dir.path() / "ok", procedural_pairs(small(3, 1, 16), 1));
  std::filesystem::remove(dir.path() / "ok" / "subject_s000.upg");
  CHECK_THROWS(load_dataset(dir.path() / "ok" / "manifest.json"));
}

TEST_CASE("ingest a directory of clean slices") {
  testing::ScratchDir dir("ingest");
  const auto clean = dir.path() / "clean";
  std::filesystem::create_directories(clean);
  std::mt19937_64 rng(5);
  for (const char* subj : {"alice", "bob", "carol", "dave"}) {
    for (int k = 0; k < 2; ++k) {
      const Image img = testing::random_image(rng, 40, 36, 0.0, 1.0);
      io::write_pgm(clean / (std::string(subj) + "_" + std::to_string(k) + ".pgm"), img, 0.0, 1.0);
    }
  }
  IngestOptions opts;
  opts.size = 16;
  opts.downsample = 2;
  DegradationSpec spec;
  spec.keep_fraction = 0.25;
  const Dataset d = ingest_degraded(clean, spec, opts, 3);
  CHECK(d.samples.size() == 8);
  CHECK(d.manifest.height == 16);
  CHECK(d.manifest.intensity_range == 255.0);
  CHECK(d.manifest.task == "undersample");
  std::set<std::string> subjects;
  for (const auto& s : d.samples) subjects.insert(s.subject_id);
  CHECK(subjects == std::set<std::string>{"alice", "bob", "carol", "dave"});
  CHECK(d.samples[1].slice_index == 1);

  spec.kind = DegradationSpec::Kind::motion;
  const Dataset m = ingest_degraded(clean, spec, opts, 3);
  CHECK(m.manifest.task == "motion");
  CHECK(m.samples[0].input_a.pixels != d.samples[0].input_a.pixels);

  // Same names in two directories form pairs.
  const Dataset p = ingest_paired(clean, clean, opts, 1);
  CHECK(p.samples.size() == 8);
  for (const auto& s : p.samples) CHECK(s.input_a.pixels == s.target_b.pixels);

  opts.size = 64;
  CHECK_THROWS_AS(ingest_degraded(clean, spec, opts, 3), DataError);
  CHECK_THROWS_AS(ingest_degraded(dir.path() / "nope", spec, IngestOptions{}, 3), DataError);
}
