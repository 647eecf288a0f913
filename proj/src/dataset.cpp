// SPDX-License-Identifier: Apache-2.0
#include "upgan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <numbers>
#include <random>
#include <set>

#include "json.hpp"
#include "upgan/io.hpp"

namespace upgan {

namespace {

using json = nlohmann::ordered_json;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;
  auto mirror = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  Image tmp(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * img(y, mirror(x + i, img.width));
      tmp(y, x) = acc;
    }
  }
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp(mirror(y + i, img.height), x);
      out(y, x) = acc;
    }
  }
  return out;
}

struct Ellipsoid {
  double cx, cy, cz;  // cz in slice-parameter units [0, 1]
  double rx, ry, rz;
  double angle;
  double intensity;
};

struct Phantom {
  Ellipsoid head;
  std::vector<Ellipsoid> inner;
  double tex_fx, tex_fy, tex_phase, tex_amp;
};

Phantom make_phantom(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  Phantom p;
  p.head = {range(0.45, 0.55), range(0.45, 0.55), 0.5, range(0.34, 0.44), range(0.38, 0.46), 0.75,
            range(-0.3, 0.3), range(0.25, 0.45)};
  const int count = 3 + static_cast<int>(u(rng) * 4.0);
  for (int i = 0; i < count; ++i) {
    const double r = range(0.0, 0.22);
    const double t = range(0.0, 2.0 * std::numbers::pi);
    p.inner.push_back({p.head.cx + r * std::cos(t), p.head.cy + r * std::sin(t), range(0.15, 0.85),
                       range(0.04, 0.16), range(0.04, 0.16), range(0.25, 0.6), range(0.0, std::numbers::pi),
                       range(0.0, 1.0)});
  }
  p.tex_fx = range(2.0, 6.0);
  p.tex_fy = range(2.0, 6.0);
  p.tex_phase = range(0.0, 2.0 * std::numbers::pi);
  p.tex_amp = range(0.03, 0.08);
  return p;
}

// Cross-section of an ellipsoid at height z: returns true and the in-plane
// scale when the plane cuts it.
bool cross_section(const Ellipsoid& e, double z, double* scale) {
  const double dz = (z - e.cz) / e.rz;
  if (dz * dz >= 1.0) return false;
  *scale = std::sqrt(1.0 - dz * dz);
  return true;
}

bool inside(const Ellipsoid& e, double scale, double x, double y) {
  const double c = std::cos(e.angle);
  const double s = std::sin(e.angle);
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double u = (c * dx + s * dy) / (e.rx * scale);
  const double v = (-s * dx + c * dy) / (e.ry * scale);
  return u * u + v * v <= 1.0;
}

Image render_slice(const Phantom& p, double z, int size) {
  Image img(size, size);
  double head_scale = 0.0;
  const bool head_cut = cross_section(p.head, z, &head_scale);
  for (int yi = 0; yi < size; ++yi) {
    for (int xi = 0; xi < size; ++xi) {
      const double x = (xi + 0.5) / size;
      const double y = (yi + 0.5) / size;
      if (!head_cut || !inside(p.head, head_scale, x, y)) continue;
      double v = p.head.intensity +
                 p.tex_amp * std::sin(2.0 * std::numbers::pi * (p.tex_fx * x + p.tex_fy * y) + p.tex_phase);
      for (const auto& e : p.inner) {
        double scale = 0.0;
        if (cross_section(e, z, &scale) && inside(e, scale, x, y)) v = e.intensity;
      }
      img(yi, xi) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

std::string subject_of(const std::filesystem::path& file) {
  const std::string stem = file.stem().string();
  const auto cut = stem.find_last_of('_');
  return cut == std::string::npos || cut == 0 ? stem : stem.substr(0, cut);
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm" || ext == ".upg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .pgm/.upg images in " + dir.string());
  return files;
}

Image prepare(const Image& raw, const IngestOptions& opts, const std::filesystem::path& file) {
  Image img = raw;
  if (opts.downsample > 1) {
    const int f = opts.downsample;
    Image small(raw.height / f, raw.width / f);
    for (int y = 0; y < small.height; ++y) {
      for (int x = 0; x < small.width; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < f; ++dy) {
          for (int dx = 0; dx < f; ++dx) acc += raw(y * f + dy, x * f + dx);
        }
        small(y, x) = acc / (f * f);
      }
    }
    img = std::move(small);
  }
  if (img.height < opts.size || img.width < opts.size) {
    throw DataError(file.string() + ": image smaller than requested size " + std::to_string(opts.size));
  }
  const int oy = (img.height - opts.size) / 2;
  const int ox = (img.width - opts.size) / 2;
  Image out(opts.size, opts.size);
  for (int y = 0; y < opts.size; ++y) {
    for (int x = 0; x < opts.size; ++x) out(y, x) = img(y + oy, x + ox);
  }
  return out;
}

double declared_range(const IngestOptions& opts, const std::filesystem::path& first) {
  if (opts.intensity_range > 0.0) return opts.intensity_range;
  if (first.extension() == ".pgm") {
    int maxval = 0;
    io::read_pgm(first, &maxval);
    return maxval;
  }
  return 1.0;
}

PairedSample make_sample(const Image& a_raw, const Image& b_raw, std::string subject, int slice) {
  PairedSample s;
  s.input_a = normalize(a_raw, &s.a_range);
  s.target_b = normalize(b_raw, &s.b_range);
  s.subject_id = std::move(subject);
  s.slice_index = slice;
  return s;
}

Dataset assemble(std::string task, std::vector<PairedSample> samples, double intensity_range, std::uint64_t seed) {
  Dataset data;
  data.manifest.task = std::move(task);
  data.manifest.intensity_range = intensity_range;
  data.manifest.seed = seed;
  if (samples.empty()) throw DataError("dataset has no samples");
  data.manifest.height = samples.front().target_b.height;
  data.manifest.width = samples.front().target_b.width;
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (seen.insert(s.subject_id).second) data.manifest.subjects.push_back(s.subject_id);
    data.manifest.samples.push_back({s.subject_id, s.slice_index, s.a_range, s.b_range});
  }
  if (data.manifest.subjects.size() < 3) {
    throw DataError("need at least 3 subjects to form train/val/test splits, got " +
                    std::to_string(data.manifest.subjects.size()));
  }
  data.manifest.splits = split_subjects(data.manifest.subjects, seed);
  data.manifest.supervision_level = static_cast<int>(data.manifest.splits.train.size());
  data.samples = std::move(samples);
  return data;
}

json range_json(const NormRange& r) { return json::array({r.lo, r.hi}); }
NormRange range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

Image normalize(const Image& raw, NormRange* range_out) {
  if (raw.empty()) throw DataError("normalize: empty image");
  const auto [lo_it, hi_it] = std::minmax_element(raw.pixels.begin(), raw.pixels.end());
  NormRange r{*lo_it, *hi_it};
  if (!(r.hi > r.lo)) {
    r.lo -= 1.0;  // centred on the constant so 0 maps back to it
    r.hi = r.lo + 2.0;
  }
  Image out(raw.height, raw.width);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out.pixels[i] = *hi_it > *lo_it ? 2.0 * (raw.pixels[i] - r.lo) / (r.hi - r.lo) - 1.0 : 0.0;
  }
  if (range_out) *range_out = r;
  return out;
}

Image denormalize(const Image& normalized, const NormRange& range) {
  Image out(normalized.height, normalized.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.pixels[i] = (normalized.pixels[i] + 1.0) * 0.5 * (range.hi - range.lo) + range.lo;
  }
  return out;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

const std::vector<std::string>& SubjectSplits::get(Split s) const {
  switch (s) {
    case Split::train:
      return train;
    case Split::val:
      return val;
    case Split::test:
      return test;
  }
  throw std::logic_error("unknown split");
}

void DatasetManifest::validate() const {
  std::set<std::string> all(subjects.begin(), subjects.end());
  std::set<std::string> assigned;
  for (const auto* list : {&splits.train, &splits.val, &splits.test}) {
    for (const auto& id : *list) {
      if (!all.count(id)) throw DataError("manifest: split references unknown subject " + id);
      if (!assigned.insert(id).second) throw DataError("manifest: subject " + id + " appears in two splits");
    }
  }
  if (splits.train.empty() || splits.val.empty() || splits.test.empty()) {
    throw DataError("manifest: every split needs at least one subject");
  }
  if (supervision_level != static_cast<int>(splits.train.size())) {
    throw DataError("manifest: supervision_level does not match training subjects");
  }
  if (height <= 0 || width <= 0) throw DataError("manifest: bad image size");
  if (!(intensity_range > 0.0)) throw DataError("manifest: intensity_range must be > 0");
}

std::vector<const PairedSample*> Dataset::select(Split split) const {
  const auto& ids = manifest.splits.get(split);
  const std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<const PairedSample*> out;
  for (const auto& s : samples) {
    if (wanted.count(s.subject_id)) out.push_back(&s);
  }
  return out;
}

SubjectSplits split_subjects(const std::vector<std::string>& subjects, std::uint64_t seed) {
  const int n = static_cast<int>(subjects.size());
  if (n < 3) throw DataError("split_subjects: need at least 3 subjects, got " + std::to_string(n));
  const int n_val = std::max(1, static_cast<int>(std::lround(0.2 * n)));
  const int n_test = std::max(1, static_cast<int>(std::lround(0.2 * n)));
  const int n_train = n - n_val - n_test;
  if (n_train < 1) throw DataError("split_subjects: too few subjects for a training split");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 101));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> train(order.begin(), order.begin() + n_train);
  std::vector<int> val(order.begin() + n_train, order.begin() + n_train + n_val);
  std::vector<int> test(order.begin() + n_train + n_val, order.end());
  for (auto* v : {&train, &val, &test}) std::sort(v->begin(), v->end());

  SubjectSplits out;
  for (int i : train) out.train.push_back(subjects[i]);
  for (int i : val) out.val.push_back(subjects[i]);
  for (int i : test) out.test.push_back(subjects[i]);
  return out;
}

Dataset procedural_pairs(const PhantomParams& params, std::uint64_t seed) {
  if (params.subjects < 3) throw DataError("procedural_pairs: need at least 3 subjects");
  if (params.slices_per_subject < 1 || params.size < 8) throw DataError("procedural_pairs: bad dimensions");
  std::vector<PairedSample> samples;
  for (int s = 0; s < params.subjects; ++s) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(s)));
    const Phantom phantom = make_phantom(rng);
    char id[16];
    std::snprintf(id, sizeof id, "s%03d", s);
    for (int k = 0; k < params.slices_per_subject; ++k) {
      // Slices sample the central 70% of the head along z.
      const double z = params.slices_per_subject == 1
                           ? 0.5
                           : 0.15 + 0.7 * static_cast<double>(k) / (params.slices_per_subject - 1);
      const Image b = render_slice(phantom, z, params.size);
      Image a = gaussian_blur(b, params.blur_sigma);
      for (double& v : a.pixels) v = 1.0 - std::pow(std::clamp(v, 0.0, 1.0), params.gamma);
      samples.push_back(make_sample(a, b, id, k));
    }
  }
  return assemble("procedural", std::move(samples), 1.0, seed);
}

DatasetManifest subset_supervision(const DatasetManifest& manifest, int level, std::uint64_t seed) {
  const auto& pool = manifest.splits.train;
  if (level < 1 || level > static_cast<int>(pool.size())) {
    throw DataError("subset_supervision: level " + std::to_string(level) + " outside [1, " +
                    std::to_string(pool.size()) + "]");
  }
  DatasetManifest out = manifest;
  if (level == static_cast<int>(pool.size())) return out;
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 202));
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(level);
  std::sort(order.begin(), order.end());
  out.splits.train.clear();
  for (std::size_t i : order) out.splits.train.push_back(pool[i]);
  out.supervision_level = level;
  return out;
}

Dataset subset_supervision(const Dataset& data, int level, std::uint64_t seed) {
  Dataset out = data;
  out.manifest = subset_supervision(data.manifest, level, seed);
  return out;
}

Dataset ingest_degraded(const std::filesystem::path& clean_dir, const DegradationSpec& spec,
                        const IngestOptions& opts, std::uint64_t seed) {
  const auto files = list_images(clean_dir);
  const double range = declared_range(opts, files.front());
  std::map<std::string, int> slice_counter;
  std::vector<PairedSample> samples;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Image clean = prepare(io::read_grayscale(files[i]), opts, files[i]);
    Image degraded = spec.kind == DegradationSpec::Kind::undersample
                         ? degrade::undersample_kspace(clean, spec.keep_fraction, spec.mask)
                         : degrade::simulate_motion(clean, spec.motion, mix_seed(seed, 1000 + i));
    const std::string subject = subject_of(files[i]);
    samples.push_back(make_sample(degraded, clean, subject, slice_counter[subject]++));
  }
  return assemble(spec.kind == DegradationSpec::Kind::undersample ? "undersample" : "motion", std::move(samples),
                  range, seed);
}

Dataset ingest_paired(const std::filesystem::path& input_dir, const std::filesystem::path& target_dir,
                      const IngestOptions& opts, std::uint64_t seed) {
  const auto files = list_images(input_dir);
  const double range = declared_range(opts, target_dir / files.front().filename());
  std::map<std::string, int> slice_counter;
  std::vector<PairedSample> samples;
  for (const auto& f : files) {
    const auto partner = target_dir / f.filename();
    if (!std::filesystem::exists(partner)) throw DataError("no target for " + f.string() + " in " + target_dir.string());
    const Image a = prepare(io::read_grayscale(f), opts, f);
    const Image b = prepare(io::read_grayscale(partner), opts, partner);
    const std::string subject = subject_of(f);
    samples.push_back(make_sample(a, b, subject, slice_counter[subject]++));
  }
  return assemble("paired-dirs", std::move(samples), range, seed);
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  data.manifest.validate();
  std::filesystem::create_directories(dir);
  const auto& m = data.manifest;
  json subjects = json::array();
  std::map<std::string, std::string> split_of;
  for (Split s : {Split::train, Split::val, Split::test}) {
    for (const auto& id : m.splits.get(s)) split_of[id] = split_name(s);
  }
  for (const auto& id : m.subjects) {
    std::vector<const PairedSample*> rows;
    for (const auto& s : data.samples) {
      if (s.subject_id == id) rows.push_back(&s);
    }
    io::TensorFile t;
    t.dims = {static_cast<std::uint32_t>(rows.size()), 2u, static_cast<std::uint32_t>(m.height),
              static_cast<std::uint32_t>(m.width)};
    t.data.reserve(t.expected_size());
    for (const auto* r : rows) {
      for (const Image* img : {&r->input_a, &r->target_b}) {
        for (double v : img->pixels) t.data.push_back(static_cast<float>(v));
      }
    }
    const std::string file = "subject_" + id + ".upg";
    io::write_tensor(dir / file, t);
    subjects.push_back({{"id", id},
                        {"file", file},
                        {"split", split_of.count(id) ? split_of[id] : "unused"},
                        {"slices", rows.size()}});
  }
  json samples = json::array();
  for (const auto& s : m.samples) {
    samples.push_back({{"subject", s.subject}, {"slice", s.slice}, {"a_range", range_json(s.a_range)},
                       {"b_range", range_json(s.b_range)}});
  }
  json doc = {{"schema", "upgan.manifest"},
              {"schema_version", DatasetManifest::kSchemaVersion},
              {"task", m.task},
              {"height", m.height},
              {"width", m.width},
              {"intensity_range", m.intensity_range},
              {"seed", m.seed},
              {"config_hash", m.config_hash},
              {"supervision_level", m.supervision_level},
              {"splits", {{"train", m.splits.train}, {"val", m.splits.val}, {"test", m.splits.test}}},
              {"subjects", subjects},
              {"samples", samples}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw DataError("cannot write manifest in " + dir.string());
  out << doc.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("manifest " + manifest_path.string() + ": " + e.what());
  }
  try {
    if (doc.at("schema").get<std::string>() != "upgan.manifest") throw DataError("not a upgan manifest");
    if (doc.at("schema_version").get<int>() != DatasetManifest::kSchemaVersion) {
      throw DataError("unsupported manifest schema_version");
    }
    Dataset data;
    auto& m = data.manifest;
    m.task = doc.at("task").get<std::string>();
    m.height = doc.at("height").get<int>();
    m.width = doc.at("width").get<int>();
    m.intensity_range = doc.at("intensity_range").get<double>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.config_hash = doc.at("config_hash").get<std::string>();
    m.supervision_level = doc.at("supervision_level").get<int>();
    m.splits.train = doc.at("splits").at("train").get<std::vector<std::string>>();
    m.splits.val = doc.at("splits").at("val").get<std::vector<std::string>>();
    m.splits.test = doc.at("splits").at("test").get<std::vector<std::string>>();
    for (const auto& s : doc.at("samples")) {
      m.samples.push_back({s.at("subject").get<std::string>(), s.at("slice").get<int>(), range_from(s.at("a_range")),
                           range_from(s.at("b_range"))});
    }
    const auto base = manifest_path.parent_path();
    std::map<std::string, std::vector<PairedSample>> by_subject;
    for (const auto& subj : doc.at("subjects")) {
      const auto id = subj.at("id").get<std::string>();
      m.subjects.push_back(id);
      const io::TensorFile t = io::read_tensor(base / subj.at("file").get<std::string>());
      if (t.dims.size() != 4 || t.dims[1] != 2 || static_cast<int>(t.dims[2]) != m.height ||
          static_cast<int>(t.dims[3]) != m.width) {
        throw DataError("subject file for " + id + " has unexpected dims");
      }
      const std::size_t plane = static_cast<std::size_t>(m.height) * m.width;
      for (std::uint32_t k = 0; k < t.dims[0]; ++k) {
        PairedSample s;
        s.subject_id = id;
        s.input_a = Image(m.height, m.width);
        s.target_b = Image(m.height, m.width);
        const float* src = t.data.data() + static_cast<std::size_t>(k) * 2 * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          s.input_a.pixels[i] = src[i];
          s.target_b.pixels[i] = src[plane + i];
        }
        by_subject[id].push_back(std::move(s));
      }
    }
    std::map<std::string, std::size_t> cursor;
    for (const auto& ref : m.samples) {
      auto& rows = by_subject[ref.subject];
      std::size_t& c = cursor[ref.subject];
      if (c >= rows.size()) throw DataError("manifest lists more samples than stored for " + ref.subject);
      PairedSample s = std::move(rows[c++]);
      s.slice_index = ref.slice;
      s.a_range = ref.a_range;
      s.b_range = ref.b_range;
      data.samples.push_back(std::move(s));
    }
    m.validate();
    return data;
  } catch (const json::exception& e) {
    throw DataError("manifest " + manifest_path.string() + ": " + e.what());
  } catch (const io::FormatError& e) {
    throw DataError(e.what());
  }
}

}  // namespace upgan
