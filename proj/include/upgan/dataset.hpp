// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "upgan/degrade.hpp"
#include "upgan/image.hpp"

namespace upgan {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Min-max constants used to map a slice onto [−1, 1].
struct NormRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Maps to [−1, 1]. Constant slices map to 0 with the range widened to c ± 1.
Image normalize(const Image& raw, NormRange* range_out);
Image denormalize(const Image& normalized, const NormRange& range);

struct PairedSample {
  Image input_a;   // normalized
  Image target_b;  // normalized
  std::string subject_id;
  int slice_index = 0;
  NormRange a_range;
  NormRange b_range;
};

enum class Split { train, val, test };
const char* split_name(Split s);

struct SubjectSplits {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  const std::vector<std::string>& get(Split s) const;
};

struct SampleRef {
  std::string subject;
  int slice = 0;
  NormRange a_range;
  NormRange b_range;
};

/// On-disk description of a paired dataset. Splits are by subject; the
/// supervision level is the number of training subjects in use.
struct DatasetManifest {
  static constexpr int kSchemaVersion = 1;

  std::string task;
  int height = 0;
  int width = 0;
  /// Dynamic range of domain B in raw units (MAX_I for PSNR).
  double intensity_range = 1.0;
  std::vector<std::string> subjects;  // in file order
  std::vector<SampleRef> samples;     // aligned with Dataset::samples
  SubjectSplits splits;
  int supervision_level = 0;
  std::uint64_t seed = 0;
  std::string config_hash;

  void validate() const;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<PairedSample> samples;

  /// Samples whose subject belongs to `split`, in storage order.
  std::vector<const PairedSample*> select(Split split) const;
};

/// Partition subjects into train/val/test with round(0.2·n) validation and
/// test subjects (at least one each); the rest train. Requires n >= 3.
SubjectSplits split_subjects(const std::vector<std::string>& subjects, std::uint64_t seed);

struct PhantomParams {
  int subjects = 10;
  int slices_per_subject = 20;
  int size = 64;
  /// Blur applied to the clean phantom before the intensity remap.
  double blur_sigma = 1.0;
  /// Domain A = 1 − blur(B)^gamma.
  double gamma = 0.6;
};

/// Procedural paired task: per-subject ellipsoid phantoms sliced along z
/// with sinusoidal texture form domain B in [0, 1]; domain A is the fixed,
/// pixel-aligned relation A = 1 − blur(B)^gamma.
Dataset procedural_pairs(const PhantomParams& params, std::uint64_t seed);

/// Restricts training to `level` subjects drawn deterministically from the
/// training pool; val and test are untouched. level == pool size is the
/// identity.
DatasetManifest subset_supervision(const DatasetManifest& manifest, int level, std::uint64_t seed);
Dataset subset_supervision(const Dataset& data, int level, std::uint64_t seed);

/// Degradation applied to clean slices when building a retrospective task.
struct DegradationSpec {
  enum class Kind { undersample, motion } kind = Kind::undersample;
  double keep_fraction = 0.08;
  degrade::MaskShape mask = degrade::MaskShape::square;
  degrade::MotionParams motion{};
};

struct IngestOptions {
  int size = 64;            // center crop side; images must be at least this large
  int downsample = 1;       // block-average factor applied before cropping
  double intensity_range = 0.0;  // 0 = take PGM maxval (or 1 for containers)
};

/// Builds (degraded, clean) pairs from a directory of grayscale slices
/// (.pgm or rank-2 .upg). Subject id is the file stem up to its last '_'
/// (whole stem when there is none); slices are ordered by file name.
Dataset ingest_degraded(const std::filesystem::path& clean_dir, const DegradationSpec& spec,
                        const IngestOptions& opts, std::uint64_t seed);

/// Pairs files with equal names from two directories.
Dataset ingest_paired(const std::filesystem::path& input_dir, const std::filesystem::path& target_dir,
                      const IngestOptions& opts, std::uint64_t seed);

/// Writes manifest.json and one container per subject of shape
/// [slices, 2, H, W] (channel 0 = A, 1 = B, normalized).
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace upgan
