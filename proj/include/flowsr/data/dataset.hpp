#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowsr/core/image.hpp"
#include "flowsr/data/degrade.hpp"
#include "flowsr/data/generators.hpp"

namespace flowsr::data {

// Uniform sampler over DegradationSpec fields; the downscale factor and the
// block grid are fixed per dataset.
struct SpecSampler {
  double blur_min = 0.4, blur_max = 1.6;
  double noise_min = 0.0, noise_max = 0.06;
  double block_min = 0.0, block_max = 0.4;
  int factor = 4;
  int block_size = 8;

  DegradationSpec sample(Pcg32& rng) const;
};

struct DatasetItem {
  std::uint64_t id = 0;
  std::uint64_t seed = 0;
  GeneratorKind kind = GeneratorKind::gradients;
  int prompt_id = 0;  // generator-kind category label used as conditioning
  DegradationSpec spec;
  std::string hr_file;  // empty for unpaired (withheld) items
  std::string lr_file;
};

struct DatasetManifest {
  std::filesystem::path root;
  int hr_size = 0;
  int channels = 0;
  int factor = 0;
  bool paired = true;
  std::uint64_t seed_start = 0;
  std::uint64_t seed_end = 0;  // exclusive
  std::vector<DatasetItem> items;
};

// One LR-HR pair loaded into memory (values as stored, i.e. post-quantization).
struct TrainingPair {
  ImageF x_hr;
  ImageF x_lr;
  DegradationSpec spec;
  std::uint64_t seed = 0;
  int prompt_id = 0;
};

// Builds a paired dataset under `dir`: PGM/PPM images plus manifest.jsonl and
// meta.json. Item seeds are seed_start .. seed_start+n-1; every artifact is a
// pure function of those seeds and the sampler.
DatasetManifest build_dataset(const std::filesystem::path& dir, int n_pairs, int hr_size,
                              int channels, const SpecSampler& sampler, std::uint64_t seed_start,
                              const std::vector<GeneratorKind>& kinds);

// LR-only variant: HR images are generated for degradation but withheld from
// the dataset. Seed range must not intersect any paired range it accompanies.
DatasetManifest build_unpaired_lq(const std::filesystem::path& dir, int n, int hr_size,
                                  int channels, const SpecSampler& sampler,
                                  std::uint64_t seed_start,
                                  const std::vector<GeneratorKind>& kinds);

// Throws InputError when [a_start,a_end) and [b_start,b_end) intersect.
void require_disjoint_seed_ranges(const DatasetManifest& a, const DatasetManifest& b);

DatasetManifest load_manifest(const std::filesystem::path& dir);

TrainingPair load_pair(const DatasetManifest& m, std::size_t index);
ImageF load_lr(const DatasetManifest& m, std::size_t index);

}  // namespace flowsr::data
