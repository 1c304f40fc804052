#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "flowsr/data/dataset.hpp"
#include "flowsr/data/degrade.hpp"
#include "flowsr/data/generators.hpp"
#include "flowsr/data/raster_io.hpp"
#include "flowsr/metrics/metrics.hpp"

using namespace flowsr;
using namespace flowsr::data;

namespace {

std::filesystem::path temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() /
           (std::string("flowsr_test_") + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

ImageF constant_image(int h, int w, int c, float v) {
  ImageF img(h, w, c);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = v;
  return img;
}

bool bitwise_equal(const ImageF& a, const ImageF& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;
  }
  return true;
}

double psnr_after_degrade(const ImageF& hr, const DegradationSpec& spec, std::uint64_t seed) {
  Pcg32 rng(seed);
  const ImageF lr = degrade(hr, spec, rng);
  return metrics::psnr(upsample_cubic(lr, spec.downscale_factor), hr);
}

}  // namespace

TEST_CASE("generate_hr deterministic and seed-sensitive") {
  const ImageF a = generate_hr(GeneratorKind::gradients, 64, 3, 0);
  const ImageF b = generate_hr(GeneratorKind::gradients, 64, 3, 0);
  CHECK(bitwise_equal(a, b));

  const ImageF c = generate_hr(GeneratorKind::shapes, 64, 3, 1);
  const ImageF d = generate_hr(GeneratorKind::shapes, 64, 3, 2);
  CHECK(mean_abs_diff(c, d) > 0.0);
}

TEST_CASE("generate_hr stays in [0,1] and has contrast") {
  // std > 0.05 across 100 seeds for every generator family
  for (auto kind : {GeneratorKind::gradients, GeneratorKind::textures, GeneratorKind::shapes,
                    GeneratorKind::textlike}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const ImageF img = generate_hr(kind, 64, 3, seed);
      float mn = 1e9f, mx = -1e9f;
      for (std::size_t i = 0; i < img.size(); ++i) {
        mn = std::min(mn, img.data()[i]);
        mx = std::max(mx, img.data()[i]);
      }
      CHECK(mn >= 0.0f);
      CHECK(mx <= 1.0f);
      CHECK(intensity_std(img) > 0.05);
    }
  }
  CHECK_THROWS_AS(generate_hr(GeneratorKind::shapes, 4, 3, 0), InputError);
}

TEST_CASE("degrade identity spec is exact") {
  const ImageF hr = generate_hr(GeneratorKind::textures, 32, 3, 5);
  DegradationSpec spec;
  spec.blur_sigma = 0.0;
  spec.noise_sigma = 0.0;
  spec.downscale_factor = 1;
  spec.block_artifact_strength = 0.0;
  Pcg32 rng(0);
  const ImageF lr = degrade(hr, spec, rng);
  CHECK(bitwise_equal(lr, hr));
}

TEST_CASE("degrade constant image averaging preserves value") {
  const ImageF hr = constant_image(32, 32, 1, 0.37f);
  DegradationSpec spec;
  spec.downscale_factor = 4;
  Pcg32 rng(0);
  const ImageF lr = degrade(hr, spec, rng);
  CHECK(lr.height() == 8);
  CHECK(lr.width() == 8);
  for (std::size_t i = 0; i < lr.size(); ++i) CHECK(lr.data()[i] == 0.37f);
}

TEST_CASE("degradation strictly lowers PSNR vs identity") {
  // 20 seeds, spec (1.5, 0.05, 4, 0.3)
  DegradationSpec heavy;
  heavy.blur_sigma = 1.5;
  heavy.noise_sigma = 0.05;
  heavy.downscale_factor = 4;
  heavy.block_artifact_strength = 0.3;
  DegradationSpec clean;
  clean.downscale_factor = 4;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ImageF hr = generate_hr(GeneratorKind::shapes, 64, 3, seed);
    CHECK(psnr_after_degrade(hr, heavy, seed) < psnr_after_degrade(hr, clean, seed));
  }
}

TEST_CASE("degradation monotonicity on a severity grid") {
  // raising any one knob (same seed) must not raise PSNR
  DegradationSpec base;
  base.downscale_factor = 4;
  base.blur_sigma = 0.5;
  base.noise_sigma = 0.02;
  base.block_artifact_strength = 0.1;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const ImageF hr = generate_hr(seed % 2 ? GeneratorKind::textures : GeneratorKind::shapes, 64,
                                  3, 900 + seed);
    double prev = 1e9;
    for (double blur : {0.0, 0.8, 1.6, 2.4}) {
      DegradationSpec s = base;
      s.blur_sigma = blur;
      const double p = psnr_after_degrade(hr, s, seed);
      CHECK(p <= prev + 1e-9);
      prev = p;
    }
    prev = 1e9;
    for (double noise : {0.0, 0.05, 0.1, 0.2}) {
      DegradationSpec s = base;
      s.noise_sigma = noise;
      const double p = psnr_after_degrade(hr, s, seed);
      CHECK(p <= prev + 1e-9);
      prev = p;
    }
    prev = 1e9;
    for (double block : {0.0, 0.25, 0.5, 1.0}) {
      DegradationSpec s = base;
      s.block_artifact_strength = block;
      const double p = psnr_after_degrade(hr, s, seed);
      CHECK(p <= prev + 1e-9);
      prev = p;
    }
  }
}

TEST_CASE("upsample_cubic identity and constants") {
  const ImageF img = generate_hr(GeneratorKind::gradients, 16, 3, 3);
  CHECK(bitwise_equal(upsample_cubic(img, 1), img));

  const ImageF c = constant_image(8, 8, 1, 0.6f);
  const ImageF up = upsample_cubic(c, 4);
  CHECK(up.height() == 32);
  for (std::size_t i = 0; i < up.size(); ++i) CHECK(up.data()[i] == doctest::Approx(0.6f).epsilon(1e-6));
}

TEST_CASE("upsample of area-downsample favors smooth content") {
  // round trip PSNR on a smooth gradient beats a texture image
  const ImageF smooth = generate_hr(GeneratorKind::gradients, 64, 3, 10);
  const ImageF textured = generate_hr(GeneratorKind::textures, 64, 3, 10);
  const double p_smooth = metrics::psnr(upsample_cubic(downsample_area(smooth, 4), 4), smooth);
  const double p_text = metrics::psnr(upsample_cubic(downsample_area(textured, 4), 4), textured);
  CHECK(p_smooth > p_text);
}

TEST_CASE("raster round trip") {
  const auto dir = temp_dir("raster");
  const ImageF img = generate_hr(GeneratorKind::shapes, 32, 3, 77);
  write_raster(img, dir / "x.ppm");
  const ImageF back = read_raster(dir / "x.ppm");
  REQUIRE(back.same_shape(img));
  // quantization error bounded by half a step
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(std::abs(back.data()[i] - img.data()[i]) <= 0.5f / 255.0f + 1e-6f);
  }
  // second write is byte-identical (determinism)
  write_raster(img, dir / "y.ppm");
  std::ifstream a(dir / "x.ppm", std::ios::binary), b(dir / "y.ppm", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  std::filesystem::remove_all(dir);
}

TEST_CASE("quantize8 rounds half to even") {
  // 0.5/255 ties: value exactly between 0 and 1 quantization steps
  CHECK(quantize8(0.5f / 255.0f) == 0);    // tie -> even 0
  CHECK(quantize8(1.5f / 255.0f) == 2);    // tie -> even 2
  CHECK(quantize8(-1.0f) == 0);            // clamps below
  CHECK(quantize8(2.0f) == 255);           // clamps above
}

TEST_CASE("build_dataset reproducible, shaped, disjoint") {
  const auto dir1 = temp_dir("ds1");
  const auto dir2 = temp_dir("ds2");
  SpecSampler sampler;
  const std::vector<GeneratorKind> kinds = {GeneratorKind::gradients, GeneratorKind::textures,
                                            GeneratorKind::shapes, GeneratorKind::textlike};
  const auto m1 = build_dataset(dir1, 12, 64, 3, sampler, 100, kinds);
  const auto m2 = build_dataset(dir2, 12, 64, 3, sampler, 100, kinds);
  REQUIRE(m1.items.size() == 12);

  // identical datasets from the same master seed
  for (std::size_t i = 0; i < m1.items.size(); ++i) {
    const auto p1 = load_pair(m1, i);
    const auto p2 = load_pair(m2, i);
    CHECK(bitwise_equal(p1.x_hr, p2.x_hr));
    CHECK(bitwise_equal(p1.x_lr, p2.x_lr));
    CHECK(p1.x_lr.height() == 16);
    CHECK(p1.x_lr.width() == 16);
    CHECK(p1.x_hr.height() == 64);
  }

  // seed-range hygiene
  const auto un = build_unpaired_lq(temp_dir("ds3"), 5, 64, 3, sampler, 500, kinds);
  CHECK(un.items[0].hr_file.empty());
  CHECK_NOTHROW(require_disjoint_seed_ranges(m1, un));
  const auto overlapping = build_unpaired_lq(temp_dir("ds4"), 5, 64, 3, sampler, 105, kinds);
  CHECK_THROWS_AS(require_disjoint_seed_ranges(m1, overlapping), InputError);

  // manifest reload round trip
  const auto reloaded = load_manifest(dir1);
  CHECK(reloaded.items.size() == m1.items.size());
  CHECK(reloaded.seed_start == 100);
  CHECK(reloaded.paired);

  CHECK_THROWS_AS(build_dataset(temp_dir("ds5"), 0, 64, 3, sampler, 0, kinds), InputError);

  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}
