#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "flowsr/data/generators.hpp"
#include "flowsr/metrics/metrics.hpp"
#include "flowsr/metrics/plots.hpp"
#include "flowsr/metrics/report.hpp"
#include "flowsr/reward/scorer.hpp"

using namespace flowsr;
using namespace flowsr::metrics;

namespace {

ImageF constant_image(int h, int w, int c, float v) {
  ImageF img(h, w, c);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = v;
  return img;
}

// independent two-line reference implementation (the dual-route oracle)
double psnr_reference(const ImageF& x, const ImageF& y) {
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mse += (double(x.data()[i]) - double(y.data()[i])) * (double(x.data()[i]) - double(y.data()[i]));
  return -10.0 * std::log10(mse / double(x.size()));
}

std::filesystem::path temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() /
           (std::string("flowsr_metrics_") + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("psnr: sentinel, arithmetic case, dual-implementation cross-check") {
  const ImageF a = data::generate_hr(data::GeneratorKind::textures, 32, 3, 1);
  CHECK(std::isinf(psnr(a, a)));

  const ImageF zeros = constant_image(16, 16, 1, 0.0f);
  const ImageF tenth = constant_image(16, 16, 1, 0.1f);
  CHECK(psnr(zeros, tenth) == doctest::Approx(20.0).epsilon(1e-5));

  Pcg32 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const ImageF x = gaussian_image<float>(24, 24, 3, rng, 0.3);
    const ImageF y = gaussian_image<float>(24, 24, 3, rng, 0.3);
    CHECK(psnr(x, y) == doctest::Approx(psnr_reference(x, y)).epsilon(1e-9));
  }

  CHECK_THROWS_AS(psnr(a, constant_image(16, 16, 3, 0.0f)), InputError);
}

TEST_CASE("ssim: identity, symmetry, texture vs flat") {
  const ImageF x = data::generate_hr(data::GeneratorKind::textures, 32, 3, 3);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-15));

  const ImageF y = data::generate_hr(data::GeneratorKind::shapes, 32, 3, 4);
  CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));

  const ImageF gray = constant_image(32, 32, 3, 0.5f);
  CHECK(ssim(x, gray) < 0.5);

  CHECK_THROWS_AS(ssim(constant_image(4, 4, 1, 0.0f), constant_image(4, 4, 1, 0.0f)), InputError);
}

TEST_CASE("evaluate_policy: determinism, baseline row, GT-free behavior") {
  const auto dir = temp_dir("report");
  data::SpecSampler sampler;
  sampler.factor = 4;
  const auto paired = data::build_dataset(dir / "p", 4, 32, 3, sampler, 100,
                                          {data::GeneratorKind::gradients});
  const auto unpaired = data::build_unpaired_lq(dir / "u", 3, 32, 3, sampler, 900,
                                                {data::GeneratorKind::shapes});

  model::ArchConfig arch;
  arch.channels = 3;
  arch.width = 6;
  arch.depth = 1;
  const auto policy = model::VelocityModel<float>::create(arch, 5);
  reward::LocalProxyScorer scorer;
  sampler::SampleConfig scfg;
  scfg.steps = 2;
  scfg.seed = 7;

  const auto e1 = evaluate_policy(policy, paired, scfg, scorer, 7.0);
  const auto e2 = evaluate_policy(policy, paired, scfg, scorer, 7.0);
  REQUIRE(e1.baseline.has_value());  // bicubic row always present for paired data
  CHECK(e1.policy.rows.size() == 4);
  for (std::size_t i = 0; i < e1.policy.rows.size(); ++i) {
    CHECK(e1.policy.rows[i].psnr_db == e2.policy.rows[i].psnr_db);
    CHECK(e1.policy.rows[i].quality == e2.policy.rows[i].quality);
  }

  // aggregate equals the arithmetic mean of rows
  double mean_q = 0.0;
  for (const auto& r : e1.policy.rows) mean_q += r.quality / e1.policy.rows.size();
  CHECK(e1.policy.mean_quality == doctest::Approx(mean_q).epsilon(1e-12));

  // GT-free dataset: no baseline, FR fields absent from the records
  const auto e3 = evaluate_policy(policy, unpaired, scfg, scorer, 7.0);
  CHECK(!e3.baseline.has_value());
  CHECK(!e3.policy.fr_available);

  const auto report_path = dir / "report.jsonl";
  write_report_jsonl(report_path, {e3.policy});
  std::ifstream is(report_path);
  std::string line;
  while (std::getline(is, line)) {
    const auto row = nlohmann::json::parse(line);
    CHECK(!row.contains("psnr_db"));
    CHECK(!row.contains("ssim"));
    CHECK(row.contains("quality"));
    CHECK(row.contains("fidelity_pred"));
  }

  // table renders without FR columns for GT-free reports
  const auto table = format_report_table({e3.policy});
  CHECK(table.find("n/a") != std::string::npos);

  std::filesystem::remove_all(dir);
}

TEST_CASE("svg plot emission") {
  const auto dir = temp_dir("plot");
  Series s;
  s.label = "loss";
  for (int i = 0; i < 50; ++i) {
    s.x.push_back(i);
    s.y.push_back(1.0 / (1.0 + i));
  }
  const auto path = dir / "curve.svg";
  write_svg_line_plot(path, "test", "step", "loss", {s});
  std::ifstream is(path);
  const std::string body((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  CHECK(body.find("<svg") != std::string::npos);
  CHECK(body.find("polyline") != std::string::npos);
  CHECK_THROWS_AS(write_svg_line_plot(dir / "x.svg", "t", "x", "y", {}), InputError);
  std::filesystem::remove_all(dir);
}
