#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "flowsr/flow/flow_ops.hpp"
#include "flowsr/flow/sft_trainer.hpp"

using namespace flowsr;
using namespace flowsr::flow;

namespace {

template <typename T>
Image<T> random_image(int h, int w, int c, std::uint64_t seed) {
  Pcg32 rng(seed);
  return gaussian_image<T>(h, w, c, rng);
}

ImageD constant(int h, int w, int c, double v) {
  ImageD img(h, w, c);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = v;
  return img;
}

std::filesystem::path temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() /
           (std::string("flowsr_flow_") + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

data::DatasetManifest make_tiny_dataset(const std::filesystem::path& dir, int n, int hr_size) {
  data::SpecSampler sampler;
  sampler.factor = 4;
  sampler.noise_max = 0.04;
  return data::build_dataset(dir, n, hr_size, 3, sampler, 1000,
                             {data::GeneratorKind::gradients, data::GeneratorKind::shapes,
                              data::GeneratorKind::textures, data::GeneratorKind::textlike});
}

}  // namespace

TEST_CASE("interpolate endpoints and midpoint") {
  const auto x = random_image<double>(8, 8, 3, 1);
  const auto eps = random_image<double>(8, 8, 3, 2);
  const auto at0 = interpolate(x, eps, 0.0);
  const auto at1 = interpolate(x, eps, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(at0.data()[i] == x.data()[i]);
    CHECK(at1.data()[i] == eps.data()[i]);
  }
  const auto mid = interpolate(constant(4, 4, 1, 0.2), constant(4, 4, 1, 1.0), 0.5);
  for (std::size_t i = 0; i < mid.size(); ++i) CHECK(mid.data()[i] == doctest::Approx(0.6).epsilon(1e-12));

  CHECK_THROWS_AS(interpolate(x, random_image<double>(4, 4, 3, 3), 0.5), InputError);
  CHECK_THROWS_AS(interpolate(x, eps, 1.5), InputError);
}

TEST_CASE("target_velocity basics") {
  const auto x = random_image<double>(8, 8, 1, 4);
  const auto v_self = target_velocity(x, x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(v_self.data()[i] == 0.0);

  const auto zero = constant(8, 8, 1, 0.0);
  const auto eps = random_image<double>(8, 8, 1, 5);
  const auto v = target_velocity(zero, eps);
  for (std::size_t i = 0; i < eps.size(); ++i) CHECK(v.data()[i] == eps.data()[i]);
}

TEST_CASE("algebraic identity: interpolate + (1-t) v = eps") {
  const auto x = random_image<double>(8, 8, 3, 6);
  const auto eps = random_image<double>(8, 8, 3, 7);
  const auto v = target_velocity(x, eps);
  for (double t : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
    const auto x_t = interpolate(x, eps, t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(x_t.data()[i] + (1.0 - t) * v.data()[i] == doctest::Approx(eps.data()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("x_t equals x + t*v elementwise to 1e-12") {
  const auto x = random_image<double>(8, 8, 3, 8);
  const auto eps = random_image<double>(8, 8, 3, 9);
  const auto v = target_velocity(x, eps);
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const auto x_t = interpolate(x, eps, t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::abs(x_t.data()[i] - (x.data()[i] + t * v.data()[i])) <= 1e-12);
    }
  }
}

TEST_CASE("flow loss: oracle predictor scores exactly zero; zero model matches plug-in") {
  const auto dir = temp_dir("loss");
  const auto manifest = make_tiny_dataset(dir, 6, 32);
  const auto items = load_sft_items(manifest);
  std::vector<const SftItem*> batch;
  for (const auto& it : items) batch.push_back(&it);

  const std::uint64_t seed = 5;
  const std::int64_t step = 3;

  // oracle: return the exact target velocity
  const double oracle_loss = flow_batch_loss<float>(
      [&](const ImageF& x_t, double t, const SftItem& it) {
        const ImageF eps = draw_eps<float>(x_t.height(), x_t.width(), x_t.channels(), seed, step,
                                           static_cast<int>(&it - items.data()));
        // identify slot by matching pointer offset within the batch
        (void)t;
        return target_velocity(it.x_hr, eps);
      },
      batch, seed, step);
  CHECK(oracle_loss == 0.0);

  // zero predictor: loss must equal mean ||eps - x_hr||^2 (elementwise mean)
  const double zero_loss = flow_batch_loss<float>(
      [](const ImageF& x_t, double, const SftItem&) { return ImageF::zeros_like(x_t); }, batch,
      seed, step);
  double expected = 0.0;
  for (int k = 0; k < static_cast<int>(batch.size()); ++k) {
    const auto& hr = batch[static_cast<std::size_t>(k)]->x_hr;
    const ImageF eps = draw_eps<float>(hr.height(), hr.width(), hr.channels(), seed, step, k);
    expected += mse(target_velocity(hr, eps), ImageF::zeros_like(hr));
  }
  expected /= static_cast<double>(batch.size());
  CHECK(zero_loss == doctest::Approx(expected).epsilon(1e-12));

  // sft_step's internal loss path must agree with the generic evaluator run
  // against the same model on the same draws (two code routes, one value)
  model::ArchConfig arch;
  arch.channels = 3;
  arch.width = 6;
  arch.depth = 1;
  auto m = model::VelocityModel<float>::create(arch, 77);
  const double route_b = flow_batch_loss<float>(
      [&](const ImageF& x_t, double t, const SftItem& it) {
        model::ConditionTag<float> cond;
        cond.lr_image = it.lr_up;
        cond.prompt_id = it.prompt_id;
        return model::predict_velocity<float>(m, nullptr, x_t, t, cond);
      },
      batch, seed, step);
  Adam adam(AdamConfig{1e-3, 0.9, 0.999, 1e-8});
  {
    auto blocks = model::param_blocks(m);
    std::vector<std::pair<float*, std::size_t>> params;
    for (auto& b : blocks) params.push_back({b.data, b.size});
    adam.init(params);
  }
  const double step_loss = sft_step(m, adam, batch, seed, step);
  CHECK(step_loss == doctest::Approx(route_b).epsilon(1e-9));

  std::filesystem::remove_all(dir);
}

TEST_CASE("batch loss invariant under permutation of batch elements") {
  const auto dir = temp_dir("perm");
  const auto manifest = make_tiny_dataset(dir, 5, 32);
  const auto items = load_sft_items(manifest);

  // Permutation invariance holds when the per-sample draw follows the item,
  // so key draws by a stable per-item slot (here: dataset index).
  auto loss_for_order = [&](const std::vector<std::size_t>& order) {
    double total = 0.0;
    for (std::size_t idx : order) {
      const auto& it = items[idx];
      const double t = draw_t(11, 0, static_cast<int>(idx));
      const ImageF eps =
          draw_eps<float>(it.x_hr.height(), it.x_hr.width(), it.x_hr.channels(), 11, 0,
                          static_cast<int>(idx));
      const auto fs = make_flow_sample(it.x_hr, eps, t);
      total += mse(fs.v_target, ImageF::zeros_like(fs.x_t));
    }
    return total / static_cast<double>(order.size());
  };
  const double a = loss_for_order({0, 1, 2, 3, 4});
  const double b = loss_for_order({4, 2, 0, 3, 1});
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
  std::filesystem::remove_all(dir);
}

TEST_CASE("short training run decreases the loss") {
  const auto dir = temp_dir("train");
  const auto manifest = make_tiny_dataset(dir, 24, 32);

  SftConfig cfg;
  cfg.arch.channels = 3;
  cfg.arch.width = 10;
  cfg.arch.depth = 2;
  cfg.steps = 220;
  cfg.batch = 4;
  cfg.lr = 2e-3;
  cfg.base_snapshot_steps = 40;
  cfg.log_every = 10;
  cfg.ckpt_every = 0;
  cfg.seed = 9;

  const auto out = temp_dir("train_out");
  const auto result = train_sft(manifest, cfg, out);

  // loss log: parse, check strictly increasing steps, compare early vs late
  std::ifstream log(result.log_path);
  REQUIRE(log.good());
  std::vector<double> losses;
  std::vector<std::int64_t> steps;
  std::string line;
  while (std::getline(log, line)) {
    const auto row = nlohmann::json::parse(line);
    steps.push_back(row.at("step").get<std::int64_t>());
    losses.push_back(row.at("loss").get<double>());
  }
  REQUIRE(losses.size() > 6);
  for (std::size_t i = 1; i < steps.size(); ++i) CHECK(steps[i] > steps[i - 1]);
  const double early = (losses[0] + losses[1] + losses[2]) / 3.0;
  const double late =
      (losses[losses.size() - 1] + losses[losses.size() - 2] + losses[losses.size() - 3]) / 3.0;
  CHECK(late < early);

  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(out);
}

TEST_CASE("resume reproduces the uninterrupted run; zero-step run equals init") {
  const auto dir = temp_dir("resume");
  const auto manifest = make_tiny_dataset(dir, 8, 32);

  SftConfig cfg;
  cfg.arch.channels = 3;
  cfg.arch.width = 6;
  cfg.arch.depth = 1;
  cfg.steps = 30;
  cfg.batch = 3;
  cfg.base_snapshot_steps = 5;
  cfg.log_every = 10;
  cfg.ckpt_every = 15;  // resume point mid-run
  cfg.seed = 13;

  const auto out_a = temp_dir("resume_a");
  const auto res_a = train_sft(manifest, cfg, out_a);

  // interrupted: run to step 15 (ckpt_every writes resume), then continue
  SftConfig cfg_half = cfg;
  cfg_half.steps = 15;
  cfg_half.ckpt_every = 15;
  const auto out_b = temp_dir("resume_b");
  train_sft(manifest, cfg_half, out_b);
  const auto res_b = train_sft(manifest, cfg, out_b, out_b / "resume");

  auto ck_a = model::load_checkpoint<float>(res_a.sft_ckpt);
  auto ck_b = model::load_checkpoint<float>(res_b.sft_ckpt);
  auto pa = model::param_blocks(ck_a.model);
  auto pb = model::param_blocks(ck_b.model);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = 0; j < pa[i].size; ++j) REQUIRE(pa[i].data[j] == pb[i].data[j]);
  }

  // zero-step budget: checkpoint equals initialization
  SftConfig cfg_zero = cfg;
  cfg_zero.steps = 0;
  const auto out_c = temp_dir("resume_c");
  const auto res_c = train_sft(manifest, cfg_zero, out_c);
  auto ck_c = model::load_checkpoint<float>(res_c.sft_ckpt);
  auto init = model::VelocityModel<float>::create(cfg.arch, cfg.seed);
  auto pi = model::param_blocks(init);
  auto pc = model::param_blocks(ck_c.model);
  for (std::size_t i = 0; i < pi.size(); ++i) {
    for (std::size_t j = 0; j < pi[i].size; ++j) REQUIRE(pi[i].data[j] == pc[i].data[j]);
  }

  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(out_a);
  std::filesystem::remove_all(out_b);
  std::filesystem::remove_all(out_c);
}
