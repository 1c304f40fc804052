#include "flowsr/data/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "flowsr/core/errors.hpp"
#include "flowsr/data/raster_io.hpp"

namespace flowsr::data {

using nlohmann::json;

DegradationSpec SpecSampler::sample(Pcg32& rng) const {
  DegradationSpec s;
  s.blur_sigma = blur_min + (blur_max - blur_min) * rng.next_double();
  s.noise_sigma = noise_min + (noise_max - noise_min) * rng.next_double();
  s.block_artifact_strength = block_min + (block_max - block_min) * rng.next_double();
  s.downscale_factor = factor;
  s.block_size = block_size;
  return s;
}

namespace {

std::string item_file(const char* prefix, std::uint64_t id, int channels) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "images/%s_%06llu.%s", prefix,
                static_cast<unsigned long long>(id), channels == 1 ? "pgm" : "ppm");
  return std::string(buf);
}

json item_to_json(const DatasetItem& it) {
  json j;
  j["id"] = it.id;
  j["seed"] = it.seed;
  j["kind"] = generator_kind_name(it.kind);
  j["prompt_id"] = it.prompt_id;
  j["blur_sigma"] = it.spec.blur_sigma;
  j["noise_sigma"] = it.spec.noise_sigma;
  j["factor"] = it.spec.downscale_factor;
  j["block_strength"] = it.spec.block_artifact_strength;
  j["block_size"] = it.spec.block_size;
  if (!it.hr_file.empty()) j["hr"] = it.hr_file;
  j["lr"] = it.lr_file;
  return j;
}

DatasetItem item_from_json(const json& j) {
  DatasetItem it;
  it.id = j.at("id").get<std::uint64_t>();
  it.seed = j.at("seed").get<std::uint64_t>();
  it.kind = generator_kind_from_string(j.at("kind").get<std::string>());
  it.prompt_id = j.at("prompt_id").get<int>();
  it.spec.blur_sigma = j.at("blur_sigma").get<double>();
  it.spec.noise_sigma = j.at("noise_sigma").get<double>();
  it.spec.downscale_factor = j.at("factor").get<int>();
  it.spec.block_artifact_strength = j.at("block_strength").get<double>();
  it.spec.block_size = j.at("block_size").get<int>();
  if (j.contains("hr")) it.hr_file = j.at("hr").get<std::string>();
  it.lr_file = j.at("lr").get<std::string>();
  return it;
}

DatasetManifest build_impl(const std::filesystem::path& dir, int n, int hr_size, int channels,
                           const SpecSampler& sampler, std::uint64_t seed_start,
                           const std::vector<GeneratorKind>& kinds, bool paired) {
  if (n < 1) throw InputError("build_dataset: item count must be >= 1");
  if (hr_size % sampler.factor != 0) {
    throw InputError("build_dataset: hr_size not divisible by downscale factor");
  }
  if (kinds.empty()) throw InputError("build_dataset: no generator kinds enabled");

  std::filesystem::create_directories(dir / "images");

  DatasetManifest m;
  m.root = dir;
  m.hr_size = hr_size;
  m.channels = channels;
  m.factor = sampler.factor;
  m.paired = paired;
  m.seed_start = seed_start;
  m.seed_end = seed_start + static_cast<std::uint64_t>(n);

  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw InputError("build_dataset: cannot write manifest in " + dir.string());

  for (int i = 0; i < n; ++i) {
    DatasetItem it;
    it.id = static_cast<std::uint64_t>(i);
    it.seed = seed_start + static_cast<std::uint64_t>(i);
    it.kind = kinds[static_cast<std::size_t>(i) % kinds.size()];
    it.prompt_id = static_cast<int>(it.kind);

    const ImageF hr = generate_hr(it.kind, hr_size, channels, it.seed);
    Pcg32 spec_rng(derive_seed(it.seed, 0x5bec5a3eull));
    it.spec = sampler.sample(spec_rng);
    Pcg32 deg_rng(derive_seed(it.seed, 0xde62adeull));
    const ImageF lr = degrade(hr, it.spec, deg_rng);

    it.lr_file = item_file("lr", it.id, channels);
    write_raster(lr, dir / it.lr_file);
    if (paired) {
      it.hr_file = item_file("hr", it.id, channels);
      write_raster(clamped01(hr), dir / it.hr_file);
    }
    manifest << item_to_json(it).dump() << "\n";
    m.items.push_back(std::move(it));
  }

  json meta;
  meta["hr_size"] = m.hr_size;
  meta["channels"] = m.channels;
  meta["factor"] = m.factor;
  meta["paired"] = m.paired;
  meta["seed_start"] = m.seed_start;
  meta["seed_end"] = m.seed_end;
  meta["count"] = m.items.size();
  std::ofstream meta_os(dir / "meta.json");
  meta_os << meta.dump(2) << "\n";
  return m;
}

}  // namespace

DatasetManifest build_dataset(const std::filesystem::path& dir, int n_pairs, int hr_size,
                              int channels, const SpecSampler& sampler, std::uint64_t seed_start,
                              const std::vector<GeneratorKind>& kinds) {
  return build_impl(dir, n_pairs, hr_size, channels, sampler, seed_start, kinds, /*paired=*/true);
}

DatasetManifest build_unpaired_lq(const std::filesystem::path& dir, int n, int hr_size,
                                  int channels, const SpecSampler& sampler,
                                  std::uint64_t seed_start,
                                  const std::vector<GeneratorKind>& kinds) {
  return build_impl(dir, n, hr_size, channels, sampler, seed_start, kinds, /*paired=*/false);
}

void require_disjoint_seed_ranges(const DatasetManifest& a, const DatasetManifest& b) {
  const bool disjoint = a.seed_end <= b.seed_start || b.seed_end <= a.seed_start;
  if (!disjoint) {
    throw InputError("dataset seed ranges intersect: [" + std::to_string(a.seed_start) + "," +
                     std::to_string(a.seed_end) + ") vs [" + std::to_string(b.seed_start) + "," +
                     std::to_string(b.seed_end) + ")");
  }
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  std::ifstream meta_is(dir / "meta.json");
  if (!meta_is) throw InputError("load_manifest: missing meta.json in " + dir.string());
  json meta = json::parse(meta_is);

  DatasetManifest m;
  m.root = dir;
  m.hr_size = meta.at("hr_size").get<int>();
  m.channels = meta.at("channels").get<int>();
  m.factor = meta.at("factor").get<int>();
  m.paired = meta.at("paired").get<bool>();
  m.seed_start = meta.at("seed_start").get<std::uint64_t>();
  m.seed_end = meta.at("seed_end").get<std::uint64_t>();

  std::ifstream is(dir / "manifest.jsonl");
  if (!is) throw InputError("load_manifest: missing manifest.jsonl in " + dir.string());
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    m.items.push_back(item_from_json(json::parse(line)));
  }
  if (m.items.size() != meta.at("count").get<std::size_t>()) {
    throw InputError("load_manifest: item count mismatch in " + dir.string());
  }
  return m;
}

TrainingPair load_pair(const DatasetManifest& m, std::size_t index) {
  const DatasetItem& it = m.items.at(index);
  if (it.hr_file.empty()) throw InputError("load_pair: item has no HR reference");
  TrainingPair p;
  p.x_hr = read_raster(m.root / it.hr_file);
  p.x_lr = read_raster(m.root / it.lr_file);
  p.spec = it.spec;
  p.seed = it.seed;
  p.prompt_id = it.prompt_id;
  return p;
}

ImageF load_lr(const DatasetManifest& m, std::size_t index) {
  return read_raster(m.root / m.items.at(index).lr_file);
}

}  // namespace flowsr::data
