#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowsr/core/errors.hpp"
#include "flowsr/model/velocity_model.hpp"

namespace flowsr::model {

// Checkpoint = <path>.bin (flat little-endian parameter arrays, concatenated
// in manifest order) + <path>.json (plain-text manifest: format version,
// architecture descriptor, dtype, stage label, adapter rank/alpha, seed
// lineage, parents, block table). Round trips are bitwise.

struct OptimizerStateBlob {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

template <typename T>
struct Checkpoint {
  VelocityModel<T> model;
  std::optional<LowRankAdapter<T>> adapter;
  std::string stage;
  std::string seed_lineage;
  std::vector<std::string> parents;
  std::optional<OptimizerStateBlob> optimizer;
};

namespace detail {

inline const char* dtype_name(float) { return "f32"; }
inline const char* dtype_name(double) { return "f64"; }

inline nlohmann::json arch_to_json(const ArchConfig& a) {
  nlohmann::json j;
  j["channels"] = a.channels;
  j["width"] = a.width;
  j["depth"] = a.depth;
  j["prompt_vocab"] = a.prompt_vocab;
  j["prompt_dim"] = a.prompt_dim;
  j["time_dim"] = a.time_dim;
  j["t_floor"] = a.t_floor;
  return j;
}

inline ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.channels = j.at("channels").get<int>();
  a.width = j.at("width").get<int>();
  a.depth = j.at("depth").get<int>();
  a.prompt_vocab = j.at("prompt_vocab").get<int>();
  a.prompt_dim = j.at("prompt_dim").get<int>();
  a.time_dim = j.at("time_dim").get<int>();
  a.t_floor = j.at("t_floor").get<double>();
  return a;
}

template <typename T>
void write_array(std::ofstream& os, const T* data, std::size_t n) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
void read_array(std::ifstream& is, T* data, std::size_t n, const std::string& name) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw CheckpointError("checkpoint: truncated data while reading block " + name);
}

}  // namespace detail

template <typename T>
nlohmann::json save_checkpoint(const Checkpoint<T>& ckpt, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path bin_path = fs::path(path.string() + ".bin");
  const fs::path man_path = fs::path(path.string() + ".json");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());

  nlohmann::json man;
  man["format"] = "flowsr-checkpoint-v1";
  man["dtype"] = detail::dtype_name(T{});
  man["arch"] = detail::arch_to_json(ckpt.model.arch);
  man["stage"] = ckpt.stage;
  man["seed_lineage"] = ckpt.seed_lineage;
  man["parents"] = ckpt.parents;
  man["has_adapter"] = ckpt.adapter.has_value();
  man["has_optimizer_state"] = ckpt.optimizer.has_value();

  nlohmann::json blocks = nlohmann::json::array();
  std::ofstream os(bin_path, std::ios::binary);
  if (!os) throw CheckpointError("checkpoint: cannot write " + bin_path.string());

  auto emit = [&](const std::string& name, const T* data, std::size_t n) {
    blocks.push_back({{"name", name}, {"count", n}});
    detail::write_array(os, data, n);
  };

  for (const auto& b : param_blocks(ckpt.model)) emit(b.name, b.data, b.size);

  if (ckpt.adapter) {
    man["adapter_rank"] = ckpt.adapter->nominal_rank;
    man["adapter_alpha"] = static_cast<double>(ckpt.adapter->alpha);
    for (const auto& l : ckpt.adapter->layers) {
      if (l.rank == 0) continue;
      emit("adapter." + l.block_name + ".A", l.a.data(), l.a.size());
      emit("adapter." + l.block_name + ".B", l.b.data(), l.b.size());
    }
  }

  if (ckpt.optimizer) {
    man["optimizer_step"] = ckpt.optimizer->step;
    nlohmann::json opt_blocks = nlohmann::json::array();
    for (std::size_t i = 0; i < ckpt.optimizer->m.size(); ++i) {
      opt_blocks.push_back(ckpt.optimizer->m[i].size());
      detail::write_array(os, ckpt.optimizer->m[i].data(), ckpt.optimizer->m[i].size());
      detail::write_array(os, ckpt.optimizer->v[i].data(), ckpt.optimizer->v[i].size());
    }
    man["optimizer_blocks"] = opt_blocks;
  }

  man["blocks"] = blocks;
  os.flush();
  if (!os) throw CheckpointError("checkpoint: short write to " + bin_path.string());

  std::ofstream mos(man_path);
  mos << man.dump(2) << "\n";
  if (!mos) throw CheckpointError("checkpoint: cannot write " + man_path.string());
  return man;
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path,
                              const std::optional<ArchConfig>& expected_arch = std::nullopt) {
  namespace fs = std::filesystem;
  const fs::path bin_path = fs::path(path.string() + ".bin");
  const fs::path man_path = fs::path(path.string() + ".json");

  std::ifstream mis(man_path);
  if (!mis) throw CheckpointError("checkpoint: missing manifest " + man_path.string());
  nlohmann::json man = nlohmann::json::parse(mis, nullptr, /*allow_exceptions=*/true);

  if (man.value("format", "") != std::string("flowsr-checkpoint-v1")) {
    throw CheckpointError("checkpoint: unsupported format in " + man_path.string());
  }
  if (man.value("dtype", "") != std::string(detail::dtype_name(T{}))) {
    throw CheckpointError("checkpoint: dtype mismatch, file holds " +
                          man.value("dtype", std::string("?")));
  }
  const ArchConfig arch = detail::arch_from_json(man.at("arch"));
  if (expected_arch && !(arch == *expected_arch)) {
    throw CheckpointError("checkpoint: architecture mismatch, file holds " + arch.signature() +
                          ", expected " + expected_arch->signature());
  }

  Checkpoint<T> ckpt;
  ckpt.model = VelocityModel<T>::create(arch, /*seed=*/0);
  ckpt.stage = man.value("stage", "");
  ckpt.seed_lineage = man.value("seed_lineage", "");
  if (man.contains("parents")) ckpt.parents = man["parents"].get<std::vector<std::string>>();

  std::ifstream is(bin_path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: missing data file " + bin_path.string());

  auto blocks_json = man.at("blocks");
  std::size_t bi = 0;
  auto expect_block = [&](const std::string& name, T* data, std::size_t n) {
    if (bi >= blocks_json.size()) throw CheckpointError("checkpoint: missing block " + name);
    const auto& jb = blocks_json[bi++];
    if (jb.at("name").get<std::string>() != name || jb.at("count").get<std::size_t>() != n) {
      throw CheckpointError("checkpoint: block mismatch at " + name +
                            " (file declares " + jb.at("name").get<std::string>() + ")");
    }
    detail::read_array(is, data, n, name);
  };

  for (auto& b : param_blocks(ckpt.model)) expect_block(b.name, b.data, b.size);

  if (man.value("has_adapter", false)) {
    const int rank = man.at("adapter_rank").get<int>();
    const T alpha = static_cast<T>(man.at("adapter_alpha").get<double>());
    LowRankAdapter<T> ad = make_adapter(ckpt.model, rank, alpha, /*seed=*/0);
    for (auto& l : ad.layers) {
      if (l.rank == 0) continue;
      expect_block("adapter." + l.block_name + ".A", l.a.data(), l.a.size());
      expect_block("adapter." + l.block_name + ".B", l.b.data(), l.b.size());
    }
    ckpt.adapter = std::move(ad);
  }

  if (man.value("has_optimizer_state", false)) {
    OptimizerStateBlob opt;
    opt.step = man.at("optimizer_step").get<std::int64_t>();
    for (const auto& jn : man.at("optimizer_blocks")) {
      const std::size_t n = jn.get<std::size_t>();
      opt.m.emplace_back(n);
      opt.v.emplace_back(n);
      detail::read_array(is, opt.m.back().data(), n, "optimizer.m");
      detail::read_array(is, opt.v.back().data(), n, "optimizer.v");
    }
    ckpt.optimizer = std::move(opt);
  }

  return ckpt;
}

}  // namespace flowsr::model
