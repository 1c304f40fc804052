#include "flowsr/cli/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "flowsr/core/errors.hpp"

namespace flowsr::cli {

const std::vector<KeySpec>& RunConfig::key_specs() {
  static const std::vector<KeySpec> specs = {
      {"master_seed", "int", "1", "seed every derived stream hangs off"},
      {"run.root", "string", "runs", "run directory root (env FLOWSR_RUN_ROOT overrides)"},

      {"data.n_pairs", "int", "200", "paired training items"},
      {"data.n_holdout", "int", "24", "paired held-out items"},
      {"data.n_unpaired", "int", "100", "LR-only items for the NR stage"},
      {"data.hr_size", "int", "64", "HR image side in pixels"},
      {"data.channels", "int", "3", "image channels (1 or 3)"},
      {"data.factor", "int", "4", "downscale factor"},
      {"data.kinds", "string", "gradients,textures,shapes,textlike", "generator families"},
      {"data.blur_min", "float", "0.4", "degradation blur sigma lower bound"},
      {"data.blur_max", "float", "1.6", "degradation blur sigma upper bound"},
      {"data.noise_min", "float", "0.0", "degradation noise sigma lower bound"},
      {"data.noise_max", "float", "0.06", "degradation noise sigma upper bound"},
      {"data.block_min", "float", "0.0", "block artifact strength lower bound"},
      {"data.block_max", "float", "0.4", "block artifact strength upper bound"},
      {"data.block_size", "int", "8", "block grid for the artifact proxy"},

      {"model.width", "int", "24", "hidden conv width"},
      {"model.depth", "int", "3", "residual blocks"},
      {"model.prompt_dim", "int", "8", "prompt embedding channels"},
      {"model.time_dim", "int", "8", "sinusoidal time feature channels"},

      {"sft.steps", "int", "3000", "cold-start optimization steps"},
      {"sft.batch", "int", "6", "cold-start batch size"},
      {"sft.lr", "float", "1e-3", "cold-start learning rate"},
      {"sft.base_snapshot_steps", "int", "1200", "step at which the BASE policy is captured"},
      {"sft.log_every", "int", "25", "loss log cadence"},
      {"sft.ckpt_every", "int", "1000", "resume checkpoint cadence (0 disables)"},
      {"sft.xt_aug", "float", "0.05", "training-time perturbation std on x_t"},

      {"sampler.train_steps", "int", "6", "rollout integration steps"},
      {"sampler.infer_steps", "int", "40", "inference integration steps"},
      {"sampler.noise_scale", "float", "1.0", "initial noise scale"},

      {"reward.gamma", "float", "7", "input-quality-adaptive exponent scale"},
      {"reward.formulation", "string", "full", "full | gated_gain | gain_only"},
      {"reward.tie_margin", "float", "0.05", "comparator tie margin on quality scores"},
      {"reward.q_a", "float", "50", "quality proxy sharpness weight"},
      {"reward.q_b", "float", "160", "quality proxy noise weight"},
      {"reward.q_c", "float", "20", "quality proxy blockiness weight"},
      {"reward.q_d", "float", "-0.5", "quality proxy bias"},
      {"reward.fid_ssim_weight", "float", "0.7", "fidelity proxy ssim weight"},
      {"reward.fid_grad_norm", "float", "0.25", "fidelity proxy gradient-distance normalizer"},

      {"rl.k", "int", "24", "rollout group size"},
      {"rl.lambda", "float", "1.0", "contrastive mixing coefficient"},
      {"rl.mean_threshold", "float", "0.9", "group filter mean threshold"},
      {"rl.var_threshold", "float", "0.05", "group filter variance threshold"},
      {"rl.threshold_scale", "string", "unit", "unit | raw (filter threshold scale)"},
      {"rl.lr", "float", "3e-4", "adapter learning rate"},
      {"rl.rank", "int", "32", "adapter rank (clamped per layer)"},
      {"rl.alpha", "float", "64", "adapter alpha"},
      {"rl.rounds", "int", "20", "rollout rounds per stage"},
      {"rl.groups_per_round", "int", "4", "condition groups per round"},
      {"rl.train_steps_per_rollout", "int", "2", "optimizer steps per rollout round"},
      {"rl.policy_init", "string", "base", "base | sft (which weights RL optimizes on)"},
      {"rl.merge_scale", "float", "1.0", "scale applied to the adapter delta at merge time"},

      {"eval.max_items", "int", "0", "cap on evaluated items (0 = all)"},
      {"annotate.group_size", "int", "6", "SR candidates per annotation group"},

      {"remote.url", "string", "", "remote scorer base url (empty = local proxy scorer)"},
      {"remote.timeout_ms", "int", "5000", "remote scorer request timeout"},
      {"remote.retries", "int", "2", "remote scorer retry count"},
  };
  return specs;
}

RunConfig::RunConfig() {
  for (const auto& s : key_specs()) values_[s.key] = s.def;
}

const KeySpec& RunConfig::spec_for(const std::string& key) const {
  for (const auto& s : key_specs()) {
    if (key == s.key) return s;
  }
  throw ConfigError("unknown config key: " + key);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec& spec = spec_for(key);
  const std::string v = trim(value);
  // validate parseability now so bad values fail at configuration time
  if (std::string(spec.type) == "int") {
    std::size_t pos = 0;
    try {
      (void)std::stoll(v, &pos);
    } catch (...) {
      pos = 0;
    }
    if (pos != v.size() || v.empty()) throw ConfigError("key " + key + " expects an integer, got '" + v + "'");
  } else if (std::string(spec.type) == "float") {
    std::size_t pos = 0;
    try {
      (void)std::stod(v, &pos);
    } catch (...) {
      pos = 0;
    }
    if (pos != v.size() || v.empty()) throw ConfigError("key " + key + " expects a number, got '" + v + "'");
  } else if (std::string(spec.type) == "bool") {
    if (v != "true" && v != "false") throw ConfigError("key " + key + " expects true/false");
  }
  values_[key] = v;
}

void RunConfig::set_kv(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("expected key=value, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::int64_t RunConfig::get_int(const std::string& key) const {
  spec_for(key);
  return std::stoll(values_.at(key));
}

double RunConfig::get_double(const std::string& key) const {
  spec_for(key);
  return std::stod(values_.at(key));
}

std::string RunConfig::get_string(const std::string& key) const {
  spec_for(key);
  return values_.at(key);
}

bool RunConfig::get_bool(const std::string& key) const {
  spec_for(key);
  return values_.at(key) == "true";
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

std::string RunConfig::documentation() {
  std::ostringstream os;
  for (const auto& s : key_specs()) {
    os << s.key << " (" << s.type << ", default " << (s.def[0] ? s.def : "\"\"") << "): " << s.doc
       << "\n";
  }
  return os.str();
}

}  // namespace flowsr::cli
