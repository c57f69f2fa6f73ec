#pragma once

// Run configuration and its flat text format:
//
//   # comment
//   [optional free text is not allowed; every line is]  section.key = value
//
// Any key can be overridden by the environment variable
// NOISY_<SECTION>_<KEY> (upper case), e.g. NOISY_TRAIN_EPOCHS=5.

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "noiseopt/attacks.hpp"
#include "noiseopt/checkpoint.hpp"
#include "noiseopt/corruptions.hpp"
#include "noiseopt/data.hpp"
#include "noiseopt/optim.hpp"
#include "noiseopt/presets.hpp"

namespace noiseopt {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  std::string images;      // IDX image file
  std::string labels;      // IDX label file
  std::string container;   // repo dataset container (alternative to IDX)
  std::string synthetic;   // "blobs" for the synthetic corpus
  std::size_t blob_classes = 2, blob_per_class = 100, blob_dim = 8;
  std::size_t limit = 0;   // use only the first `limit` samples (0 = all)
  SplitRatio ratio{};
  std::uint64_t split_seed = 0;
};

struct TrainConfig {
  WeightOptimizer optimizer = WeightOptimizer::adam;
  double lr = 1e-3;
  double weight_decay = 1e-4;  // applied to weights and biases, never to sigma
  double momentum = 0.9;       // sgd only
  double sigma_lr = 1e-3;
  StepDecay schedule{};
  std::uint32_t epochs = 30;
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;
  EvalNoise eval_noise = EvalNoise::active;  // test-accuracy curve
};

struct EvalConfig {
  std::vector<std::string> suite = {"clean",    "fgsm",    "lbfgs",      "pgd",      "gaussian",
                                    "impulse",  "glass_blur", "contrast", "transfer_fgsm", "transfer_lbfgs"};
  AttackPreset attacks = mnist_attacks();
  EvalNoise noise = EvalNoise::active;
  VictimNoise victim_noise = VictimNoise::frozen_draw;
  CorruptionTables corruption_tables{};
  std::uint64_t seed = 7;
  std::size_t workers = 1;
  std::size_t limit = 0;  // evaluate only the first `limit` test samples (0 = all)
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
};

using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto pos = s.find(sep, start);
    const std::string item = trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  // Accept simple fractions such as 5/255.
  if (const auto slash = v.find('/'); slash != std::string::npos) {
    return to_double(key, v.substr(0, slash)) / to_double(key, v.substr(slash + 1));
  }
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline EvalNoise to_eval_noise(const std::string& key, const std::string& v) {
  if (v == "active") return EvalNoise::active;
  if (v == "disabled") return EvalNoise::disabled;
  throw ConfigError(key + ": expected active|disabled, got '" + v + "'");
}

}  // namespace detail

/// Parses `section.key = value` lines; '#' starts a comment.
inline ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": missing '='");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    const auto dot = key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == key.size()) {
      throw ConfigError("line " + std::to_string(lineno) + ": key '" + key + "' is not of the form section.key");
    }
    out[key] = value;
  }
  return out;
}

inline ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline std::string env_var_for(std::string_view key) {
  std::string name = "NOISY_";
  for (char c : key) name += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return name;
}

inline const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "data.images", "data.labels", "data.container", "data.synthetic", "data.blob_classes",
      "data.blob_per_class", "data.blob_dim", "data.limit", "data.ratio", "data.split_seed",
      "model.preset", "model.layers", "model.activation", "model.hidden", "model.sigma_init", "model.fixed_sigma",
      "train.optimizer", "train.lr", "train.weight_decay", "train.momentum", "train.sigma_lr",
      "train.lr_decay", "train.lr_decay_every", "train.epochs", "train.batch_size", "train.seed",
      "train.eval_noise",
      "eval.suite", "eval.attack_preset", "eval.noise", "eval.victim_noise", "eval.seed", "eval.workers",
      "eval.limit", "eval.fgsm_alpha", "eval.pgd_alpha", "eval.pgd_eps", "eval.pgd_steps", "eval.lbfgs_alpha",
      "eval.lbfgs_steps", "eval.lbfgs_c", "eval.lbfgs_history", "eval.gaussian_scale"};
  return keys;
}

/// Copies NOISY_* environment overrides for every known key into `map`.
inline void apply_env_overrides(ConfigMap& map) {
  for (const std::string& key : known_config_keys()) {
    if (const char* v = std::getenv(env_var_for(key).c_str())) map[key] = detail::trim(v);
  }
}

inline void apply_config(RunConfig& cfg, const ConfigMap& map) {
  using namespace detail;
  for (const auto& [key, v] : map) {
    if (key == "data.images") cfg.data.images = v;
    else if (key == "data.labels") cfg.data.labels = v;
    else if (key == "data.container") cfg.data.container = v;
    else if (key == "data.synthetic") cfg.data.synthetic = v;
    else if (key == "data.blob_classes") cfg.data.blob_classes = to_uint(key, v);
    else if (key == "data.blob_per_class") cfg.data.blob_per_class = to_uint(key, v);
    else if (key == "data.blob_dim") cfg.data.blob_dim = to_uint(key, v);
    else if (key == "data.limit") cfg.data.limit = to_uint(key, v);
    else if (key == "data.split_seed") cfg.data.split_seed = to_uint(key, v);
    else if (key == "data.ratio") {
      const auto parts = split_list(v, ':');
      if (parts.size() != 3) throw ConfigError(key + ": expected train:val:test, got '" + v + "'");
      cfg.data.ratio = {to_uint(key, parts[0]), to_uint(key, parts[1]), to_uint(key, parts[2])};
    }
    else if (key == "model.preset") {
      if (!is_known_preset(v)) throw ConfigError(key + ": unknown preset '" + v + "'");
      cfg.model.preset = v;
    }
    else if (key == "model.layers") cfg.model.layers = v;
    else if (key == "model.activation") {
      try {
        cfg.model.activation = parse_activation(v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(key + ": " + e.what());
      }
    }
    else if (key == "model.hidden") {
      cfg.model.hidden.clear();
      for (const auto& w : split_list(v)) cfg.model.hidden.push_back(to_uint(key, w));
    }
    else if (key == "model.sigma_init") cfg.model.sigma_init = to_double(key, v);
    else if (key == "model.fixed_sigma") cfg.model.fixed_sigma = to_double(key, v);
    else if (key == "train.optimizer") {
      if (v == "adam") cfg.train.optimizer = WeightOptimizer::adam;
      else if (v == "sgd") cfg.train.optimizer = WeightOptimizer::sgd;
      else throw ConfigError(key + ": expected adam|sgd, got '" + v + "'");
    }
    else if (key == "train.lr") cfg.train.lr = to_double(key, v);
    else if (key == "train.weight_decay") cfg.train.weight_decay = to_double(key, v);
    else if (key == "train.momentum") cfg.train.momentum = to_double(key, v);
    else if (key == "train.sigma_lr") cfg.train.sigma_lr = to_double(key, v);
    else if (key == "train.lr_decay") cfg.train.schedule.factor = to_double(key, v);
    else if (key == "train.lr_decay_every") cfg.train.schedule.every = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "train.epochs") cfg.train.epochs = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "train.batch_size") cfg.train.batch_size = to_uint(key, v);
    else if (key == "train.seed") cfg.train.seed = to_uint(key, v);
    else if (key == "train.eval_noise") cfg.train.eval_noise = to_eval_noise(key, v);
    else if (key == "eval.suite") cfg.eval.suite = split_list(v);
    else if (key == "eval.attack_preset") {
      if (v == "mnist") cfg.eval.attacks = mnist_attacks();
      else if (v == "cifar") cfg.eval.attacks = cifar_attacks();
      else if (v == "tiny_imagenet") cfg.eval.attacks = tiny_imagenet_attacks();
      else throw ConfigError(key + ": expected mnist|cifar|tiny_imagenet, got '" + v + "'");
    }
    else if (key == "eval.noise") cfg.eval.noise = to_eval_noise(key, v);
    else if (key == "eval.victim_noise") {
      if (v == "frozen_draw") cfg.eval.victim_noise = VictimNoise::frozen_draw;
      else if (v == "disabled") cfg.eval.victim_noise = VictimNoise::disabled;
      else throw ConfigError(key + ": expected frozen_draw|disabled, got '" + v + "'");
    }
    else if (key == "eval.seed") cfg.eval.seed = to_uint(key, v);
    else if (key == "eval.workers") cfg.eval.workers = to_uint(key, v);
    else if (key == "eval.limit") cfg.eval.limit = to_uint(key, v);
    else if (key == "eval.fgsm_alpha") cfg.eval.attacks.fgsm.step = to_double(key, v);
    else if (key == "eval.pgd_alpha") cfg.eval.attacks.pgd.step = to_double(key, v);
    else if (key == "eval.pgd_eps") cfg.eval.attacks.pgd.budget = to_double(key, v);
    else if (key == "eval.pgd_steps") cfg.eval.attacks.pgd.iterations = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "eval.lbfgs_alpha") cfg.eval.attacks.lbfgs.step = to_double(key, v);
    else if (key == "eval.lbfgs_steps") cfg.eval.attacks.lbfgs.iterations = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "eval.lbfgs_c") cfg.eval.attacks.lbfgs.lbfgs_c = to_double(key, v);
    else if (key == "eval.lbfgs_history") cfg.eval.attacks.lbfgs.lbfgs_history = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "eval.gaussian_scale") cfg.eval.corruption_tables.gaussian_scale = to_double(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

inline void validate(const RunConfig& cfg) {
  if (cfg.train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(cfg.train.lr >= 0.0) || !(cfg.train.sigma_lr >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(cfg.train.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(cfg.model.sigma_init > 0.0)) throw ConfigError("model.sigma_init must be > 0");
  if (!(cfg.model.fixed_sigma >= 0.0)) throw ConfigError("model.fixed_sigma must be >= 0");
  if (cfg.model.hidden.empty()) throw ConfigError("model.hidden must list at least one width");
  if (cfg.eval.workers == 0) throw ConfigError("eval.workers must be positive");
}

/// Loads the dataset described by `cfg` (before splitting).
inline Dataset load_configured_dataset(const DataConfig& cfg) {
  Dataset ds;
  if (cfg.synthetic == "blobs") {
    ds = synthetic_blobs(cfg.blob_classes, cfg.blob_per_class, cfg.blob_dim, cfg.split_seed);
  } else if (!cfg.synthetic.empty()) {
    throw ConfigError("data.synthetic: unknown generator '" + cfg.synthetic + "'");
  } else if (!cfg.container.empty()) {
    ds = load_dataset(cfg.container);
  } else if (!cfg.images.empty() && !cfg.labels.empty()) {
    ds = load_idx(cfg.images, cfg.labels);
  } else {
    throw ConfigError("no dataset configured (set data.images + data.labels, data.container, or data.synthetic)");
  }
  if (cfg.limit && cfg.limit < ds.size()) ds = ds.head(cfg.limit);
  return ds;
}

}  // namespace noiseopt
