#pragma once

// Evaluation campaigns. Each suite entry produces exactly one metrics row.
// Row seeds come from the entry name, so the result does not depend on how
// many worker threads share the work.

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "noiseopt/attacks.hpp"
#include "noiseopt/config.hpp"
#include "noiseopt/corruptions.hpp"
#include "noiseopt/data.hpp"
#include "noiseopt/network.hpp"
#include "noiseopt/report.hpp"
#include "noiseopt/rng.hpp"

namespace noiseopt {

/// Entries in table order: clean, white-box attacks, corruptions, transfer attacks.
inline const std::vector<std::string>& default_suite() {
  static const std::vector<std::string> s = {"clean",   "fgsm",       "lbfgs",    "pgd",           "gaussian",
                                             "impulse", "glass_blur", "contrast", "transfer_fgsm", "transfer_lbfgs"};
  return s;
}

class MissingSurrogateError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline bool is_corruption_entry(const std::string& e) {
  return e == "gaussian" || e == "impulse" || e == "glass_blur" || e == "contrast";
}

inline bool is_transfer_entry(const std::string& e) { return e == "transfer_fgsm" || e == "transfer_lbfgs"; }

inline bool is_known_entry(const std::string& e) {
  return e == "clean" || e == "fgsm" || e == "lbfgs" || e == "pgd" || is_corruption_entry(e) || is_transfer_entry(e);
}

inline std::uint64_t row_seed(std::uint64_t seed, const std::string& entry) {
  return RngStream(seed, stream_id_of(entry)).next_u64();
}

inline MetricsRow evaluate_entry(const NetworkState& net, const std::string& model_id, const Dataset& test,
                                 const EvalConfig& cfg, const NetworkState* surrogate, const std::string& entry) {
  const std::uint64_t seed = row_seed(cfg.seed, entry);
  RngStream eval_rng(seed, stream_id_of("eval-noise"));
  MetricsRow row{model_id, entry, "", "", 0.0};

  auto attack_cfg = [&](const AttackConfig& base) {
    AttackConfig c = base;
    c.seed = seed;
    c.victim_noise = cfg.victim_noise;
    return c;
  };

  if (entry == "clean") {
    row.family = "clean";
    row.params = "noise=" + std::string(to_string(cfg.noise));
    row.accuracy = accuracy(net, test.images, test.labels, cfg.noise, eval_rng);
  } else if (entry == "fgsm" || entry == "lbfgs" || entry == "pgd") {
    const AttackConfig c = attack_cfg(entry == "fgsm" ? cfg.attacks.fgsm
                                      : entry == "pgd" ? cfg.attacks.pgd
                                                       : cfg.attacks.lbfgs);
    row.family = "white_box";
    row.params = c.describe();
    const Tensor adv = attack_network(net, test.images, test.labels, c);
    row.accuracy = accuracy(net, adv, test.labels, cfg.noise, eval_rng);
  } else if (is_corruption_entry(entry)) {
    row.family = "black_box";
    row.params = "mean_over_severities=1..5";
    row.accuracy =
        corruption_accuracy(net, test, parse_corruption_kind(entry), cfg.noise, seed, cfg.corruption_tables).mean;
  } else if (is_transfer_entry(entry)) {
    if (!surrogate) throw MissingSurrogateError("evaluate: '" + entry + "' needs a surrogate model");
    const AttackConfig c = attack_cfg(entry == "transfer_fgsm" ? cfg.attacks.fgsm : cfg.attacks.lbfgs);
    row.family = "black_box";
    row.params = c.describe();
    row.accuracy = transfer_attack(*surrogate, net, test.images, test.labels, c, cfg.noise, eval_rng).victim_accuracy;
  } else {
    throw std::invalid_argument("evaluate: unknown suite entry '" + entry + "'");
  }
  return row;
}

}  // namespace detail

/// Checks the suite before any work starts.
inline void validate_suite(const std::vector<std::string>& suite, const NetworkState* surrogate) {
  if (suite.empty()) throw std::invalid_argument("evaluate: empty suite");
  for (const std::string& e : suite) {
    if (!detail::is_known_entry(e)) throw std::invalid_argument("evaluate: unknown suite entry '" + e + "'");
    if (detail::is_transfer_entry(e) && !surrogate) {
      throw MissingSurrogateError("evaluate: '" + e + "' needs a surrogate model");
    }
  }
}

inline MetricsReport evaluate(const NetworkState& net, const std::string& model_id, const Dataset& test_set,
                              const EvalConfig& cfg, const NetworkState* surrogate = nullptr) {
  validate_suite(cfg.suite, surrogate);
  if (test_set.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  if (!(test_set.input_shape() == net.arch.input)) {
    throw DimensionError("evaluate: test images do not match the model input");
  }
  const Dataset test = cfg.limit && cfg.limit < test_set.size() ? test_set.head(cfg.limit) : test_set;

  MetricsReport report;
  report.rows.resize(cfg.suite.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto work = [&] {
    for (std::size_t i = next++; i < cfg.suite.size(); i = next++) {
      try {
        report.rows[i] = detail::evaluate_entry(net, model_id, test, cfg, surrogate, cfg.suite[i]);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(cfg.workers, 1), cfg.suite.size());
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return report;
}

}  // namespace noiseopt
