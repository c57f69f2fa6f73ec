// noiseopt command-line driver.
//
// Every subcommand reads the run configuration from --config (optional),
// then NOISY_<SECTION>_<KEY> environment variables, then --set key=value
// flags, in that order. Errors end the process with a non-zero status and a
// single line on stderr:
//   error: code=<code> message="<text>"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "noiseopt/noiseopt.hpp"

namespace fs = std::filesystem;
using namespace noiseopt;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
};

RunConfig load_run_config(const CommonOptions& o) {
  ConfigMap map;
  if (!o.config.empty()) map = read_config_file(o.config);
  apply_env_overrides(map);
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    map[detail::trim(kv.substr(0, eq))] = detail::trim(kv.substr(eq + 1));
  }
  RunConfig cfg;
  apply_config(cfg, map);
  validate(cfg);
  return cfg;
}

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("-c,--config", o.config, "Config file (section.key = value lines)");
  app->add_option("-s,--set", o.sets, "Override a config key, e.g. --set train.epochs=5")->take_all();
}

std::string quote(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

int fail(const std::string& code, const std::string& message) {
  std::cerr << "error: code=" << code << " message=\"" << quote(message) << "\"\n";
  return code == "usage" ? 2 : 1;
}

const char* format_code(FormatError::Code c) {
  switch (c) {
    case FormatError::Code::io: return "io";
    case FormatError::Code::bad_magic: return "bad_magic";
    case FormatError::Code::truncated: return "truncated";
    case FormatError::Code::count_mismatch: return "count_mismatch";
    case FormatError::Code::bad_label: return "bad_label";
    case FormatError::Code::bad_format: return "bad_format";
  }
  return "format";
}

Dataset test_split(const RunConfig& cfg) {
  Dataset test = prepare_data(cfg).test;
  if (cfg.eval.limit && cfg.eval.limit < test.size()) test = test.head(cfg.eval.limit);
  return test;
}

void print_accuracy(const std::string& what, double acc) {
  std::printf("%s accuracy=%s\n", what.c_str(), format_double(acc).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noiseopt: neural networks with trained per-neuron noise levels"};
  app.require_subcommand(1);

  CommonOptions train_o, eval_o, attack_o, corrupt_o, sal_o;

  // train
  std::string train_out = "model.ckpt", train_curve, train_resume;
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes a checkpoint after every epoch");
  add_common(train_cmd, train_o);
  train_cmd->add_option("-o,--out", train_out, "Checkpoint path")->capture_default_str();
  train_cmd->add_option("--curve", train_curve, "Write the per-epoch curve CSV here");
  train_cmd->add_option("--resume", train_resume, "Continue from a checkpoint with trainer state");

  // evaluate
  std::string eval_ckpt, eval_surrogate, eval_out;
  std::vector<std::string> eval_suite;
  std::size_t eval_workers = 0;
  auto* eval_cmd = app.add_subcommand("evaluate", "Run the evaluation suite on a checkpoint");
  add_common(eval_cmd, eval_o);
  eval_cmd->add_option("-m,--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval_cmd->add_option("--surrogate", eval_surrogate, "Surrogate checkpoint for transfer attacks");
  eval_cmd->add_option("--suite", eval_suite, "Suite entries (default: the full suite)")->delimiter(',');
  eval_cmd->add_option("-j,--workers", eval_workers, "Parallel evaluation workers");
  eval_cmd->add_option("-o,--out", eval_out, "Metrics CSV path (default: stdout)");

  // attack
  std::string atk_ckpt, atk_kind = "fgsm", atk_out;
  double atk_alpha = -1, atk_eps = -1;
  std::uint32_t atk_steps = 0;
  auto* attack_cmd = app.add_subcommand("attack", "Craft adversarial test examples and report accuracy");
  add_common(attack_cmd, attack_o);
  attack_cmd->add_option("-m,--checkpoint", atk_ckpt, "Model checkpoint")->required();
  attack_cmd->add_option("-k,--kind", atk_kind, "fgsm | pgd | lbfgs")->capture_default_str();
  attack_cmd->add_option("--alpha", atk_alpha, "Step size (default from eval.attack_preset)");
  attack_cmd->add_option("--eps", atk_eps, "PGD l-inf budget");
  attack_cmd->add_option("--steps", atk_steps, "Iterations for pgd / lbfgs");
  attack_cmd->add_option("-o,--out", atk_out, "Write the adversarial set (dataset container)");
  std::string atk_csv;
  attack_cmd->add_option("--csv", atk_csv, "Write the result as a metrics CSV row");

  // corrupt
  std::string cor_kind = "gaussian", cor_out, cor_ckpt;
  int cor_severity = 1;
  auto* corrupt_cmd = app.add_subcommand("corrupt", "Apply a corruption to the test split");
  add_common(corrupt_cmd, corrupt_o);
  corrupt_cmd->add_option("-k,--kind", cor_kind, "gaussian | impulse | glass_blur | contrast")->capture_default_str();
  corrupt_cmd->add_option("--severity", cor_severity, "1..5")->capture_default_str();
  corrupt_cmd->add_option("-o,--out", cor_out, "Write the corrupted set (dataset container)");
  corrupt_cmd->add_option("-m,--checkpoint", cor_ckpt, "Also report this model's accuracy on it");

  // saliency
  std::string sal_ckpt, sal_dir = ".";
  std::vector<std::size_t> sal_indices = {0};
  SaliencyConfig sal_cfg;
  int sal_class = -1;
  bool sal_noise = false;
  auto* sal_cmd = app.add_subcommand("saliency", "SmoothGrad maps for test samples as PGM images");
  add_common(sal_cmd, sal_o);
  sal_cmd->add_option("-m,--checkpoint", sal_ckpt, "Model checkpoint")->required();
  sal_cmd->add_option("-i,--index", sal_indices, "Test-split sample indices")->delimiter(',');
  sal_cmd->add_option("--std", sal_cfg.smoothing_std, "Smoothing noise std")->capture_default_str();
  sal_cmd->add_option("-n,--samples", sal_cfg.repetitions, "Number of perturbed copies")->capture_default_str();
  sal_cmd->add_option("--class", sal_class, "Target class (default: predicted class)");
  sal_cmd->add_option("--seed", sal_cfg.seed, "Smoothing seed")->capture_default_str();
  sal_cmd->add_flag("--victim-noise", sal_noise, "Keep the model's own noise active");
  sal_cmd->add_option("-d,--out-dir", sal_dir, "Output directory")->capture_default_str();

  // gradcheck
  std::string gc_input = "4", gc_layers = "dense:5:sigmoid:noise;dense:3:identity";
  std::uint64_t gc_seed = 1;
  GradcheckOptions gc_opt;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of weight and noise-level gradients");
  gc_cmd->add_option("--input", gc_input, "Input shape: N or CxHxW")->capture_default_str();
  gc_cmd->add_option("--layers", gc_layers, "kind:width:activation[:noise|fixed][:pool];...")->capture_default_str();
  gc_cmd->add_option("--seed", gc_seed, "Seed")->capture_default_str();
  gc_cmd->add_option("--tol", gc_opt.rel_tol, "Relative tolerance")->capture_default_str();
  gc_cmd->add_option("--step", gc_opt.h, "Finite-difference step")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (*train_cmd) {
      const RunConfig cfg = load_run_config(train_o);
      TrainOptions opt;
      opt.checkpoint_path = fs::path(train_out);
      if (!train_resume.empty()) opt.resume = load_checkpoint(train_resume);
      opt.on_epoch = [](const EpochRecord& r) {
        std::printf("epoch %u train_loss=%.6f val_loss=%.6f test_accuracy=%.4f\n", r.epoch, r.train_loss, r.val_loss,
                    r.test_accuracy);
        std::fflush(stdout);
      };
      const TrainResult res = train(cfg, opt);
      if (cfg.train.epochs == 0 || res.report.curve.empty()) save_checkpoint(res.checkpoint, train_out);
      if (!train_curve.empty()) write_curve_csv(res.report, train_curve);
      std::printf("checkpoint %s\n", train_out.c_str());
    } else if (*eval_cmd) {
      RunConfig cfg = load_run_config(eval_o);
      if (!eval_suite.empty()) cfg.eval.suite = eval_suite;
      if (eval_workers) cfg.eval.workers = eval_workers;
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      std::optional<Checkpoint> sur;
      if (!eval_surrogate.empty()) sur = load_checkpoint(eval_surrogate);
      validate_suite(cfg.eval.suite, sur ? &sur->net : nullptr);
      const MetricsReport rep = evaluate(ck.net, ck.preset, test_split(cfg), cfg.eval, sur ? &sur->net : nullptr);
      if (eval_out.empty()) {
        std::cout << metrics_csv(rep);
      } else {
        write_metrics_csv(rep, eval_out);
        std::printf("metrics %s\n", eval_out.c_str());
      }
    } else if (*attack_cmd) {
      const RunConfig cfg = load_run_config(attack_o);
      const Checkpoint ck = load_checkpoint(atk_ckpt);
      const AttackKind kind = parse_attack_kind(atk_kind);
      AttackConfig ac = kind == AttackKind::fgsm ? cfg.eval.attacks.fgsm
                        : kind == AttackKind::pgd ? cfg.eval.attacks.pgd
                                                  : cfg.eval.attacks.lbfgs;
      if (atk_alpha >= 0) ac.step = atk_alpha;
      if (atk_eps >= 0) ac.budget = atk_eps;
      if (atk_steps) ac.iterations = atk_steps;
      ac.seed = cfg.eval.seed;
      ac.victim_noise = cfg.eval.victim_noise;
      const Dataset test = test_split(cfg);
      Dataset adv = test;
      adv.images = attack_network(ck.net, test.images, test.labels, ac);
      adv.name = test.name + "/" + std::string(to_string(kind));
      RngStream rng(cfg.eval.seed, stream_id_of("eval-noise"));
      const double acc = accuracy(ck.net, adv.images, adv.labels, cfg.eval.noise, rng);
      print_accuracy(std::string(to_string(kind)) + " " + ac.describe(), acc);
      if (!atk_out.empty()) save_dataset(adv, atk_out);
      if (!atk_csv.empty()) {
        MetricsReport rep;
        rep.rows.push_back({ck.preset, std::string(to_string(kind)), "white_box", ac.describe(), acc});
        write_metrics_csv(rep, atk_csv);
      }
    } else if (*corrupt_cmd) {
      const RunConfig cfg = load_run_config(corrupt_o);
      const CorruptionSpec spec{parse_corruption_kind(cor_kind), cor_severity, cfg.eval.seed,
                                cfg.eval.corruption_tables};
      const Dataset out = corrupt(test_split(cfg), spec);
      if (!cor_ckpt.empty()) {
        const Checkpoint ck = load_checkpoint(cor_ckpt);
        RngStream rng(cfg.eval.seed, stream_id_of("eval-noise"));
        print_accuracy(out.name, accuracy(ck.net, out.images, out.labels, cfg.eval.noise, rng));
      }
      if (!cor_out.empty()) save_dataset(out, cor_out);
      std::printf("corrupted %zu images (%s, severity %d)\n", out.size(), cor_kind.c_str(), cor_severity);
    } else if (*sal_cmd) {
      const RunConfig cfg = load_run_config(sal_o);
      const Checkpoint ck = load_checkpoint(sal_ckpt);
      const Dataset test = prepare_data(cfg).test;
      if (sal_class >= 0) sal_cfg.target_class = static_cast<std::size_t>(sal_class);
      sal_cfg.victim_noise = sal_noise ? EvalNoise::active : EvalNoise::disabled;
      fs::create_directories(sal_dir);
      for (std::size_t idx : sal_indices) {
        if (idx >= test.size()) throw std::out_of_range("sample index " + std::to_string(idx) + " outside the test split");
        const SaliencyResult r = saliency_map(ck.net, test.images.slice_rows(idx, idx + 1), sal_cfg);
        const fs::path p = fs::path(sal_dir) / saliency_filename(ck.preset, idx, r.target_class);
        write_pgm(p, normalize_minmax(r.map));
        std::printf("saliency %s\n", p.c_str());
      }
    } else if (*gc_cmd) {
      const Architecture arch = parse_architecture(gc_input, gc_layers);
      const GradcheckReport rep = gradcheck(arch, gc_seed, gc_opt);
      for (const GradcheckRow& r : rep.rows) {
        std::printf("layer=%zu param=%s coordinates=%zu failures=%zu max_rel_error=%.3e\n", r.layer, r.param.c_str(),
                    r.coordinates, r.failures, r.max_error);
      }
      std::printf("%s\n", rep.summary().c_str());
      if (!rep.passed) return fail("gradcheck_failed", rep.summary());
    }
  } catch (const ConfigError& e) {
    return fail("config", e.what());
  } catch (const MissingSurrogateError& e) {
    return fail("missing_surrogate", e.what());
  } catch (const FormatError& e) {
    return fail(format_code(e.code()), e.what());
  } catch (const NonFiniteLossError& e) {
    return fail("non_finite_loss", e.what());
  } catch (const ArchitectureError& e) {
    return fail("architecture", e.what());
  } catch (const DimensionError& e) {
    return fail("dimension", e.what());
  } catch (const std::out_of_range& e) {
    return fail("out_of_range", e.what());
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
