// Command-line driver: unetplus <subcommand> [--config file] [--seed N] [--out dir] [--key value ...]
// Exit codes: 0 success, 1 validation failure, 2 I/O error.

#include <CLI11.hpp>
#include <algorithm>
#include <iostream>
#include <map>
#include <optional>

#include "unetplus/commands.hpp"

namespace {

using namespace unetplus;

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::map<std::string, std::string> values;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "key=value configuration file");
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--out", o.out, "output directory");
  for (const auto& key : RunConfig::keys()) {
    if (key == "seed" || key == "out") continue;
    std::string dashed = key;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    std::string names = "--" + key;
    if (dashed != key) names += ",--" + dashed;
    sub->add_option_function<std::string>(names, [&o, key](const std::string& v) { o.values[key] = v; },
                                          "override '" + key + "'");
  }
}

RunConfig resolve(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  for (const auto& [k, v] : o.values) cfg.set(k, v);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.out = o.out;
  cfg.validate();
  return cfg;
}

int run(const std::string& name, const RunConfig& cfg) {
  if (name == "train") {
    const TrainResult r = cmd_train(cfg, &std::cout);
    std::cout << "best epoch " << r.best_epoch << "  dice " << r.best.mean_dice << "  checkpoint "
              << r.checkpoint_path << "\n";
  } else if (name == "eval") {
    cmd_eval(cfg, &std::cout);
  } else if (name == "compare-decoders") {
    const DecoderComparison r = cmd_compare_decoders(cfg, &std::cout);
    std::cout << "median nearest " << r.median_nearest << "  transposed4 " << r.median_transposed4
              << "  transposed2 " << r.median_transposed2 << "\n";
  } else if (name == "pretrain-transfer") {
    const TransferReport r = cmd_pretrain_transfer(cfg, &std::cout);
    std::cout << "median epochs to target: pretrained " << r.median_pretrained << "  random " << r.median_random
              << "\n";
  } else if (name == "saliency") {
    cmd_saliency(cfg, &std::cout);
  } else if (name == "gen-data") {
    const auto samples = gen_synthetic(cfg.dataset_config(cfg.n_samples));
    std::cout << save_dataset(cfg.out, samples) << "\n";
  } else if (name == "grad-check") {
    const auto rows = run_grad_cases(standard_grad_cases(cfg.seed));
    std::cout << format_grad_table(rows);
    const auto failed = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.passed; });
    std::cout << (failed ? std::to_string(failed) + " check(s) FAILED\n" : std::string("all checks passed\n"));
    return failed ? kExitValidation : 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Small U-Net style segmentation toolkit"};
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "train a segmentation model"},
      {"eval", "evaluate a checkpoint and write predictions"},
      {"compare-decoders", "checkerboard energy of nearest vs transposed decoders"},
      {"pretrain-transfer", "convergence with and without a pretrained encoder"},
      {"saliency", "occlusion saliency heatmap"},
      {"gen-data", "write a synthetic dataset"},
      {"grad-check", "finite-difference gradient suite"}};
  std::map<std::string, Overrides> overrides;
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), overrides[name]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return run(name, resolve(overrides[name]));
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}
