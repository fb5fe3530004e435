// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance [--workdir DIR] [--only N[,N...]]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "unetplus/augment.hpp"
#include "unetplus/commands.hpp"
#include "unetplus/layers.hpp"
#include "unetplus/metrics.hpp"
#include "unetplus/ops.hpp"

using namespace unetplus;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Training recipe shared by the end-to-end criteria.
RunConfig recipe(LabelMode mode, const fs::path& out) {
  RunConfig cfg;
  cfg.mode = mode;
  cfg.base_channels = 16;
  cfg.depth = 4;
  cfg.decoder = DecoderMode::Nearest;
  cfg.n_samples = 20;
  cfg.image_size = 64;
  cfg.learning_rate = 1e-3;
  cfg.seed = 2024;
  cfg.timing = false;
  cfg.out = out.string();
  return cfg;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto rows = run_grad_cases(standard_grad_cases(0), 1e-4);
  const double secs = seconds_since(t0);
  std::map<std::string, std::size_t> per_op;
  double worst = 0;
  std::string failed;
  for (const auto& r : rows) {
    ++per_op[r.op];
    worst = std::max(worst, r.result.max_rel_error);
    if (!r.passed) failed += " " + r.op + shape_str(r.shape);
  }
  bool coverage = true;
  for (const char* op : {"conv2d.input", "conv2d.weight", "conv2d.bias", "batchnorm.input", "batchnorm.gamma",
                         "batchnorm.beta", "maxpool2d", "nn_upsample", "transposed_conv2d.input",
                         "transposed_conv2d.weight", "transposed_conv2d.bias", "bce_loss", "combined_loss"}) {
    coverage = coverage && per_op[op] >= 5;
  }
  return {failed.empty() && coverage && secs < 120.0,
          fmt("%zu checks, max rel err %.2e, %.1f s%s%s", rows.size(), worst, secs, coverage ? "" : ", missing ops",
              failed.empty() ? "" : (", failed:" + failed).c_str())};
}

Outcome metric_oracle() {
  const auto t0 = Clock::now();
  std::size_t pairs = 0, bad = 0;
  std::vector<std::uint8_t> t(9), p(9);
  for (unsigned a = 0; a < 512; ++a) {
    for (unsigned b = 0; b < 512; ++b) {
      std::set<unsigned> sa, sb, inter, uni;
      for (unsigned i = 0; i < 9; ++i) {
        t[i] = (a >> i) & 1u;
        p[i] = (b >> i) & 1u;
        if (t[i]) sa.insert(i);
        if (p[i]) sb.insert(i);
      }
      std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(inter, inter.end()));
      std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(uni, uni.end()));
      const double oi = uni.empty() ? 1.0 : double(inter.size()) / double(uni.size());
      const double od = uni.empty() ? 1.0 : 2.0 * double(inter.size()) / double(sa.size() + sb.size());
      const double i = iou_hard(t, p), d = dice(t, p);
      bad += i != oi || d != od || std::abs(d - 2 * i / (1 + i)) > 1e-15;
      ++pairs;
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 60.0, fmt("%zu pairs, %zu mismatches, %.1f s", pairs, bad, secs)};
}

Outcome upsample_semantics() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 1.0);
  std::size_t bad = 0;
  for (std::size_t theta = 1; theta <= 4; ++theta) {
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t n = 2, c = 3, h = 3 + trial, w = 5 - trial % 2;
      Tensor<double> x({n, c, h, w});
      for (auto& v : x.data()) v = d(rng);
      Tape<double> tape;
      const auto up = nn_upsample(tape.constant(x), theta).value();
      for (std::size_t b = 0; b < n * c; ++b) {
        for (std::size_t i = 0; i < h * theta; ++i) {
          for (std::size_t j = 0; j < w * theta; ++j) {
            bad += up[(b * h * theta + i) * w * theta + j] != x[(b * h + i / theta) * w + j / theta];
          }
        }
      }
      bad += !(avg_pool2d(nn_upsample(tape.constant(x), theta), theta).value() == x);
    }
  }
  return {bad == 0, fmt("theta 1..4, 20 random inputs, %zu mismatches", bad)};
}

Outcome train_to(LabelMode mode, std::size_t budget, double target, const fs::path& out) {
  RunConfig cfg = recipe(mode, out);
  cfg.epochs = budget;
  cfg.stop_at_dice = target;
  const auto t0 = Clock::now();
  const TrainResult r = cmd_train(cfg);
  const double secs = seconds_since(t0);
  const bool reached = r.best.mean_dice >= target;
  return {reached && secs < 900.0,
          fmt("%s: dice %.4f at epoch %zu (target %.2f, budget %zu), %.0f s", to_string(mode).c_str(),
              r.best.mean_dice, r.best_epoch, target, budget, secs)};
}

Outcome end_to_end(const fs::path& work) {
  const Outcome binary = train_to(LabelMode::Binary, 200, 0.95, work / "train_binary");
  const Outcome parts = train_to(LabelMode::Parts, 300, 0.85, work / "train_parts");
  return {binary.pass && parts.pass, binary.detail + "; " + parts.detail};
}

Outcome artifact_suppression(const fs::path& work) {
  RunConfig cfg;
  cfg.n_seeds = 20;
  cfg.seed = 0;
  cfg.out = (work / "compare").string();
  const DecoderComparison r = cmd_compare_decoders(cfg);
  return {r.rows.size() >= 20 && r.median_nearest < r.median_transposed4,
          fmt("%zu seeds, median energy nearest %.4f < transposed4 %.4f (transposed2 %.4f)", r.rows.size(),
              r.median_nearest, r.median_transposed4, r.median_transposed2)};
}

Outcome transfer(const fs::path& work) {
  RunConfig cfg = recipe(LabelMode::Binary, work / "transfer");
  cfg.transfer_seeds = 5;
  cfg.epochs = 100;
  cfg.target_dice = 0.8;
  const TransferReport r = cmd_pretrain_transfer(cfg, &std::cout);
  std::size_t reached = 0;
  for (const auto& row : r.rows) reached += row.epochs_pretrained <= r.budget && row.epochs_random <= r.budget;
  return {r.rows.size() >= 5 && r.median_pretrained <= r.median_random,
          fmt("%zu seed pairs, median epochs to dice 0.8: pretrained %.1f <= random %.1f (%zu/%zu pairs reached)",
              r.rows.size(), r.median_pretrained, r.median_random, reached, r.rows.size())};
}

Outcome parameter_economy() {
  std::size_t specs = 0, bad = 0;
  for (auto enc : {EncoderKind::Vgg11Mini, EncoderKind::Vgg16Mini}) {
    for (std::size_t base : {1, 4, 16, 64}) {
      for (std::size_t depth = 1; depth <= 5; ++depth) {
        for (std::size_t classes : {1, 4}) {
          ModelSpec s;
          s.encoder = enc;
          s.base_channels = base;
          s.depth = depth;
          s.num_classes = classes;
          const std::size_t nearest = build_model<float>(s, 1).parameter_count();
          s.decoder = DecoderMode::Transposed4;
          const std::size_t t4 = build_model<float>(s, 1).parameter_count();
          const auto ch = s.encoder_channels();
          std::size_t closed = 0;
          for (std::size_t k = 1; k < ch.size(); ++k) closed += ch[k] * ch[k] * 16 + ch[k];
          bad += !(nearest < t4 && t4 - nearest == closed);
          ++specs;
        }
      }
    }
  }
  return {bad == 0, fmt("%zu specs, %zu violations", specs, bad)};
}

Outcome determinism(const fs::path& work) {
  auto run = [&](const std::string& name) {
    RunConfig cfg = recipe(LabelMode::Binary, work / name);
    cfg.epochs = 5;
    return cmd_train(cfg);
  };
  const TrainResult a = run("determinism_a"), b = run("determinism_b");
  const bool same_ckpt = slurp(a.checkpoint_path) == slurp(b.checkpoint_path);
  const bool same_metrics = slurp(a.metrics_path) == slurp(b.metrics_path);
  return {same_ckpt && same_metrics,
          fmt("two 5-epoch runs: checkpoint %s, metrics %s", same_ckpt ? "identical" : "DIFFER",
              same_metrics ? "identical" : "DIFFER")};
}

Outcome augmentation_invariants() {
  DatasetConfig dc;
  dc.n_samples = 50;
  dc.mode = LabelMode::Parts;
  dc.seed = 99;
  const auto samples = gen_synthetic(dc);
  std::size_t elastic_bad = 0, flip_bad = 0, label_bad = 0;
  AffineDraw flip;
  flip.hflip = true;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const SegSample& s = samples[seed % samples.size()];
    ElasticConfig still;
    still.alpha = 0.0;
    still.seed = seed;
    const auto [ei, em] = elastic_transform(s.image, s.mask, still);
    elastic_bad += !(ei == s.image && em == s.mask);
    const auto once = affine_transform(s.image, s.mask, AffineConfig{}, flip);
    const auto twice = affine_transform(once.first, once.second, AffineConfig{}, flip);
    flip_bad += !(twice.first == s.image && twice.second == s.mask);
    const auto out = augment_sample(s, AffineConfig::standard(), ElasticConfig{}, seed, seed % 2 == 1);
    const auto before = s.mask.label_set(), after = out.mask.label_set();
    label_bad += !std::includes(before.begin(), before.end(), after.begin(), after.end());
  }
  return {elastic_bad + flip_bad + label_bad == 0,
          fmt("1000 seeded augmentations: alpha=0 mismatches %zu, double-flip mismatches %zu, new labels %zu",
              elastic_bad, flip_bad, label_bad)};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "unetplus_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: acceptance [--workdir DIR] [--only N[,N...]]\n";
      return 2;
    }
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"metric oracle", metric_oracle},
      {"nearest upsampling semantics", upsample_semantics},
      {"end-to-end training", [&] { return end_to_end(work); }},
      {"artifact suppression", [&] { return artifact_suppression(work); }},
      {"transfer convergence", [&] { return transfer(work); }},
      {"parameter economy", parameter_economy},
      {"determinism", [&] { return determinism(work); }},
      {"augmentation invariants", augmentation_invariants},
  };
  int failures = 0;
  std::vector<std::string> summary;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    const std::string line = fmt("criterion %d (%s): %s - %s", id, criteria[k].first.c_str(), o.pass ? "PASS" : "FAIL",
                                 o.detail.c_str());
    std::cout << line << std::endl;
    summary.push_back(line);
  }
  std::cout << "\nsummary\n";
  for (const auto& s : summary) std::cout << s << "\n";
  return failures == 0 ? 0 : 1;
}
