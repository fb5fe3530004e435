#include "unetplus/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <numbers>
#include <random>

#include <json.hpp>

#include "unetplus/checkpoint.hpp"
#include "unetplus/ops.hpp"

namespace unetplus {
namespace fs = std::filesystem;

namespace {

// Salts separating the random streams of one run.
constexpr std::uint64_t kInitSalt = 0x1001;
constexpr std::uint64_t kTrainSalt = 0x1002;
constexpr std::uint64_t kHeadSalt = 0x1003;
constexpr std::uint64_t kPretrainSalt = 0x1004;
constexpr std::uint64_t kPretrainDataSalt = 0x1005;
constexpr std::size_t kEvalChunk = 8;
constexpr std::size_t kCountClasses = 4;  // 0..3 instruments

std::string indexed(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.%s", prefix, i, ext);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

// Per-pixel labels from logits [N, C, H, W].
std::vector<Mask> logits_to_masks(const Tensor<float>& logits, double threshold) {
  const std::size_t n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3), hw = h * w;
  std::vector<Mask> out;
  const float* p = logits.data().data();
  // sigmoid(x) > t  <=>  x > logit(t)
  const double cut = std::log(threshold / (1.0 - threshold));
  for (std::size_t b = 0; b < n; ++b) {
    Mask m(h, w);
    for (std::size_t q = 0; q < hw; ++q) {
      if (c == 1) {
        m.labels[q] = p[b * hw + q] > cut ? 1 : 0;
      } else {
        std::size_t best = 0;
        for (std::size_t k = 1; k < c; ++k) {
          if (p[(b * c + k) * hw + q] > p[(b * c + best) * hw + q]) best = k;
        }
        m.labels[q] = static_cast<std::uint8_t>(best);
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

Tensor<float> stack(const std::vector<Tensor<float>>& images) {
  const Shape& s = images.at(0).shape();
  Tensor<float> out({images.size(), s[0], s[1], s[2]});
  const std::size_t each = images[0].size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != s) throw ShapeError("cannot batch images of different shapes");
    std::copy(images[i].data().begin(), images[i].data().end(), out.data().begin() + static_cast<long>(i * each));
  }
  return out;
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::array<float, 3> label_color(std::size_t label) {
  static const std::array<std::array<float, 3>, 6> palette{
      {{0.1f, 0.9f, 0.2f}, {0.2f, 0.4f, 1.0f}, {1.0f, 0.9f, 0.1f}, {0.1f, 0.9f, 0.9f}, {0.9f, 0.2f, 0.9f},
       {1.0f, 1.0f, 1.0f}}};
  return palette[(label - 1) % palette.size()];
}

void write_heatmap(const fs::path& path, const Tensor<double>& heat) {
  const std::size_t h = heat.dim(0), w = heat.dim(1);
  double top = 0;
  for (double v : heat.data()) top = std::max(top, v);
  Tensor<float> img({1, h, w});
  for (std::size_t q = 0; q < h * w; ++q) img[q] = top > 0 ? static_cast<float>(heat[q] / top) : 0.0f;
  write_image(path.string(), img);
}

}  // namespace

// ---------------------------------------------------------------------------
// Data

Tensor<float> PreparedData::normalize(const Tensor<float>& image) const {
  return corpus ? normalize_with(image, *corpus) : normalize_zscore(image);
}

PreparedData prepare_data(const RunConfig& cfg, bool eval) {
  PreparedData d;
  const std::string& manifest = eval && !cfg.eval_manifest.empty() ? cfg.eval_manifest : cfg.train_manifest;
  d.raw = manifest.empty() ? gen_synthetic(cfg.dataset_config(cfg.n_samples)) : load_dataset(manifest);
  if (cfg.crop_border) {
    for (auto& s : d.raw) {
      const Rect r = detect_content_rect(s.image);
      std::tie(s.image, s.mask) = crop_border(s.image, s.mask, r);
    }
  }
  const std::size_t unit = std::size_t{1} << cfg.depth;
  const std::size_t h = d.raw[0].mask.height, w = d.raw[0].mask.width;
  for (const auto& s : d.raw) {
    if (s.mask.height != h || s.mask.width != w) throw ConfigError("samples differ in size after preprocessing");
    if (s.image.dim(0) != 3) throw ShapeError("images must have 3 channels");
  }
  if (h % unit != 0 || w % unit != 0) {
    throw ConfigError("image size " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by 2^depth = " +
                      std::to_string(unit));
  }
  const std::size_t labels = label_count(cfg.num_classes());
  for (const auto& s : d.raw) {
    for (std::uint8_t v : s.mask.labels) {
      if (v >= labels) throw LabelError("mask label " + std::to_string(v) + " exceeds mode " + to_string(cfg.mode));
    }
  }
  if (cfg.normalization == Normalization::Corpus) d.corpus = corpus_stats(d.raw);
  return d;
}

Tensor<float> stack_inputs(const PreparedData& data, const std::vector<std::size_t>& indices) {
  std::vector<Tensor<float>> images;
  for (std::size_t i : indices) images.push_back(data.normalize(data.raw.at(i).image));
  return stack(images);
}

// ---------------------------------------------------------------------------
// Training and evaluation

namespace {

// Eval-mode logits for every sample, in chunks.
template <typename Fn>
void for_each_eval_chunk(Model<float>& model, const PreparedData& data, Fn&& fn) {
  const std::size_t n = data.raw.size();
  for (std::size_t b = 0; b < n; b += kEvalChunk) {
    std::vector<std::size_t> idx(std::min(kEvalChunk, n - b));
    std::iota(idx.begin(), idx.end(), b);
    fn(idx, model.predict(stack_inputs(data, idx)));
  }
}

}  // namespace

std::vector<Mask> predict_masks(Model<float>& model, const PreparedData& data, double threshold) {
  std::vector<Mask> out;
  for_each_eval_chunk(model, data, [&](const std::vector<std::size_t>&, const Tensor<float>& logits) {
    for (auto& m : logits_to_masks(logits, threshold)) out.push_back(std::move(m));
  });
  return out;
}

MetricsReport evaluate(Model<float>& model, const PreparedData& data, double threshold,
                       std::vector<Mask>* predictions) {
  const std::size_t nc = model.spec().num_classes;
  std::vector<MetricsReport> reports;
  double loss = 0;
  for_each_eval_chunk(model, data, [&](const std::vector<std::size_t>& idx, const Tensor<float>& logits) {
    std::vector<Mask> truth;
    for (std::size_t i : idx) truth.push_back(data.raw[i].mask);
    loss += static_cast<double>(combined_loss(encode_targets<float>(truth, nc), logits)) * static_cast<double>(idx.size());
    auto preds = logits_to_masks(logits, threshold);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      reports.push_back(multiclass_report(truth[k], preds[k], label_count(nc)));
      if (predictions) predictions->push_back(std::move(preds[k]));
    }
  });
  MetricsReport r = average_reports(reports);
  r.loss = loss / static_cast<double>(data.raw.size());
  return r;
}

std::vector<EpochLog> train_segmentation(Model<float>& model, const PreparedData& data, const RunConfig& cfg,
                                         std::uint64_t seed, const EpochCallback& on_epoch) {
  cfg.validate();
  if (model.head() != Model<float>::Head::Segmentation) throw ConfigError("train_segmentation needs a segmentation head");
  Adam<float> adam(cfg.adam());
  const std::size_t n = data.raw.size(), nc = model.spec().num_classes;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor<float>> cached;
  if (!cfg.augment) {
    for (const auto& s : data.raw) cached.push_back(data.normalize(s.image));
  }
  std::vector<EpochLog> logs;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix_seed(seed, 2 * epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t aug_seed = mix_seed(seed, 2 * epoch + 1);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < n; b += cfg.batch_size) {
      std::vector<Tensor<float>> images;
      std::vector<Mask> masks;
      for (std::size_t k = b; k < std::min(n, b + cfg.batch_size); ++k) {
        const std::size_t i = order[k];
        if (cfg.augment) {
          SegSample s = augment_sample(data.raw[i], cfg.affine, cfg.elastic, mix_seed(aug_seed, i), cfg.elastic_first);
          images.push_back(data.normalize(s.image));
          masks.push_back(std::move(s.mask));
        } else {
          images.push_back(cached[i]);
          masks.push_back(data.raw[i].mask);
        }
      }
      Tape<float> tape;
      const Binding<float> binding = model.bind(tape, true);
      Var<float> logits = model.forward(binding, tape.constant(stack(images)), Mode::Train);
      Var<float> loss = combined_loss(logits, encode_targets<float>(masks, nc));
      const Gradients<float> grads = tape.backward(loss);
      std::vector<const Tensor<float>*> g;
      for (const auto& v : binding.vars) g.push_back(&grads[v]);
      adam.step(model.parameters(), g);
      loss_sum += loss.value().item();
      ++batches;
    }
    EpochLog log{epoch, loss_sum / static_cast<double>(batches), evaluate(model, data, cfg.threshold)};
    log.report.epoch = epoch;
    logs.push_back(log);
    if (on_epoch && !on_epoch(logs.back(), model)) break;
    if (cfg.stop_at_dice > 0.0 && log.report.mean_dice >= cfg.stop_at_dice) break;
  }
  return logs;
}

TrainResult cmd_train(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const fs::path out(cfg.out);
  fs::create_directories(out);
  const PreparedData data = prepare_data(cfg);
  const std::uint64_t init_seed = mix_seed(cfg.seed, kInitSalt), train_seed = mix_seed(cfg.seed, kTrainSalt);
  Model<float> model = build_model<float>(cfg.model_spec(), init_seed);

  TrainResult result;
  result.dataset_hash = dataset_hash(data.raw);
  result.manifest_path = (out / "manifest.txt").string();
  result.metrics_path = (out / "metrics.jsonl").string();
  result.checkpoint_path = (out / "model.ckpt").string();
  {
    auto m = open_out(result.manifest_path);
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(result.dataset_hash));
    m << "# config\n" << format_run_config(cfg) << "# derived\n"
      << "seed.init = " << init_seed << "\n"
      << "seed.train = " << train_seed << "\n"
      << "data.seed = " << cfg.effective_data_seed() << "\n"
      << "dataset.samples = " << data.raw.size() << "\n"
      << "dataset.hash = " << hash << "\n"
      << "model.parameters = " << model.parameter_count() << "\n";
  }
  auto metrics = open_out(result.metrics_path);
  double best = -1.0;
  auto on_epoch = [&](const EpochLog& e, const Model<float>& m) {
    MetricsReport r = e.report;
    r.loss = e.loss;
    r.seed = cfg.seed;
    r.seconds = cfg.timing ? elapsed(start) : 0.0;
    metrics << r.to_jsonl();
    metrics.flush();
    if (r.mean_dice > best) {
      best = r.mean_dice;
      result.best = r;
      result.best_epoch = e.epoch;
      save_model(result.checkpoint_path, m);
    }
    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %zu  loss %.5f  iou %.4f  dice %.4f\n", e.epoch, e.loss, r.mean_iou,
                    r.mean_dice);
      *log << line << std::flush;
    }
    return true;
  };
  result.epochs = train_segmentation(model, data, cfg, train_seed, on_epoch);
  return result;
}

Tensor<float> overlay_mask(const Tensor<float>& image, const Mask& mask) {
  if (image.rank() != 3 || image.dim(1) != mask.height || image.dim(2) != mask.width) {
    throw ShapeError("overlay: image and mask are not aligned");
  }
  const std::size_t c = image.dim(0), hw = mask.size();
  Tensor<float> out({3, mask.height, mask.width});
  for (std::size_t q = 0; q < hw; ++q) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const float base = image[(c == 3 ? ch : 0) * hw + q];
      out[ch * hw + q] = mask.labels[q] ? 0.45f * base + 0.55f * label_color(mask.labels[q])[ch] : base;
    }
  }
  return out;
}

MetricsReport cmd_eval(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (cfg.checkpoint.empty()) throw ConfigError("eval needs checkpoint = <path>");
  const PreparedData data = prepare_data(cfg, true);
  Model<float> model = build_model<float>(cfg.model_spec(), 0);
  load_model(cfg.checkpoint, model);
  std::vector<Mask> preds;
  MetricsReport report = evaluate(model, data, cfg.threshold, &preds);
  report.seed = cfg.seed;
  const fs::path out(cfg.out);
  fs::create_directories(out);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    write_mask((out / indexed("pred", i, "pgm")).string(), preds[i]);
    write_image((out / indexed("overlay", i, "ppm")).string(), overlay_mask(data.raw[i].image, preds[i]));
  }
  open_out(out / "metrics.jsonl") << report.to_jsonl();
  if (log) {
    char line[128];
    std::snprintf(line, sizeof line, "eval  samples %zu  iou %.4f  dice %.4f\n", preds.size(), report.mean_iou,
                  report.mean_dice);
    *log << line;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Decoder comparison

double checkerboard_energy(const Tensor<double>& map) {
  if (map.rank() != 2) throw ShapeError("checkerboard_energy expects a [H, W] map");
  const std::size_t h = map.dim(0), w = map.dim(1);
  if (h % 2 || w % 2) throw ShapeError("checkerboard_energy needs even dims, got " + shape_str(map.shape()));
  double mean = 0, scale = 0;
  for (double v : map.data()) mean += v;
  mean /= static_cast<double>(h * w);
  for (double v : map.data()) scale = std::max(scale, std::abs(v - mean));
  if (scale <= 1e-12 * std::max(1.0, std::abs(mean))) return 0.0;

  using C = std::complex<double>;
  auto twiddles = [](std::size_t n) {
    std::vector<C> t(n);
    for (std::size_t k = 0; k < n; ++k) t[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    return t;
  };
  const auto tw = twiddles(w), th = twiddles(h);
  // Row transforms, then column transforms.
  std::vector<C> rows(h * w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t v = 0; v < w; ++v) {
      C acc = 0;
      for (std::size_t j = 0; j < w; ++j) acc += (map[i * w + j] - mean) * tw[(v * j) % w];
      rows[i * w + v] = acc;
    }
  }
  double total = 0, nyquist = 0;
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      C acc = 0;
      for (std::size_t i = 0; i < h; ++i) acc += rows[i * w + v] * th[(u * i) % h];
      const double e = std::norm(acc);
      if (u == 0 && v == 0) continue;
      total += e;
      if (u == h / 2 || v == w / 2) nyquist += e;
    }
  }
  return total > 0 ? nyquist / total : 0.0;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string DecoderComparison::to_json() const {
  nlohmann::ordered_json j;
  j["seeds"] = rows.size();
  j["median_nearest"] = median_nearest;
  j["median_transposed4"] = median_transposed4;
  j["median_transposed2"] = median_transposed2;
  auto& arr = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    arr.push_back({{"seed", r.seed}, {"nearest", r.nearest}, {"transposed4", r.transposed4}, {"transposed2", r.transposed2}});
  }
  return j.dump(2) + "\n";
}

DecoderComparison cmd_compare_decoders(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (cfg.n_seeds < 20) throw ConfigError("compare-decoders needs n_seeds >= 20");
  const std::size_t s = cfg.image_size;
  const Tensor<float> probe({1, 3, s, s}, 0.5f);
  DecoderComparison report;
  auto energy = [&](DecoderMode mode, std::uint64_t seed) {
    ModelSpec spec = cfg.model_spec();
    spec.decoder = mode;
    Model<float> model = build_model<float>(spec, mix_seed(seed, kInitSalt));
    const Tensor<float> logits = model.predict(probe);
    Tensor<double> map({s, s});
    for (std::size_t q = 0; q < s * s; ++q) map[q] = logits[q];  // channel 0 of sample 0
    return checkerboard_energy(map);
  };
  for (std::size_t k = 0; k < cfg.n_seeds; ++k) {
    const std::uint64_t seed = cfg.seed + k;
    DecoderComparisonRow row{seed, energy(DecoderMode::Nearest, seed), energy(DecoderMode::Transposed4, seed),
                             energy(DecoderMode::Transposed2, seed)};
    report.rows.push_back(row);
    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "seed %llu  nearest %.5f  transposed4 %.5f  transposed2 %.5f\n",
                    static_cast<unsigned long long>(seed), row.nearest, row.transposed4, row.transposed2);
      *log << line;
    }
  }
  std::vector<double> a, b, c;
  for (const auto& r : report.rows) {
    a.push_back(r.nearest);
    b.push_back(r.transposed4);
    c.push_back(r.transposed2);
  }
  report.median_nearest = median(a);
  report.median_transposed4 = median(b);
  report.median_transposed2 = median(c);
  if (!cfg.out.empty()) {
    fs::create_directories(cfg.out);
    open_out(fs::path(cfg.out) / "compare_decoders.json") << report.to_json();
  }
  return report;
}

// ---------------------------------------------------------------------------
// Pretraining transfer

std::size_t audit_encoder_copy(const Model<float>& source, const Model<float>& target) {
  const auto src = source.state();
  std::size_t compared = 0;
  for (const auto& t : target.state()) {
    if (t.name.rfind("encoder.", 0) != 0) continue;
    const auto it = std::find_if(src.begin(), src.end(), [&](const auto& a) { return a.name == t.name; });
    if (it == src.end()) throw CheckpointError("encoder array missing from source", t.name);
    if (it->value.shape() != t.value.shape()) throw CheckpointError("encoder array shape differs", t.name);
    if (!(it->value == t.value)) throw CheckpointError("encoder array values differ", t.name);
    ++compared;
  }
  if (compared == 0) throw CheckpointError("no encoder arrays found", "encoder.");
  return compared;
}

namespace {

// Softmax cross-entropy on count labels; returns final training accuracy.
double pretrain_classifier(Model<float>& clf, const PreparedData& data, const std::vector<std::size_t>& labels,
                           const RunConfig& cfg, std::uint64_t seed) {
  Adam<float> adam(AdamConfig{cfg.pretrain_lr, cfg.beta1, cfg.beta2, cfg.adam_eps});
  const std::size_t n = data.raw.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor<float>> inputs;
  for (const auto& s : data.raw) inputs.push_back(data.normalize(s.image));
  for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < n; b += cfg.batch_size) {
      const std::size_t m = std::min(n, b + cfg.batch_size) - b;
      std::vector<Tensor<float>> images;
      Tensor<float> onehot({m, kCountClasses, 1, 1});
      for (std::size_t k = 0; k < m; ++k) {
        images.push_back(inputs[order[b + k]]);
        onehot[k * kCountClasses + labels[order[b + k]]] = 1.0f;
      }
      Tape<float> tape;
      const Binding<float> binding = clf.bind(tape, true);
      Var<float> logits = clf.forward(binding, tape.constant(stack(images)), Mode::Train);
      Var<float> probs = softmax_channels(reshape(logits, {m, kCountClasses, 1, 1}));
      Var<float> nll = mul(sum(mul(log(clamp(probs, 1e-12f, 1.0f)), onehot)), -1.0f / static_cast<float>(m));
      const Gradients<float> grads = tape.backward(nll);
      std::vector<const Tensor<float>*> g;
      for (const auto& v : binding.vars) g.push_back(&grads[v]);
      adam.step(clf.parameters(), g);
    }
  }
  std::size_t correct = 0;
  for (std::size_t b = 0; b < n; b += kEvalChunk) {
    std::vector<Tensor<float>> images(inputs.begin() + static_cast<long>(b),
                                      inputs.begin() + static_cast<long>(std::min(n, b + kEvalChunk)));
    const Tensor<float> logits = clf.predict(stack(images));
    for (std::size_t k = 0; k < images.size(); ++k) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < kCountClasses; ++c) {
        if (logits[k * kCountClasses + c] > logits[k * kCountClasses + best]) best = c;
      }
      correct += best == labels[b + k];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace

std::string TransferReport::to_json() const {
  nlohmann::ordered_json j;
  j["budget"] = budget;
  j["median_pretrained"] = median_pretrained;
  j["median_random"] = median_random;
  auto& arr = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    arr.push_back({{"seed", r.seed},
                   {"pretrain_accuracy", r.pretrain_accuracy},
                   {"copied_arrays", r.copied_arrays},
                   {"epochs_pretrained", r.epochs_pretrained},
                   {"epochs_random", r.epochs_random}});
  }
  return j.dump(2) + "\n";
}

TransferReport cmd_pretrain_transfer(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (cfg.transfer_seeds < 5) throw ConfigError("pretrain-transfer needs transfer_seeds >= 5");
  if (cfg.mode != LabelMode::Binary) throw ConfigError("pretrain-transfer runs on binary segmentation");
  TransferReport report;
  report.budget = cfg.epochs;
  const ModelSpec spec = cfg.model_spec();
  for (std::size_t k = 0; k < cfg.transfer_seeds; ++k) {
    const std::uint64_t seed = cfg.seed + k;
    TransferRow row;
    row.seed = seed;

    DatasetConfig count_cfg = cfg.dataset_config(cfg.pretrain_samples);
    count_cfg.seed = mix_seed(seed, kPretrainDataSalt);
    count_cfg.min_instruments = 0;
    count_cfg.max_instruments = 3;
    std::vector<std::size_t> counts;
    PreparedData count_data;
    count_data.raw = gen_synthetic(count_cfg, &counts);

    Model<float> pretrained = build_model<float>(spec, mix_seed(seed, kInitSalt));
    Model<float> clf = attach_classifier_head(pretrained, kCountClasses, mix_seed(seed, kHeadSalt));
    row.pretrain_accuracy = pretrain_classifier(clf, count_data, counts, cfg, mix_seed(seed, kPretrainSalt));
    pretrained.load_state(clf.state(), LoadScope::EncoderOnly);
    row.copied_arrays = audit_encoder_copy(clf, pretrained);

    Model<float> random = build_model<float>(spec, mix_seed(seed, kInitSalt));
    RunConfig arm = cfg;
    arm.stop_at_dice = cfg.target_dice;
    arm.data_seed = mix_seed(cfg.effective_data_seed(), k);
    const PreparedData seg = prepare_data(arm);
    auto epochs_to_target = [&](Model<float>& model) {
      const auto logs = train_segmentation(model, seg, arm, mix_seed(seed, kTrainSalt));
      return logs.back().report.mean_dice >= cfg.target_dice ? logs.size() : cfg.epochs + 1;
    };
    row.epochs_pretrained = epochs_to_target(pretrained);
    row.epochs_random = epochs_to_target(random);
    report.rows.push_back(row);
    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "seed %llu  pretrain acc %.3f  copied %zu  epochs pretrained %zu  random %zu\n",
                    static_cast<unsigned long long>(seed), row.pretrain_accuracy, row.copied_arrays,
                    row.epochs_pretrained, row.epochs_random);
      *log << line << std::flush;
    }
  }
  std::vector<double> a, b;
  for (const auto& r : report.rows) {
    a.push_back(static_cast<double>(r.epochs_pretrained));
    b.push_back(static_cast<double>(r.epochs_random));
  }
  report.median_pretrained = median(a);
  report.median_random = median(b);
  if (!cfg.out.empty()) {
    fs::create_directories(cfg.out);
    open_out(fs::path(cfg.out) / "pretrain_transfer.json") << report.to_json();
  }
  return report;
}

// ---------------------------------------------------------------------------
// Saliency

SaliencyMap occlusion_saliency(Model<float>& model, const Tensor<float>& image, const Mask& mask,
                               std::size_t target_class, std::size_t patch, std::size_t stride) {
  if (image.rank() != 3 || image.dim(1) != mask.height || image.dim(2) != mask.width) {
    throw ShapeError("saliency: image and mask are not aligned");
  }
  const std::size_t h = mask.height, w = mask.width, hw = h * w, nc = model.spec().num_classes;
  if (target_class == 0 || target_class >= label_count(nc)) {
    throw LabelError("saliency target class " + std::to_string(target_class) + " is not a foreground class");
  }
  std::vector<std::size_t> pixels;
  for (std::size_t q = 0; q < hw; ++q) {
    if (mask.labels[q] == target_class) pixels.push_back(q);
  }
  if (pixels.empty()) throw LabelError("class " + std::to_string(target_class) + " absent from mask");
  if (patch < 1 || stride < 1 || patch > std::min(h, w)) throw ConfigError("saliency patch must lie in [1, min(H, W)]");

  // Mean target-class probability over the class pixels, one value per batch item.
  auto scores = [&](const std::vector<Tensor<float>>& batch) {
    const Tensor<float> logits = model.predict(stack(batch));
    const Tensor<float> probs = nc == 1 ? sigmoid_values(logits) : softmax_channel_values(logits);
    const std::size_t ch = nc == 1 ? 0 : target_class;
    std::vector<double> out;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      double acc = 0;
      for (std::size_t q : pixels) acc += probs[(b * nc + ch) * hw + q];
      out.push_back(acc / static_cast<double>(pixels.size()));
    }
    return out;
  };
  auto positions = [&](std::size_t extent) {
    std::vector<std::size_t> p;
    for (std::size_t t = 0; t + patch <= extent; t += stride) p.push_back(t);
    if (p.back() + patch < extent) p.push_back(extent - patch);
    return p;
  };

  SaliencyMap sm;
  sm.patch = patch;
  sm.stride = stride;
  sm.target_class = target_class;
  sm.baseline = scores({image})[0];
  const auto tops = positions(h), lefts = positions(w);
  sm.grid = Tensor<double>({tops.size(), lefts.size()});
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t r = 0; r < tops.size(); ++r) {
    for (std::size_t c = 0; c < lefts.size(); ++c) cells.emplace_back(r, c);
  }
  const std::size_t channels = image.dim(0);
  for (std::size_t b = 0; b < cells.size(); b += kEvalChunk) {
    std::vector<Tensor<float>> batch;
    for (std::size_t k = b; k < std::min(cells.size(), b + kEvalChunk); ++k) {
      Tensor<float> occluded = image;
      const std::size_t top = tops[cells[k].first], left = lefts[cells[k].second];
      for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t i = top; i < top + patch; ++i) {
          for (std::size_t j = left; j < left + patch; ++j) occluded[(ch * h + i) * w + j] = 0.0f;
        }
      }
      batch.push_back(std::move(occluded));
    }
    const auto s = scores(batch);
    for (std::size_t k = 0; k < s.size(); ++k) {
      const auto [r, c] = cells[b + k];
      sm.grid[r * lefts.size() + c] = std::max(0.0, sm.baseline - s[k]);
    }
  }
  Tensor<double> total({h, w}), count({h, w});
  for (const auto& [r, c] : cells) {
    const double v = sm.grid[r * lefts.size() + c];
    for (std::size_t i = tops[r]; i < tops[r] + patch; ++i) {
      for (std::size_t j = lefts[c]; j < lefts[c] + patch; ++j) {
        total[i * w + j] += v;
        count[i * w + j] += 1.0;
      }
    }
  }
  sm.heatmap = Tensor<double>({h, w});
  for (std::size_t q = 0; q < hw; ++q) sm.heatmap[q] = count[q] > 0 ? total[q] / count[q] : 0.0;
  return sm;
}

SaliencyMap cmd_saliency(const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (cfg.checkpoint.empty()) throw ConfigError("saliency needs checkpoint = <path>");
  const PreparedData data = prepare_data(cfg, true);
  if (cfg.image_index >= data.raw.size()) throw ConfigError("image_index beyond the dataset");
  Model<float> model = build_model<float>(cfg.model_spec(), 0);
  load_model(cfg.checkpoint, model);
  const SegSample& sample = data.raw[cfg.image_index];
  SaliencyMap sm = occlusion_saliency(model, data.normalize(sample.image), sample.mask, cfg.target_class, cfg.patch,
                                      cfg.stride);
  const fs::path out(cfg.out);
  fs::create_directories(out);
  write_heatmap(out / "saliency.pgm", sm.heatmap);
  const std::size_t h = sample.mask.height, w = sample.mask.width, hw = h * w;
  double top = 0;
  for (double v : sm.heatmap.data()) top = std::max(top, v);
  Tensor<float> overlay({3, h, w});
  for (std::size_t q = 0; q < hw; ++q) {
    const double v = top > 0 ? sm.heatmap[q] / top : 0.0;
    const double a = 0.6 * v;
    const double heat[3] = {1.0, v, 0.0};
    for (std::size_t ch = 0; ch < 3; ++ch) {
      overlay[ch * hw + q] = static_cast<float>((1.0 - a) * sample.image[ch * hw + q] + a * heat[ch]);
    }
  }
  write_image((out / "saliency_overlay.ppm").string(), overlay);
  nlohmann::ordered_json j;
  j["image_index"] = cfg.image_index;
  j["target_class"] = sm.target_class;
  j["patch"] = sm.patch;
  j["stride"] = sm.stride;
  j["baseline"] = sm.baseline;
  j["grid_shape"] = sm.grid.shape();
  j["grid"] = std::vector<double>(sm.grid.data().begin(), sm.grid.data().end());
  open_out(out / "saliency.json") << j.dump(2) << "\n";
  if (log) {
    char line[128];
    std::snprintf(line, sizeof line, "saliency  baseline %.4f  max drop %.4f\n", sm.baseline, top);
    *log << line;
  }
  return sm;
}

}  // namespace unetplus
