#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "unetplus/augment.hpp"
#include "unetplus/data.hpp"
#include "unetplus/gradcheck.hpp"
#include "unetplus/metrics.hpp"
#include "unetplus/model.hpp"
#include "unetplus/optim.hpp"

namespace unetplus {

enum class Normalization { PerImage, Corpus };

// Everything a command needs. Text form is "key = value" lines; `#` starts a
// comment. Keys are the field names below.
struct RunConfig {
  // optimisation
  std::size_t epochs = 100;
  std::size_t batch_size = 4;
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  double stop_at_dice = 0.0;  // > 0 ends training once training DICE reaches it
  bool timing = true;         // false writes seconds = 0 into metrics

  // model
  EncoderKind encoder = EncoderKind::Vgg11Mini;
  std::size_t base_channels = 16;
  std::size_t depth = 4;
  DecoderMode decoder = DecoderMode::Nearest;

  // data
  LabelMode mode = LabelMode::Binary;
  std::string train_manifest;  // empty: synthetic data
  std::string eval_manifest;
  std::optional<std::uint64_t> data_seed;  // defaults to seed
  std::size_t n_samples = 20;
  std::size_t image_size = 64;
  std::size_t min_instruments = 1;
  std::size_t max_instruments = 3;
  double texture_noise = 0.05;
  Normalization normalization = Normalization::PerImage;
  bool crop_border = false;

  // augmentation
  bool augment = true;
  AffineConfig affine = AffineConfig::standard();
  ElasticConfig elastic{};
  bool elastic_first = false;

  // paths
  std::string out = "out";
  std::string checkpoint;

  // compare-decoders
  std::size_t n_seeds = 20;
  // pretrain-transfer
  std::size_t transfer_seeds = 5;
  std::size_t pretrain_epochs = 20;
  std::size_t pretrain_samples = 64;
  double pretrain_lr = 1e-3;
  double target_dice = 0.8;
  // saliency
  std::size_t image_index = 0;
  std::size_t target_class = 1;
  std::size_t patch = 8;
  std::size_t stride = 4;

  void validate() const;
  std::size_t num_classes() const;
  ModelSpec model_spec() const;
  DatasetConfig dataset_config(std::size_t n) const;
  AdamConfig adam() const;
  std::uint64_t effective_data_seed() const { return data_seed.value_or(seed); }

  // Applies one key/value pair; unknown keys and bad values raise ConfigError.
  void set(const std::string& key, const std::string& value);
  // Every key with its current value, in declaration order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  static std::vector<std::string> keys();
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string format_run_config(const RunConfig& cfg);

// Shortest round-trip decimal form.
std::string format_double(double v);

// ---------------------------------------------------------------------------
// Training / evaluation building blocks

// Raw [0, 1] samples plus the normalization applied before the network.
struct PreparedData {
  std::vector<SegSample> raw;
  std::optional<ChannelStats> corpus;

  Tensor<float> normalize(const Tensor<float>& image) const;
};

// Loads the manifest (or generates the synthetic set) and applies border
// cropping. `eval` picks eval_manifest over train_manifest.
PreparedData prepare_data(const RunConfig& cfg, bool eval = false);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean minibatch loss
  MetricsReport report;   // training-set metrics in eval mode
};

using EpochCallback = std::function<bool(const EpochLog&, const Model<float>&)>;  // false stops

// Shuffled minibatch Adam training on the combined loss. All randomness
// derives from `seed`. Returns one log per completed epoch.
std::vector<EpochLog> train_segmentation(Model<float>& model, const PreparedData& data, const RunConfig& cfg,
                                         std::uint64_t seed, const EpochCallback& on_epoch = {});

// Batched eval-mode forward; hard masks by threshold (one channel) or argmax.
std::vector<Mask> predict_masks(Model<float>& model, const PreparedData& data, double threshold);
MetricsReport evaluate(Model<float>& model, const PreparedData& data, double threshold,
                       std::vector<Mask>* predictions = nullptr);

// Stacks normalized images into [N, C, H, W].
Tensor<float> stack_inputs(const PreparedData& data, const std::vector<std::size_t>& indices);

struct TrainResult {
  std::vector<EpochLog> epochs;
  MetricsReport best;
  std::size_t best_epoch = 0;
  std::string checkpoint_path;
  std::string metrics_path;
  std::string manifest_path;
  std::uint64_t dataset_hash = 0;
};

// Writes metrics.jsonl, manifest.txt and model.ckpt (best training DICE) into cfg.out.
TrainResult cmd_train(const RunConfig& cfg, std::ostream* log = nullptr);

// Loads cfg.checkpoint, evaluates on the eval set and writes pred_*.pgm,
// overlay_*.ppm and metrics.jsonl into cfg.out.
MetricsReport cmd_eval(const RunConfig& cfg, std::ostream* log = nullptr);

// Colour overlay of a label map on an image in [0, 1].
Tensor<float> overlay_mask(const Tensor<float>& image, const Mask& mask);

// ---------------------------------------------------------------------------
// Decoder comparison

// Fraction of the AC spectral energy of a [H, W] map that lies in the row
// u = H/2 or the column v = W/2 of its 2-D DFT. 0 for constant maps.
double checkerboard_energy(const Tensor<double>& map);

struct DecoderComparisonRow {
  std::uint64_t seed = 0;
  double nearest = 0.0;
  double transposed4 = 0.0;
  double transposed2 = 0.0;
};

struct DecoderComparison {
  std::vector<DecoderComparisonRow> rows;
  double median_nearest = 0.0;
  double median_transposed4 = 0.0;
  double median_transposed2 = 0.0;
  std::string to_json() const;
};

// Seeds cfg.seed .. cfg.seed + n_seeds - 1 (n_seeds >= 20), flat 0.5 probe,
// eval mode. Writes compare_decoders.json when cfg.out is non-empty.
DecoderComparison cmd_compare_decoders(const RunConfig& cfg, std::ostream* log = nullptr);

double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Pretraining transfer

struct TransferRow {
  std::uint64_t seed = 0;
  double pretrain_accuracy = 0.0;
  std::size_t copied_arrays = 0;
  // Epochs until training DICE >= target; budget + 1 when never reached.
  std::size_t epochs_pretrained = 0;
  std::size_t epochs_random = 0;
};

struct TransferReport {
  std::vector<TransferRow> rows;
  std::size_t budget = 0;
  double median_pretrained = 0.0;
  double median_random = 0.0;
  std::string to_json() const;
};

// Audit of copied encoder weights: every encoder array of `target` equals the
// same-named array of `source`. Returns the number of arrays compared.
std::size_t audit_encoder_copy(const Model<float>& source, const Model<float>& target);

// Classifier pretraining on instrument counts (0..3), then segmentation from
// the pretrained and from a random encoder, cfg.transfer_seeds pairs.
TransferReport cmd_pretrain_transfer(const RunConfig& cfg, std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// Occlusion saliency

struct SaliencyMap {
  Tensor<double> heatmap;  // [H, W]
  Tensor<double> grid;     // [rows, cols], one drop per patch position
  std::size_t patch = 0;
  std::size_t stride = 0;
  std::size_t target_class = 0;
  double baseline = 0.0;
};

// Patches replaced by 0 (the mean of normalized data); heatmap pixels average
// the drops max(0, baseline - occluded) of the patches covering them, where
// the score is the mean class probability over ground-truth pixels of the class.
SaliencyMap occlusion_saliency(Model<float>& model, const Tensor<float>& normalized_image, const Mask& mask,
                               std::size_t target_class, std::size_t patch, std::size_t stride);

SaliencyMap cmd_saliency(const RunConfig& cfg, std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// Gradient checks

struct GradCase {
  std::string op;
  Shape shape;                  // shape of the checked input
  ScalarFn fn;                  // scalar function of that input
  std::uint64_t input_seed = 0;
  bool distinct_inputs = false;  // well separated values (for max pooling)
};

struct GradCheckRow {
  std::string op;
  Shape shape;
  GradCheckResult result;
  bool passed = false;
};

// Every layer kind and both losses on 5 random shapes each, float64.
std::vector<GradCase> standard_grad_cases(std::uint64_t seed = 0);
std::vector<GradCheckRow> run_grad_cases(const std::vector<GradCase>& cases, double tolerance = 1e-4);
std::string format_grad_table(const std::vector<GradCheckRow>& rows);

}  // namespace unetplus
