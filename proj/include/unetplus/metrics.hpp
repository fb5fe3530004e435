#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unetplus/autodiff.hpp"
#include "unetplus/mask.hpp"

namespace unetplus {

// Smoothing constant for the soft Jaccard ratio and the probability clamp
// of the cross-entropy term.
inline constexpr double kLossEpsilon = 1e-7;

// Hard overlap scores on binary masks (nonzero = member). Both-empty masks
// score 1.
double iou_hard(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> pred);
double dice(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> pred);

// Soft Jaccard (I + eps) / (U + eps) with I = sum z*p and
// U = sum (z + p - z*p); reduces to the hard IoU for {0,1} probabilities.
template <typename T>
Var<T> soft_jaccard(Var<T> probs, const Tensor<T>& truth);

// Mean binary cross-entropy computed from logits as softplus(x) - z*x with
// x clamped so that sigmoid(x) stays in [eps, 1 - eps].
template <typename T>
Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& truth);

// L = H - log J. One logit channel: sigmoid path. Several channels: softmax,
// then the mean over foreground classes (1..C-1) of the one-vs-rest loss.
// `targets` comes from encode_targets.
template <typename T>
Var<T> combined_loss(Var<T> logits, const Tensor<T>& targets);

// Value-level conveniences.
template <typename T>
T soft_jaccard(const Tensor<T>& truth, const Tensor<T>& probs);
template <typename T>
T bce(const Tensor<T>& truth, const Tensor<T>& probs);
template <typename T>
T combined_loss(const Tensor<T>& targets, const Tensor<T>& logits);

struct ClassScore {
  std::size_t class_id = 0;
  double iou = 0.0;
  double dice = 0.0;
};

struct MetricsReport {
  std::vector<ClassScore> classes;  // foreground classes present in truth or prediction
  double mean_iou = 0.0;
  double mean_dice = 0.0;
  bool no_foreground = false;
  double loss = 0.0;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  double seconds = 0.0;

  const ClassScore* find(std::size_t class_id) const;

  // One JSON object per class plus a macro row with class_id -1. Fields:
  // epoch, seed, class_id, iou, dice, loss, seconds.
  std::string to_jsonl() const;
};

// Per-class one-vs-rest IoU/DICE over labels 1..label_count-1; classes absent
// from both masks are skipped. Out-of-range labels raise LabelError.
MetricsReport multiclass_report(const Mask& truth, const Mask& pred, std::size_t label_count);

// Averages per-image reports class by class (skipping images where a class
// was undefined) and recomputes the macro means.
MetricsReport average_reports(const std::vector<MetricsReport>& reports);

// Number of label values a model with `num_classes` logit channels predicts.
inline std::size_t label_count(std::size_t num_classes) { return num_classes == 1 ? 2 : num_classes; }

}  // namespace unetplus
