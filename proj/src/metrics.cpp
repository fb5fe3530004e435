#include "unetplus/metrics.hpp"

#include <cmath>
#include <map>

#include <json.hpp>

#include "unetplus/ops.hpp"

namespace unetplus {
namespace {

struct Counts {
  std::size_t truth = 0, pred = 0, both = 0;
};

Counts count_binary(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> pred) {
  if (truth.size() != pred.size()) {
    throw ShapeError("mask size mismatch: " + std::to_string(truth.size()) + " vs " + std::to_string(pred.size()));
  }
  Counts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] != 0, p = pred[i] != 0;
    c.truth += t;
    c.pred += p;
    c.both += t && p;
  }
  return c;
}

double iou_from(const Counts& c) {
  const std::size_t uni = c.truth + c.pred - c.both;
  return uni == 0 ? 1.0 : static_cast<double>(c.both) / static_cast<double>(uni);
}

double dice_from(const Counts& c) {
  const std::size_t denom = c.truth + c.pred;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.both) / static_cast<double>(denom);
}

void fill_means(MetricsReport& r) {
  r.no_foreground = r.classes.empty();
  r.mean_iou = r.mean_dice = 0.0;
  if (r.no_foreground) return;
  for (const auto& c : r.classes) {
    r.mean_iou += c.iou;
    r.mean_dice += c.dice;
  }
  r.mean_iou /= static_cast<double>(r.classes.size());
  r.mean_dice /= static_cast<double>(r.classes.size());
}

}  // namespace

double iou_hard(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> pred) {
  return iou_from(count_binary(truth, pred));
}

double dice(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> pred) {
  return dice_from(count_binary(truth, pred));
}

template <typename T>
Tensor<T> encode_targets(const std::vector<Mask>& masks, std::size_t num_classes) {
  if (masks.empty()) throw ShapeError("encode_targets: empty batch");
  const std::size_t h = masks[0].height, w = masks[0].width;
  const std::size_t channels = num_classes;
  Tensor<T> out({masks.size(), channels, h, w});
  for (std::size_t n = 0; n < masks.size(); ++n) {
    const Mask& m = masks[n];
    if (m.height != h || m.width != w) throw ShapeError("encode_targets: masks differ in size");
    for (std::size_t p = 0; p < h * w; ++p) {
      const std::size_t label = m.labels[p];
      if (num_classes == 1) {
        out[n * h * w + p] = label != 0 ? T{1} : T{0};
      } else {
        if (label >= num_classes) throw LabelError("label " + std::to_string(label) + " out of range");
        out[(n * channels + label) * h * w + p] = T{1};
      }
    }
  }
  return out;
}

template <typename T>
Var<T> soft_jaccard(Var<T> probs, const Tensor<T>& truth) {
  if (probs.shape() != truth.shape()) {
    throw ShapeError("soft_jaccard: shape mismatch " + shape_str(probs.shape()) + " vs " + shape_str(truth.shape()));
  }
  T truth_sum = 0;
  for (T v : truth.data()) truth_sum += v;
  const T eps = static_cast<T>(kLossEpsilon);
  Var<T> inter = sum(mul(probs, truth));
  Var<T> uni = sub(add(sum(probs), truth_sum), inter);
  return div(add(inter, eps), add(uni, eps));
}

template <typename T>
Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& truth) {
  if (logits.shape() != truth.shape()) {
    throw ShapeError("bce: shape mismatch " + shape_str(logits.shape()) + " vs " + shape_str(truth.shape()));
  }
  const T bound = static_cast<T>(std::log((1.0 - kLossEpsilon) / kLossEpsilon));
  Var<T> x = clamp(logits, -bound, bound);
  return mean(sub(softplus(x), mul(x, truth)));
}

template <typename T>
Var<T> combined_loss(Var<T> logits, const Tensor<T>& targets) {
  const Shape& s = logits.shape();
  if (s != targets.shape() || s.size() != 4) {
    throw ShapeError("combined_loss: logits " + shape_str(s) + " vs targets " + shape_str(targets.shape()));
  }
  if (s[1] == 1) {
    Var<T> h = bce_with_logits(logits, targets);
    Var<T> j = soft_jaccard(sigmoid(logits), targets);
    return sub(h, log(j));
  }
  const std::size_t n = s[0], channels = s[1], hw = s[2] * s[3];
  const T eps = static_cast<T>(kLossEpsilon);
  Var<T> probs = softmax_channels(logits);
  Var<T> total;
  for (std::size_t c = 1; c < channels; ++c) {
    Tensor<T> z({n, 1, s[2], s[3]});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < hw; ++p) z[i * hw + p] = targets[(i * channels + c) * hw + p];
    }
    Tensor<T> not_z(z.shape());
    for (std::size_t k = 0; k < z.size(); ++k) not_z[k] = T{1} - z[k];
    Var<T> pc = channel(probs, c);
    Var<T> clamped = clamp(pc, eps, T{1} - eps);
    Var<T> ll = add(mul(log(clamped), z), mul(log(rsub(T{1}, clamped)), not_z));
    Var<T> h = mul(mean(ll), T{-1});
    Var<T> lc = sub(h, log(soft_jaccard(pc, z)));
    total = total.valid() ? add(total, lc) : lc;
  }
  return mul(total, T{1} / static_cast<T>(channels - 1));
}

template <typename T>
T soft_jaccard(const Tensor<T>& truth, const Tensor<T>& probs) {
  Tape<T> tape;
  return soft_jaccard(tape.constant(probs), truth).value().item();
}

template <typename T>
T bce(const Tensor<T>& truth, const Tensor<T>& probs) {
  if (truth.shape() != probs.shape()) throw ShapeError("bce: shape mismatch");
  const double eps = kLossEpsilon;
  double total = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double p = std::clamp(static_cast<double>(probs[i]), eps, 1.0 - eps);
    total += truth[i] * std::log(p) + (1.0 - truth[i]) * std::log(1.0 - p);
  }
  return static_cast<T>(-total / static_cast<double>(truth.size()));
}

template <typename T>
T combined_loss(const Tensor<T>& targets, const Tensor<T>& logits) {
  Tape<T> tape;
  return combined_loss(tape.constant(logits), targets).value().item();
}

const ClassScore* MetricsReport::find(std::size_t class_id) const {
  for (const auto& c : classes) {
    if (c.class_id == class_id) return &c;
  }
  return nullptr;
}

std::string MetricsReport::to_jsonl() const {
  std::string out;
  auto row = [&](long long class_id, double iou, double d) {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["seed"] = seed;
    j["class_id"] = class_id;
    j["iou"] = iou;
    j["dice"] = d;
    j["loss"] = loss;
    j["seconds"] = seconds;
    out += j.dump() + "\n";
  };
  for (const auto& c : classes) row(static_cast<long long>(c.class_id), c.iou, c.dice);
  row(-1, mean_iou, mean_dice);
  return out;
}

MetricsReport multiclass_report(const Mask& truth, const Mask& pred, std::size_t labels) {
  if (truth.height != pred.height || truth.width != pred.width) {
    throw ShapeError("multiclass_report: mask dims differ");
  }
  if (labels < 2) throw ConfigError("multiclass_report: need at least two labels");
  std::vector<Counts> counts(labels);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::size_t t = truth.labels[i], p = pred.labels[i];
    if (t >= labels || p >= labels) {
      throw LabelError("label " + std::to_string(std::max(t, p)) + " outside [0, " + std::to_string(labels) + ")");
    }
    counts[t].truth++;
    counts[p].pred++;
    if (t == p) counts[t].both++;
  }
  MetricsReport r;
  for (std::size_t c = 1; c < labels; ++c) {
    if (counts[c].truth == 0 && counts[c].pred == 0) continue;
    r.classes.push_back({c, iou_from(counts[c]), dice_from(counts[c])});
  }
  fill_means(r);
  return r;
}

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  std::map<std::size_t, std::pair<ClassScore, std::size_t>> acc;
  for (const auto& r : reports) {
    for (const auto& c : r.classes) {
      auto& [score, n] = acc[c.class_id];
      score.class_id = c.class_id;
      score.iou += c.iou;
      score.dice += c.dice;
      ++n;
    }
  }
  MetricsReport out;
  for (auto& [id, entry] : acc) {
    auto [score, n] = entry;
    score.iou /= static_cast<double>(n);
    score.dice /= static_cast<double>(n);
    out.classes.push_back(score);
  }
  fill_means(out);
  return out;
}

#define UNETPLUS_INSTANTIATE_METRICS(T)                                   \
  template Tensor<T> encode_targets<T>(const std::vector<Mask>&, std::size_t); \
  template Var<T> soft_jaccard(Var<T>, const Tensor<T>&);                 \
  template Var<T> bce_with_logits(Var<T>, const Tensor<T>&);              \
  template Var<T> combined_loss(Var<T>, const Tensor<T>&);                \
  template T soft_jaccard(const Tensor<T>&, const Tensor<T>&);            \
  template T bce(const Tensor<T>&, const Tensor<T>&);                     \
  template T combined_loss(const Tensor<T>&, const Tensor<T>&);

UNETPLUS_INSTANTIATE_METRICS(float)
UNETPLUS_INSTANTIATE_METRICS(double)

}  // namespace unetplus
