#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "unetplus/layers.hpp"

namespace unetplus {

enum class EncoderKind { Vgg11Mini, Vgg16Mini };
enum class DecoderMode { Nearest, Transposed2, Transposed4 };

std::string to_string(EncoderKind kind);
std::string to_string(DecoderMode mode);
EncoderKind parse_encoder_kind(const std::string& text);
DecoderMode parse_decoder_mode(const std::string& text);

// Architecture of the encoder-decoder network.
struct ModelSpec {
  EncoderKind encoder = EncoderKind::Vgg11Mini;
  std::size_t base_channels = 16;
  std::size_t depth = 4;  // number of pooling stages
  DecoderMode decoder = DecoderMode::Nearest;
  std::size_t num_classes = 1;
  std::size_t input_channels = 3;

  void validate() const;

  // Channels of each encoder stage (depth + 1 entries, the last one being the
  // bottleneck): base * 2^i capped at 8 * base.
  std::vector<std::size_t> encoder_channels() const;
  // 3x3 conv layers per encoder stage: VGG-11 (1,1,2,2,2), VGG-16 (2,2,3,3,3),
  // repeating the last count for deeper specs.
  std::vector<std::size_t> encoder_conv_counts() const;
  // Learnable parameters added by the decoder's upsampling layers:
  // zero for nearest, sum of C^2 k^2 + C otherwise.
  std::size_t upsampling_parameter_count() const;
};

template <typename T>
struct NamedArray {
  std::string name;
  Tensor<T> value;
};

enum class LoadScope { All, EncoderOnly };

// Trainable parameters registered on a tape for one forward/backward step.
template <typename T>
struct Binding {
  std::vector<Var<T>> vars;  // parallel to Model::parameters()
};

template <typename T>
class Model {
 public:
  enum class Head { Segmentation, Classifier };

  const ModelSpec& spec() const noexcept { return spec_; }
  Head head() const noexcept { return head_; }
  std::size_t classifier_classes() const noexcept { return classifier_classes_; }

  std::vector<NamedArray<T>>& parameters() noexcept { return params_; }
  const std::vector<NamedArray<T>>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;
  const Tensor<T>& parameter(const std::string& name) const;
  Tensor<T>& parameter(const std::string& name);
  bool has_parameter(const std::string& name) const;

  // Every persisted array (parameters and batch-norm running statistics) in
  // a stable order.
  std::vector<NamedArray<T>> state() const;
  // Names and shapes must match; EncoderOnly restricts both sides to the
  // "encoder." prefix. Throws CheckpointError naming the first offender.
  void load_state(const std::vector<NamedArray<T>>& arrays, LoadScope scope = LoadScope::All);

  Binding<T> bind(Tape<T>& tape, bool requires_grad) const;

  // Segmentation: [N, C_in, H, W] -> logits [N, num_classes, H, W].
  // Classifier: [N, C_in, H, W] -> logits [N, classes].
  Var<T> forward(const Binding<T>& binding, Var<T> input, Mode mode);

  // Convenience eval-mode forward on a private tape.
  Tensor<T> predict(const Tensor<T>& input);

 private:
  template <typename U>
  friend Model<U> build_model(const ModelSpec& spec, std::uint64_t seed);
  template <typename U>
  friend Model<U> attach_classifier_head(const Model<U>& encoder_source, std::size_t classes,
                                         std::uint64_t seed);

  struct Conv {
    std::size_t weight, bias;  // indices into params_
  };
  struct ConvBnRelu {
    Conv conv;
    std::size_t gamma, beta;
    std::string bn;
  };
  struct DecoderStage {
    bool transposed = false;
    Conv up{};
    std::vector<ConvBnRelu> convs;
  };

  std::size_t add_param(const std::string& name, Tensor<T> value);
  ConvBnRelu add_conv_bn(const std::string& prefix, std::size_t in, std::size_t out,
                         std::uint64_t seed);
  Var<T> conv_bn_relu(const Binding<T>& b, const ConvBnRelu& layer, Var<T> x, Mode mode);
  Var<T> encode(const Binding<T>& b, Var<T> x, Mode mode, std::vector<Var<T>>* skips);

  ModelSpec spec_;
  Head head_ = Head::Segmentation;
  std::size_t classifier_classes_ = 0;
  std::vector<NamedArray<T>> params_;
  std::map<std::string, BatchNormState<T>> bn_;
  std::vector<std::string> state_order_;  // parameter and running-stat names interleaved
  std::vector<std::vector<ConvBnRelu>> encoder_;
  std::vector<DecoderStage> decoder_;
  Conv out_{};
};

// Deterministic per seed; each array is drawn from a stream keyed by its
// name, so models differing only in decoder mode share encoder values.
template <typename T>
Model<T> build_model(const ModelSpec& spec, std::uint64_t seed);

// Encoder of `encoder_source` (values copied, names preserved) followed by
// global average pooling and a linear layer.
template <typename T>
Model<T> attach_classifier_head(const Model<T>& encoder_source, std::size_t classes, std::uint64_t seed);

// Deterministic 64-bit mixing used to derive per-purpose seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t hash_name(const std::string& name);

}  // namespace unetplus
