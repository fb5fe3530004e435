#include "unetplus/model.hpp"

#include <algorithm>
#include <set>

#include "unetplus/ops.hpp"

namespace unetplus {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_name(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_string(EncoderKind kind) {
  return kind == EncoderKind::Vgg11Mini ? "vgg11-mini" : "vgg16-mini";
}

std::string to_string(DecoderMode mode) {
  switch (mode) {
    case DecoderMode::Nearest: return "nearest";
    case DecoderMode::Transposed2: return "transposed2";
    case DecoderMode::Transposed4: return "transposed4";
  }
  return "nearest";
}

EncoderKind parse_encoder_kind(const std::string& text) {
  if (text == "vgg11-mini" || text == "vgg11") return EncoderKind::Vgg11Mini;
  if (text == "vgg16-mini" || text == "vgg16") return EncoderKind::Vgg16Mini;
  throw ConfigError("unknown encoder kind '" + text + "'");
}

DecoderMode parse_decoder_mode(const std::string& text) {
  if (text == "nearest") return DecoderMode::Nearest;
  if (text == "transposed2") return DecoderMode::Transposed2;
  if (text == "transposed4") return DecoderMode::Transposed4;
  throw ConfigError("unknown decoder mode '" + text + "'");
}

void ModelSpec::validate() const {
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (depth < 1 || depth > 8) throw ConfigError("depth must be in [1, 8]");
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
}

std::vector<std::size_t> ModelSpec::encoder_channels() const {
  std::vector<std::size_t> out;
  std::size_t c = base_channels;
  for (std::size_t s = 0; s <= depth; ++s) {
    out.push_back(c);
    c = std::min(c * 2, base_channels * 8);
  }
  return out;
}

std::vector<std::size_t> ModelSpec::encoder_conv_counts() const {
  const std::vector<std::size_t> schedule =
      encoder == EncoderKind::Vgg11Mini ? std::vector<std::size_t>{1, 1, 2, 2, 2}
                                        : std::vector<std::size_t>{2, 2, 3, 3, 3};
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s <= depth; ++s) out.push_back(schedule[std::min(s, schedule.size() - 1)]);
  return out;
}

std::size_t ModelSpec::upsampling_parameter_count() const {
  if (decoder == DecoderMode::Nearest) return 0;
  const std::size_t k = decoder == DecoderMode::Transposed2 ? 2 : 4;
  const auto ch = encoder_channels();
  std::size_t total = 0;
  for (std::size_t s = 0; s < depth; ++s) {
    const std::size_t c = ch[s + 1];
    total += c * c * k * k + c;
  }
  return total;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
bool Model<T>::has_parameter(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
}

template <typename T>
const Tensor<T>& Model<T>::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

template <typename T>
Tensor<T>& Model<T>::parameter(const std::string& name) {
  return const_cast<Tensor<T>&>(static_cast<const Model&>(*this).parameter(name));
}

template <typename T>
std::size_t Model<T>::add_param(const std::string& name, Tensor<T> value) {
  params_.push_back({name, std::move(value)});
  state_order_.push_back(name);
  return params_.size() - 1;
}

template <typename T>
typename Model<T>::ConvBnRelu Model<T>::add_conv_bn(const std::string& prefix, std::size_t in,
                                                    std::size_t out, std::uint64_t seed) {
  ConvBnRelu layer;
  const std::string w = prefix + ".conv.weight";
  layer.conv.weight = add_param(w, he_init<T>({out, in, 3, 3}, mix_seed(seed, hash_name(w))));
  layer.conv.bias = add_param(prefix + ".conv.bias", Tensor<T>({out}));
  layer.gamma = add_param(prefix + ".bn.gamma", Tensor<T>({out}, T{1}));
  layer.beta = add_param(prefix + ".bn.beta", Tensor<T>({out}));
  layer.bn = prefix + ".bn";
  bn_.emplace(layer.bn, BatchNormState<T>(out));
  state_order_.push_back(layer.bn + ".running_mean");
  state_order_.push_back(layer.bn + ".running_var");
  return layer;
}

template <typename T>
Model<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model<T> m;
  m.spec_ = spec;
  const auto ch = spec.encoder_channels();
  const auto counts = spec.encoder_conv_counts();
  std::size_t in = spec.input_channels;
  for (std::size_t s = 0; s <= spec.depth; ++s) {
    std::vector<typename Model<T>::ConvBnRelu> stage;
    for (std::size_t j = 0; j < counts[s]; ++j) {
      stage.push_back(m.add_conv_bn("encoder." + std::to_string(s) + "." + std::to_string(j), in, ch[s], seed));
      in = ch[s];
    }
    m.encoder_.push_back(std::move(stage));
  }
  // Decoder stages run from the deepest resolution back to full size.
  m.decoder_.resize(spec.depth);
  for (std::size_t s = spec.depth; s-- > 0;) {
    auto& stage = m.decoder_[s];
    const std::size_t up_ch = ch[s + 1];
    const std::string prefix = "decoder." + std::to_string(s);
    if (spec.decoder != DecoderMode::Nearest) {
      const std::size_t k = spec.decoder == DecoderMode::Transposed2 ? 2 : 4;
      const std::string w = prefix + ".up.weight";
      stage.transposed = true;
      stage.up.weight = m.add_param(w, he_init<T>({up_ch, up_ch, k, k}, mix_seed(seed, hash_name(w))));
      stage.up.bias = m.add_param(prefix + ".up.bias", Tensor<T>({up_ch}));
    }
    stage.convs.push_back(m.add_conv_bn(prefix + ".0", up_ch + ch[s], ch[s], seed));
    stage.convs.push_back(m.add_conv_bn(prefix + ".1", ch[s], ch[s], seed));
  }
  const std::string hw = "head.weight";
  m.out_.weight = m.add_param(hw, he_init<T>({spec.num_classes, ch[0], 1, 1}, mix_seed(seed, hash_name(hw))));
  m.out_.bias = m.add_param("head.bias", Tensor<T>({spec.num_classes}));
  return m;
}

template <typename T>
Model<T> attach_classifier_head(const Model<T>& source, std::size_t classes, std::uint64_t seed) {
  if (classes < 1) throw ConfigError("classifier needs at least one class");
  Model<T> m = build_model<T>(source.spec(), seed);
  // Drop decoder and segmentation head, keep the encoder.
  std::vector<NamedArray<T>> kept;
  for (auto& p : m.params_) {
    if (p.name.rfind("encoder.", 0) == 0) kept.push_back(std::move(p));
  }
  m.params_ = std::move(kept);
  std::vector<std::string> order;
  for (const auto& name : m.state_order_) {
    if (name.rfind("encoder.", 0) == 0) order.push_back(name);
  }
  m.state_order_ = std::move(order);
  for (auto it = m.bn_.begin(); it != m.bn_.end();) {
    it = it->first.rfind("encoder.", 0) == 0 ? std::next(it) : m.bn_.erase(it);
  }
  m.decoder_.clear();
  m.head_ = Model<T>::Head::Classifier;
  m.classifier_classes_ = classes;
  const std::size_t feat = source.spec().encoder_channels().back();
  const std::string w = "classifier.weight";
  m.out_.weight = m.add_param(w, he_init<T>({classes, feat}, mix_seed(seed, hash_name(w))));
  m.out_.bias = m.add_param("classifier.bias", Tensor<T>({classes}));
  // Parameter indices held by the encoder layers are unchanged because the
  // encoder was registered first.
  m.load_state(source.state(), LoadScope::EncoderOnly);
  return m;
}

template <typename T>
std::vector<NamedArray<T>> Model<T>::state() const {
  std::vector<NamedArray<T>> out;
  out.reserve(state_order_.size());
  for (const auto& name : state_order_) {
    const auto suffix_at = name.rfind('.');
    const std::string suffix = name.substr(suffix_at + 1);
    if (suffix == "running_mean" || suffix == "running_var") {
      const auto& bn = bn_.at(name.substr(0, suffix_at));
      out.push_back({name, suffix == "running_mean" ? bn.running_mean : bn.running_var});
    } else {
      out.push_back({name, parameter(name)});
    }
  }
  return out;
}

template <typename T>
void Model<T>::load_state(const std::vector<NamedArray<T>>& arrays, LoadScope scope) {
  auto in_scope = [scope](const std::string& name) {
    return scope == LoadScope::All || name.rfind("encoder.", 0) == 0;
  };
  std::map<std::string, const Tensor<T>*> incoming;
  for (const auto& a : arrays) {
    if (!in_scope(a.name)) continue;
    if (std::find(state_order_.begin(), state_order_.end(), a.name) == state_order_.end()) {
      throw CheckpointError("unexpected array in checkpoint", a.name);
    }
    incoming[a.name] = &a.value;
  }
  // Validate everything before mutating so a failed load leaves the model intact.
  for (const auto& name : state_order_) {
    if (!in_scope(name)) continue;
    auto it = incoming.find(name);
    if (it == incoming.end()) throw CheckpointError("missing array in checkpoint", name);
  }
  for (const auto& cur : state()) {
    if (!in_scope(cur.name)) continue;
    if (incoming.at(cur.name)->shape() != cur.value.shape()) {
      throw CheckpointError("shape mismatch " + shape_str(incoming.at(cur.name)->shape()) + " vs " +
                                shape_str(cur.value.shape()),
                            cur.name);
    }
  }
  for (const auto& [name, value] : incoming) {
    const auto suffix_at = name.rfind('.');
    const std::string suffix = name.substr(suffix_at + 1);
    if (suffix == "running_mean" || suffix == "running_var") {
      auto& bn = bn_.at(name.substr(0, suffix_at));
      (suffix == "running_mean" ? bn.running_mean : bn.running_var) = *value;
    } else {
      parameter(name) = *value;
    }
  }
}

template <typename T>
Binding<T> Model<T>::bind(Tape<T>& tape, bool requires_grad) const {
  Binding<T> b;
  b.vars.reserve(params_.size());
  for (const auto& p : params_) b.vars.push_back(tape.leaf(p.value, requires_grad));
  return b;
}

template <typename T>
Var<T> Model<T>::conv_bn_relu(const Binding<T>& b, const ConvBnRelu& layer, Var<T> x, Mode mode) {
  Var<T> y = conv2d(x, b.vars[layer.conv.weight], b.vars[layer.conv.bias], 1, 1);
  y = batchnorm(y, b.vars[layer.gamma], b.vars[layer.beta], bn_.at(layer.bn), mode);
  return relu(y);
}

template <typename T>
Var<T> Model<T>::encode(const Binding<T>& b, Var<T> x, Mode mode, std::vector<Var<T>>* skips) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != spec_.input_channels) {
    throw ShapeError("model input must be [N, " + std::to_string(spec_.input_channels) + ", H, W], got " +
                     shape_str(s));
  }
  const std::size_t factor = std::size_t{1} << spec_.depth;
  if (s[2] % factor != 0 || s[3] % factor != 0) {
    throw ShapeError("input spatial dims " + shape_str(s) + " not divisible by 2^depth = " + std::to_string(factor));
  }
  for (std::size_t st = 0; st < encoder_.size(); ++st) {
    for (const auto& layer : encoder_[st]) x = conv_bn_relu(b, layer, x, mode);
    if (st + 1 < encoder_.size()) {
      if (skips) skips->push_back(x);
      x = maxpool2d(x);
    }
  }
  return x;
}

template <typename T>
Var<T> Model<T>::forward(const Binding<T>& b, Var<T> input, Mode mode) {
  if (b.vars.size() != params_.size()) throw std::logic_error("binding does not match model parameters");
  if (head_ == Head::Classifier) {
    Var<T> feat = global_avg_pool(encode(b, input, mode, nullptr));
    return linear(feat, b.vars[out_.weight], b.vars[out_.bias]);
  }
  std::vector<Var<T>> skips;
  Var<T> x = encode(b, input, mode, &skips);
  for (std::size_t s = decoder_.size(); s-- > 0;) {
    const auto& stage = decoder_[s];
    x = stage.transposed ? transposed_conv2d(x, b.vars[stage.up.weight], b.vars[stage.up.bias], 2)
                         : nn_upsample(x, 2);
    x = concat_channels(x, skips[s]);
    for (const auto& layer : stage.convs) x = conv_bn_relu(b, layer, x, mode);
  }
  return conv2d(x, b.vars[out_.weight], b.vars[out_.bias], 1, 0);
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& input) {
  Tape<T> tape;
  Binding<T> b = bind(tape, false);
  return forward(b, tape.constant(input), Mode::Eval).value();
}

template class Model<float>;
template class Model<double>;
template Model<float> build_model<float>(const ModelSpec&, std::uint64_t);
template Model<double> build_model<double>(const ModelSpec&, std::uint64_t);
template Model<float> attach_classifier_head<float>(const Model<float>&, std::size_t, std::uint64_t);
template Model<double> attach_classifier_head<double>(const Model<double>&, std::size_t, std::uint64_t);

}  // namespace unetplus
