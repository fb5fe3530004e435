#include <charconv>
#include <fstream>
#include <sstream>

#include "unetplus/commands.hpp"

namespace unetplus {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* key;
  void (*set)(RunConfig&, const std::string& key, const std::string& value);
  std::string (*get)(const RunConfig&);
};

#define SIZE_FIELD(name)                                                                          \
  Field{#name, [](RunConfig& c, const std::string& k, const std::string& v) { c.name = to_size(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.name); }}
#define DOUBLE_FIELD(key, expr)                                                                      \
  Field{key, [](RunConfig& c, const std::string& k, const std::string& v) { c.expr = to_double(k, v); }, \
        [](const RunConfig& c) { return format_double(c.expr); }}
#define BOOL_FIELD(key, expr)                                                                      \
  Field{key, [](RunConfig& c, const std::string& k, const std::string& v) { c.expr = to_bool(k, v); }, \
        [](const RunConfig& c) { return bool_str(c.expr); }}
#define STRING_FIELD(name)                                                                              \
  Field{#name, [](RunConfig& c, const std::string&, const std::string& v) { c.name = v; }, \
        [](const RunConfig& c) { return c.name; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SIZE_FIELD(epochs),
      SIZE_FIELD(batch_size),
      DOUBLE_FIELD("learning_rate", learning_rate),
      DOUBLE_FIELD("beta1", beta1),
      DOUBLE_FIELD("beta2", beta2),
      DOUBLE_FIELD("adam_eps", adam_eps),
      Field{"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      DOUBLE_FIELD("threshold", threshold),
      DOUBLE_FIELD("stop_at_dice", stop_at_dice),
      BOOL_FIELD("timing", timing),
      Field{"encoder", [](RunConfig& c, const std::string&, const std::string& v) { c.encoder = parse_encoder_kind(v); },
            [](const RunConfig& c) { return to_string(c.encoder); }},
      SIZE_FIELD(base_channels),
      SIZE_FIELD(depth),
      Field{"decoder", [](RunConfig& c, const std::string&, const std::string& v) { c.decoder = parse_decoder_mode(v); },
            [](const RunConfig& c) { return to_string(c.decoder); }},
      Field{"mode", [](RunConfig& c, const std::string&, const std::string& v) { c.mode = parse_label_mode(v); },
            [](const RunConfig& c) { return to_string(c.mode); }},
      STRING_FIELD(train_manifest),
      STRING_FIELD(eval_manifest),
      Field{"data_seed",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v.empty() || v == "auto") {
                c.data_seed.reset();
              } else {
                c.data_seed = to_u64(k, v);
              }
            },
            [](const RunConfig& c) { return c.data_seed ? std::to_string(*c.data_seed) : std::string("auto"); }},
      SIZE_FIELD(n_samples),
      SIZE_FIELD(image_size),
      SIZE_FIELD(min_instruments),
      SIZE_FIELD(max_instruments),
      DOUBLE_FIELD("texture_noise", texture_noise),
      Field{"normalization",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "image") {
                c.normalization = Normalization::PerImage;
              } else if (v == "corpus") {
                c.normalization = Normalization::Corpus;
              } else {
                throw ConfigError(k + ": expected image or corpus, got '" + v + "'");
              }
            },
            [](const RunConfig& c) {
              return std::string(c.normalization == Normalization::PerImage ? "image" : "corpus");
            }},
      BOOL_FIELD("crop_border", crop_border),
      BOOL_FIELD("augment", augment),
      DOUBLE_FIELD("scale_lo", affine.scale_lo),
      DOUBLE_FIELD("scale_hi", affine.scale_hi),
      DOUBLE_FIELD("translate", affine.translate_frac),
      DOUBLE_FIELD("p_hflip", affine.p_hflip),
      DOUBLE_FIELD("p_vflip", affine.p_vflip),
      DOUBLE_FIELD("brightness", affine.brightness_delta),
      DOUBLE_FIELD("noise_std", affine.noise_std),
      DOUBLE_FIELD("elastic_alpha", elastic.alpha),
      DOUBLE_FIELD("elastic_sigma", elastic.sigma),
      BOOL_FIELD("elastic_first", elastic_first),
      STRING_FIELD(out),
      STRING_FIELD(checkpoint),
      SIZE_FIELD(n_seeds),
      SIZE_FIELD(transfer_seeds),
      SIZE_FIELD(pretrain_epochs),
      SIZE_FIELD(pretrain_samples),
      DOUBLE_FIELD("pretrain_lr", pretrain_lr),
      DOUBLE_FIELD("target_dice", target_dice),
      SIZE_FIELD(image_index),
      SIZE_FIELD(target_class),
      SIZE_FIELD(patch),
      SIZE_FIELD(stride),
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef STRING_FIELD

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, p) : std::to_string(v);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

void RunConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  // lr = 0 is accepted: it freezes the parameters.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (!(stop_at_dice >= 0.0 && stop_at_dice <= 1.0)) throw ConfigError("stop_at_dice must lie in [0, 1]");
  if (!(target_dice > 0.0 && target_dice <= 1.0)) throw ConfigError("target_dice must lie in (0, 1]");
  if (!(pretrain_lr > 0.0)) throw ConfigError("pretrain_lr must be > 0");
  if (patch < 1 || stride < 1) throw ConfigError("patch and stride must be >= 1");
  adam().validate();
  model_spec().validate();
  affine.validate();
  elastic.validate();
  if (train_manifest.empty()) dataset_config(n_samples).validate();
}

std::size_t RunConfig::num_classes() const { return mode == LabelMode::Binary ? 1 : mode_label_count(mode); }

ModelSpec RunConfig::model_spec() const {
  ModelSpec s;
  s.encoder = encoder;
  s.base_channels = base_channels;
  s.depth = depth;
  s.decoder = decoder;
  s.num_classes = num_classes();
  s.input_channels = 3;
  return s;
}

DatasetConfig RunConfig::dataset_config(std::size_t n) const {
  DatasetConfig d;
  d.n_samples = n;
  d.image_size = image_size;
  d.mode = mode;
  d.min_instruments = min_instruments;
  d.max_instruments = max_instruments;
  d.texture_noise = texture_noise;
  d.seed = effective_data_seed();
  return d;
}

AdamConfig RunConfig::adam() const { return AdamConfig{learning_rate, beta1, beta2, adam_eps}; }

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.entries()) out += k + " = " + v + "\n";
  return out;
}

}  // namespace unetplus
