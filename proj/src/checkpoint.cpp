#include "unetplus/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace unetplus {
namespace {

constexpr char kMagic[4] = {'U', 'N', 'P', 'W'};
constexpr std::size_t kMaxRank = 8;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  bool has(std::size_t n) const { return b_.size() - pos_ >= n; }
  std::size_t remaining() const { return b_.size() - pos_; }

  template <typename U>
  U le(const std::string& entry, const char* field) {
    if (!has(sizeof(U))) throw CheckpointError(std::string("truncated ") + field, entry);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  const std::uint8_t* take(std::size_t n) {
    const std::uint8_t* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

bool plausible_name(const std::string& name) {
  if (name.empty()) return false;
  for (unsigned char ch : name) {
    if (ch < 0x20 || ch > 0x7e) return false;
  }
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedArray<float>>& arrays) {
  Writer w;
  w.bytes(kMagic, 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    if (a.name.size() > 0xffff) throw CheckpointError("entry name too long", a.name.substr(0, 32));
    if (a.value.rank() > kMaxRank) throw CheckpointError("rank above 8", a.name);
    w.le<std::uint16_t>(static_cast<std::uint16_t>(a.name.size()));
    w.bytes(a.name.data(), a.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(a.value.rank()));
    for (std::size_t d : a.value.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : a.value.data()) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  return std::move(w.out);
}

std::vector<NamedArray<float>> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (!r.has(4) || std::memcmp(r.take(4), kMagic, 4) != 0) throw CheckpointError("bad magic", "<header>");
  const auto version = r.le<std::uint32_t>("<header>", "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported version " + std::to_string(version), "<header>");
  }
  const auto count = r.le<std::uint32_t>("<header>", "entry count");
  std::vector<NamedArray<float>> out;
  std::string previous = "<header>";
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string slot = "#" + std::to_string(e);
    if (r.remaining() == 0) throw CheckpointError("truncated: file ends before entry " + slot, previous);
    const auto len = r.le<std::uint16_t>(previous, "name length");
    if (!r.has(len)) throw CheckpointError("truncated name of entry " + slot, previous);
    const std::uint8_t* p = r.take(len);
    std::string name(reinterpret_cast<const char*>(p), len);
    // A garbled name means the previous entry's declared size was wrong.
    if (!plausible_name(name)) throw CheckpointError("payload size inconsistent with following data", previous);
    const auto ndim = r.le<std::uint8_t>(name, "rank");
    if (ndim > kMaxRank) throw CheckpointError("implausible rank " + std::to_string(ndim), name);
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      const auto dim = r.le<std::uint32_t>(name, "dims");
      if (dim == 0) throw CheckpointError("zero dimension", name);
      numel *= dim;
      if (numel * 4 > r.remaining() + 4ULL * dim) throw CheckpointError("truncated payload", name);
      shape.push_back(dim);
    }
    if (!r.has(numel * 4)) throw CheckpointError("truncated payload", name);
    std::vector<float> data(numel);
    const std::uint8_t* raw = r.take(numel * 4);
    for (std::size_t i = 0; i < numel; ++i) {
      std::uint32_t u = 0;
      for (std::size_t k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(raw[4 * i + k]) << (8 * k);
      data[i] = std::bit_cast<float>(u);
    }
    out.push_back({name, Tensor<float>(std::move(shape), std::move(data))});
    previous = name;
  }
  if (r.remaining() != 0) {
    throw CheckpointError(std::to_string(r.remaining()) + " trailing bytes after last entry", previous);
  }
  return out;
}

void checkpoint_write(const std::string& path, const std::vector<NamedArray<float>>& arrays) {
  const auto bytes = encode_checkpoint(arrays);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<NamedArray<float>> checkpoint_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

template <typename T>
void save_model(const std::string& path, const Model<T>& model) {
  std::vector<NamedArray<float>> arrays;
  for (const auto& a : model.state()) arrays.push_back({a.name, a.value.template cast<float>()});
  checkpoint_write(path, arrays);
}

template <typename T>
void load_model(const std::string& path, Model<T>& model, LoadScope scope) {
  std::vector<NamedArray<T>> arrays;
  for (auto& a : checkpoint_read(path)) arrays.push_back({a.name, a.value.template cast<T>()});
  model.load_state(arrays, scope);
}

template void save_model<float>(const std::string&, const Model<float>&);
template void save_model<double>(const std::string&, const Model<double>&);
template void load_model<float>(const std::string&, Model<float>&, LoadScope);
template void load_model<double>(const std::string&, Model<double>&, LoadScope);

}  // namespace unetplus
