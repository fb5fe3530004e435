#include <gtest/gtest.h>

#include <random>

#include "unetplus/checkpoint.hpp"
#include "unetplus/gradcheck.hpp"
#include "unetplus/metrics.hpp"
#include "unetplus/model.hpp"

using namespace unetplus;

namespace {

template <typename T>
Tensor<T> rand_input(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(d(rng));
  return t;
}

ModelSpec small_spec(DecoderMode mode = DecoderMode::Nearest) {
  ModelSpec s;
  s.base_channels = 4;
  s.depth = 3;
  s.decoder = mode;
  return s;
}

// Learnable weights added by a transposed upsampler at every decoder stage:
// stage s maps the channels arriving from below, c[s+1], onto themselves.
std::size_t upsampler_weights(const std::vector<std::size_t>& channels, std::size_t k) {
  std::size_t total = 0;
  for (std::size_t s = 0; s + 1 < channels.size(); ++s) total += channels[s + 1] * channels[s + 1] * k * k + channels[s + 1];
  return total;
}

}  // namespace

TEST(ModelSpec, ChannelScheduleDoublesUpToCap) {
  ModelSpec s;
  s.base_channels = 64;
  EXPECT_EQ(s.encoder_channels(), (std::vector<std::size_t>{64, 128, 256, 512, 512}));
  s.base_channels = 16;
  EXPECT_EQ(s.encoder_channels(), (std::vector<std::size_t>{16, 32, 64, 128, 128}));
}

TEST(ModelSpec, ConvCountsPerEncoderKind) {
  ModelSpec s;
  EXPECT_EQ(s.encoder_conv_counts(), (std::vector<std::size_t>{1, 1, 2, 2, 2}));
  s.encoder = EncoderKind::Vgg16Mini;
  EXPECT_EQ(s.encoder_conv_counts(), (std::vector<std::size_t>{2, 2, 3, 3, 3}));
}

TEST(ModelSpec, InvalidSpecsRejected) {
  ModelSpec s;
  s.num_classes = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(parse_decoder_mode("bilinear"), ConfigError);
}

TEST(Model, NearestHasFewerParametersByClosedForm) {
  ModelSpec nearest;
  ModelSpec t4 = nearest;
  t4.decoder = DecoderMode::Transposed4;
  const auto a = build_model<float>(nearest, 1), b = build_model<float>(t4, 1);
  EXPECT_LT(a.parameter_count(), b.parameter_count());
  EXPECT_EQ(b.parameter_count() - a.parameter_count(), upsampler_weights(nearest.encoder_channels(), 4));
  EXPECT_EQ(t4.upsampling_parameter_count(), upsampler_weights(nearest.encoder_channels(), 4));
  EXPECT_EQ(nearest.upsampling_parameter_count(), 0u);
}

TEST(Model, SameSeedSameBytes) {
  const auto a = build_model<float>(ModelSpec{}, 42), b = build_model<float>(ModelSpec{}, 42);
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
  const auto c = build_model<float>(ModelSpec{}, 43);
  EXPECT_FALSE(a.parameter("encoder.0.0.conv.weight") == c.parameter("encoder.0.0.conv.weight"));
}

TEST(Model, DecoderSwapLeavesEncoderUntouched) {
  const auto a = build_model<float>(small_spec(DecoderMode::Nearest), 5);
  const auto b = build_model<float>(small_spec(DecoderMode::Transposed4), 5);
  std::size_t encoder_arrays = 0;
  for (const auto& p : a.parameters()) {
    if (p.name.rfind("encoder.", 0) != 0) continue;
    ASSERT_TRUE(b.has_parameter(p.name)) << p.name;
    EXPECT_EQ(b.parameter(p.name), p.value) << p.name;
    ++encoder_arrays;
  }
  EXPECT_GT(encoder_arrays, 0u);
  for (const auto& p : b.parameters()) {
    if (p.name.rfind("encoder.", 0) == 0) EXPECT_TRUE(a.has_parameter(p.name));
  }
}

TEST(Model, OutputMatchesInputSpatialSize) {
  for (auto mode : {DecoderMode::Nearest, DecoderMode::Transposed2, DecoderMode::Transposed4}) {
    ModelSpec s;
    s.decoder = mode;
    s.num_classes = 3;
    auto m = build_model<float>(s, 2);
    EXPECT_EQ(m.predict(rand_input<float>({2, 3, 32, 32}, 1)).shape(), (Shape{2, 3, 32, 32}));
  }
}

TEST(Model, InvalidInputsRejected) {
  auto m = build_model<float>(ModelSpec{}, 2);
  EXPECT_THROW(m.predict(rand_input<float>({1, 3, 24, 24}, 1)), ShapeError);
  EXPECT_THROW(m.predict(rand_input<float>({1, 1, 32, 32}, 1)), ShapeError);
}

TEST(Model, EvalForwardIsPureAndBatchIndependent) {
  auto m = build_model<float>(ModelSpec{}, 3);
  const auto x = rand_input<float>({2, 3, 32, 32}, 4);
  const auto both = m.predict(x);
  EXPECT_EQ(both, m.predict(x));
  const std::size_t each = x.size() / 2, out_each = both.size() / 2;
  for (std::size_t n = 0; n < 2; ++n) {
    Tensor<float> one({1, 3, 32, 32}, std::vector<float>(x.data().begin() + n * each, x.data().begin() + (n + 1) * each));
    const auto single = m.predict(one);
    for (std::size_t i = 0; i < out_each; ++i) ASSERT_NEAR(single[i], both[n * out_each + i], 1e-5);
  }
}

TEST(Model, ParameterGradientsMatchFiniteDifferences) {
  ModelSpec s;
  s.base_channels = 2;
  s.depth = 2;
  auto m = build_model<double>(s, 11);
  const auto x = rand_input<double>({2, 3, 16, 16}, 12);
  Tensor<double> z({2, 1, 16, 16});
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (i / 16 + i % 16) % 5 < 2 ? 1.0 : 0.0;
  for (std::size_t p = 0; p < m.parameters().size(); ++p) {
    auto f = [&](Var<double> v) {
      Tape<double>& t = *v.tape;
      Binding<double> b = m.bind(t, false);
      b.vars[p] = v;
      return combined_loss(m.forward(b, t.constant(x), Mode::Train), z);
    };
    const auto r = finite_diff_check(f, m.parameters()[p].value);
    EXPECT_LT(r.max_rel_error, 1e-4) << m.parameters()[p].name << " index " << r.worst_index;
  }
}

TEST(Model, ClassifierHeadShape) {
  auto seg = build_model<float>(ModelSpec{}, 1);
  auto clf = attach_classifier_head(seg, 4, 2);
  EXPECT_EQ(clf.head(), Model<float>::Head::Classifier);
  EXPECT_EQ(clf.predict(rand_input<float>({3, 3, 32, 32}, 5)).shape(), (Shape{3, 4}));
  EXPECT_EQ(clf.parameter("classifier.weight").shape(), (Shape{4, 128}));
  EXPECT_EQ(clf.parameter("encoder.2.1.conv.weight"), seg.parameter("encoder.2.1.conv.weight"));
}

TEST(Model, EncoderCopyChangesSegmentationOutput) {
  auto target = build_model<float>(small_spec(), 1);
  const auto donor = attach_classifier_head(build_model<float>(small_spec(), 2), 4, 3);
  const auto x = rand_input<float>({1, 3, 16, 16}, 6);
  const auto before = target.predict(x);
  target.load_state(donor.state(), LoadScope::EncoderOnly);
  EXPECT_FALSE(before == target.predict(x));
  EXPECT_EQ(target.parameter("encoder.0.0.conv.weight"), donor.parameter("encoder.0.0.conv.weight"));
}

TEST(Model, WrongHeadClassCountNamesHeadWeight) {
  ModelSpec two = small_spec();
  two.num_classes = 2;
  auto src = build_model<float>(small_spec(), 1);
  auto dst = build_model<float>(two, 1);
  try {
    dst.load_state(src.state());
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.entry(), "head.weight");
  }
}

TEST(Model, MissingAndUnexpectedArraysNamed) {
  auto m = build_model<float>(small_spec(), 1);
  auto state = m.state();
  const std::string dropped = state.back().name;
  state.pop_back();
  try {
    m.load_state(state);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.entry(), dropped);
  }
  state = m.state();
  state.push_back({"decoder.9.up.weight", Tensor<float>({1})});
  try {
    m.load_state(state);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.entry(), "decoder.9.up.weight");
  }
}

TEST(Model, FailedLoadLeavesModelIntact) {
  auto m = build_model<float>(small_spec(), 1);
  const auto before = m.state();
  auto other = build_model<float>(small_spec(), 2).state();
  other.back().value = Tensor<float>({7});
  EXPECT_THROW(m.load_state(other), CheckpointError);
  const auto after = m.state();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i].value, after[i].value);
}

TEST(Model, EncoderOnlyLoadIgnoresDecoderDifferences) {
  auto nearest = build_model<float>(small_spec(DecoderMode::Nearest), 1);
  auto transposed = build_model<float>(small_spec(DecoderMode::Transposed4), 2);
  EXPECT_THROW(nearest.load_state(transposed.state()), CheckpointError);
  EXPECT_NO_THROW(nearest.load_state(transposed.state(), LoadScope::EncoderOnly));
  EXPECT_EQ(nearest.parameter("encoder.1.0.conv.weight"), transposed.parameter("encoder.1.0.conv.weight"));
}

TEST(Model, StateIncludesRunningStatistics) {
  const auto m = build_model<float>(small_spec(), 1);
  std::size_t running = 0;
  for (const auto& a : m.state()) running += a.name.find(".running_") != std::string::npos;
  EXPECT_GT(running, 0u);
  EXPECT_EQ(m.state().size(), m.parameters().size() + running);
}
