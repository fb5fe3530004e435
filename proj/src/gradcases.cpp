#include <algorithm>
#include <cstdio>
#include <memory>
#include <numeric>
#include <random>

#include "unetplus/commands.hpp"
#include "unetplus/layers.hpp"
#include "unetplus/ops.hpp"

namespace unetplus {
namespace {

using TD = Tensor<double>;
using VD = Var<double>;

TD random_tensor(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  TD t(shape);
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

TD random_binary(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.4);
  TD t(shape);
  for (auto& v : t.data()) v = coin(rng) ? 1.0 : 0.0;
  return t;
}

TD random_onehot(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = shape[0], c = shape[1], hw = shape[2] * shape[3];
  std::uniform_int_distribution<std::size_t> pick(0, c - 1);
  TD t(shape);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t q = 0; q < hw; ++q) t[(b * c + pick(rng)) * hw + q] = 1.0;
  }
  return t;
}

// Scalar projection sum(y * r) with a fixed random r of y's shape.
VD project(VD y, std::uint64_t seed) { return sum(mul(y, random_tensor(y.shape(), seed))); }

TD make_input(const GradCase& c) {
  if (!c.distinct_inputs) return random_tensor(c.shape, c.input_seed);
  // A shuffled ramp: neighbouring values differ by 0.05, far above the step.
  TD t(c.shape);
  std::vector<std::size_t> perm(t.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(c.input_seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.05 * static_cast<double>(perm[i]) - 0.025 * static_cast<double>(t.size());
  return t;
}

std::string shape_text(const Shape& s) { return shape_str(s); }

}  // namespace

std::vector<GradCase> standard_grad_cases(std::uint64_t seed) {
  std::vector<GradCase> cases;
  std::uint64_t counter = 0;
  auto next = [&] { return mix_seed(seed, ++counter); };

  struct ConvShape {
    std::size_t n, c, h, w, o, k, stride, pad;
  };
  const std::vector<ConvShape> conv_shapes = {{1, 1, 5, 5, 1, 3, 1, 0}, {2, 3, 6, 6, 2, 3, 1, 1},
                                              {1, 2, 7, 5, 3, 3, 2, 1}, {2, 2, 4, 4, 4, 1, 1, 0},
                                              {1, 3, 8, 8, 2, 2, 2, 0}};
  for (const auto& s : conv_shapes) {
    const TD x = random_tensor({s.n, s.c, s.h, s.w}, next());
    const TD w = random_tensor({s.o, s.c, s.k, s.k}, next(), 0.5);
    const TD b = random_tensor({s.o}, next());
    const std::uint64_t r = next();
    cases.push_back({"conv2d.input", x.shape(), [=](VD v) {
                       Tape<double>& t = *v.tape;
                       return project(conv2d(v, t.constant(w), t.constant(b), s.stride, s.pad), r);
                     }, next()});
    cases.push_back({"conv2d.weight", w.shape(), [=](VD v) {
                       Tape<double>& t = *v.tape;
                       return project(conv2d(t.constant(x), v, t.constant(b), s.stride, s.pad), r);
                     }, next()});
    cases.push_back({"conv2d.bias", b.shape(), [=](VD v) {
                       Tape<double>& t = *v.tape;
                       return project(conv2d(t.constant(x), t.constant(w), v, s.stride, s.pad), r);
                     }, next()});
  }

  const std::vector<Shape> bn_shapes = {{2, 1, 3, 3}, {3, 2, 2, 2}, {1, 3, 4, 4}, {4, 2, 1, 2}, {2, 4, 3, 2}};
  for (const auto& s : bn_shapes) {
    const TD gamma = random_tensor({s[1]}, next());
    const TD beta = random_tensor({s[1]}, next());
    const TD x = random_tensor(s, next());
    const std::uint64_t r = next();
    auto state = std::make_shared<BatchNormState<double>>(s[1]);
    state->running_mean = random_tensor({s[1]}, next(), 0.3);
    state->running_var = random_tensor({s[1]}, next(), 0.3);
    for (auto& v : state->running_var.data()) v = 0.5 + v * v;
    cases.push_back({"batchnorm.input", s, [=](VD v) {
                       Tape<double>& t = *v.tape;
                       return project(batchnorm(v, t.constant(gamma), t.constant(beta), *state, Mode::Train), r);
                     }, next()});
    cases.push_back({"batchnorm.gamma", gamma.shape(), [=](VD v) {
                       Tape<double>& t = *v.tape;
                       return project(batchnorm(t.constant(x), v, t.constant(beta), *state, Mode::Train), r);
                     }, next()});
    cases.push_back({"batchnorm.beta", beta.shape(), [=](VD v) {
                       Tape<double>& t = *v.tape;
                       return project(batchnorm(t.constant(x), t.constant(gamma), v, *state, Mode::Train), r);
                     }, next()});
    cases.push_back({"batchnorm.eval", s, [=](VD v) {
                       Tape<double>& t = *v.tape;
                       return project(batchnorm(v, t.constant(gamma), t.constant(beta), *state, Mode::Eval), r);
                     }, next()});
  }

  const std::vector<Shape> pool_shapes = {{1, 1, 2, 2}, {1, 2, 4, 4}, {2, 1, 6, 4}, {2, 3, 4, 6}, {1, 2, 8, 8}};
  for (const auto& s : pool_shapes) {
    const std::uint64_t r = next();
    cases.push_back({"maxpool2d", s, [=](VD v) { return project(maxpool2d(v), r); }, next(), true});
  }

  const std::vector<std::pair<Shape, std::size_t>> up_shapes = {
      {{1, 1, 2, 2}, 1}, {{1, 2, 2, 3}, 2}, {{2, 1, 3, 3}, 3}, {{1, 3, 2, 2}, 4}, {{2, 2, 3, 2}, 2}};
  for (const auto& [s, theta] : up_shapes) {
    const std::uint64_t r = next();
    const std::size_t th = theta;
    cases.push_back({"nn_upsample", s, [=](VD v) { return project(nn_upsample(v, th), r); }, next()});
  }

  struct TShape {
    std::size_t n, c, h, w, o, k;
  };
  const std::vector<TShape> tconv_shapes = {
      {1, 1, 2, 2, 1, 2}, {1, 2, 3, 3, 2, 4}, {2, 2, 2, 3, 1, 4}, {1, 3, 3, 2, 2, 2}, {2, 1, 4, 4, 3, 4}};
  for (const auto& s : tconv_shapes) {
    const TD x = random_tensor({s.n, s.c, s.h, s.w}, next());
    const TD w = random_tensor({s.c, s.o, s.k, s.k}, next(), 0.5);
    const TD b = random_tensor({s.o}, next());
    const std::uint64_t r = next();
    cases.push_back({"transposed_conv2d.input", x.shape(), [=](VD v) {
                       Tape<double>& t = *v.tape;
                       return project(transposed_conv2d(v, t.constant(w), t.constant(b)), r);
                     }, next()});
    cases.push_back({"transposed_conv2d.weight", w.shape(), [=](VD v) {
                       Tape<double>& t = *v.tape;
                       return project(transposed_conv2d(t.constant(x), v, t.constant(b)), r);
                     }, next()});
    cases.push_back({"transposed_conv2d.bias", b.shape(), [=](VD v) {
                       Tape<double>& t = *v.tape;
                       return project(transposed_conv2d(t.constant(x), t.constant(w), v), r);
                     }, next()});
  }

  const std::vector<Shape> loss_shapes = {{1, 1, 2, 2}, {1, 1, 4, 4}, {2, 1, 3, 5}, {3, 1, 4, 2}, {2, 1, 8, 8}};
  for (const auto& s : loss_shapes) {
    const TD z = random_binary(s, next());
    cases.push_back({"bce_loss", s, [=](VD v) { return bce_with_logits(v, z); }, next()});
    cases.push_back({"soft_jaccard", s, [=](VD v) { return soft_jaccard(sigmoid(v), z); }, next()});
    cases.push_back({"combined_loss", s, [=](VD v) { return combined_loss(v, z); }, next()});
  }
  const std::vector<Shape> multi_shapes = {{1, 2, 2, 2}, {1, 3, 3, 3}, {2, 4, 2, 3}, {1, 4, 4, 4}, {2, 3, 2, 2}};
  for (const auto& s : multi_shapes) {
    const TD z = random_onehot(s, next());
    cases.push_back({"combined_loss.multiclass", s, [=](VD v) { return combined_loss(v, z); }, next()});
  }

  const std::vector<std::pair<Shape, std::size_t>> fc_shapes = {
      {{1, 2, 2, 2}, 3}, {{2, 3, 2, 2}, 2}, {{3, 1, 3, 3}, 4}, {{2, 4, 1, 2}, 1}, {{1, 5, 2, 2}, 2}};
  for (const auto& [s, outs] : fc_shapes) {
    const TD w = random_tensor({outs, s[1]}, next());
    const TD b = random_tensor({outs}, next());
    const std::uint64_t r = next();
    cases.push_back({"gap_linear", s, [=](VD v) {
                       Tape<double>& t = *v.tape;
                       return project(linear(global_avg_pool(v), t.constant(w), t.constant(b)), r);
                     }, next()});
  }
  return cases;
}

std::vector<GradCheckRow> run_grad_cases(const std::vector<GradCase>& cases, double tolerance) {
  std::vector<GradCheckRow> rows;
  for (const auto& c : cases) {
    GradCheckRow row{c.op, c.shape, finite_diff_check(c.fn, make_input(c)), false};
    row.passed = row.result.max_rel_error < tolerance;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_grad_table(const std::vector<GradCheckRow>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-26s %-16s %12s %8s %14s %14s  %s\n", "op", "shape", "max_rel_err", "worst",
                "analytic", "numeric", "status");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-26s %-16s %12.3e %8zu %14.6e %14.6e  %s\n", r.op.c_str(),
                  shape_text(r.shape).c_str(), r.result.max_rel_error, r.result.worst_index, r.result.analytic,
                  r.result.numeric, r.passed ? "PASS" : "FAIL");
    out += line;
  }
  return out;
}

}  // namespace unetplus
