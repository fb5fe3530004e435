#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "unetplus/metrics.hpp"
#include "unetplus/optim.hpp"

using namespace unetplus;

namespace {

using Bits = std::vector<std::uint8_t>;

Bits bits9(unsigned pattern) {
  Bits b(9);
  for (unsigned i = 0; i < 9; ++i) b[i] = (pattern >> i) & 1u;
  return b;
}

std::set<std::size_t> members(const Bits& b) {
  std::set<std::size_t> s;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[i]) s.insert(i);
  }
  return s;
}

// Set-algebra scores; both-empty scores 1.
std::pair<double, double> set_oracle(const Bits& t, const Bits& p) {
  const auto a = members(t), b = members(p);
  std::set<std::size_t> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(inter, inter.begin()));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::inserter(uni, uni.begin()));
  if (uni.empty()) return {1.0, 1.0};
  return {static_cast<double>(inter.size()) / static_cast<double>(uni.size()),
          2.0 * static_cast<double>(inter.size()) / static_cast<double>(a.size() + b.size())};
}

Tensor<double> probs_of(std::initializer_list<double> v) { return Tensor<double>({v.size()}, std::vector<double>(v)); }

}  // namespace

TEST(Iou, HandExamples) {
  EXPECT_DOUBLE_EQ(iou_hard(Bits{1, 1, 0, 0}, Bits{1, 1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(iou_hard(Bits{1, 1, 0, 0}, Bits{1, 0, 1, 0}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou_hard(Bits{0, 0}, Bits{0, 0}), 1.0);
  EXPECT_THROW(iou_hard(Bits{1, 0}, Bits{1}), ShapeError);
}

TEST(Dice, HandExamples) {
  EXPECT_DOUBLE_EQ(dice(Bits{1, 1, 0, 0}, Bits{1, 0, 1, 0}), 0.5);
  EXPECT_DOUBLE_EQ(dice(Bits{1, 1, 0, 0}, Bits{0, 0, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(dice(Bits{0, 0}, Bits{0, 0}), 1.0);
  EXPECT_THROW(dice(Bits{1, 0}, Bits{1, 0, 0}), ShapeError);
}

TEST(Metrics, ExhaustiveThreeByThreeAgainstSetOracle) {
  std::size_t mismatches = 0;
  for (unsigned a = 0; a < 512; ++a) {
    const Bits t = bits9(a);
    for (unsigned b = 0; b < 512; ++b) {
      const Bits p = bits9(b);
      const auto [oi, od] = set_oracle(t, p);
      const double i = iou_hard(t, p), d = dice(t, p);
      if (i != oi || d != od || std::abs(d - 2 * i / (1 + i)) > 1e-15) ++mismatches;
    }
  }
  EXPECT_EQ(mismatches, 0u);
}

TEST(Metrics, SymmetricAndPermutationInvariant) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    Bits t(16), p(16);
    for (auto& v : t) v = rng() & 1;
    for (auto& v : p) v = rng() & 1;
    EXPECT_EQ(iou_hard(t, p), iou_hard(p, t));
    EXPECT_EQ(dice(t, p), dice(p, t));
    std::vector<std::size_t> perm(16);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Bits tp(16), pp(16);
    for (std::size_t i = 0; i < 16; ++i) {
      tp[i] = t[perm[i]];
      pp[i] = p[perm[i]];
    }
    EXPECT_EQ(iou_hard(tp, pp), iou_hard(t, p));
  }
}

TEST(SoftJaccard, HandExamples) {
  EXPECT_NEAR(soft_jaccard(probs_of({1.0}), probs_of({0.5})), 0.5, 1e-6);
  EXPECT_NEAR(soft_jaccard(probs_of({1, 0, 1, 0}), probs_of({1, 0, 1, 0})), 1.0, 1e-12);
  EXPECT_NEAR(soft_jaccard(probs_of({0, 0}), probs_of({0, 0})), 1.0, 1e-12);
}

TEST(SoftJaccard, HardProbabilitiesEqualHardIou) {
  for (unsigned a = 1; a < 512; a += 7) {
    for (unsigned b = 0; b < 512; b += 5) {
      const Bits t = bits9(a), p = bits9(b);
      Tensor<double> tz({9}), pz({9});
      for (std::size_t i = 0; i < 9; ++i) {
        tz[i] = t[i];
        pz[i] = p[i];
      }
      ASSERT_NEAR(soft_jaccard(tz, pz), iou_hard(t, p), 1e-6) << a << " " << b;
    }
  }
}

TEST(Bce, HandExamples) {
  EXPECT_NEAR(bce(probs_of({1.0}), probs_of({0.5})), std::log(2.0), 1e-9);
  EXPECT_NEAR(bce(probs_of({1.0, 0.0}), probs_of({0.5, 0.5})), std::log(2.0), 1e-9);
  EXPECT_NEAR(bce(probs_of({1.0}), probs_of({1.0})), 0.0, 1e-6);
  EXPECT_TRUE(std::isfinite(bce(probs_of({1.0}), probs_of({0.0}))));
}

TEST(CombinedLoss, HandExamples) {
  const Tensor<double> one({1, 1, 1, 1}, 1.0);
  EXPECT_NEAR(combined_loss(one, Tensor<double>({1, 1, 1, 1}, 0.0)), 2 * std::log(2.0), 1e-6);
  Tensor<double> z({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1});
  Tensor<double> logits({1, 1, 2, 2}, std::vector<double>{40, -40, -40, 40});
  EXPECT_NEAR(combined_loss(z, logits), 0.0, 1e-6);
}

TEST(CombinedLoss, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> d(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> z({1, 1, 4, 4}), x({1, 1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) {
      z[i] = rng() & 1;
      x[i] = d(rng);
    }
    EXPECT_GE(combined_loss(z, x), 0.0);
  }
}

TEST(CombinedLoss, OptimizationReachesNearZero) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor<double> z({1, 1, 8, 8});
  for (std::size_t i = 0; i < 64; ++i) z[i] = ((i / 8) * (i % 8)) % 3 == 0 ? 1.0 : 0.0;
  std::vector<NamedArray<double>> params{{"logits", Tensor<double>({1, 1, 8, 8})}};
  for (auto& v : params[0].value.data()) v = d(rng);
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam<double> adam(cfg);
  double loss = 1e9;
  std::size_t steps = 0;
  for (; steps < 500 && loss >= 0.01; ++steps) {
    Tape<double> t;
    auto x = t.leaf(params[0].value, true);
    auto l = combined_loss(x, z);
    loss = l.value().item();
    auto g = t.backward(l);
    adam.step(params, {&g[x]});
  }
  EXPECT_LT(loss, 0.01) << "after " << steps << " steps";
}

TEST(MulticlassReport, PerfectPrediction) {
  Mask m(4, 4);
  m.labels = {0, 1, 1, 2, 0, 1, 2, 2, 0, 0, 2, 2, 1, 1, 0, 0};
  const auto r = multiclass_report(m, m, 3);
  ASSERT_EQ(r.classes.size(), 2u);
  for (const auto& c : r.classes) {
    EXPECT_EQ(c.iou, 1.0);
    EXPECT_EQ(c.dice, 1.0);
  }
  EXPECT_EQ(r.mean_dice, 1.0);
  EXPECT_FALSE(r.no_foreground);
}

TEST(MulticlassReport, NoForeground) {
  const Mask m(3, 3);
  const auto r = multiclass_report(m, m, 4);
  EXPECT_TRUE(r.classes.empty());
  EXPECT_TRUE(r.no_foreground);
}

TEST(MulticlassReport, OutOfRangeLabel) {
  Mask t(2, 2), p(2, 2);
  p.labels[3] = 5;
  EXPECT_THROW(multiclass_report(t, p, 3), LabelError);
  EXPECT_THROW(multiclass_report(Mask(2, 2), Mask(2, 3), 3), ShapeError);
}

TEST(MulticlassReport, RandomPairMatchesSetOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Mask t(8, 8), p(8, 8);
    for (auto& v : t.labels) v = rng() % 3;
    for (auto& v : p.labels) v = rng() % 3;
    const auto r = multiclass_report(t, p, 3);
    double sum_iou = 0, sum_dice = 0;
    std::size_t counted = 0;
    for (std::uint8_t c = 1; c < 3; ++c) {
      Bits tc(64), pc(64);
      for (std::size_t i = 0; i < 64; ++i) {
        tc[i] = t.labels[i] == c;
        pc[i] = p.labels[i] == c;
      }
      if (members(tc).empty() && members(pc).empty()) continue;
      const auto [oi, od] = set_oracle(tc, pc);
      const ClassScore* s = r.find(c);
      ASSERT_NE(s, nullptr);
      EXPECT_DOUBLE_EQ(s->iou, oi);
      EXPECT_DOUBLE_EQ(s->dice, od);
      sum_iou += oi;
      sum_dice += od;
      ++counted;
    }
    EXPECT_NEAR(r.mean_iou, sum_iou / counted, 1e-12);
    EXPECT_NEAR(r.mean_dice, sum_dice / counted, 1e-12);
  }
}

TEST(MulticlassReport, DiceIouIdentityPerClass) {
  std::mt19937_64 rng(2);
  Mask t(6, 6), p(6, 6);
  for (auto& v : t.labels) v = rng() % 4;
  for (auto& v : p.labels) v = rng() % 4;
  for (const auto& c : multiclass_report(t, p, 4).classes) {
    EXPECT_LE(c.iou, c.dice);
    EXPECT_NEAR(c.dice, 2 * c.iou / (1 + c.iou), 1e-12);
  }
}

TEST(MetricsReport, JsonlFieldsExactly) {
  Mask t(2, 2), p(2, 2);
  t.labels = {1, 1, 2, 0};
  p.labels = {1, 0, 2, 0};
  auto r = multiclass_report(t, p, 3);
  r.epoch = 7;
  r.seed = 3;
  r.loss = 0.25;
  std::istringstream in(r.to_jsonl());
  std::string line;
  std::vector<long long> ids;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    std::sort(keys.begin(), keys.end());
    EXPECT_EQ(keys, (std::vector<std::string>{"class_id", "dice", "epoch", "iou", "loss", "seconds", "seed"}));
    EXPECT_EQ(j["epoch"], 7);
    ids.push_back(j["class_id"].get<long long>());
  }
  EXPECT_EQ(ids, (std::vector<long long>{1, 2, -1}));
}

TEST(MetricsReport, AverageSkipsUndefinedClasses) {
  Mask t1(1, 2), p1(1, 2), t2(1, 2), p2(1, 2);
  t1.labels = {1, 0};
  p1.labels = {1, 0};
  t2.labels = {1, 2};
  p2.labels = {0, 2};
  const auto avg = average_reports({multiclass_report(t1, p1, 3), multiclass_report(t2, p2, 3)});
  EXPECT_DOUBLE_EQ(avg.find(1)->dice, 0.5);
  EXPECT_DOUBLE_EQ(avg.find(2)->dice, 1.0);
  EXPECT_DOUBLE_EQ(avg.mean_dice, 0.75);
}

TEST(EncodeTargets, BinaryAndOneHot) {
  Mask m(1, 3);
  m.labels = {0, 2, 1};
  EXPECT_EQ(encode_targets<double>({m}, 1), Tensor<double>({1, 1, 1, 3}, std::vector<double>{0, 1, 1}));
  EXPECT_EQ(encode_targets<double>({m}, 3),
            Tensor<double>({1, 3, 1, 3}, std::vector<double>{1, 0, 0, 0, 0, 1, 0, 1, 0}));
}
