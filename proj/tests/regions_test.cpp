#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "advmap/regions/report.hpp"
#include "advmap/regions/volume.hpp"
#include "test_util.hpp"

namespace advmap {
namespace {

using regions::PixelInterval;
using regions::RegionType;

attacks::AdversarialSet synthetic_set(std::size_t h, std::size_t n, std::uint64_t seed,
                                      attacks::AttackKind kind = attacks::AttackKind::kCw2) {
  CounterRng rng(seed);
  attacks::AdversarialSet set;
  set.kind = kind;
  set.true_class = 1;
  set.target_class = 2;
  set.clean.label = 1;
  for (std::size_t i = 0; i < h; ++i) set.clean.pixels.push_back(static_cast<float>(rng.below(4)) / 4.0f);
  for (std::size_t e = 0; e < n; ++e) {
    data::ImageVec im = set.clean;
    for (std::size_t i = 0; i < h; ++i)
      if (rng.uniform() < 0.4) im.pixels[i] = static_cast<float>(rng.uniform());
    set.l2.push_back(attacks::l2_distance(im.span(), set.clean.span()));
    set.examples.push_back(std::move(im));
  }
  set.delta = 100.0;
  return set;
}

TEST(Intervals, ExampleFromDefinition) {
  attacks::AdversarialSet set;
  set.kind = attacks::AttackKind::kFgsm;
  set.clean.pixels = {0.3f, 0.7f};
  for (float v : {0.2f, 0.5f, 0.4f}) set.examples.push_back({{v, 0.7f}, 1, {}});
  const auto iv = regions::compute_intervals(set);
  ASSERT_EQ(iv.size(), 1u);
  EXPECT_EQ(iv[0].index, 0u);
  EXPECT_EQ(iv[0].lo, 0.2f);
  EXPECT_EQ(iv[0].hi, 0.5f);
  EXPECT_NEAR(iv[0].size(), 0.3, 1e-7);
}

TEST(Intervals, MatchBruteForceOnRandomSets) {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const auto set = synthetic_set(12, 5, trial);
    std::vector<PixelInterval> brute;
    for (std::size_t i = 0; i < 12; ++i) {
      float lo = 2.0f, hi = -1.0f;
      bool moved = false;
      for (const auto& e : set.examples) {
        lo = std::min(lo, e.pixels[i]);
        hi = std::max(hi, e.pixels[i]);
        moved |= std::abs(e.pixels[i] - set.clean.pixels[i]) > 1e-6;
      }
      if (moved) brute.push_back({i, lo, hi});
    }
    regions::rank_intervals(brute);
    EXPECT_EQ(regions::compute_intervals(set), brute) << "trial " << trial;
  }
}

TEST(Intervals, RankedAndOrderInvariant) {
  auto set = synthetic_set(40, 8, 77);
  const auto a = regions::compute_intervals(set);
  for (std::size_t k = 1; k < a.size(); ++k) {
    EXPECT_GE(a[k - 1].size(), a[k].size());
    if (a[k - 1].size() == a[k].size()) EXPECT_LT(a[k - 1].index, a[k].index);
  }
  std::reverse(set.examples.begin(), set.examples.end());
  EXPECT_EQ(regions::compute_intervals(set), a);
  const auto r1 = regions::build_rectangle(set, a, 5);
  std::rotate(set.examples.begin(), set.examples.begin() + 3, set.examples.end());
  const auto r2 = regions::build_rectangle(set, regions::compute_intervals(set), 5);
  EXPECT_EQ(r1.base, r2.base);
}

TEST(Intervals, PointwiseUsesFullRange) {
  const auto set = synthetic_set(10, 4, 5, attacks::AttackKind::kPw);
  for (const auto& iv : regions::compute_intervals(set)) {
    EXPECT_EQ(iv.lo, 0.0f);
    EXPECT_EQ(iv.hi, 1.0f);
  }
}

TEST(Intervals, EmptySetRejected) {
  attacks::AdversarialSet set;
  set.clean.pixels = {0.5f};
  EXPECT_THROW(regions::compute_intervals(set), Error);
}

TEST(ChooseB, ThresholdRule) {
  const std::vector<PixelInterval> iv = {{0, 0.0f, 0.5f}, {1, 0.0f, 0.4f}, {2, 0.0f, 0.01f}};
  EXPECT_EQ(regions::choose_b(iv, 0.05), 2u);
  EXPECT_EQ(regions::choose_b(iv, 0.0), 3u);
  EXPECT_EQ(regions::choose_b(iv, 0.9), 1u);
}

TEST(Rectangle, SelectionAndBases) {
  const auto set = synthetic_set(30, 6, 3);
  const auto iv = regions::compute_intervals(set);
  const auto m = iv.size();
  EXPECT_THROW(regions::build_rectangle(set, iv, 0), Error);
  EXPECT_THROW(regions::build_rectangle(set, iv, m + 1), Error);
  const auto all = regions::build_rectangle(set, iv, m);
  EXPECT_EQ(all.b(), m);
  EXPECT_EQ(all.smallest_size, iv.back().size());

  const auto rect = regions::build_rectangle(set, iv, 3, regions::BaseMode::kMedian);
  const auto clean_mode = regions::build_rectangle(set, iv, 3, regions::BaseMode::kClean);
  for (std::size_t k = 3; k < m; ++k) {
    const auto i = iv[k].index;
    std::vector<float> col;
    for (const auto& e : set.examples) col.push_back(e.pixels[i]);
    std::sort(col.begin(), col.end());
    EXPECT_FLOAT_EQ(rect.base[i], (col[2] + col[3]) / 2);
    EXPECT_EQ(clean_mode.base[i], set.clean.pixels[i]);
  }
  for (float v : rect.lower()) EXPECT_GE(v, 0.0f);
  for (float v : rect.upper()) EXPECT_LE(v, 1.0f);
  const auto back = regions::rectangle_from_json(regions::rectangle_json(rect));
  EXPECT_EQ(back.selected, rect.selected);
  EXPECT_EQ(back.base, rect.base);
}

TEST(Sample, InsideRectangleAndDeterministic) {
  const auto set = synthetic_set(50, 10, 8);
  const auto iv = regions::compute_intervals(set);
  const auto rect = regions::build_rectangle(set, iv, 10);
  const auto a = regions::sample(rect, 200, 4), b = regions::sample(rect, 200, 4);
  for (std::size_t s = 0; s < a.size(); ++s) {
    EXPECT_TRUE(rect.contains(a[s].span()));
    EXPECT_TRUE(a[s].in_unit_box());
    EXPECT_EQ(a[s].pixels, b[s].pixels);
  }
}

TEST(Sample, ZeroWidthGivesIdenticalImages) {
  regions::HyperRectangle rect;
  rect.base = {0.1f, 0.2f, 0.3f};
  rect.selected = {{1, 0.2f, 0.2f}};
  const auto s = regions::sample(rect, 5, 1);
  for (const auto& im : s) EXPECT_EQ(im.pixels, rect.base);
}

TEST(Sample, UniformWithinThreeStandardErrors) {
  const auto set = synthetic_set(60, 10, 21);
  const auto iv = regions::compute_intervals(set);
  const auto rect = regions::build_rectangle(set, iv, iv.size());
  const std::size_t n = 1000;
  const auto s = regions::sample(rect, n, 99);
  for (const auto& sel : rect.selected) {
    double mean = 0.0;
    for (const auto& im : s) mean += im.pixels[sel.index];
    mean /= static_cast<double>(n);
    const double se = sel.size() / std::sqrt(12.0 * static_cast<double>(n));
    EXPECT_LE(std::abs(mean - (sel.lo + sel.hi) / 2.0), 3.0 * se + 1e-7) << "pixel " << sel.index;
  }
}

TEST(Sample, BallRestrictedSamplesStayInBall) {
  const auto set = synthetic_set(60, 10, 13);
  const auto iv = regions::compute_intervals(set);
  const auto rect = regions::build_rectangle(set, iv, iv.size());
  const double radius = set.l2_stats().mean;
  regions::BallSampleStats stats;
  const auto s = regions::sample_in_ball(rect, 300, 7, set.clean.span(), radius, 50, &stats);
  for (const auto& im : s) EXPECT_LE(attacks::l2_distance(im.span(), set.clean.span()), radius);
  EXPECT_GE(stats.draws, s.size());
  const auto again = regions::sample_in_ball(rect, 300, 7, set.clean.span(), radius, 50);
  for (std::size_t k = 0; k < s.size(); ++k) EXPECT_EQ(s[k].pixels, again[k].pixels);
}

TEST(Classify, TableExamples) {
  const std::vector<double> type1 = {0.929, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<double> type2 = {0, 0, 0, 0.001, 0.004, 0.925, 1, 0.58, 0.991, 1};
  const std::vector<double> type3 = {0.826, 0.81, 0.824, 0.812, 0.832, 0.811, 0.825, 0.813, 0.801, 0.828};
  EXPECT_EQ(regions::classify_region(type1, 0, 0.8, 0.05), RegionType::kType1);
  EXPECT_EQ(regions::classify_region(type2, 0, 0.8, 0.05), RegionType::kType2);
  EXPECT_EQ(regions::classify_region(type3, 0, 0.8, 0.05), RegionType::kType3);
  const std::vector<double> middle = {0.5, 0.4, 0.6};
  EXPECT_EQ(regions::classify_region(middle, 0, 0.8, 0.05), RegionType::kUnclassified);
  EXPECT_TRUE(regions::is_uncertainty_type(RegionType::kType1));
  EXPECT_FALSE(regions::is_uncertainty_type(RegionType::kType3));
}

TEST(Classify, RaisingThetaHighNeverCreatesType3) {
  CounterRng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> rates(10);
    for (auto& r : rates) r = rng.uniform();
    for (double th = 0.5; th < 1.0; th += 0.05) {
      if (regions::classify_region(rates, 0, th, 0.05) != RegionType::kUnclassified) continue;
      for (double higher = th; higher <= 1.0; higher += 0.05)
        EXPECT_NE(regions::classify_region(rates, 0, higher, 0.05), RegionType::kType3);
    }
  }
}

TEST(Evaluate, IdenticalModelsGiveEqualRates) {
  auto arch = nn::Architecture::custom({1, 1, 8});
  arch.dense(6).relu().dense(3);
  const auto net = testing::random_network<float>(arch, 3, 1.0);
  std::vector<nn::Model> models;
  for (std::uint64_t s : {1, 2, 3}) models.push_back({net, s, {}, {}});
  const ensemble::Ensemble ens(models);

  auto set = synthetic_set(8, 6, 2);
  set.true_class = 0;
  const auto rect = regions::build_rectangle(set, regions::compute_intervals(set), 4);
  const auto samples = regions::sample(rect, 100, 5);
  const auto r = regions::evaluate(rect, ens, samples, set);
  ASSERT_EQ(r.rates.size(), 3u);
  EXPECT_EQ(r.rates[0], r.rates[1]);
  EXPECT_EQ(r.rates[1], r.rates[2]);
  EXPECT_EQ(r.disagreement, 0.0);
  EXPECT_LE(r.sample_l2.min, r.sample_l2.mean);
  EXPECT_LE(r.sample_l2.mean, r.sample_l2.max);
  const auto back = regions::report_from_json(regions::report_json(r));
  EXPECT_EQ(regions::report_json(back), regions::report_json(r));
}

TEST(BallVolume, ClosedFormsInLowDimensions) {
  for (double d : {0.5, 1.0, 2.0}) {
    EXPECT_NEAR(regions::ball_volume(1, d).value, 2 * d, 1e-12);
    EXPECT_NEAR(regions::ball_volume(2, d).value, std::numbers::pi * d * d, 1e-12);
  }
  EXPECT_NEAR(regions::ball_volume(3, 0.5).value, 4.0 / 3.0 * std::numbers::pi * 0.125, 1e-12);
}

TEST(BallVolume, MatchesMonteCarlo) {
  CounterRng rng(123);
  const double delta = 0.5;
  const std::size_t n = 400000;
  for (std::size_t h : {3u, 4u, 5u}) {
    std::size_t inside = 0;
    for (std::size_t s = 0; s < n; ++s) {
      double r2 = 0.0;
      for (std::size_t i = 0; i < h; ++i) {
        const double x = rng.uniform(-delta, delta);
        r2 += x * x;
      }
      inside += r2 <= delta * delta;
    }
    const double mc = std::pow(2 * delta, static_cast<double>(h)) * static_cast<double>(inside) / n;
    EXPECT_NEAR(regions::ball_volume(h, delta).value / mc, 1.0, 0.02) << "h = " << h;
  }
}

TEST(BallVolume, DecreasingInDimension) {
  double prev = regions::ball_volume(1, 0.5).log_value;
  for (std::size_t h = 2; h <= 784; ++h) {
    const double cur = regions::ball_volume(h, 0.5).log_value;
    EXPECT_LT(cur, prev) << "h = " << h;
    prev = cur;
  }
  EXPECT_FALSE(regions::ball_volume(784, 0.5).representable);
  EXPECT_TRUE(std::isfinite(regions::ball_volume(784, 0.5).log_value));
  EXPECT_THROW(regions::ball_volume(0, 1.0), Error);
  EXPECT_THROW(regions::ball_volume(3, 0.0), Error);
}

}  // namespace
}  // namespace advmap
