#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advmap/attacks/generate.hpp"
#include "advmap/nn/train.hpp"
#include "test_util.hpp"

namespace advmap {
namespace {

using attacks::AttackConfig;
using attacks::AttackKind;
using attacks::Norm;

// A small dense net trained briefly on part of MNIST, shared by the suite.
struct Trained {
  nn::Network<float> net;
  data::Dataset test;
  data::ImageVec one;  // first correctly classified test "1"
};

const Trained& trained() {
  static const Trained t = [] {
    auto arch = nn::Architecture::custom({28, 28, 1});
    arch.dense(100).relu().dense(10);
    nn::TrainConfig cfg;
    cfg.seed = 11;
    cfg.epochs = 2;
    const auto train = data::head(data::load_mnist(testing::mnist_dir(), data::Split::kTrain), 12000);
    Trained out{nn::train(arch, train, cfg).net, data::load_mnist(testing::mnist_dir(), data::Split::kTest), {}};
    for (const auto& im : out.test.images)
      if (*im.label == 1 && out.net.predict(im.span()) == 1) {
        out.one = im;
        break;
      }
    return out;
  }();
  return t;
}

AttackConfig make_config(AttackKind kind, int target = attacks::kUntargeted) {
  AttackConfig cfg;
  cfg.kind = kind;
  cfg.target = target;
  cfg.seed = 5;
  cfg.restarts = 4;
  return cfg;
}

void expect_membership(const nn::Network<float>& net, const attacks::AdversarialSet& set) {
  ASSERT_EQ(set.examples.size(), set.l2.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& e = set.examples[i];
    EXPECT_TRUE(e.in_unit_box());
    EXPECT_EQ(net.predict(e.span()), set.target_class);
    EXPECT_NE(set.target_class, set.true_class);
    EXPECT_LE(attacks::l2_distance(e.span(), set.clean.span()), set.delta);
    EXPECT_DOUBLE_EQ(set.l2[i], attacks::l2_distance(e.span(), set.clean.span()));
  }
  if (!set.empty()) {
    const auto s = set.l2_stats();
    EXPECT_LE(s.min, s.mean);
    EXPECT_LE(s.mean, s.max);
  }
}

// Two-class linear model on a constant 0.5 image; logit margin = d . x with
// d = w_0 - w_1.
struct LinearCase {
  nn::Network<float> net;
  data::ImageVec clean;
  double margin = 0.0, d_l1 = 0.0;
};

LinearCase linear_case() {
  const std::size_t h = 6;
  const std::vector<double> d = {0.4, -0.3, 0.2, 0.5, -0.1, 0.3};
  std::vector<double> w(h * 2);
  LinearCase lc;
  for (std::size_t i = 0; i < h; ++i) {
    w[i * 2] = d[i];
    w[i * 2 + 1] = 0.0;
    lc.margin += d[i] * 0.5;
    lc.d_l1 += std::abs(d[i]);
  }
  lc.net = testing::linear_model(h, 2, w).cast<float>();
  lc.clean.pixels.assign(h, 0.5f);
  lc.clean.label = 0;
  return lc;
}

TEST(Norms, ProjectionsLandOnTheBall) {
  CounterRng rng(3);
  for (Norm norm : {Norm::kL1, Norm::kL2, Norm::kLinf}) {
    std::vector<double> v(50);
    for (auto& x : v) x = rng.uniform(-1, 1);
    attacks::project_ball(norm, v, 0.7);
    double n = 0.0;
    for (double x : v)
      n = norm == Norm::kL1 ? n + std::abs(x) : norm == Norm::kL2 ? n + x * x : std::max(n, std::abs(x));
    if (norm == Norm::kL2) n = std::sqrt(n);
    EXPECT_NEAR(n, 0.7, 1e-9);
  }
}

TEST(Norms, L1ProjectionMatchesSoftThreshold) {
  // Reference: bisection on the soft-threshold level.
  CounterRng rng(9);
  std::vector<double> v(40);
  for (auto& x : v) x = rng.uniform(-1, 1);
  const double radius = 2.0;
  auto shrunk = [&](double lam) {
    double s = 0.0;
    for (double x : v) s += std::max(std::abs(x) - lam, 0.0);
    return s;
  };
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) ((shrunk((lo + hi) / 2) > radius) ? lo : hi) = (lo + hi) / 2;
  auto projected = v;
  attacks::project_l1_ball(projected, radius);
  for (std::size_t i = 0; i < v.size(); ++i)
    EXPECT_NEAR(projected[i], std::copysign(std::max(std::abs(v[i]) - lo, 0.0), v[i]), 1e-9);
}

TEST(Norms, InsideBallIsUntouched) {
  std::vector<double> v = {0.1, -0.2};
  attacks::project_ball(Norm::kL2, v, 1.0);
  EXPECT_EQ(v, (std::vector<double>{0.1, -0.2}));
}

TEST(Fgsm, ZeroStepIsRejected) {
  auto cfg = make_config(AttackKind::kFgsm);
  cfg.epsilons = {0.0};
  const auto lc = linear_case();
  EXPECT_THROW(attacks::fgsm(lc.net, lc.clean, cfg), Error);
}

TEST(Fgsm, VanishingStepNeverFlips) {
  const auto lc = linear_case();
  auto cfg = make_config(AttackKind::kFgsm);
  cfg.epsilons = {1e-7};
  cfg.start_radius = 0.0;
  EXPECT_TRUE(attacks::fgsm(lc.net, lc.clean, cfg).empty());
}

TEST(Fgsm, LinearModelFlipsAtClosedFormMargin) {
  const auto lc = linear_case();
  const double critical = lc.margin / lc.d_l1;
  auto cfg = make_config(AttackKind::kFgsm);
  cfg.restarts = 1;
  for (double scale : {0.9, 0.99, 1.01, 1.1}) {
    cfg.epsilons = {critical * scale};
    const auto batch = attacks::run_candidates(lc.net, lc.clean, cfg);
    EXPECT_EQ(lc.net.predict(batch.x).front() == 1, scale > 1.0) << "scale " << scale;
  }
}

TEST(Fgsm, TargetedStepRaisesTargetProbability) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kFgsm, 7);
  cfg.epsilons = {0.05};
  const auto batch = attacks::run_candidates(t.net, t.one, cfg);
  const auto before = t.net.probabilities(data::to_matrix<float>(t.one));
  const auto after = t.net.probabilities(batch.x);
  EXPECT_GT(after(0, 7), before(0, 7));
}

TEST(Bim, SingleLinfIterationEqualsFgsm) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kBimLinf);
  cfg.restarts = 1;
  cfg.iterations = 1;
  cfg.epsilons = {0.1, 0.2};
  cfg.step_size = 0.0;
  auto fg = cfg;
  fg.kind = AttackKind::kFgsm;
  // With one iteration the step must equal the budget for the two to agree.
  for (double e : cfg.epsilons) {
    auto b = cfg, f = fg;
    b.epsilons = f.epsilons = {e};
    b.step_size = e;
    EXPECT_EQ(attacks::run_candidates(t.net, t.one, b).x, attacks::run_candidates(t.net, t.one, f).x);
  }
}

TEST(Bim, OutputsRespectBudgetsExactly) {
  const auto& t = trained();
  for (AttackKind kind : {AttackKind::kBimL1, AttackKind::kBimL2, AttackKind::kBimLinf}) {
    auto cfg = make_config(kind);
    const Norm norm = attacks::bim_norm(kind);
    cfg.epsilons = norm == Norm::kL1 ? std::vector<double>{5.0, 20.0}
                   : norm == Norm::kL2 ? std::vector<double>{1.0, 3.0}
                                       : std::vector<double>{0.05, 0.2};
    const auto batch = attacks::run_candidates(t.net, t.one, cfg);
    for (Eigen::Index r = 0; r < batch.x.rows(); ++r) {
      const auto row = data::from_row(batch.x, r);
      EXPECT_TRUE(row.in_unit_box());
      EXPECT_LE(attacks::norm_distance(norm, row.span(), t.one.span()),
                cfg.epsilons[static_cast<std::size_t>(r / cfg.restarts)]);
    }
  }
}

TEST(Mi, ZeroMomentumMatchesBimLinf) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kMi, 3);
  cfg.restarts = 1;
  cfg.momentum = 0.0;
  cfg.epsilons = {0.15};
  auto b = cfg;
  b.kind = AttackKind::kBimLinf;
  EXPECT_EQ(attacks::run_candidates(t.net, t.one, cfg).x, attacks::run_candidates(t.net, t.one, b).x);
}

TEST(Mi, StaysInsideLinfBudget) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kMi);
  cfg.epsilons = {0.1};
  const auto set = attacks::mi(t.net, t.one, cfg);
  for (const auto& e : set.examples) EXPECT_LE(attacks::linf_distance(e.span(), t.one.span()), 0.1);
  expect_membership(t.net, set);
}

TEST(NewtonFool, RejectsMisclassifiedInputAndTargets) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kNf);
  auto wrong = t.one;
  wrong.label = 4;
  EXPECT_THROW(attacks::newtonfool(t.net, wrong, cfg), Error);
  cfg.target = 2;
  EXPECT_THROW(attacks::newtonfool(t.net, t.one, cfg), Error);
}

TEST(NewtonFool, TrueClassProbabilityMostlyDecreases) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kNf);
  cfg.nf_etas = {0.01, 0.03, 0.1};
  std::size_t steps = 0, monotone = 0;
  for (std::size_t i = 0, used = 0; i < t.test.size() && used < 5; ++i) {
    const auto& im = t.test[i];
    if (t.net.predict(im.span()) != *im.label) continue;
    ++used;
    const auto batch = attacks::run_candidates(t.net, im, cfg);
    for (const auto& trace : batch.traces)
      for (std::size_t k = 1; k < trace.size(); ++k, ++steps) monotone += trace[k] <= trace[k - 1] + 1e-7;
  }
  ASSERT_GT(steps, 20u);
  EXPECT_GE(static_cast<double>(monotone) / static_cast<double>(steps), 0.95);
}

TEST(NewtonFool, FlipsTheLabel) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kNf);
  cfg.nf_etas = {0.02, 0.05};
  const auto set = attacks::newtonfool(t.net, t.one, cfg);
  EXPECT_FALSE(set.empty());
  expect_membership(t.net, set);
}

TEST(Pointwise, ResultsAreLocallyL0Minimal) {
  const auto& t = trained();
  for (int target : {attacks::kUntargeted, 7}) {
    auto cfg = make_config(AttackKind::kPw, target);
    const auto batch = attacks::run_candidates(t.net, t.one, cfg);
    std::size_t checked = 0;
    for (Eigen::Index r = 0; r < batch.x.rows(); ++r) {
      auto x = data::from_row(batch.x, r);
      const int label = t.net.predict(x.span());
      const bool ok = target == attacks::kUntargeted ? label != 1 : label == target;
      if (!ok) continue;
      ++checked;
      for (std::size_t j = 0; j < x.size(); ++j) {
        EXPECT_GE(x.pixels[j], 0.0f);
        EXPECT_LE(x.pixels[j], 1.0f);
        if (x.pixels[j] == t.one.pixels[j]) continue;
        auto restored = x;
        restored.pixels[j] = t.one.pixels[j];
        const int l = t.net.predict(restored.span());
        EXPECT_FALSE(target == attacks::kUntargeted ? l != 1 : l == target) << "pixel " << j;
      }
    }
    EXPECT_GT(checked, 0u);
  }
}

TEST(Pointwise, PerturbsFewPixels) {
  const auto& t = trained();
  const auto set = attacks::pointwise(t.net, t.one, make_config(AttackKind::kPw));
  ASSERT_FALSE(set.empty());
  EXPECT_LT(set.mean_perturbed_pixels(), 200.0);
  expect_membership(t.net, set);
}

TEST(Cw2, LargeConstantAlwaysFindsTarget) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kCw2, 7);
  cfg.cw_initial_const = 1e3;
  cfg.cw_binary_steps = 1;
  cfg.cw_iterations = 150;
  const auto batch = attacks::run_candidates(t.net, t.one, cfg);
  for (int l : t.net.predict(batch.x)) EXPECT_EQ(l, 7);
}

TEST(Cw2, BinarySearchShrinksDistance) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kCw2, 7);
  cfg.restarts = 2;
  cfg.cw_binary_steps = 5;
  cfg.cw_iterations = 150;
  const auto set = attacks::cw2(t.net, t.one, cfg);
  ASSERT_FALSE(set.empty());
  expect_membership(t.net, set);
  auto big = cfg;
  big.cw_initial_const = 1e3;
  big.cw_binary_steps = 1;
  const auto coarse = attacks::cw2(t.net, t.one, big);
  ASSERT_FALSE(coarse.empty());
  EXPECT_LT(set.l2_stats().min, coarse.l2_stats().min);
}

TEST(GenerateSet, MembershipAndDeterminism) {
  const auto& t = trained();
  for (AttackKind kind : attacks::kAllAttackKinds) {
    auto cfg = make_config(kind);
    cfg.epsilons = kind == AttackKind::kBimL1 ? std::vector<double>{10.0, 20.0}
                   : kind == AttackKind::kBimL2 ? std::vector<double>{2.0, 4.0}
                                                : std::vector<double>{0.1, 0.3};
    cfg.cw_binary_steps = 2;
    cfg.cw_iterations = 60;
    cfg.nf_etas = {0.05};
    const int target = 7;
    const auto a = attacks::generate_set(t.net, t.one, cfg, target);
    const auto b = attacks::generate_set(t.net, t.one, cfg, target);
    SCOPED_TRACE(std::string(attacks::attack_name(kind)));
    expect_membership(t.net, a);
    EXPECT_EQ(a.target_class, target);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.examples[i].pixels, b.examples[i].pixels);
    EXPECT_EQ(a.shortfall, a.size() < a.requested);
  }
}

TEST(GenerateSet, ZeroDeltaGivesEmptySet) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kFgsm);
  cfg.delta = 0.0;
  const auto set = attacks::generate_set(t.net, t.one, cfg, 8);
  EXPECT_TRUE(set.empty());
  EXPECT_TRUE(set.shortfall);
}

TEST(GenerateSet, ExplicitDeltaFilters) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kBimL2);
  cfg.epsilons = {1.0, 2.0, 3.0, 4.0};
  const auto wide = attacks::generate_set(t.net, t.one, cfg, 7);
  ASSERT_GT(wide.size(), 1u);
  cfg.delta = wide.l2_stats().mean;
  const auto narrow = attacks::generate_set(t.net, t.one, cfg, 7);
  EXPECT_LT(narrow.size(), wide.size());
  for (double d : narrow.l2) EXPECT_LE(d, *cfg.delta);
}

TEST(GenerateSet, UntargetedRunIsSharedAcrossTargets) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kNf);
  cfg.nf_etas = {0.02, 0.05, 0.1};
  const auto targets = attacks::all_targets(1, 10);
  const auto sets = attacks::generate_sets(t.net, t.one, cfg, targets);
  ASSERT_EQ(sets.size(), 9u);
  std::size_t total = 0;
  for (const auto& s : sets) {
    expect_membership(t.net, s);
    total += s.size();
  }
  // Every misclassified untargeted candidate lands in exactly one set.
  EXPECT_GT(total, 0u);
}

TEST(AdversarialSet, SaveLoadRoundTrip) {
  const auto& t = trained();
  auto cfg = make_config(AttackKind::kBimLinf);
  cfg.epsilons = {0.1, 0.2};
  const auto set = attacks::generate_set(t.net, t.one, cfg, 7);
  ASSERT_FALSE(set.empty());
  const auto dir = testing::temp_dir("set_io");
  attacks::save_set(dir / "s", set);
  const auto back = attacks::load_set(dir / "s.json");
  EXPECT_EQ(back.kind, set.kind);
  EXPECT_EQ(back.target_class, 7);
  EXPECT_EQ(back.delta, set.delta);
  EXPECT_EQ(back.clean.pixels, set.clean.pixels);
  ASSERT_EQ(back.size(), set.size());
  for (std::size_t i = 0; i < set.size(); ++i) EXPECT_EQ(back.examples[i].pixels, set.examples[i].pixels);
  EXPECT_EQ(back.runs.size(), set.runs.size());
}

TEST(AttackConfig, JsonRoundTripAndValidation) {
  auto cfg = make_config(AttackKind::kCw2, 3);
  cfg.delta = 4.5;
  cfg.epsilons = {0.1, 0.2};
  const nlohmann::json j = cfg;
  const auto back = j.get<AttackConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  auto bad = cfg;
  bad.count = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = cfg;
  bad.delta = -1.0;
  EXPECT_THROW(bad.validate(), Error);
}

}  // namespace
}  // namespace advmap
