#include <gtest/gtest.h>

#include "advmap/ensemble/ensemble.hpp"
#include "test_util.hpp"

namespace advmap {
namespace {

nn::Architecture tiny_arch() {
  auto arch = nn::Architecture::custom({1, 1, 6});
  arch.dense(5).relu().dense(3);
  return arch;
}

nn::Model tiny_model(std::uint64_t seed) { return {testing::random_network<float>(tiny_arch(), seed), seed, {}, {}}; }

TEST(Ensemble, SeedValidation) {
  const std::vector<std::uint64_t> one = {1}, dup = {1, 2, 1}, ok = {1, 2};
  EXPECT_THROW(ensemble::validate_seeds(one), Error);
  EXPECT_THROW(ensemble::validate_seeds(dup), Error);
  EXPECT_NO_THROW(ensemble::validate_seeds(ok));
  EXPECT_THROW(ensemble::Ensemble({tiny_model(1), tiny_model(1)}), Error);
}

TEST(Ensemble, RejectsMixedArchitectures) {
  auto arch = nn::Architecture::custom({1, 1, 6});
  arch.dense(3);
  nn::Model other{testing::random_network<float>(arch, 9), 9, {}, {}};
  EXPECT_THROW(ensemble::Ensemble({tiny_model(1), other}), Error);
}

TEST(Ensemble, DuplicatedModelNeverDisagrees) {
  auto copy = tiny_model(1);
  copy.seed = 2;
  const ensemble::Ensemble ens({tiny_model(1), copy});
  const auto x = testing::random_inputs<float>(200, 6, 3);
  EXPECT_EQ(ensemble::disagreement_rate(ens, x), 0.0);
  for (Eigen::Index r = 0; r < x.rows(); ++r) EXPECT_FALSE(ensemble::in_uncertainty_region(ens, data::from_row(x, r)));
}

TEST(Ensemble, DecisionAlertsOnDisagreement) {
  const auto agree = ensemble::decide({4, 4, 4});
  EXPECT_FALSE(agree.alert);
  EXPECT_EQ(agree.label, 4);
  const auto split = ensemble::decide({4, 4, 2});
  EXPECT_TRUE(split.alert);
  EXPECT_EQ(split.label, -1);
  EXPECT_EQ(split.labels, (std::vector<int>{4, 4, 2}));
}

TEST(Ensemble, DisagreementRateMatchesPerRowCount) {
  const ensemble::Ensemble ens({tiny_model(1), tiny_model(2), tiny_model(3)});
  const auto x = testing::random_inputs<float>(300, 6, 8);
  std::size_t split = 0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) split += ensemble::in_uncertainty_region(ens, data::from_row(x, r));
  EXPECT_DOUBLE_EQ(ensemble::disagreement_rate(ens, x), static_cast<double>(split) / 300.0);
  EXPECT_EQ(ensemble::disagreement_rate(ens, x, 1), ensemble::disagreement_rate(ens, x, 3));
}

TEST(Ensemble, ManifestRoundTrip) {
  const ensemble::Ensemble ens({tiny_model(5), tiny_model(6)});
  const auto dir = testing::temp_dir("ensemble_io");
  ensemble::save_ensemble(dir, ens);
  const auto back = ensemble::load_ensemble(dir / "ensemble.json");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.seeds(), ens.seeds());
  const auto x = testing::random_inputs<float>(20, 6, 1);
  EXPECT_EQ(back.labels(x), ens.labels(x));
  EXPECT_THROW(ensemble::load_ensemble(dir / "missing.json"), Error);
}

TEST(Ensemble, ParallelTrainingMatchesSerial) {
  data::Dataset train;
  train.dim = 6;
  CounterRng rng(2);
  for (int i = 0; i < 64; ++i) {
    data::ImageVec im;
    for (int j = 0; j < 6; ++j) im.pixels.push_back(static_cast<float>(rng.uniform()));
    im.label = static_cast<int>(rng.below(3));
    train.images.push_back(im);
  }
  nn::TrainConfig cfg;
  cfg.epochs = 2;
  const std::vector<std::uint64_t> seeds = {3, 4, 5};
  const auto a = ensemble::train_ensemble(tiny_arch(), train, seeds, cfg, nullptr, 1);
  const auto b = ensemble::train_ensemble(tiny_arch(), train, seeds, cfg, nullptr, 3);
  for (std::size_t i = 0; i < seeds.size(); ++i) EXPECT_EQ(a[i].net.params(), b[i].net.params());
}

}  // namespace
}  // namespace advmap
