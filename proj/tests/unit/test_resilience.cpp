#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ftclip/dataset.hpp"
#include "ftclip/resilience.hpp"
#include "test_models.hpp"

namespace ftclip {
namespace {

double hand_trapezoid(const std::vector<double>& r, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < r.size(); ++i) s += (y[i] + y[i - 1]) * (r[i] / r.back() - r[i - 1] / r.back()) / 2.0;
  return s;
}

std::vector<double> random_grid(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(1e-9, 1e-3);
  std::vector<double> r{0.0};
  while (r.size() < n) r.push_back(u(rng));
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

TEST(Auc, WorkedExample) {
  const std::vector<double> r{0.0, 0.5, 1.0}, y{1.0, 0.8, 0.2};
  EXPECT_NEAR(compute_auc(r, y).auc, 0.70, 1e-15);
}

TEST(Auc, IdealCurveIsExactlyOne) {
  const auto r = default_fault_rates();
  EXPECT_EQ(compute_auc(r, std::vector<double>(r.size(), 1.0)).auc, 1.0);
  EXPECT_EQ(compute_auc(r, std::vector<double>(r.size(), 1.0), XScale::index).auc, 1.0);
}

TEST(Auc, ZeroCurveIsZero) {
  const auto r = default_fault_rates();
  EXPECT_EQ(compute_auc(r, std::vector<double>(r.size(), 0.0)).auc, 0.0);
}

TEST(Auc, MatchesHandTrapezoidOnRandomCurves) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> acc(0.0, 1.0);
  for (int c = 0; c < 50; ++c) {
    const auto r = random_grid(rng, 2 + c % 12);
    std::vector<double> y(r.size());
    for (auto& v : y) v = acc(rng);
    EXPECT_NEAR(compute_auc(r, y).auc, hand_trapezoid(r, y), 1e-12);
  }
}

TEST(Auc, InsertingCollinearPointIsInvariant) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> acc(0.0, 1.0);
  for (int c = 0; c < 50; ++c) {
    auto r = random_grid(rng, 6);
    std::vector<double> y(r.size());
    for (auto& v : y) v = acc(rng);
    const double before = compute_auc(r, y).auc;
    const std::size_t k = 1 + c % (r.size() - 1);
    const double mid = (r[k - 1] + r[k]) / 2, ymid = (y[k - 1] + y[k]) / 2;
    r.insert(r.begin() + static_cast<std::ptrdiff_t>(k), mid);
    y.insert(y.begin() + static_cast<std::ptrdiff_t>(k), ymid);
    EXPECT_NEAR(compute_auc(r, y).auc, before, 1e-12);
  }
}

TEST(Auc, RateRescalingIsInvariant) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> acc(0.0, 1.0);
  for (int c = 0; c < 50; ++c) {
    const auto r = random_grid(rng, 8);
    std::vector<double> y(r.size()), scaled(r);
    for (auto& v : y) v = acc(rng);
    for (auto& v : scaled) v *= 1000.0;
    EXPECT_NEAR(compute_auc(scaled, y).auc, compute_auc(r, y).auc, 1e-12);
  }
}

TEST(Auc, RaisingAPointNeverLowersArea) {
  const auto r = default_fault_rates();
  std::vector<double> y{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3};
  const double before = compute_auc(r, y).auc;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto z = y;
    z[i] += 0.05;
    EXPECT_GE(compute_auc(r, z).auc, before);
  }
}

TEST(Auc, IndexScaleSpacesPointsEvenly) {
  const std::vector<double> r{0, 1e-8, 1e-6, 1e-4};
  const auto a = compute_auc(r, std::vector<double>{1, 1, 0, 0}, XScale::index);
  EXPECT_EQ(a.x, (std::vector<double>{0, 1.0 / 3, 2.0 / 3, 1}));
  EXPECT_NEAR(a.auc, 0.5, 1e-15);
}

TEST(Auc, RejectsBadGrids) {
  const std::vector<double> y{1, 1};
  EXPECT_THROW(compute_auc(std::vector<double>{0.0}, std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(compute_auc(std::vector<double>{1e-6, 1e-6}, y), std::invalid_argument);
  EXPECT_THROW(compute_auc(std::vector<double>{0.0, 1e-6}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Summary, QuantilesAndMean) {
  const auto s = summarize({4, 1, 3, 2});
  EXPECT_EQ(s.mean, 2.5);
  EXPECT_EQ(s.min, 1);
  EXPECT_EQ(s.max, 4);
  EXPECT_EQ(s.median, 2.5);
  EXPECT_EQ(s.q1, 1.75);
  EXPECT_EQ(s.q3, 3.25);
}

TEST(SweepConfig, Validation) {
  SweepConfig c;
  EXPECT_NO_THROW(c.validate());
  c.fault_rates = {0};
  EXPECT_NO_THROW(c.validate());
  c.fault_rates = {};
  EXPECT_THROW(c.validate(), ConfigError);
  c.fault_rates = {1e-6, 1e-5};
  EXPECT_THROW(c.validate(), ConfigError);
  c.fault_rates = {0, 1e-5, 1e-6};
  EXPECT_THROW(c.validate(), ConfigError);
  c.fault_rates = {0, 1e-5};
  c.trials_per_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

class SweepTest : public ::testing::Test {
 protected:
  Model model = test::tiny_cnn(5);
  Dataset data = make_synthetic_set(3, 40, {1, 8, 8}, 4);
};

TEST_F(SweepTest, EvaluatorAgreesWithDirectEvaluation) {
  const AccuracyEvaluator eval(model, data, 1);
  EXPECT_EQ(eval.baseline().correct, evaluate_accuracy(model, nullptr, data, 1).correct);
  for (std::uint64_t t = 0; t < 20; ++t) {
    const FaultMask mask = draw_mask(model, {0.01, FaultScope::network(), 9, t, false});
    const auto a = eval.evaluate(mask), b = evaluate_accuracy(model, &mask, data, 1);
    EXPECT_EQ(a.correct, b.correct);
    EXPECT_EQ(a.degenerate, b.degenerate);
  }
}

TEST_F(SweepTest, RateZeroReproducesBaseline) {
  SweepConfig cfg;
  cfg.fault_rates = {0, 1e-3};
  cfg.trials_per_rate = 5;
  const auto s = run_sweep(model, cfg, data, 1);
  for (double a : s.accuracy[0]) EXPECT_EQ(a, s.baseline);
}

TEST_F(SweepTest, DeterministicAcrossThreadCounts) {
  SweepConfig cfg;
  cfg.fault_rates = {0, 1e-3, 1e-2};
  cfg.trials_per_rate = 6;
  std::ostringstream a, b;
  write_sweep_csv(a, run_sweep(model, cfg, data, 1));
  write_sweep_csv(b, run_sweep(model, cfg, data, 4));
  EXPECT_EQ(a.str(), b.str());
}

TEST_F(SweepTest, CsvLayout) {
  SweepConfig cfg;
  cfg.fault_rates = {0, 5e-7};
  cfg.trials_per_rate = 2;
  std::ostringstream os;
  write_sweep_csv(os, run_sweep(model, cfg, data, 1));
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "rate,trial,accuracy");
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 4), "0,0,");
  std::getline(is, line);
  std::getline(is, line);
  EXPECT_EQ(line.substr(0, 7), "5e-07,0");
}

TEST(FormatRate, ShortestRoundTrip) {
  EXPECT_EQ(format_rate(0.0), "0");
  EXPECT_EQ(format_rate(1e-6), "1e-06");
  EXPECT_EQ(format_rate(5e-8), "5e-08");
  EXPECT_EQ(format_rate(0.25), "0.25");
}

}  // namespace
}  // namespace ftclip
