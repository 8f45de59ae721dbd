#include <bit>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "ftclip/fault.hpp"
#include "ftclip/model_io.hpp"
#include "test_models.hpp"

namespace ftclip {
namespace {

FaultSpec spec(double rate, std::uint64_t trial = 0, FaultScope scope = FaultScope::network()) {
  FaultSpec s;
  s.rate = rate;
  s.scope = scope;
  s.seed = 77;
  s.trial_id = trial;
  return s;
}

TEST(DrawMask, RateZeroIsEmpty) {
  const Model m = test::tiny_cnn();
  for (std::uint64_t t = 0; t < 20; ++t) EXPECT_TRUE(draw_mask(m, spec(0.0, t)).empty());
}

TEST(DrawMask, RateOneFlipsEveryBit) {
  const Model m = test::tiny_cnn();
  const FaultMask mask = draw_mask(m, spec(1.0));
  EXPECT_EQ(mask.size(), bits_in_scope(m, FaultScope::network()));
  const Model f = apply_mask(m, mask);
  for (auto li : m.param_layers())
    for (std::size_t w = 0; w < m.layers[li].word_count(); ++w) EXPECT_EQ(f.layers[li].word(w), ~m.layers[li].word(w));
}

TEST(DrawMask, CountsMatchBinomialWithinFourSigma) {
  const Model m = test::wide_fc(3125);
  const double n = static_cast<double>(bits_in_scope(m, FaultScope::network()));
  for (double p : {1e-4, 1e-3, 1e-2}) {
    double total = 0.0;
    constexpr int trials = 50;
    for (int t = 0; t < trials; ++t) total += static_cast<double>(draw_mask(m, spec(p, t)).size());
    const double sigma = std::sqrt(n * p * (1 - p) / trials);
    EXPECT_NEAR(total / trials, n * p, 4 * sigma) << "p=" << p;
  }
}

TEST(DrawMask, SortedUniqueAndInScope) {
  const Model m = test::tiny_cnn();
  const FaultMask mask = draw_mask(m, spec(0.05));
  EXPECT_TRUE(std::is_sorted(mask.flips.begin(), mask.flips.end()));
  EXPECT_EQ(std::adjacent_find(mask.flips.begin(), mask.flips.end()), mask.flips.end());
  EXPECT_NO_THROW(validate_mask(m, mask));
}

TEST(DrawMask, DeterministicPerTrialAndDistinctAcrossTrials) {
  const Model m = test::tiny_cnn();
  EXPECT_EQ(draw_mask(m, spec(0.01, 3)), draw_mask(m, spec(0.01, 3)));
  EXPECT_NE(draw_mask(m, spec(0.01, 3)), draw_mask(m, spec(0.01, 4)));
}

TEST(DrawMask, LayerScopeTouchesOnlyThatLayer) {
  const Model m = test::tiny_cnn();
  const FaultMask mask = draw_mask(m, spec(0.2, 0, FaultScope::single(4)));
  ASSERT_FALSE(mask.empty());
  for (const auto& f : mask.flips) EXPECT_EQ(f.layer, 4u);
  const Model faulty = apply_mask(m, mask);
  for (std::size_t li : {0u, 6u}) {
    EXPECT_EQ(faulty.layers[li].weights, m.layers[li].weights);
    EXPECT_EQ(faulty.layers[li].bias, m.layers[li].bias);
  }
}

TEST(DrawMask, LayerScopeRejectsParameterFreeLayers) {
  const Model m = test::tiny_cnn();
  EXPECT_THROW(draw_mask(m, spec(0.1, 0, FaultScope::single(1))), FaultError);
  EXPECT_THROW(draw_mask(m, spec(0.1, 0, FaultScope::single(99))), FaultError);
}

TEST(DrawMask, WeightsOnlySkipsBias) {
  const Model m = test::tiny_cnn();
  FaultSpec s = spec(1.0);
  s.weights_only = true;
  for (const auto& f : draw_mask(m, s).flips) EXPECT_LT(f.word, m.layers[f.layer].weights.words.size());
}

TEST(ApplyMask, IsAnInvolution) {
  const Model m = test::tiny_cnn();
  const FaultMask mask = draw_mask(m, spec(0.03));
  Model f = apply_mask(m, mask);
  EXPECT_NE(param_checksum(f), param_checksum(m));
  apply_mask_in_place(f, mask);
  EXPECT_EQ(encode_model(f), encode_model(m));
}

TEST(ApplyMask, ExponentBitOfOneGivesInfinity) {
  Model m = test::tiny_cnn();
  m.layers[0].weights.words[0] = std::bit_cast<std::uint32_t>(1.0f);
  const Model f = apply_mask(m, FaultMask{{{0, 0, 30}}});
  EXPECT_EQ(std::bit_cast<float>(f.layers[0].weights.words[0]), std::numeric_limits<float>::infinity());
  const Model g = apply_mask(m, FaultMask{{{0, 0, 31}}});
  EXPECT_EQ(std::bit_cast<float>(g.layers[0].weights.words[0]), -1.0f);
}

TEST(ApplyMask, OutOfRangeEntriesRejected) {
  const Model m = test::tiny_cnn();
  EXPECT_THROW(apply_mask(m, FaultMask{{{0, 30, 0}}}), FaultError);
  EXPECT_THROW(apply_mask(m, FaultMask{{{0, 0, 32}}}), FaultError);
  EXPECT_THROW(apply_mask(m, FaultMask{{{2, 0, 0}}}), FaultError);
}

TEST(MaskJsonl, RoundTripAndDuplicateRejection) {
  const Model m = test::tiny_cnn();
  const FaultMask mask = draw_mask(m, spec(0.05));
  std::stringstream ss;
  write_mask_jsonl(ss, mask);
  EXPECT_EQ(read_mask_jsonl(ss), mask);
  std::stringstream dup("{\"bit\":1,\"layer\":0,\"word\":2}\n{\"bit\":1,\"layer\":0,\"word\":2}\n");
  EXPECT_ANY_THROW(read_mask_jsonl(dup));
}

}  // namespace
}  // namespace ftclip
