#include <gtest/gtest.h>

#include "spiketag/gradcheck.hpp"

using namespace spiketag;

TEST(RelativeError, Examples) {
  EXPECT_EQ(relative_error(1.0, 1.0, 1e-7), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 0.5, 1e-7), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9, 1e-7), 1e-2);
}

TEST(GradCheck, AnalyticMatchesFiniteDifferences) {
  for (SpikeMode mode : {SpikeMode::binary, SpikeMode::ternary})
    for (Centering c : {Centering::zero, Centering::threshold})
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        GradCheckConfig gc;
        gc.spike_mode = mode;
        gc.centering = c;
        gc.seed = seed;
        const auto r = gradient_check(gc);
        EXPECT_LT(r.max_error(), 1e-4)
            << to_string(mode) << ' ' << to_string(c) << " seed " << seed;
        for (std::size_t k = 0; k < kNumParamClasses; ++k)
          EXPECT_TRUE(r.present[k]) << to_string(static_cast<ParamClass>(k));
      }
}

TEST(GradCheck, HoldsWithPaddingAndBatches) {
  for (SpikeMode mode : {SpikeMode::binary, SpikeMode::ternary}) {
    GradCheckConfig gc;
    gc.spike_mode = mode;
    gc.batch = 3;
    gc.length = 4;
    gc.pad_tail = true;
    gc.time_steps = 4;
    gc.seed = 11;
    EXPECT_LT(gradient_check(gc).max_error(), 1e-4) << to_string(mode);
  }
}

TEST(GradCheck, HoldsForOneAndFourSpikingLayers) {
  for (std::size_t layers : {1u, 4u}) {
    GradCheckConfig gc;
    gc.n_spiking_conv = layers;
    gc.seed = 21;
    EXPECT_LT(gradient_check(gc).max_error(), 1e-4) << layers;
  }
}

TEST(GradCheck, DetectsEveryMutation) {
  for (GradientMutation m : kAllMutations) {
    double worst = 0;
    for (SpikeMode mode : {SpikeMode::binary, SpikeMode::ternary}) {
      GradCheckConfig gc;
      gc.spike_mode = mode;
      gc.mutation = m;
      gc.seed = 3;
      worst = std::max(worst, gradient_check(gc).max_error());
    }
    EXPECT_GT(worst, 1e-2) << to_string(m);
  }
}
