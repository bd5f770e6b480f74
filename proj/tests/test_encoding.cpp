#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "spiketime/encoding.hpp"

using namespace spiketime;

namespace {
int encode_one(int p, int i_max, int t_max) {
  const std::vector<int> px{p};
  return encode_image(px, {i_max, t_max}).front().step;
}
}  // namespace

TEST(Encode, Endpoints) {
  EXPECT_EQ(encode_one(15, 15, 15), 0);
  EXPECT_EQ(encode_one(0, 15, 15), 15);
  EXPECT_EQ(encode_one(255, 255, 255), 0);
  EXPECT_EQ(encode_one(0, 255, 255), 255);
}

TEST(Encode, FloorOfRatio) {
  EXPECT_EQ(encode_one(7, 15, 15), 8);
  EXPECT_EQ(encode_one(128, 255, 15), 7);   // 127/255*15 = 7.47
  EXPECT_EQ(encode_one(1, 255, 15), 14);    // 254/255*15 = 14.94
  EXPECT_EQ(encode_one(100, 255, 255), 155);
}

TEST(Encode, MatchesRealFormulaEverywhere) {
  for (int i_max : {15, 16, 255}) {
    for (int t_max : {7, 15, 255}) {
      for (int p = 0; p <= i_max; ++p) {
        // exact in long double for these small operands
        const long double x = static_cast<long double>(i_max - p) / i_max * t_max;
        const int want = static_cast<int>(std::floor(x + 1e-12L));
        EXPECT_EQ(encode_one(p, i_max, t_max), want) << p << " " << i_max << " " << t_max;
      }
    }
  }
}

TEST(Encode, RejectsOutOfRangePixels) {
  const std::vector<int> px{3, 16};
  EXPECT_THROW(encode_image(px, {15, 15}), InputError);
  const std::vector<int> neg{-1};
  EXPECT_THROW(encode_image(neg, {15, 15}), InputError);
}

TEST(EncodeProperty, MonotoneInIntensityAndBounded) {
  std::mt19937 rng(3);
  for (int k = 0; k < 2000; ++k) {
    const int i_max = std::uniform_int_distribution<int>(1, 300)(rng);
    const int t_max = std::uniform_int_distribution<int>(1, 300)(rng);
    std::uniform_int_distribution<int> px(0, i_max);
    const int a = px(rng), b = px(rng);
    const int ta = encode_one(a, i_max, t_max), tb = encode_one(b, i_max, t_max);
    if (a >= b) {
      EXPECT_LE(ta, tb);
    } else {
      EXPECT_GE(ta, tb);
    }
    EXPECT_GE(ta, 0);
    EXPECT_LE(ta, t_max);
  }
}

TEST(Decode, EventsAtStepAscending) {
  const std::vector<int> px{15, 0, 15, 7};
  const auto t = encode_image(px, {15, 15});
  EXPECT_EQ(decode_step_events(t, 0), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(decode_step_events(t, 15), (std::vector<std::size_t>{1}));
  EXPECT_EQ(decode_step_events(t, 8), (std::vector<std::size_t>{3}));
  EXPECT_TRUE(decode_step_events(t, 3).empty());
}
