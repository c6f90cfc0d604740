#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "ssac/encoder.hpp"
#include "ssac/errors.hpp"

using namespace ssac;

namespace {

Tensor random_points(std::size_t b, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Real> d(b * n * 3);
  for (auto& v : d) v = Real(u(rng));
  return Tensor::from_data({b, n, 3}, std::move(d));
}

EncoderConfig small_config() {
  EncoderConfig c;
  c.p = 8;
  c.channels = {3, 8, 8, 8, 16, 32};
  return c;
}

bool bit_equal(std::span<const Real> a, std::span<const Real> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(Real)) == 0;
}

}  // namespace

TEST(Encoder, SameSeedGivesIdenticalParameters) {
  auto a = encoder_init(EncoderConfig{}, 7), b = encoder_init(EncoderConfig{}, 7);
  auto ta = a.tensors(), tb = b.tensors();
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(ta[i].name, tb[i].name);
    EXPECT_TRUE(bit_equal(ta[i].tensor.data(), tb[i].tensor.data())) << ta[i].name;
  }
}

TEST(Encoder, DifferentSeedsDiffer) {
  auto a = encoder_init(small_config(), 1), b = encoder_init(small_config(), 2);
  EXPECT_FALSE(bit_equal(a.blocks[0].weight.data(), b.blocks[0].weight.data()));
}

TEST(Encoder, InitializationFollowsConstruction) {
  auto params = encoder_init(EncoderConfig{}, 3);
  const auto& plan = params.config.channels;
  ASSERT_EQ(params.blocks.size(), 5u);
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    const auto& blk = params.blocks[i];
    const double bound = std::sqrt(1.0 / double(plan[i]));
    EXPECT_EQ(blk.weight.shape(), (Shape{plan[i], plan[i + 1]}));
    for (Real w : blk.weight.data()) {
      EXPECT_LE(std::abs(double(w)), bound);
    }
    for (Real v : blk.bias.data()) EXPECT_EQ(v, 0);
    for (Real v : blk.beta.data()) EXPECT_EQ(v, 0);
    for (Real v : blk.gamma.data()) EXPECT_EQ(v, 1);
    for (Real v : blk.bn.running_mean.data()) EXPECT_EQ(v, 0);
    for (Real v : blk.bn.running_var.data()) EXPECT_EQ(v, 1);
  }
  EXPECT_EQ(params.fc_weight.shape(), (Shape{1024, 128}));
}

TEST(Encoder, DefaultParameterCountGolden) {
  // 3*64+64 + 64*64+64 (x2) + 64*128+128 + 128*1024+1024 = 148992 (MLP),
  // 2*(64*3+128+1024) = 2688 (gamma, beta), 1024*128+128 = 131200 (FC).
  auto params = encoder_init(EncoderConfig{}, 0);
  EXPECT_EQ(params.learnable_count(), 282880u);
  std::size_t stats = 0;
  for (const auto& b : params.blocks) stats += b.bn.running_mean.numel() + b.bn.running_var.numel();
  EXPECT_EQ(stats, 2688u);
}

TEST(Encoder, OutputShapeForAnyPointCount) {
  auto params = encoder_init(small_config(), 5);
  for (std::size_t n : {2u, 3u, 17u, 64u}) {
    EXPECT_EQ(encode(params, random_points(3, n, n)).shape(), (Shape{3, 8}));
  }
}

TEST(Encoder, RejectsWrongCoordinateCount) {
  auto params = encoder_init(small_config(), 5);
  EXPECT_THROW(encode(params, Tensor::zeros({2, 4, 2})), DimensionError);
  EXPECT_THROW(encode(params, Tensor::zeros({4, 3})), DimensionError);
}

TEST(Encoder, RejectsBadConfig) {
  EncoderConfig c;
  c.p = 0;
  EXPECT_THROW(encoder_init(c, 0), ContractError);
  c = EncoderConfig{};
  c.channels = {2, 8};
  EXPECT_THROW(encoder_init(c, 0), ContractError);
}

TEST(Encoder, EvalModePermutationInvariantBitwise) {
  auto params = encoder_init(EncoderConfig{}, 11);
  // Populate non-trivial running statistics first.
  encode(params, random_points(4, 64, 99));
  params.mode = Mode::Eval;
  auto x = random_points(1, 128, 5);
  const auto ref = encode(params, x);
  std::vector<std::size_t> perm(128);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Real> d(128 * 3);
    for (std::size_t i = 0; i < 128; ++i)
      for (std::size_t c = 0; c < 3; ++c) d[i * 3 + c] = x.data()[perm[i] * 3 + c];
    EXPECT_TRUE(bit_equal(encode(params, Tensor::from_data({1, 128, 3}, d)).data(), ref.data()));
  }
}

TEST(Encoder, EvalModeIsBitStable) {
  auto params = encoder_init(small_config(), 2);
  params.mode = Mode::Eval;
  auto x = random_points(2, 32, 4);
  EXPECT_TRUE(bit_equal(encode(params, x).data(), encode(params, x).data()));
  auto copy = params.clone();
  EXPECT_TRUE(bit_equal(encode(copy, x).data(), encode(params, x).data()));
}

TEST(Encoder, TrainForwardOnlyTouchesStatistics) {
  auto params = encoder_init(small_config(), 8);
  auto before = params.clone();
  auto x = random_points(4, 16, 3);
  encode(params, x);
  auto ta = params.tensors(), tb = before.tensors();
  bool stats_changed = false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const bool is_stat = ta[i].name.find("running_") != std::string::npos;
    const bool same = bit_equal(ta[i].tensor.data(), tb[i].tensor.data());
    if (is_stat) {
      stats_changed |= !same;
    } else {
      EXPECT_TRUE(same) << ta[i].name;
    }
  }
  EXPECT_TRUE(stats_changed);

  // An eval forward of the original weights with the updated statistics
  // reproduces the eval forward of the trained copy.
  params.mode = Mode::Eval;
  for (std::size_t b = 0; b < before.blocks.size(); ++b) before.blocks[b].bn = params.blocks[b].bn;
  before.mode = Mode::Eval;
  EXPECT_TRUE(bit_equal(encode(before, x).data(), encode(params, x).data()));
}

TEST(Encoder, RunningVarianceStaysPositive) {
  auto params = encoder_init(small_config(), 6);
  for (int i = 0; i < 10; ++i) encode(params, random_points(2, 8, std::uint64_t(i)));
  for (const auto& b : params.blocks)
    for (Real v : b.bn.running_var.data()) EXPECT_GT(v, 0);
}
