// Finite-difference checks of the composed model pieces (encoder, subspace
// distances, losses) in the 64-bit build.

#include <gtest/gtest.h>

#include <random>

#include "ssac/encoder.hpp"
#include "ssac/loss.hpp"
#include "ssac/subspace.hpp"
#include "support/gradcheck.hpp"

using namespace ssac;
using ssac::testing::gradcheck;
using ssac::testing::random_tensor;
using ssac::testing::weighted_sum;

static_assert(sizeof(Real) == sizeof(double), "model_gradcheck_test links the 64-bit variant");

namespace {

constexpr double kTol = 1e-3;

EncoderConfig reduced() {
  EncoderConfig c;
  c.p = 8;
  c.channels = {3, 8, 8, 8, 16, 32};
  return c;
}

}  // namespace

TEST(ModelGradCheck, EncoderSquaredNorm) {
  std::mt19937_64 rng(17);
  auto params = encoder_init(reduced(), 4);
  // Non-zero biases and beta so that every block parameter carries signal.
  for (auto& b : params.blocks) {
    for (auto& v : b.bias.mutable_data()) v = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
    for (auto& v : b.beta.mutable_data()) v = std::uniform_real_distribution<double>(0.05, 0.3)(rng);
  }
  auto x = random_tensor({2, 8, 3}, rng, -1, 1, false);
  auto loss = [&] {
    auto f = encode(params, x);
    return sum(mul(f, f));
  };
  auto report = gradcheck(params.learnable(), loss);
  EXPECT_LT(report.max_rel_error, kTol) << "worst leaf " << report.worst_leaf;
}

TEST(ModelGradCheck, DistancesBothForms) {
  std::mt19937_64 rng(3);
  auto set = SubspaceSet::random(3, 6, 2, 9);
  auto f = random_tensor({4, 6}, rng, -1, 1);
  auto r = random_tensor({4, 3}, rng, 0.5, 1.5, false);
  auto leaves = set.learnable();
  leaves.push_back(f);
  EXPECT_LT(gradcheck(leaves, [&] { return weighted_sum(distances(f, set), r); }).max_rel_error, kTol);
  set.form = DistanceForm::Literal;
  EXPECT_LT(gradcheck(leaves, [&] { return weighted_sum(distances(f, set), r); }).max_rel_error, kTol);
}

TEST(ModelGradCheck, SingletonSubspaceDistance) {
  std::mt19937_64 rng(5);
  auto set = SubspaceSet::random(2, 5, 0, 2);
  auto f = random_tensor({3, 5}, rng, -1, 1);
  auto leaves = set.learnable();
  leaves.push_back(f);
  EXPECT_LT(gradcheck(leaves, [&] { return sum(distances(f, set)); }).max_rel_error, kTol);
}

TEST(ModelGradCheck, TotalLossWrtDistances) {
  // Margins chosen so every hinge is active with a unique extremum.
  auto d = Tensor::from_data({4, 3}, {0.3, 0.9, 1.4, 1.1, 0.2, 0.7, 0.45, 0.8, 0.5, 1.6, 0.35, 0.6}, true);
  std::vector<int> labels = {0, 1, 2, 0};
  LossConfig cfg;
  cfg.m_far = 2.0;
  BatchDistances batch{d, labels};
  auto parts_active = total_loss(batch, cfg);
  ASSERT_GT(parts_active.pos.item(), 0);
  ASSERT_GT(parts_active.neg.item(), 0);
  ASSERT_GT(parts_active.ineq.item(), 0);
  EXPECT_LT(gradcheck({d}, [&] { return total_loss(batch, cfg).total; }).max_rel_error, kTol);
  cfg.ce_reduction = Reduction::Mean;
  EXPECT_LT(gradcheck({d}, [&] { return total_loss(batch, cfg).total; }).max_rel_error, kTol);
}
