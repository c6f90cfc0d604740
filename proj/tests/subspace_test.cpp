#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "ssac/errors.hpp"
#include "ssac/subspace.hpp"

using namespace ssac;

namespace {

Tensor vec(std::vector<Real> v) {
  const std::size_t n = v.size();
  return Tensor::from_data({n}, std::move(v));
}

Subspace make_subspace(std::size_t p, std::size_t k, std::mt19937_64& rng, double bias_scale = 1.0) {
  std::normal_distribution<double> n(0, 1);
  Subspace s;
  if (k > 0) {
    std::vector<Real> w(p * k);
    for (auto& v : w) v = Real(n(rng));
    s.basis = Tensor::from_data({p, k}, w);
  }
  std::vector<Real> b(p);
  for (auto& v : b) v = Real(bias_scale * n(rng));
  s.bias = Tensor::from_data({p}, b);
  return s;
}

Tensor random_vec(std::size_t p, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0, scale);
  std::vector<Real> v(p);
  for (auto& x : v) x = Real(n(rng));
  return vec(v);
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.dim(0), t.rank() == 2 ? t.dim(1) : 1);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t.data()[i * m.cols() + j];
  return m;
}

// Independent least-squares distance to b + span(W) via column-pivoted QR.
double oracle_distance(const Tensor& f, const Subspace& s) {
  const Eigen::VectorXd z = to_eigen(f) - to_eigen(s.bias);
  if (s.k() == 0) return z.norm();
  const Eigen::MatrixXd w = to_eigen(s.basis);
  const Eigen::VectorXd coef = w.colPivHouseholderQr().solve(z);
  return (z - w * coef).norm();
}

double norm(const Tensor& t) {
  double s = 0;
  for (Real v : t.data()) s += double(v) * double(v);
  return std::sqrt(s);
}

}  // namespace

TEST(Subspace, AxisProjectionExample) {
  Subspace s{Tensor::from_data({2, 1}, {1, 0}), vec({0, 0}), 0};
  auto proj = project(vec({3, 4}), s);
  EXPECT_NEAR(proj.at(0), 3, 1e-5);
  EXPECT_NEAR(proj.at(1), 0, 1e-6);
  EXPECT_NEAR(distance(vec({3, 4}), s).item(), 4, 1e-5);
}

TEST(Subspace, ProjectionOfBiasIsZero) {
  std::mt19937_64 rng(1);
  auto s = make_subspace(5, 2, rng);
  auto proj = project(s.bias, s);
  for (Real v : proj.data()) EXPECT_EQ(v, 0);
}

TEST(Subspace, SingletonSubspace) {
  Subspace s{Tensor(), vec({1, 2}), 0};
  EXPECT_EQ(s.k(), 0u);
  auto proj = project(vec({4, 6}), s);
  EXPECT_EQ(proj.at(0), 0);
  EXPECT_EQ(proj.at(1), 0);
  EXPECT_NEAR(distance(vec({4, 6}), s).item(), 5, 1e-6);
  EXPECT_NEAR(distance(vec({4, 6}), s, DistanceForm::Literal).item(), std::sqrt(52.0), 1e-5);
}

TEST(Subspace, ProjectionIsIdempotent) {
  std::mt19937_64 rng(2);
  for (std::size_t p : {6u, 16u, 64u}) {
    for (int trial = 0; trial < 20; ++trial) {
      auto s = make_subspace(p, p / 2, rng);
      auto f = random_vec(p, rng);
      auto once = project(f, s);
      // Re-center: project() maps f to P(f - b), a point in span(W); the
      // same point expressed around b is b + P(f - b).
      std::vector<Real> back(p);
      for (std::size_t i = 0; i < p; ++i) back[i] = s.bias.at(i) + once.at(i);
      auto twice = project(vec(back), s);
      for (std::size_t i = 0; i < p; ++i) EXPECT_NEAR(twice.at(i), once.at(i), 1e-4 * (1 + std::abs(once.at(i))));
    }
  }
}

TEST(Subspace, ResidualIsOrthogonalToBasis) {
  std::mt19937_64 rng(3);
  for (std::size_t p : {8u, 32u, 64u}) {
    for (int trial = 0; trial < 20; ++trial) {
      auto s = make_subspace(p, 5, rng);
      auto f = random_vec(p, rng, 2.0);
      auto proj = project(f, s);
      const auto w = to_eigen(s.basis);
      const Eigen::VectorXd z = to_eigen(f) - to_eigen(s.bias);
      const Eigen::VectorXd r = z - to_eigen(proj);
      // Columns are normalized so the bound is scale-free in W.
      const Eigen::MatrixXd wn = w.colwise().normalized();
      EXPECT_LT((wn.transpose() * r).norm(), 1e-4 * z.norm());
    }
  }
}

TEST(Subspace, DistanceZeroInsideSubspace) {
  std::mt19937_64 rng(4);
  auto s = make_subspace(8, 3, rng);
  const Eigen::VectorXd coef = Eigen::VectorXd::Random(3);
  const Eigen::VectorXd f = to_eigen(s.bias) + to_eigen(s.basis) * coef;
  std::vector<Real> fv(f.data(), f.data() + 8);
  EXPECT_LT(distance(vec(fv), s).item(), 1e-5 * (1 + f.norm()));
}

TEST(Subspace, DistanceNonNegativeAndMatchesOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = make_subspace(10, trial % 6, rng);
    auto f = random_vec(10, rng);
    const double d = distance(f, s).item();
    EXPECT_GE(d, 0);
    EXPECT_NEAR(d, oracle_distance(f, s), 1e-4 * (1 + d));
  }
}

TEST(Subspace, TranslationCovariance) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    auto s = make_subspace(12, 4, rng);
    auto f = random_vec(12, rng);
    auto t = random_vec(12, rng, 0.5);
    std::vector<Real> ft(12), bt(12);
    for (std::size_t i = 0; i < 12; ++i) {
      ft[i] = f.at(i) + t.at(i);
      bt[i] = s.bias.at(i) + t.at(i);
    }
    Subspace moved{s.basis, vec(bt), 0};
    EXPECT_NEAR(distance(vec(ft), moved).item(), distance(f, s).item(), 1e-5 * (1 + norm(f)));
  }
}

TEST(Subspace, LiteralFormIsNotTranslationConsistent) {
  std::mt19937_64 rng(7);
  auto s = make_subspace(4, 1, rng, 3.0);
  auto f = random_vec(4, rng);
  EXPECT_GT(std::abs(distance(f, s, DistanceForm::Literal).item() - distance(f, s).item()), 1e-3);
}

TEST(Subspace, FullRankSubspaceHasZeroDistance) {
  // The Gram ridge leaves a residual of about ridge / sigma_min(W)^2, so the
  // bases are random rotations with column scales in [0.5, 2].
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> scale(0.5, 2.0);
  for (std::size_t p : {4u, 16u, 32u, 64u}) {
    auto s = make_subspace(p, p, rng);
    const auto g = to_eigen(s.basis);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
    std::vector<Real> wv(p * p);
    for (std::size_t j = 0; j < p; ++j) {
      const double c = scale(rng);
      for (std::size_t i = 0; i < p; ++i) wv[i * p + j] = Real(c * q(i, j));
    }
    s.basis = Tensor::from_data({p, p}, wv);
    for (int trial = 0; trial < 10; ++trial) {
      auto f = random_vec(p, rng);
      EXPECT_LT(distance(f, s).item(), 1e-4 * (1 + norm(f)));
    }
  }
}

TEST(Subspace, SampledMinimizationOracle) {
  // Orthonormal basis: coefficients of the nearest point are W^T z, so the
  // sampling box is centered there with a radius covering it.
  std::mt19937_64 rng(9);
  const std::size_t p = 8, k = 3;
  Eigen::MatrixXd g = Eigen::MatrixXd::Random(p, k);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd w = qr.householderQ() * Eigen::MatrixXd::Identity(p, k);
  std::vector<Real> wv(p * k);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < k; ++j) wv[i * k + j] = Real(w(i, j));
  auto bias = random_vec(p, rng);
  auto f = random_vec(p, rng);
  Subspace s{Tensor::from_data({p, k}, wv), bias, 0};
  const Eigen::VectorXd fe = to_eigen(f), be = to_eigen(bias);

  // |coefficient_j| <= ||f - b|| for an orthonormal basis.
  const double radius = (fe - be).norm();
  std::uniform_real_distribution<double> u(-radius, radius);
  double best = 1e300;
  for (int i = 0; i < 100000; ++i) {
    Eigen::VectorXd z(k);
    for (std::size_t j = 0; j < k; ++j) z(j) = u(rng);
    best = std::min(best, (fe - be - w * z).norm());
  }
  EXPECT_NEAR(distance(f, s).item(), best, 1e-2);
}

TEST(Subspace, DistancesMatchPerPairLoop) {
  std::mt19937_64 rng(10);
  SubspaceSet set;
  for (int c = 0; c < 4; ++c) {
    set.subspaces.push_back(make_subspace(6, 2, rng));
    set.subspaces.back().class_id = c;
  }
  std::vector<Real> fd;
  std::vector<Tensor> rows;
  for (int i = 0; i < 5; ++i) {
    rows.push_back(random_vec(6, rng));
    for (Real v : rows.back().data()) fd.push_back(v);
  }
  auto d = distances(Tensor::from_data({5, 6}, fd), set);
  ASSERT_EQ(d.shape(), (Shape{5, 4}));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(d.at(i, c), distance(rows[i], set.subspaces[c]).item());
}

TEST(Subspace, SingleRowSingleClassReducesToDistance) {
  std::mt19937_64 rng(11);
  SubspaceSet set;
  set.subspaces.push_back(make_subspace(5, 2, rng));
  auto f = random_vec(5, rng);
  EXPECT_EQ(distances(reshape(f, {1, 5}), set).item(), distance(f, set.subspaces[0]).item());
}

TEST(Subspace, SetValidation) {
  std::mt19937_64 rng(12);
  SubspaceSet set;
  set.subspaces.push_back(make_subspace(5, 2, rng));
  set.subspaces.push_back(make_subspace(5, 3, rng));
  set.subspaces[1].class_id = 1;
  EXPECT_THROW(set.validate(), DimensionError);
  set.subspaces[1] = make_subspace(5, 2, rng);
  EXPECT_THROW(set.validate(), ContractError);
}

TEST(Subspace, ScoresAndProbabilities) {
  std::vector<Real> d = {3, 1, 2};
  EXPECT_EQ(anomaly_score(d), 1);
  std::vector<Real> eq = {0.4f, 0.4f, 0.4f};
  EXPECT_EQ(anomaly_score(eq), Real(0.4f));
  auto third = class_probabilities(std::vector<Real>{0, 0, 0});
  for (Real p : third) EXPECT_NEAR(p, 1.0 / 3.0, 1e-7);
  auto two = class_probabilities(std::vector<Real>{0, 1});
  EXPECT_NEAR(two[0], 0.7311, 1e-4);
  EXPECT_NEAR(two[1], 0.2689, 1e-4);
  auto extreme = class_probabilities(std::vector<Real>{1000, 2000});
  EXPECT_NEAR(extreme[0], 1.0, 1e-7);
  EXPECT_THROW(anomaly_score(std::span<const Real>{}), ContractError);
}

TEST(Subspace, ClassifyRule) {
  EXPECT_EQ(classify(std::vector<Real>{0.5f, 0.1f, 0.9f}), 1);
  EXPECT_EQ(classify(std::vector<Real>{0.2f, 0.2f}), 0);
}

TEST(Subspace, ClassifyAgreesWithProbabilities) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0, 5);
  for (int i = 0; i < 1000; ++i) {
    std::vector<Real> d(1 + i % 7);
    for (auto& v : d) v = Real(u(rng));
    auto p = class_probabilities(d);
    double total = 0;
    for (Real v : p) total += v;
    EXPECT_NEAR(total, 1.0, 1e-6);
    EXPECT_EQ(classify(d), int(std::max_element(p.begin(), p.end()) - p.begin()));
  }
}

TEST(SvdInit, EqualRepresentationsGiveZeroDistance) {
  std::vector<Real> v = {0.5, -1, 2, 0.25};
  std::vector<Real> rows;
  for (int i = 0; i < 6; ++i) rows.insert(rows.end(), v.begin(), v.end());
  auto set = svd_initialize({Tensor::from_data({6, 4}, rows)}, 2, 1);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(set.subspaces[0].bias.at(j), v[j], 1e-6);
  EXPECT_EQ(set.subspaces[0].k(), 2u);
  const auto d = distances(Tensor::from_data({6, 4}, rows), set);
  for (Real v : d.data()) EXPECT_LT(v, 1e-6);
}

TEST(SvdInit, ExactLineRecoversDirection) {
  const double ux = 0.6, uy = 0.8;
  std::vector<Real> rows;
  for (double t : {-2.0, -0.5, 0.3, 1.1, 2.5}) {
    rows.push_back(Real(1.0 + t * ux));
    rows.push_back(Real(-3.0 + t * uy));
  }
  auto set = svd_initialize({Tensor::from_data({5, 2}, rows)}, 1, 0);
  const auto& w = set.subspaces[0].basis;
  const double cosang = (w.at(0, 0) * ux + w.at(1, 0) * uy) / std::hypot(w.at(0, 0), w.at(1, 0));
  EXPECT_GT(std::abs(cosang), 1 - 1e-6);
}

TEST(SvdInit, BeatsRandomSubspacesThroughTheMean) {
  std::mt19937_64 rng(14);
  const std::size_t m = 40, p = 10, k = 2;
  std::normal_distribution<double> n(0, 1);
  // Anisotropic cloud so the principal plane is well defined.
  std::vector<Real> rows(m * p);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) rows[i * p + j] = Real(n(rng) * (1.0 + 3.0 / double(j + 1)) + 0.5 * double(j));
  auto reps = Tensor::from_data({m, p}, rows);
  auto set = svd_initialize({reps}, k, 3);
  auto sum_sq = [&](const Subspace& s) {
    double total = 0;
    const auto d = distances(reps, SubspaceSet{{s}});
    for (Real v : d.data()) total += double(v) * double(v);
    return total;
  };
  const double init = sum_sq(set.subspaces[0]);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd g(p, k);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p, k);
    std::vector<Real> wv(p * k);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < k; ++j) wv[i * k + j] = Real(q(i, j));
    Subspace rnd{Tensor::from_data({p, k}, wv), set.subspaces[0].bias, 0};
    EXPECT_LE(init, sum_sq(rnd) * (1 + 1e-6));
  }
}

TEST(SvdInit, RankDeficientClassIsCompleted) {
  // Three samples span at most a 2-D affine set; k = 5 needs random fill.
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n(0, 1);
  std::vector<Real> rows(3 * 8);
  for (auto& v : rows) v = Real(n(rng));
  auto set = svd_initialize({Tensor::from_data({3, 8}, rows)}, 5, 4);
  const auto w = to_eigen(set.subspaces[0].basis);
  EXPECT_LT((w.transpose() * w - Eigen::MatrixXd::Identity(5, 5)).norm(), 1e-5);
  const auto d = distances(Tensor::from_data({3, 8}, rows), set);
  for (Real v : d.data()) EXPECT_LT(v, 1e-4);
}

TEST(SvdInit, Errors) {
  EXPECT_THROW(svd_initialize({Tensor()}, 1, 0), ContractError);
  EXPECT_THROW(svd_initialize({Tensor::zeros({3, 2})}, 3, 0), ContractError);
  EXPECT_THROW(svd_initialize({Tensor::zeros({3, 2}), Tensor::zeros({3, 4})}, 1, 0), DimensionError);
}

TEST(SvdInit, DeterministicForIdenticalInputs) {
  std::mt19937_64 rng(16);
  std::normal_distribution<double> n(0, 1);
  std::vector<Real> rows(4 * 6);
  for (auto& v : rows) v = Real(n(rng));
  auto reps = Tensor::from_data({4, 6}, rows);
  auto a = svd_initialize({reps, reps}, 4, 7), b = svd_initialize({reps, reps}, 4, 7);
  for (std::size_t c = 0; c < 2; ++c) {
    auto wa = a.subspaces[c].basis.data(), wb = b.subspaces[c].basis.data();
    EXPECT_TRUE(std::equal(wa.begin(), wa.end(), wb.begin()));
  }
}
