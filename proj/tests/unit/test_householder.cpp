#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "vsd/householder.hpp"

namespace {

using vsd::Tensor;

Eigen::MatrixXd reflection(const Eigen::VectorXd& v) {
  return Eigen::MatrixXd::Identity(v.size(), v.size()) - 2.0 * v * v.transpose() / v.squaredNorm();
}

TEST(Householder, ApplyMatchesExplicitReflection) {
  vsd::Rng rng(1);
  const Tensor v = vsd::sample_standard_normal({5}, rng);
  const Tensor x = vsd::sample_standard_normal({5, 3}, rng);
  const Eigen::MatrixXd ref = reflection(oracle::to_eigen(v)) * oracle::to_eigen(x);
  EXPECT_LT(vsd::max_abs_diff(vsd::householder_apply(v, x), oracle::from_eigen(ref)), 1e-14);
  EXPECT_THROW(vsd::householder_apply(Tensor::zeros({5}), x), vsd::DomainError);
}

TEST(Householder, ChainIsProductOfItsReflections) {
  vsd::Rng init(2);
  vsd::HouseholderChain chain(6, 3, 0, init);
  const std::vector<Tensor> vs = chain.vectors();
  ASSERT_EQ(vs.size(), 3u);
  Eigen::MatrixXd u = Eigen::MatrixXd::Identity(6, 6);
  for (const Tensor& v : vs) u = reflection(oracle::to_eigen(v).transpose()) * u;  // U = H_T ... H_1
  EXPECT_LT(vsd::max_abs_diff(chain.matrix(), oracle::from_eigen(u)), 1e-13);
}

TEST(Householder, LaterVectorsFollowTheMap) {
  vsd::Rng init(3);
  vsd::HouseholderChain chain(4, 2, 0, init);
  std::vector<vsd::Parameter*> ps = chain.parameters();
  // Seed plus weight and bias of one affine map.
  ASSERT_EQ(ps.size(), 3u);
  const Eigen::MatrixXd v1 = oracle::to_eigen(ps[0]->value.reshaped({1, 4}));
  const Eigen::MatrixXd w = oracle::to_eigen(ps[1]->value);
  const Eigen::MatrixXd b = oracle::to_eigen(ps[2]->value.reshaped({1, 4}));
  Eigen::MatrixXd v2 = v1 * w + b;
  const std::vector<Tensor> vs = chain.vectors();
  EXPECT_LT(vsd::max_abs_diff(vs[1].reshaped({1, 4}), oracle::from_eigen(v2)), 1e-14);
}

TEST(Householder, TZeroIsIdentity) {
  vsd::Rng init(4);
  vsd::HouseholderChain chain(5, 0, 0, init);
  EXPECT_EQ(chain.matrix(), Tensor::eye(5));
  EXPECT_TRUE(chain.parameters().empty());
}

TEST(Householder, OrthogonalForFullAndLowRank) {
  for (std::size_t rank : {0, 2, 5, 10}) {
    for (std::size_t t : {1, 2, 3}) {
      vsd::Rng init(10 * rank + t);
      const Eigen::MatrixXd u = oracle::to_eigen(vsd::HouseholderChain(32, t, rank, init).matrix());
      EXPECT_LT((u.transpose() * u - Eigen::MatrixXd::Identity(32, 32)).norm(), 1e-12) << rank << " " << t;
    }
  }
}

TEST(Householder, ZeroSeedIsGuarded) {
  vsd::Rng init(5);
  vsd::HouseholderChain chain(3, 1, 0, init);
  chain.seed().value.fill(0.0);
  const Eigen::MatrixXd u = oracle::to_eigen(chain.matrix());
  EXPECT_TRUE(u.allFinite());
  EXPECT_LT((u.transpose() * u - Eigen::MatrixXd::Identity(3, 3)).norm(), 1e-14);
}

TEST(Householder, ApplyRowsMatchesMatrix) {
  vsd::Rng init(6), rng(7);
  vsd::HouseholderChain chain(5, 2, 3, init);
  const Tensor x = vsd::sample_standard_normal({4, 5}, rng);
  vsd::Tape tape;
  const Tensor rows = chain.apply_rows(tape, tape.constant(x)).value();
  const Eigen::MatrixXd ref = oracle::to_eigen(x) * oracle::to_eigen(chain.matrix()).transpose();
  EXPECT_LT(vsd::max_abs_diff(rows, oracle::from_eigen(ref)), 1e-13);
}

TEST(Householder, ChainGradientsMatchFiniteDifferences) {
  vsd::Rng init(8), rng(9);
  vsd::HouseholderChain chain(4, 3, 2, init);
  const Tensor x = vsd::sample_standard_normal({3, 4}, rng);
  const Tensor w = vsd::sample_standard_normal({3, 4}, rng);
  std::vector<vsd::Parameter*> ps = chain.parameters();
  auto loss = [&](vsd::Tape& t) { return vsd::sum(chain.apply_rows(t, t.constant(x)) * t.constant(w)); };
  const vsd::GradCheckResult r = vsd::finite_difference_check(loss, ps, 1e-6);
  EXPECT_LT(r.max_error, 1e-6) << r.worst_parameter << " " << r.analytic << " " << r.numeric;
  auto loss_u = [&](vsd::Tape& t) { return vsd::sum(vsd::square(chain.matrix(t)) * t.constant(vsd::matmul(vsd::transpose(w), x))); };
  const vsd::GradCheckResult ru = vsd::finite_difference_check(loss_u, ps, 1e-6);
  EXPECT_LT(ru.max_error, 1e-6) << ru.worst_parameter << " " << ru.analytic << " " << ru.numeric;
}

TEST(Householder, StructuredNoiseCovariance) {
  vsd::Rng init(10), rng(11);
  const Tensor u = vsd::HouseholderChain(3, 2, 0, init).matrix();
  const Tensor alpha = Tensor::vector({0.5, 0.2, 0.1});
  const std::size_t n = 200000;
  const Eigen::MatrixXd xi = oracle::to_eigen(vsd::sample_structured_noise(alpha, u, rng, n));
  const Eigen::RowVectorXd mean = xi.colwise().mean();
  const Eigen::MatrixXd c = xi.rowwise() - mean;
  const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(n - 1);
  const Eigen::MatrixXd ue = oracle::to_eigen(u);
  const Eigen::MatrixXd expect = ue * oracle::to_eigen(alpha).asDiagonal() * ue.transpose();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mean(i), 1.0, 0.01);
  EXPECT_LT((cov - expect).cwiseAbs().maxCoeff(), 0.01);
}

}  // namespace
