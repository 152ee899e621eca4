#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "vsd/diagnostics.hpp"

namespace {

using vsd::Tensor;

Eigen::MatrixXd random_matrix(int r, int c, std::uint64_t seed) {
  vsd::Rng rng(seed);
  return oracle::to_eigen(vsd::sample_standard_normal({static_cast<std::size_t>(r), static_cast<std::size_t>(c)}, rng));
}

TEST(Diagnostics, SpectralNormMatchesSvd) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Eigen::MatrixXd m = random_matrix(3 + s % 5, 2 + s % 7, s);
    EXPECT_NEAR(vsd::spectral_norm(oracle::from_eigen(m)), oracle::largest_singular_value(m), 1e-9);
  }
  EXPECT_EQ(vsd::spectral_norm(Tensor::zeros({3, 3})), 0.0);
  vsd::Rng rng(99);
  const Tensor kernel = vsd::sample_standard_normal({4, 2, 3, 3}, rng);
  EXPECT_NEAR(vsd::spectral_norm(kernel), oracle::largest_singular_value(oracle::to_eigen(kernel.reshaped({4, 18}))),
              1e-9);
}

TEST(Diagnostics, StableRank) {
  const Eigen::MatrixXd m = random_matrix(6, 4, 42);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd s = svd.singularValues();
  EXPECT_NEAR(vsd::stable_rank(oracle::from_eigen(m)), s.squaredNorm() / (s(0) * s(0)), 1e-9);
  // Rank-one matrices have stable rank 1; orthogonal ones have full stable rank.
  EXPECT_NEAR(vsd::stable_rank(vsd::outer(Tensor::vector({1, 2, 3}), Tensor::vector({4, 5}))), 1.0, 1e-12);
  EXPECT_NEAR(vsd::stable_rank(Tensor::eye(5)), 5.0, 1e-12);
  EXPECT_THROW(vsd::stable_rank(Tensor::zeros({2, 2})), vsd::DomainError);
}

TEST(Diagnostics, SymmetricEigen) {
  const Eigen::MatrixXd b = random_matrix(6, 6, 7);
  const Eigen::MatrixXd a = b + b.transpose();
  const vsd::SymmetricEigen e = vsd::symmetric_eigen(oracle::from_eigen(a));
  const Eigen::MatrixXd v = oracle::to_eigen(e.vectors);
  const Eigen::VectorXd w = oracle::to_eigen(e.values);
  EXPECT_LT((v * w.asDiagonal() * v.transpose() - a).norm(), 1e-12);
  EXPECT_LT((v.transpose() * v - Eigen::MatrixXd::Identity(6, 6)).norm(), 1e-12);
  Eigen::VectorXd ours = w, ref = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues();
  std::sort(ours.data(), ours.data() + 6);
  EXPECT_LT((ours - ref).cwiseAbs().maxCoeff(), 1e-12);
}

struct LinearSetup {
  vsd::Network net{{4}, {"dense:5", "dense:3", "dense:2"}, vsd::Variant::Map, {}, 17};
  vsd::RegularizerProblem problem;
  Tensor alpha, u;
};

std::unique_ptr<LinearSetup> linear_setup(std::size_t layer) {
  auto s = std::make_unique<LinearSetup>();
  vsd::Rng rng(18), init(19);
  s->problem.network = &s->net;
  s->problem.layer = layer;
  s->problem.x = vsd::sample_standard_normal({6, 4}, rng);
  s->problem.targets = vsd::sample_standard_normal({6, 2}, rng);
  auto* dense = dynamic_cast<vsd::DenseBase*>(&s->net.layer(layer));
  const std::size_t k = dense->in_features();
  s->alpha = vsd::sample_uniform({k}, 0.05, 0.3, rng);
  s->u = vsd::HouseholderChain(k, 2, 0, init).matrix();
  return s;
}

// For a linear net with squared error the regularizer is
// mean_n tr(J^T J diag(h_n) U A U^T diag(h_n)), J = (W_l ... W_L)^T.
double linear_reference(LinearSetup& s) {
  std::vector<Eigen::MatrixXd> w, b;
  for (std::size_t i = 0; i < s.net.size(); ++i) {
    auto* d = dynamic_cast<vsd::DenseBase*>(&s.net.layer(i));
    w.push_back(oracle::to_eigen(d->theta().value));
    b.push_back(oracle::to_eigen(d->bias().value).transpose());
  }
  Eigen::MatrixXd h = oracle::to_eigen(s.problem.x);
  for (std::size_t i = 0; i < s.problem.layer; ++i) h = (h * w[i]).rowwise() + Eigen::RowVectorXd(b[i]);
  Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(w[s.problem.layer].rows(), w[s.problem.layer].rows());
  for (std::size_t i = s.problem.layer; i < w.size(); ++i) prod = prod * w[i];
  const Eigen::MatrixXd jtj = prod * prod.transpose();
  const Eigen::MatrixXd u = oracle::to_eigen(s.u);
  const Eigen::VectorXd a = oracle::to_eigen(s.alpha);
  double total = 0;
  for (Eigen::Index n = 0; n < h.rows(); ++n) {
    const Eigen::VectorXd hn = h.row(n).transpose();
    total += (jtj * oracle::column_covariance(hn, u, a)).trace();
  }
  return total / static_cast<double>(h.rows());
}

TEST(Diagnostics, AnalyticRegularizerOnLinearNet) {
  for (std::size_t layer : {0, 1, 2}) {
    auto s = linear_setup(layer);
    const double ref = linear_reference(*s);
    EXPECT_NEAR(vsd::regularizer_analytic(s->problem, s->alpha, s->u), ref, 1e-10 * ref) << layer;
    EXPECT_NEAR(vsd::regularizer_tikhonov(s->problem, s->alpha, s->u), ref, 1e-10 * ref);
    EXPECT_NEAR(vsd::regularizer_column_sum(s->problem, s->alpha, s->u), ref, 1e-10 * ref);
  }
}

TEST(Diagnostics, MonteCarloRegularizerIsExactInExpectationForQuadratics) {
  auto s = linear_setup(1);
  vsd::Rng rng(20);
  const double ref = linear_reference(*s);
  EXPECT_NEAR(vsd::regularizer_mc(s->problem, s->alpha, s->u, 200000, rng), ref, 0.01 * ref);
  EXPECT_EQ(vsd::regularizer_mc(s->problem, Tensor::zeros(s->alpha.shape()), s->u, 10, rng), 0.0);
}

TEST(Diagnostics, CrossEntropyRegularizerMatchesFiniteDifferenceJacobian) {
  vsd::Network net({3}, {"dense:4", "relu", "dense:3"}, vsd::Variant::Map, {}, 21);
  vsd::Rng rng(22), init(23);
  vsd::RegularizerProblem p;
  p.network = &net;
  p.layer = 2;
  p.x = vsd::sample_standard_normal({5, 3}, rng);
  p.labels = {0, 2, 1, 1, 0};
  p.loss = vsd::RegLoss::CrossEntropy;
  const Tensor alpha = vsd::sample_uniform({4}, 0.01, 0.1, rng);
  const Tensor u = vsd::HouseholderChain(4, 1, 0, init).matrix();
  // Reference: J from central differences of the tail, H_out = (diag p - p p^T)/2.
  vsd::Rng l(0), g(0);
  vsd::ForwardContext ctx{l, g, vsd::NoiseMode::Deterministic};
  auto tail = [&](const Eigen::VectorXd& h) {
    vsd::Tape t(false);
    Tensor in({1, 4});
    for (int i = 0; i < 4; ++i) in[i] = h(i);
    return oracle::to_eigen(net.layer(2).forward(t, t.constant(in), ctx).value()).transpose().eval();
  };
  vsd::Tape t0(false);
  const Eigen::MatrixXd hidden =
      oracle::to_eigen(net.layer(1).forward(t0, net.layer(0).forward(t0, t0.constant(p.x), ctx), ctx).value());
  double ref = 0;
  for (int n = 0; n < 5; ++n) {
    const Eigen::VectorXd h = hidden.row(n).transpose();
    Eigen::MatrixXd j(3, 4);
    for (int k = 0; k < 4; ++k) {
      Eigen::VectorXd up = h, dn = h;
      up(k) += 1e-6;
      dn(k) -= 1e-6;
      j.col(k) = (tail(up) - tail(dn)) / 2e-6;
    }
    const Eigen::VectorXd f = tail(h);
    const Eigen::VectorXd pr = (f.array() - f.maxCoeff()).exp() / (f.array() - f.maxCoeff()).exp().sum();
    const Eigen::MatrixXd hout = 0.5 * (Eigen::MatrixXd(pr.asDiagonal()) - pr * pr.transpose());
    ref += (j.transpose() * hout * j * oracle::column_covariance(h, oracle::to_eigen(u), oracle::to_eigen(alpha))).trace();
  }
  ref /= 5;
  EXPECT_NEAR(vsd::regularizer_analytic(p, alpha, u), ref, 1e-7 * ref);
  EXPECT_NEAR(vsd::regularizer_tikhonov(p, alpha, u), vsd::regularizer_analytic(p, alpha, u), 1e-12);
  EXPECT_NEAR(vsd::regularizer_column_sum(p, alpha, u), vsd::regularizer_analytic(p, alpha, u), 1e-12);
}

TEST(Diagnostics, ParameterGradientsAreUntouched) {
  auto s = linear_setup(1);
  for (vsd::Parameter* p : s->net.parameters()) p->grad.fill(3.0);
  vsd::regularizer_analytic(s->problem, s->alpha, s->u);
  for (vsd::Parameter* p : s->net.parameters())
    for (double g : p->grad.values()) ASSERT_EQ(g, 3.0);
}

TEST(Diagnostics, ProblemValidation) {
  auto s = linear_setup(0);
  EXPECT_THROW(vsd::regularizer_analytic(s->problem, Tensor::ones({3}), s->u), vsd::ShapeError);
  vsd::RegularizerProblem bad = s->problem;
  bad.layer = 9;
  EXPECT_THROW(vsd::regularizer_analytic(bad, s->alpha, s->u), std::out_of_range);
}

}  // namespace
