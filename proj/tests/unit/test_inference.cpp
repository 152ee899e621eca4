#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "vsd/inference.hpp"

namespace {

using vsd::Tensor;

vsd::Batch toy_classification(std::size_t n, std::uint64_t seed) {
  vsd::Rng rng(seed);
  vsd::Batch b;
  b.x = vsd::sample_standard_normal({n, 2}, rng);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(b.x(i, 0) + 0.5 * b.x(i, 1) > 0 ? 1 : 0);
  return b;
}

vsd::Batch toy_regression(std::size_t n, std::uint64_t seed) {
  vsd::Rng rng(seed);
  vsd::Batch b;
  b.x = vsd::sample_standard_normal({n, 2}, rng);
  b.targets = Tensor({n, 1});
  for (std::size_t i = 0; i < n; ++i) b.targets[i] = std::sin(b.x(i, 0)) + 0.1 * rng.normal();
  return b;
}

vsd::Model classifier(vsd::Variant v, std::uint64_t seed = 1) {
  return vsd::Model(vsd::Network({2}, {"dense:6", "relu", "dense:2"}, v, {}, seed), vsd::Likelihood::Categorical);
}

TEST(Inference, LikelihoodNames) {
  EXPECT_EQ(vsd::parse_likelihood("gaussian"), vsd::Likelihood::Gaussian);
  EXPECT_EQ(vsd::to_string(vsd::Likelihood::Categorical), "categorical");
  EXPECT_THROW(vsd::parse_likelihood("poisson"), std::invalid_argument);
}

TEST(Inference, ObjectiveTermsMatchTheirDefinitions) {
  vsd::Model model = classifier(vsd::Variant::Map);
  const vsd::Batch batch = toy_classification(5, 2);
  vsd::Objective obj{0.3, 50, 1};
  vsd::Rng l(1), g(2);
  vsd::ForwardContext ctx{l, g, vsd::NoiseMode::Deterministic};
  vsd::Tape tape;
  const vsd::ObjectiveTerms t = vsd::negative_elbo(tape, model, batch, obj, ctx);
  vsd::Tape t2;
  const Tensor logits = model.network.forward(t2, t2.constant(batch.x), ctx).value();
  const Tensor p = vsd::softmax_rows(logits);
  double nll = 0;
  for (std::size_t i = 0; i < 5; ++i) nll -= std::log(p(i, batch.labels[i]));
  vsd::Tape t3;
  const double kl = model.network.kl(t3).item();
  EXPECT_NEAR(t.data.item(), 50.0 / 5.0 * nll, 1e-10);
  EXPECT_NEAR(t.kl.item(), kl, 1e-12);
  EXPECT_NEAR(t.total.item(), 50.0 / 5.0 * nll + 0.3 * kl, 1e-10);
}

TEST(Inference, GaussianObjective) {
  vsd::Model model(vsd::Network({2}, {"dense:3", "relu", "dense:1"}, vsd::Variant::Map, {}, 3),
                   vsd::Likelihood::Gaussian, std::log(4.0));
  const vsd::Batch batch = toy_regression(4, 3);
  vsd::Rng l(1), g(2);
  vsd::ForwardContext ctx{l, g, vsd::NoiseMode::Deterministic};
  vsd::Tape tape;
  const double data = vsd::negative_elbo(tape, model, batch, {0.0, 4, 1}, ctx).data.item();
  vsd::Tape t2;
  const Tensor f = model.network.forward(t2, t2.constant(batch.x), ctx).value();
  double ref = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double d = batch.targets[i] - f[i];
    ref -= -0.5 * std::log(2 * std::numbers::pi / 4.0) - 0.5 * 4.0 * d * d;
  }
  EXPECT_NEAR(data, ref, 1e-12);
  EXPECT_EQ(model.parameters().size(), model.network.parameters().size() + 1);
}

TEST(Inference, GradientsForEveryVariant) {
  const vsd::Batch batch = toy_classification(4, 4);
  for (auto v : {vsd::Variant::Map, vsd::Variant::Mcd, vsd::Variant::Vd, vsd::Variant::ArdVd, vsd::Variant::Bbb,
                 vsd::Variant::Vsd, vsd::Variant::VsdHier}) {
    vsd::LayerOptions opts;
    opts.transforms = 2;
    opts.bbb_init_sigma = 0.1;
    vsd::Model model(vsd::Network({2}, {"dense:5", "relu", "dense:2"}, v, opts, 5), vsd::Likelihood::Categorical);
    auto loss = [&](vsd::Tape& t) {
      vsd::Rng l(7), g(8);
      vsd::ForwardContext ctx{l, g, vsd::NoiseMode::Stochastic};
      return vsd::negative_elbo(t, model, batch, {1.0, 4, 2}, ctx).total;
    };
    std::vector<vsd::Parameter*> ps = model.parameters();
    // Zero biases put fully dropped rows exactly on the ReLU kink.
    for (vsd::Parameter* p : ps) {
      if (p->name.ends_with(".bias")) p->value = vsd::Tensor(p->value.shape(), 0.1);
    }
    const vsd::GradCheckResult r = vsd::finite_difference_check(loss, ps);
    EXPECT_LT(r.max_error, 1e-5) << vsd::to_string(v) << " " << r.worst_parameter;
  }
}

TEST(Inference, AdamFirstStepMovesByLearningRate) {
  vsd::Parameter p("w", Tensor::vector({1.0, -2.0, 0.0}));
  p.grad = Tensor::vector({0.5, -3.0, 0.0});
  vsd::Adam adam;
  adam.step({&p}, 0.1);
  // Bias-corrected first step: lr * g / (|g| + eps).
  EXPECT_NEAR(p.value[0], 0.9, 1e-7);
  EXPECT_NEAR(p.value[1], -1.9, 1e-7);
  EXPECT_EQ(p.value[2], 0.0);
  vsd::Adam copy;
  copy.load_state(adam.state());
  EXPECT_EQ(copy.state(), adam.state());
}

TEST(Inference, SgdMomentum) {
  vsd::Parameter p("w", Tensor::vector({1.0}));
  vsd::SgdMomentum sgd(0.5);
  p.grad = Tensor::vector({2.0});
  sgd.step({&p}, 0.1);
  EXPECT_NEAR(p.value[0], 0.8, 1e-15);
  sgd.step({&p}, 0.1);  // velocity 0.5*2 + 2 = 3
  EXPECT_NEAR(p.value[0], 0.5, 1e-15);
}

TEST(Inference, FrozenParametersDoNotMove) {
  vsd::Parameter p("w", Tensor::vector({1.0}), false);
  p.grad = Tensor::vector({2.0});
  vsd::Adam adam;
  adam.step({&p}, 0.1);
  EXPECT_EQ(p.value[0], 1.0);
}

TEST(Inference, MultiStepSchedule) {
  vsd::TrainSpec s;
  s.lr = 1.0;
  s.lr_gamma = 0.5;
  s.lr_step = 3;
  EXPECT_EQ(vsd::scheduled_lr(s, 0), 1.0);
  EXPECT_EQ(vsd::scheduled_lr(s, 2), 1.0);
  EXPECT_EQ(vsd::scheduled_lr(s, 3), 0.5);
  EXPECT_EQ(vsd::scheduled_lr(s, 7), 0.25);
  s.milestones = {1, 4};
  EXPECT_EQ(vsd::scheduled_lr(s, 0), 1.0);
  EXPECT_EQ(vsd::scheduled_lr(s, 1), 0.5);
  EXPECT_EQ(vsd::scheduled_lr(s, 5), 0.25);
  s.lr_step = 0;
  s.milestones.clear();
  EXPECT_EQ(vsd::scheduled_lr(s, 100), 1.0);
}

TEST(Inference, TrainSpecValidation) {
  vsd::TrainSpec s;
  s.optimizer = "rmsprop";
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.batch_size = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.milestones = {5, 2};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Inference, TrainingReducesObjectiveAndIsDeterministic) {
  const vsd::Batch data = toy_classification(64, 6);
  vsd::TrainSpec spec;
  spec.epochs = 15;
  spec.lr = 0.02;
  spec.batch_size = 16;
  vsd::Model a = classifier(vsd::Variant::Vsd), b = classifier(vsd::Variant::Vsd);
  const vsd::TrainState sa = vsd::train(a, data, spec, {});
  const vsd::TrainState sb = vsd::train(b, data, spec, {});
  ASSERT_EQ(sa.trace.size(), 15u);
  EXPECT_LT(sa.trace.back().objective, sa.trace.front().objective);
  EXPECT_EQ(a.state(), b.state());
  for (std::size_t i = 0; i < 15; ++i) EXPECT_EQ(sa.trace[i].objective, sb.trace[i].objective);
}

TEST(Inference, ResumeMatchesUninterruptedRun) {
  const vsd::Batch data = toy_classification(40, 7);
  vsd::TrainSpec spec;
  spec.epochs = 6;
  spec.lr = 0.01;
  spec.batch_size = 8;
  spec.lr_step = 2;
  vsd::Model full = classifier(vsd::Variant::VsdHier);
  const vsd::TrainState sf = vsd::train(full, data, spec, {});

  vsd::Model part = classifier(vsd::Variant::VsdHier);
  vsd::TrainSpec first = spec;
  first.epochs = 3;
  const vsd::TrainState mid = vsd::train(part, data, first, {});
  vsd::TrainOptions opts;
  opts.resume = &mid;
  const vsd::TrainState sr = vsd::train(part, data, spec, opts);
  EXPECT_EQ(full.state(), part.state());
  ASSERT_EQ(sr.trace.size(), 6u);
  EXPECT_EQ(sr.trace.back().objective, sf.trace.back().objective);
  EXPECT_EQ(sr.trace[2].lr, spec.lr * spec.lr_gamma);
}

TEST(Inference, DivergenceRestoresEpochStart) {
  const vsd::Batch data = toy_regression(32, 8);
  vsd::Model model(vsd::Network({2}, {"dense:4", "relu", "dense:1"}, vsd::Variant::Map, {}, 9),
                   vsd::Likelihood::Gaussian);
  vsd::TrainSpec spec;
  spec.optimizer = "sgd";
  spec.lr = 1e6;
  spec.epochs = 5;
  const auto before = model.state();
  try {
    vsd::train(model, data, spec, {});
    FAIL() << "expected divergence";
  } catch (const vsd::DivergenceError& e) {
    EXPECT_GE(e.epoch(), 1u);
    for (const auto& [k, v] : model.state()) EXPECT_TRUE(v.all_finite()) << k;
    if (e.epoch() == 1) EXPECT_EQ(model.state(), before);
  }
}

TEST(Inference, MapPredictionIsOneDeterministicPass) {
  vsd::Model model = classifier(vsd::Variant::Map);
  const Tensor x = toy_classification(3, 10).x;
  vsd::Rng l(1), g(2);
  const Tensor p = vsd::predict_proba(model, x, 50, l, g);
  vsd::Rng l2(1);
  EXPECT_EQ(l.state(), l2.state());  // no draws consumed
  vsd::Tape tape;
  vsd::ForwardContext ctx{l, g, vsd::NoiseMode::Deterministic};
  EXPECT_LT(vsd::max_abs_diff(p, vsd::softmax_rows(model.network.forward(tape, tape.constant(x), ctx).value())),
            1e-15);
}

TEST(Inference, BayesianPredictionAveragesPasses) {
  vsd::Model model = classifier(vsd::Variant::Vsd);
  const Tensor x = toy_classification(5, 11).x;
  vsd::Rng l(3), g(4);
  const Tensor p = vsd::predict_proba(model, x, 7, l, g, 2);
  // Same passes replayed by hand, chunk by chunk.
  vsd::Rng l2(3), g2(4);
  Tensor ref({5, 2});
  for (std::size_t start = 0; start < 5; start += 2) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min<std::size_t>(5, start + 2); ++i) idx.push_back(i);
    for (int s = 0; s < 7; ++s) {
      vsd::Tape tape;
      vsd::ForwardContext ctx{l2, g2, vsd::NoiseMode::Stochastic};
      const Tensor q = vsd::softmax_rows(model.network.forward(tape, tape.constant(vsd::take_rows(x, idx)), ctx).value());
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < 2; ++c) ref(idx[r], c) += q(r, c) / 7.0;
    }
  }
  EXPECT_LT(vsd::max_abs_diff(p, ref), 1e-15);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p(i, 0) + p(i, 1), 1.0, 1e-14);
}

TEST(Inference, RegressionVarianceAddsNoise) {
  vsd::Model model(vsd::Network({2}, {"dense:4", "relu", "dense:1"}, vsd::Variant::Map, {}, 12),
                   vsd::Likelihood::Gaussian, std::log(2.0));
  vsd::Rng l(1), g(2);
  const vsd::RegressionPrediction r = vsd::predict_regression(model, toy_regression(3, 12).x, 10, l, g);
  for (double v : r.variance.values()) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(Inference, HierSampleZ) {
  vsd::Rng rng(13);
  const Tensor z = vsd::hier_sample_z(Tensor::vector({0.0, 1.0}), Tensor::vector({0.0, 0.0}), rng);
  EXPECT_EQ(z[0], 1.0);
  EXPECT_NEAR(z[1], std::exp(1.0), 1e-15);
  EXPECT_THROW(vsd::hier_sample_z(Tensor::vector({0.0}), Tensor::vector({-1.0}), rng), vsd::DomainError);
}

TEST(Inference, AnnealingOnlyScalesTheKl) {
  vsd::Model model = classifier(vsd::Variant::VsdHier);
  const vsd::Batch batch = toy_classification(6, 14);
  auto eval = [&](double lambda) {
    vsd::Rng l(1), g(2);
    vsd::ForwardContext ctx{l, g, vsd::NoiseMode::Stochastic};
    vsd::Tape tape;
    const vsd::ObjectiveTerms t = vsd::negative_elbo(tape, model, batch, {lambda, 60, 1}, ctx);
    return std::pair{t.total.item(), t.kl.item()};
  };
  const auto [one, kl] = eval(1.0);
  for (double c : {0.0, 0.1, 3.0}) EXPECT_NEAR(eval(c).first - one, (c - 1) * kl, 1e-10 * std::abs(one));
}

TEST(Inference, UniformSoftmaxGivesNLogC) {
  vsd::Model model(vsd::Network({2}, {"dense:4"}, vsd::Variant::Map, {}, 15), vsd::Likelihood::Categorical);
  for (vsd::Parameter* p : model.parameters()) p->value.fill(0.0);
  vsd::Batch b;
  b.x = Tensor::matrix({{0.3, -0.2}});
  b.labels = {2};
  vsd::Rng l(1), g(2);
  vsd::ForwardContext ctx{l, g, vsd::NoiseMode::Stochastic};
  vsd::Tape tape;
  EXPECT_NEAR(vsd::negative_elbo(tape, model, b, {0.0, 25, 1}, ctx).total.item(), 25 * std::log(4.0), 1e-12);
}

TEST(Inference, MapLinearRegressionApproachesLeastSquares) {
  vsd::Rng rng(16);
  const std::size_t n = 200;
  vsd::Batch data;
  data.x = vsd::sample_standard_normal({n, 3}, rng);
  data.targets = Tensor({n, 1});
  for (std::size_t i = 0; i < n; ++i)
    data.targets[i] = 1.5 * data.x(i, 0) - 2.0 * data.x(i, 1) + 0.5 * data.x(i, 2) + 0.3 + 0.2 * rng.normal();
  // Least squares with intercept, solved directly from the normal equations.
  double xtx[4][4] = {}, xty[4] = {};
  for (std::size_t i = 0; i < n; ++i) {
    const double r[4] = {data.x(i, 0), data.x(i, 1), data.x(i, 2), 1.0};
    for (int a = 0; a < 4; ++a) {
      xty[a] += r[a] * data.targets[i];
      for (int b = 0; b < 4; ++b) xtx[a][b] += r[a] * r[b];
    }
  }
  for (int c = 0; c < 4; ++c)  // Gauss-Jordan
    for (int r = 0; r < 4; ++r) {
      if (r == c) continue;
      const double f = xtx[r][c] / xtx[c][c];
      for (int k = 0; k < 4; ++k) xtx[r][k] -= f * xtx[c][k];
      xty[r] -= f * xty[c];
    }
  double ols_se = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double f = xty[3] / xtx[3][3];
    for (int a = 0; a < 3; ++a) f += data.x(i, a) * xty[a] / xtx[a][a];
    ols_se += (f - data.targets[i]) * (f - data.targets[i]);
  }
  const double ols_rmse = std::sqrt(ols_se / n);

  vsd::Model model(vsd::Network({3}, {"dense:1"}, vsd::Variant::Map, {}, 17), vsd::Likelihood::Gaussian);
  vsd::TrainSpec spec;
  spec.epochs = 60;
  spec.lr = 0.05;
  spec.lr_step = 20;
  spec.batch_size = 20;
  vsd::train(model, data, spec, {1e-6});
  vsd::Rng l(1), g(2);
  const vsd::RegressionPrediction p = vsd::predict_regression(model, data.x, 1, l, g);
  double se = 0;
  for (std::size_t i = 0; i < n; ++i) se += (p.mean[i] - data.targets[i]) * (p.mean[i] - data.targets[i]);
  EXPECT_LT(std::sqrt(se / n), 1.05 * ols_rmse);
}

TEST(Inference, LargeLambdaGrowsDroprates) {
  const vsd::Batch data = toy_classification(64, 18);
  vsd::LayerOptions opts;
  opts.transforms = 0;
  vsd::Model model(vsd::Network({2}, {"dense:6", "relu", "dense:2"}, vsd::Variant::Vsd, opts, 19),
                   vsd::Likelihood::Categorical);
  vsd::TrainSpec spec;
  spec.epochs = 20;
  spec.lr = 0.02;
  spec.lr_step = 0;
  const vsd::TrainState st = vsd::train(model, data, spec, {1000.0});
  auto& layer = dynamic_cast<vsd::VsdDense&>(model.network.layer(0));
  for (double la : layer.log_alpha().value.values()) EXPECT_GT(la, std::log(opts.init_alpha));
  for (std::size_t e = 11; e < st.trace.size(); ++e) EXPECT_LT(st.trace[e].kl_term, st.trace[e - 1].kl_term);
}

TEST(Inference, LogNormalMean) {
  vsd::Rng rng(20);
  double s = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) s += vsd::hier_sample_z(Tensor::vector({0.0}), Tensor::vector({1.0}), rng)[0];
  // sd of z is sqrt((e - 1) e) ~ 2.16
  EXPECT_NEAR(s / n, std::exp(0.5), 5 * 2.17 / std::sqrt(n));
}

}  // namespace
