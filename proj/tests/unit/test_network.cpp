#include <gtest/gtest.h>

#include "vsd/network.hpp"

namespace {

using vsd::Tensor;

TEST(Network, BuildsFromArchitecture) {
  vsd::Network net({5}, {"dense:8", "relu", "dense:3"}, vsd::Variant::Vsd, {}, 1);
  EXPECT_EQ(net.size(), 3u);
  EXPECT_EQ(net.output_dim(), 3u);
  EXPECT_EQ(net.layer(0).kind(), "vsd");
  EXPECT_EQ(net.layer(1).kind(), "relu");
  // theta, bias, log_alpha, householder seed per VSD layer (T = 1)
  EXPECT_EQ(net.parameters().size(), 8u);
  EXPECT_EQ(net.parameter_count(), 5u * 8 + 8 + 5 + 5 + 8 * 3 + 3 + 8 + 8);
}

TEST(Network, RejectsBadArchitectures) {
  EXPECT_THROW(vsd::Network({5}, {"dense:8", "relu"}, vsd::Variant::Map, {}, 1), std::invalid_argument);
  EXPECT_THROW(vsd::Network({5}, {"dense:x"}, vsd::Variant::Map, {}, 1), std::invalid_argument);
  EXPECT_THROW(vsd::Network({5}, {"softmax", "dense:2"}, vsd::Variant::Map, {}, 1), std::invalid_argument);
  EXPECT_THROW(vsd::Network({5}, {}, vsd::Variant::Map, {}, 1), std::invalid_argument);
}

TEST(Network, ForwardChecksShapeAndIsSeeded) {
  vsd::Network a({3}, {"dense:4", "relu", "dense:2"}, vsd::Variant::Map, {}, 9);
  vsd::Network b({3}, {"dense:4", "relu", "dense:2"}, vsd::Variant::Map, {}, 9);
  EXPECT_EQ(a.state(), b.state());
  vsd::Rng l(1), g(2);
  vsd::ForwardContext ctx{l, g, vsd::NoiseMode::Stochastic};
  vsd::Tape tape;
  EXPECT_THROW(a.forward(tape, tape.constant(Tensor({2, 4})), ctx), vsd::ShapeError);
  EXPECT_EQ(a.forward(tape, tape.constant(Tensor({2, 3})), ctx).shape(), (vsd::Shape{2, 2}));
}

TEST(Network, KlIsSumOfLayerKls) {
  vsd::Network net({3}, {"dense:4", "relu", "dense:2"}, vsd::Variant::ArdVd, {}, 3);
  vsd::Tape tape;
  const double total = net.kl(tape).item();
  vsd::Tape t1, t2;
  EXPECT_NEAR(total, net.layer(0).kl(t1).item() + net.layer(2).kl(t2).item(), 1e-14);
}

TEST(Network, StateRoundTrip) {
  vsd::Network a({3}, {"dense:4", "relu", "dense:2"}, vsd::Variant::VsdHier, {}, 3);
  vsd::Network b({3}, {"dense:4", "relu", "dense:2"}, vsd::Variant::VsdHier, {}, 4);
  EXPECT_NE(a.state(), b.state());
  b.load_state(a.state());
  EXPECT_EQ(a.state(), b.state());
  auto bad = a.state();
  bad.begin()->second = Tensor({7});
  EXPECT_THROW(b.load_state(bad), vsd::ShapeError);
  auto missing = a.state();
  missing.erase(missing.begin());
  EXPECT_THROW(b.load_state(missing), vsd::ShapeError);
}

TEST(Network, ConvolutionalStack) {
  vsd::Network net({1, 8, 8}, {"conv:4:3:1:1", "relu", "maxpool", "flatten", "dense:3"}, vsd::Variant::Vsd, {}, 5);
  EXPECT_EQ(net.layer(0).kind(), "vsd-conv");
  vsd::Network map({1, 8, 8}, {"conv:4:3:1:1", "relu", "avgpool", "flatten", "dense:3"}, vsd::Variant::Mcd, {}, 5);
  EXPECT_EQ(map.layer(0).kind(), "conv");
  vsd::Rng l(1), g(2), d(3);
  vsd::ForwardContext ctx{l, g, vsd::NoiseMode::Stochastic};
  vsd::Tape tape;
  EXPECT_EQ(net.forward(tape, tape.constant(vsd::sample_standard_normal({2, 1, 8, 8}, d)), ctx).shape(),
            (vsd::Shape{2, 3}));
}

}  // namespace
