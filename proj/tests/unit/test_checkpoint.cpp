#include <gtest/gtest.h>

#include <filesystem>

#include "vsd/checkpoint.hpp"
#include "vsd/config.hpp"

namespace {

namespace fs = std::filesystem;
using vsd::Tensor;

vsd::Checkpoint sample() {
  vsd::Checkpoint c;
  c.spec_hash = "0123456789abcdef";
  c.config = vsd::config_to_json({});
  c.normalization.x_mean = {0.5};
  c.normalization.x_std = {2.0};
  c.state.epoch = 3;
  vsd::Rng r(9);
  r.normal();
  c.state.shuffle_rng = r.state();
  c.state.local_rng = vsd::Rng(1).state();
  c.state.global_rng = vsd::Rng(2).state();
  c.state.optimizer = {{"step", Tensor::scalar(12)}, {"m.w", Tensor::vector({0.1, 1.0 / 3.0})}};
  c.state.trace = {{1, 2.5, 2.0, 0.5, 1e-3}, {2, 1.0 / 7.0, 0.1, 0.04285714285714286, 1e-3}};
  c.parameters = {{"layer0.theta", Tensor::matrix({{1e-300, -0.0}, {3.14159, 2.0 / 3.0}})}};
  return c;
}

TEST(Checkpoint, RoundTripIsExact) {
  const fs::path dir = fs::temp_directory_path() / "vsd_ckpt_rt";
  fs::remove_all(dir);
  const vsd::Checkpoint c = sample();
  vsd::save_checkpoint((dir / "nested" / "ck.json").string(), c);
  EXPECT_FALSE(fs::exists(dir / "nested" / "ck.json.tmp"));
  const vsd::Checkpoint back = vsd::load_checkpoint((dir / "nested" / "ck.json").string());
  EXPECT_EQ(vsd::checkpoint_to_json(back), vsd::checkpoint_to_json(c));
  EXPECT_EQ(back.parameters.at("layer0.theta"), c.parameters.at("layer0.theta"));
  EXPECT_EQ(back.state.trace[1].objective, 1.0 / 7.0);
  vsd::Rng a(0), b(9);
  b.normal();
  a.set_state(back.state.shuffle_rng);
  EXPECT_EQ(a.normal(), b.normal());
  fs::remove_all(dir);
}

TEST(Checkpoint, RejectsBadDocuments) {
  nlohmann::json j = vsd::checkpoint_to_json(sample());
  j["version"] = 2;
  EXPECT_THROW(vsd::checkpoint_from_json(j), vsd::DataError);
  j = vsd::checkpoint_to_json(sample());
  j["format"] = "other";
  EXPECT_THROW(vsd::checkpoint_from_json(j), vsd::DataError);
  j = vsd::checkpoint_to_json(sample());
  j["parameters"][0]["shape"] = {3, 3};
  EXPECT_THROW(vsd::checkpoint_from_json(j), vsd::DataError);
  j = vsd::checkpoint_to_json(sample());
  j.erase("rng");
  EXPECT_THROW(vsd::checkpoint_from_json(j), vsd::DataError);
  EXPECT_THROW(vsd::load_checkpoint("/nonexistent/ck.json"), vsd::DataError);
}

TEST(Checkpoint, TraceCsv) {
  EXPECT_EQ(vsd::trace_csv(sample().state.trace),
            "epoch,objective,data_term,kl_term,lr\n"
            "1,2.5,2,0.5,0.001\n"
            "2,0.14285714285714285,0.1,0.04285714285714286,0.001\n");
  EXPECT_EQ(vsd::format_double(0.1), "0.1");
}

}  // namespace
