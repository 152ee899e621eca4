#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vsd/data.hpp"

namespace {

namespace fs = std::filesystem;
using vsd::Tensor;

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("vsd_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                                                ::testing::UnitTest::GetInstance()->current_test_info()->name())) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& content) const {
    const fs::path p = path / name;
    std::ofstream(p, std::ios::binary) << content;
    return p.string();
  }
};

std::string idx_bytes(std::initializer_list<unsigned char> header, std::size_t payload) {
  std::string s(header.begin(), header.end());
  s.append(payload, '\x07');
  return s;
}

TEST(Data, SyntheticCubicFollowsTheToyProtocol) {
  vsd::DatasetConfig c;
  c.seed = 3;
  c.normalize = false;
  const vsd::DatasetHandle h = vsd::load_dataset(c);
  ASSERT_EQ(h.train.size(), 20u);
  EXPECT_TRUE(h.regression());
  double resid2 = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const double x = h.train.x[i];
    EXPECT_GE(x, -4.0);
    EXPECT_LE(x, 4.0);
    const double e = h.train.targets[i] - x * x * x;
    resid2 += e * e;
  }
  // Noise sd 3: the residual variance of 20 draws is well inside (1, 30).
  EXPECT_GT(resid2 / 20, 1.0);
  EXPECT_LT(resid2 / 20, 30.0);
  EXPECT_EQ(h.test.x[0], -6.0);
  EXPECT_EQ(h.test.x[h.test.size() - 1], 6.0);
  // Same seed, same data; other seed, other data.
  EXPECT_EQ(vsd::load_dataset(c).train.x, h.train.x);
  c.seed = 4;
  EXPECT_NE(vsd::load_dataset(c).train.x, h.train.x);
}

TEST(Data, NormalizationUsesTrainingStatisticsOnly) {
  vsd::DatasetConfig c;
  c.source = "synthetic-two-cluster";
  const vsd::DatasetHandle h = vsd::load_dataset(c);
  double m = 0, s = 0;
  for (double v : h.train.x.values()) m += v;
  m /= h.train.size();
  for (double v : h.train.x.values()) s += (v - m) * (v - m);
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(s / h.train.size(), 1.0, 1e-12);
  // The test grid is mapped with the same affine transform.
  vsd::DatasetConfig raw = c;
  raw.normalize = false;
  const vsd::DatasetHandle r = vsd::load_dataset(raw);
  EXPECT_NEAR(h.test.x[0], (r.test.x[0] - h.norm.x_mean[0]) / h.norm.x_std[0], 1e-12);
  EXPECT_NEAR(vsd::denormalize_targets(h.train.targets, h.norm)[3], r.train.targets[3], 1e-12);
}

TEST(Data, TwoClustersLeaveAGap) {
  vsd::DatasetConfig c;
  c.source = "synthetic-two-cluster";
  c.normalize = false;
  const vsd::DatasetHandle h = vsd::load_dataset(c);
  for (double x : h.train.x.values()) EXPECT_GE(std::abs(x), 1.0);
}

TEST(Data, Moons) {
  vsd::DatasetConfig c;
  c.source = "synthetic-moons";
  const vsd::DatasetHandle h = vsd::load_dataset(c);
  EXPECT_EQ(h.train.size(), 500u);
  EXPECT_EQ(h.classes, 2u);
  EXPECT_EQ(h.input_shape, (vsd::Shape{2}));
}

TEST(Data, CsvParsing) {
  TempDir d;
  const std::string p = d.file("t.csv", "a,b,label\n1,2,0\n3,4.5,1\n-1,0,1\n5,6,0\n7,8,1\n");
  const vsd::CsvTable t = vsd::read_csv(p, "");
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b", "label"}));
  EXPECT_EQ(t.features.shape(), (vsd::Shape{5, 2}));
  EXPECT_EQ(t.features(1, 1), 4.5);
  EXPECT_EQ(t.target, (std::vector<double>{0, 1, 1, 0, 1}));
  const vsd::CsvTable named = vsd::read_csv(p, "a");
  EXPECT_EQ(named.target[1], 3.0);
  EXPECT_EQ(named.features(1, 1), 1.0);

  vsd::DatasetConfig c;
  c.source = "csv-classification";
  c.path = p;
  c.test_fraction = 0.4;
  const vsd::DatasetHandle h = vsd::load_dataset(c);
  EXPECT_EQ(h.train.size() + h.test.size(), 5u);
  EXPECT_EQ(h.test.size(), 2u);
  c.split_index = 1;
  const vsd::DatasetHandle h2 = vsd::load_dataset(c);
  EXPECT_EQ(h2.train.size(), 3u);
}

TEST(Data, CsvErrors) {
  TempDir d;
  EXPECT_THROW(vsd::read_csv(d.file("a.csv", "x,y\n1,2\n3\n"), ""), vsd::DataError);
  EXPECT_THROW(vsd::read_csv(d.file("b.csv", "x,y\n1,abc\n"), ""), vsd::DataError);
  EXPECT_THROW(vsd::read_csv(d.file("c.csv", "x,y\n1,\n"), ""), vsd::DataError);
  EXPECT_THROW(vsd::read_csv(d.file("d.csv", "x,y\n1,2\n"), "z"), vsd::DataError);
  EXPECT_THROW(vsd::read_csv((d.path / "missing.csv").string(), ""), vsd::DataError);
  vsd::DatasetConfig c;
  c.source = "csv-classification";
  c.path = d.file("e.csv", "x,y\n1,0.5\n2,1\n");
  c.test_fraction = 0;
  EXPECT_THROW(vsd::load_dataset(c), vsd::DataError);
}

TEST(Data, IdxRoundTrip) {
  TempDir d;
  const std::string img = d.file("img", idx_bytes({0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3}, 12));
  const std::string lab = d.file("lab", std::string("\0\0\x08\x01\0\0\0\x02\x01\x00", 10));
  const Tensor t = vsd::read_idx_images(img);
  EXPECT_EQ(t.shape(), (vsd::Shape{2, 2, 3}));
  EXPECT_EQ(t[5], 7.0);
  EXPECT_EQ(vsd::read_idx_labels(lab), (std::vector<int>{1, 0}));
  vsd::DatasetConfig c;
  c.source = "idx-images";
  c.path = img;
  c.labels_path = lab;
  c.test_fraction = 0.0;
  c.normalize = false;
  const vsd::DatasetHandle h = vsd::load_dataset(c);
  EXPECT_EQ(h.input_shape, (vsd::Shape{1, 2, 3}));
  EXPECT_NEAR(h.train.x[0], 7.0 / 255.0, 1e-15);
}

TEST(Data, IdxErrorsNameTheBytePosition) {
  TempDir d;
  try {
    vsd::read_idx_images(d.file("bad", idx_bytes({0, 1, 8, 3}, 0)));
    FAIL();
  } catch (const vsd::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("byte 1"), std::string::npos) << e.what();
  }
  try {
    vsd::read_idx_images(d.file("dims", idx_bytes({0, 0, 8, 1, 0, 0, 0, 2}, 2)));
    FAIL();
  } catch (const vsd::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("byte 3"), std::string::npos) << e.what();
  }
  try {
    vsd::read_idx_images(d.file("short", idx_bytes({0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3}, 5)));
    FAIL();
  } catch (const vsd::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("byte 21"), std::string::npos) << e.what();
  }
  EXPECT_THROW(vsd::read_idx_labels(d.file("trunc", std::string("\0\0\x08", 3))), vsd::DataError);
}

TEST(Data, UnknownSource) {
  vsd::DatasetConfig c;
  c.source = "mnist-download";
  EXPECT_THROW(vsd::load_dataset(c), vsd::DataError);
}

}  // namespace
