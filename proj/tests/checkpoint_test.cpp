#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "test_support.hpp"
#include "unifex/checkpoint.hpp"
#include "unifex/error.hpp"

namespace unifex {
namespace {

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

ProbeModel sample_model() {
  LossConfig loss;
  loss.variant = LossVariant::AdaFace;
  loss.k = 2;
  loss.m = 0.35;
  loss.adacos_dynamic = false;
  auto model = ProbeModel::init(5, 3, loss, 0.1, 42);
  model.b_proj[7] = -0.125;
  model.step = 123;
  return model;
}

TEST(CheckpointTest, RoundTripIsExact) {
  testing::TempDir dir;
  const auto model = sample_model();
  save_checkpoint(model, dir / "m.prb");
  EXPECT_EQ(load_checkpoint(dir / "m.prb"), model);
}

TEST(CheckpointTest, HeaderLayout) {
  testing::TempDir dir;
  const auto model = sample_model();
  save_checkpoint(model, dir / "m.prb");
  const auto bytes = testing::read_bytes(dir / "m.prb");
  ASSERT_EQ(bytes.size(), 112u + 8u * (5 * 64 + 64 + 3 * 2 * 64));
  EXPECT_EQ(bytes.substr(0, 4), "PRB1");
  const auto u32_at = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + b])) << (8 * b);
    return v;
  };
  EXPECT_EQ(u32_at(4), 5u);
  EXPECT_EQ(u32_at(8), 64u);
  EXPECT_EQ(u32_at(12), 3u);
  EXPECT_EQ(u32_at(16), 2u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[20]), kDtypeFloat64);
  EXPECT_EQ(static_cast<unsigned char>(bytes[21]), static_cast<unsigned char>(LossVariant::AdaFace));
  EXPECT_EQ(u32_at(24), 123u);
  double m = 0.0;
  std::memcpy(&m, bytes.data() + 40, 8);
  EXPECT_EQ(m, 0.35);
  EXPECT_EQ(bytes[104], 0);
  double w00 = 0.0;
  std::memcpy(&w00, bytes.data() + 112, 8);
  EXPECT_EQ(w00, model.w_proj(0, 0));
}

TEST(CheckpointTest, CorruptFilesAreRejected) {
  testing::TempDir dir;
  save_checkpoint(sample_model(), dir / "m.prb");
  const auto bytes = testing::read_bytes(dir / "m.prb");

  write_bytes(dir / "magic.prb", "PRB2" + bytes.substr(4));
  EXPECT_THROW(load_checkpoint(dir / "magic.prb"), FormatError);
  write_bytes(dir / "short.prb", bytes.substr(0, bytes.size() - 8));
  EXPECT_THROW(load_checkpoint(dir / "short.prb"), FormatError);
  write_bytes(dir / "long.prb", bytes + "x");
  EXPECT_THROW(load_checkpoint(dir / "long.prb"), FormatError);
  write_bytes(dir / "header.prb", bytes.substr(0, 50));
  EXPECT_THROW(load_checkpoint(dir / "header.prb"), FormatError);
  auto variant = bytes;
  variant[21] = 9;
  write_bytes(dir / "variant.prb", variant);
  EXPECT_THROW(load_checkpoint(dir / "variant.prb"), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "missing.prb"), IoError);
}

TEST(CheckpointTest, NonFiniteParametersAreRejected) {
  testing::TempDir dir;
  save_checkpoint(sample_model(), dir / "m.prb");
  auto bytes = testing::read_bytes(dir / "m.prb");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(bytes.data() + 112, &nan, 8);
  write_bytes(dir / "nan.prb", bytes);
  EXPECT_THROW(load_checkpoint(dir / "nan.prb"), NumericError);
}

}  // namespace
}  // namespace unifex
