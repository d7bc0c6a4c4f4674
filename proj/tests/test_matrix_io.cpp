#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "moc/matrix_io.hpp"
#include "moc/random.hpp"

namespace moc {
namespace {

TEST(MatrixIo, RoundTripF64IsExact) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const Matrix m = random_normal(static_cast<std::size_t>(rng.uniform_int(0, 7)),
                                   static_cast<std::size_t>(rng.uniform_int(0, 7)), rng);
    std::stringstream buf;
    write_matrix(buf, m);
    EXPECT_EQ(read_matrix(buf), m);
  }
}

TEST(MatrixIo, RoundTripF32RoundsToFloat) {
  Rng rng(2);
  const Matrix m = random_normal(4, 5, rng);
  std::stringstream buf;
  write_matrix(buf, m, ElementWidth::F32);
  const Matrix back = read_matrix(buf);
  ASSERT_EQ(back.rows(), 4u);
  for (std::size_t i = 0; i < m.size(); ++i)
    EXPECT_EQ(back.data()[i], static_cast<double>(static_cast<float>(m.data()[i])));
}

TEST(MatrixIo, HeaderLayout) {
  std::stringstream buf;
  write_matrix(buf, Matrix{{1.0, 2.0, 3.0}});
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 32u + 3 * 8);
  EXPECT_EQ(bytes.substr(0, 4), "MOCM");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);   // rows
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 3u);  // cols
  EXPECT_EQ(static_cast<unsigned char>(bytes[24]), 8u);  // width
}

TEST(MatrixIo, RejectsCorruptInput) {
  std::stringstream bad("XXXX");
  EXPECT_THROW(read_matrix(bad), MatrixFormatError);

  std::stringstream buf;
  write_matrix(buf, Matrix{{1.0, 2.0}});
  std::string truncated = buf.str();
  truncated.resize(truncated.size() - 3);
  std::stringstream t(truncated);
  EXPECT_THROW(read_matrix(t), MatrixFormatError);

  std::string wrong_width = buf.str();
  wrong_width[24] = 3;
  std::stringstream w(wrong_width);
  EXPECT_THROW(read_matrix(w), MatrixFormatError);
}

TEST(MatrixIo, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "moc_io_test.bin";
  const Matrix m{{1.5, -2.0}, {0.0, 7.25}};
  save_matrix(path, m);
  EXPECT_EQ(load_matrix(path), m);
  std::filesystem::remove(path);
  EXPECT_THROW(load_matrix(path), MatrixFormatError);
}

}  // namespace
}  // namespace moc
