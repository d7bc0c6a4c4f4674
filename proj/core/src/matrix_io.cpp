#include "moc/matrix_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace moc {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'O', 'C', 'M'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "matrix_io assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw MatrixFormatError("matrix file truncated");
  return value;
}

}  // namespace

void write_matrix(std::ostream& out, const Matrix& m, ElementWidth width) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, m.rows());
  put<std::uint64_t>(out, m.cols());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(width));
  put<std::uint32_t>(out, 0);
  for (double v : m.data()) {
    if (width == ElementWidth::F64) {
      put<double>(out, v);
    } else {
      put<float>(out, static_cast<float>(v));
    }
  }
  if (!out) throw MatrixFormatError("failed writing matrix");
}

Matrix read_matrix(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw MatrixFormatError("bad magic, not a MOCM matrix file");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) {
    throw MatrixFormatError("unsupported matrix format version " + std::to_string(version));
  }
  const auto rows = get<std::uint64_t>(in);
  const auto cols = get<std::uint64_t>(in);
  const auto width = get<std::uint32_t>(in);
  get<std::uint32_t>(in);
  if (width != 4 && width != 8) {
    throw MatrixFormatError("unsupported element width " + std::to_string(width));
  }
  std::vector<double> data(rows * cols);
  for (double& v : data) v = width == 8 ? get<double>(in) : static_cast<double>(get<float>(in));
  return Matrix(rows, cols, std::move(data));
}

void save_matrix(const std::filesystem::path& path, const Matrix& m, ElementWidth width) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MatrixFormatError("cannot open " + path.string() + " for writing");
  write_matrix(out, m, width);
}

Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MatrixFormatError("cannot open " + path.string());
  return read_matrix(in);
}

}  // namespace moc
