#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "moc/matrix.hpp"

namespace moc {

/// Binary matrix interchange format, little-endian:
///
///   offset  size  field
///   0       4     magic "MOCM"
///   4       4     format version (uint32, currently 1)
///   8       8     rows (uint64)
///   16      8     cols (uint64)
///   24      4     element width in bytes (uint32, 4 = float32, 8 = float64)
///   28      4     reserved, zero
///   32      ...   rows*cols elements, row-major
enum class ElementWidth : std::uint32_t { F32 = 4, F64 = 8 };

class MatrixFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_matrix(std::ostream& out, const Matrix& m, ElementWidth width = ElementWidth::F64);
Matrix read_matrix(std::istream& in);

void save_matrix(const std::filesystem::path& path, const Matrix& m,
                 ElementWidth width = ElementWidth::F64);
Matrix load_matrix(const std::filesystem::path& path);

}  // namespace moc
