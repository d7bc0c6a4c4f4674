#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "moc/ffn.hpp"
#include "moc/moc_layer.hpp"

namespace moc {

/// Per-token multiply-accumulate counts for one FFN layer.
///   dense: 3 d d_ffn      MoC: d d_ffn (gate, always dense) + K d (up) + K d (down)
/// Byte figures count weights read only; activations are ignored.
struct MacReport {
  std::uint64_t d = 0;
  std::uint64_t d_ffn = 0;
  std::uint64_t k = 0;
  std::uint64_t gate_macs = 0;
  std::uint64_t up_macs = 0;
  std::uint64_t down_macs = 0;
  std::uint64_t dense_macs = 0;
  std::uint64_t moc_macs = 0;
  double ratio = 0.0;
  std::uint64_t bytes_per_weight = 2;
  std::uint64_t dense_weight_bytes = 0;
  std::uint64_t moc_weight_bytes = 0;

  static constexpr std::string_view byte_model = "weights-touched only; activation traffic ignored";
};

MacReport mac_count(std::uint64_t d, std::uint64_t d_ffn, std::uint64_t k,
                    std::uint64_t bytes_per_weight = 2);

/// Which parts of the weights a decode step actually read.
struct WeightAccess {
  std::uint64_t gate_columns = 0;
  std::vector<std::uint32_t> up_columns;
  std::vector<std::uint32_t> down_rows;
  std::uint64_t multiplies = 0;  ///< projection multiplies only
};

struct DecodeResult {
  Matrix out;
  MacReport report;  ///< built from the counted work, not the formula
  WeightAccess access;
};

/// Single-token sparse decode: dense gate projection, then only the active
/// columns of W_up and rows of W_down are read.
DecodeResult decode_token(const Matrix& x, const FfnWeights& w, const MocConfig& cfg,
                          std::uint64_t bytes_per_weight = 2);

}  // namespace moc
