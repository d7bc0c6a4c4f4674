#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "moc/matrix.hpp"

namespace moc {

/// What a channel is ranked by when building a mask.
enum class Criterion {
  PreSiluValue,   ///< the gate value G[i][j] itself (default)
  PostSiluValue,  ///< SiLU(G[i][j])
  AbsSiluOutput,  ///< |SiLU(G[i][j])|, the ranking used by the embedding construction
};

std::string_view to_string(Criterion c) noexcept;
/// Accepts "pre_silu", "post_silu", "abs_silu" (and the enum spellings).
Criterion parse_criterion(std::string_view name);

double criterion_score(Criterion c, double gate_value) noexcept;

/// Keep `a` channels out of every contiguous block of `b`.
struct GroupSpec {
  std::size_t a = 0;
  std::size_t b = 0;
  friend bool operator==(const GroupSpec&, const GroupSpec&) = default;
};

/// Per-row selected channel indices. Every row holds the same number of
/// indices, stored strictly increasing.
class ChannelMask {
 public:
  using Index = std::uint32_t;

  ChannelMask() = default;
  ChannelMask(std::size_t rows, std::size_t total_channels, std::size_t per_row,
              std::vector<Index> indices, Criterion criterion,
              std::optional<GroupSpec> group = std::nullopt);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t total_channels() const noexcept { return total_channels_; }
  std::size_t per_row() const noexcept { return per_row_; }
  Criterion criterion() const noexcept { return criterion_; }
  const std::optional<GroupSpec>& group() const noexcept { return group_; }

  std::span<const Index> selected(std::size_t row) const noexcept {
    return {indices_.data() + row * per_row_, per_row_};
  }
  std::span<const Index> indices() const noexcept { return indices_; }

  /// Number of stored index slots (rows * per_row).
  std::size_t index_count() const noexcept { return indices_.size(); }

  /// Dense 0/1 matrix of shape rows x total_channels.
  Matrix to_dense() const;

  friend bool operator==(const ChannelMask&, const ChannelMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t total_channels_ = 0;
  std::size_t per_row_ = 0;
  std::vector<Index> indices_;
  Criterion criterion_ = Criterion::PreSiluValue;
  std::optional<GroupSpec> group_;
};

/// Row-wise top-K by `criterion`; ties go to the lower column index.
ChannelMask topk_mask(const Matrix& gate, std::size_t k,
                      Criterion criterion = Criterion::PreSiluValue);

/// Top-a within each contiguous block of b columns; ties go to the lower index.
ChannelMask grouped_topk_mask(const Matrix& gate, std::size_t a, std::size_t b,
                              Criterion criterion = Criterion::PreSiluValue);

/// Compact rows x per_row matrix of the selected entries of x.
Matrix mask_gather(const Matrix& x, const ChannelMask& mask);

/// Inverse of mask_gather: zeros except at selected positions.
Matrix mask_scatter(const Matrix& compact, const ChannelMask& mask);

}  // namespace moc
