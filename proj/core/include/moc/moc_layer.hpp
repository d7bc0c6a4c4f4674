#pragma once

#include <cstddef>
#include <optional>
#include <variant>

#include "moc/ffn.hpp"
#include "moc/masking.hpp"
#include "moc/matrix.hpp"

namespace moc {

struct TopKSelection {
  std::size_t k = 0;
  friend bool operator==(const TopKSelection&, const TopKSelection&) = default;
};

struct GroupedSelection {
  std::size_t a = 0;
  std::size_t b = 0;
  friend bool operator==(const GroupedSelection&, const GroupedSelection&) = default;
};

/// How a Mixture-of-Channels layer picks its active channels.
struct MocConfig {
  std::variant<TopKSelection, GroupedSelection> selection = TopKSelection{1};
  Criterion criterion = Criterion::PreSiluValue;
  bool gcp = false;

  static MocConfig top_k(std::size_t k, Criterion c = Criterion::PreSiluValue, bool gcp = false) {
    return {TopKSelection{k}, c, gcp};
  }
  static MocConfig grouped(std::size_t a, std::size_t b, Criterion c = Criterion::PreSiluValue,
                           bool gcp = false) {
    return {GroupedSelection{a, b}, c, gcp};
  }

  bool is_grouped() const noexcept { return std::holds_alternative<GroupedSelection>(selection); }

  /// Throws std::invalid_argument if the selection does not fit d_ffn.
  void validate(std::size_t d_ffn) const;

  /// Active channels per row: K, or a * d_ffn / b when grouped.
  std::size_t per_row(std::size_t d_ffn) const;

  ChannelMask make_mask(const Matrix& gate) const;

  friend bool operator==(const MocConfig&, const MocConfig&) = default;
};

/// What a MoC forward retains for backward. Compact arrays are rows x per_row
/// and hold the masked-in entries of G, U, S' and Z' in mask order.
///   non-checkpointed: X, mask, G', U', S', Z'
///   checkpointed:     X, mask, G', U'
struct MocTape {
  Matrix x;
  ChannelMask mask;
  Matrix g;
  Matrix u;
  std::optional<Matrix> s;
  std::optional<Matrix> z;

  bool checkpointed() const noexcept { return !s.has_value(); }
  std::size_t stored_values() const noexcept;
  std::size_t stored_indices() const noexcept { return mask.index_count(); }
  /// Values plus index slots, including X.
  std::size_t stored_elements() const noexcept { return stored_values() + stored_indices(); }
};

struct MocForward {
  Matrix out;
  MocTape tape;
};

/// G = X W_gate, M = TopK(G), D = ((SiLU(G) ⊙ M) ⊙ (X W_up)) W_down.
/// Only the selected columns of W_up and rows of W_down are read.
MocForward moc_forward(const Matrix& x, const FfnWeights& w, const MocConfig& cfg);

/// Same computation with a caller-supplied mask (used for frozen-mask studies).
MocForward moc_forward_with_mask(const Matrix& x, const FfnWeights& w, const ChannelMask& mask,
                                 bool gcp);

/// Exact backward treating the mask as a constant. Works on the compact arrays
/// only; the dense gradient of S is never formed.
FfnGradients moc_backward(const MocTape& tape, const Matrix& grad_out, const FfnWeights& w,
                          const MocConfig& cfg);

/// Smallest gap, over rows (and blocks when grouped), between the weakest
/// selected score and the strongest unselected score. Positive means the mask
/// does not change under gate perturbations smaller than half the value.
/// Returns +infinity when nothing is left unselected.
double moc_mask_margin(const Matrix& gate, const MocConfig& cfg);

}  // namespace moc
