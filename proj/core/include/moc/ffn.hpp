#pragma once

#include <cstddef>
#include <optional>

#include "moc/matrix.hpp"
#include "moc/random.hpp"

namespace moc {

/// Weights of one SwiGLU feed-forward layer:
///   gate, up: d x d_ffn    down: d_ffn x d
struct FfnWeights {
  Matrix gate;
  Matrix up;
  Matrix down;

  std::size_t d() const noexcept { return gate.rows(); }
  std::size_t d_ffn() const noexcept { return gate.cols(); }

  /// Throws ShapeError unless the three matrices agree on d and d_ffn.
  void validate() const;

  /// Gate/up entries ~ N(0, 1/d), down entries ~ N(0, 1/d_ffn).
  static FfnWeights random(std::size_t d, std::size_t d_ffn, Rng& rng);
  static FfnWeights zeros(std::size_t d, std::size_t d_ffn);

  friend bool operator==(const FfnWeights&, const FfnWeights&) = default;
};

/// Gradients of a scalar loss with respect to the weights and the layer input.
struct FfnGradients {
  Matrix gate;
  Matrix up;
  Matrix down;
  Matrix input;
  /// Elementwise values regenerated during backward (checkpointed variants only).
  std::size_t recomputed_elements = 0;
};

enum class TapeVariant { Full, Gcp };

/// Activations a dense forward retains for backward.
///   Full: X, G, U, S, Z      Gcp: X, G, U
/// The output D is returned to the caller, not stored here.
struct DenseTape {
  TapeVariant variant = TapeVariant::Full;
  Matrix x;
  Matrix g;
  Matrix u;
  std::optional<Matrix> s;
  std::optional<Matrix> z;

  /// Values actually held, including X.
  std::size_t stored_elements() const noexcept;
};

struct DenseForward {
  Matrix out;
  DenseTape tape;
};

/// D = (SiLU(X W_gate) ⊙ (X W_up)) W_down
DenseForward ffn_forward(const Matrix& x, const FfnWeights& w, bool gcp = false);

/// Backward for the loss whose gradient with respect to D is `grad_out`.
/// The checkpointed tape recomputes S and Z from G and U first.
FfnGradients ffn_backward(const DenseTape& tape, const Matrix& grad_out, const FfnWeights& w);

}  // namespace moc
