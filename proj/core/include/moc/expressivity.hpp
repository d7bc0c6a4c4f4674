#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "moc/ffn.hpp"
#include "moc/masking.hpp"

namespace moc {

/// A dense FFN re-laid-out as an a:b grouped MoC layer of width
/// d_moc = b * ceil(d_ffn / a). Original channel c = k*a + r (r < a) lands in
/// embedded column k*b + r; every other column is zero.
struct EmbeddingResult {
  FfnWeights weights;
  std::size_t d_moc = 0;
  std::size_t a = 0;
  std::size_t b = 0;
  /// placement[c] = embedded column of original channel c (both 0-based).
  std::vector<std::size_t> placement;
};

EmbeddingResult embed_ffn_as_moc(const FfnWeights& w, std::size_t a, std::size_t b);

struct EmbeddingCheck {
  double max_abs_deviation = 0.0;
  Criterion criterion = Criterion::AbsSiluOutput;
  /// True only for the |SiLU| criterion, where equality is guaranteed.
  bool exact_guarantee = true;
  std::size_t samples = 0;
};

/// Runs n_samples standard-normal inputs through the dense layer and through the
/// embedded layer with a:b grouped masking, returning the worst entrywise gap.
EmbeddingCheck verify_embedding(const FfnWeights& w, const EmbeddingResult& e,
                                std::size_t n_samples, std::uint64_t seed,
                                Criterion criterion = Criterion::AbsSiluOutput);

/// Nonzero entries across the three weight matrices.
std::size_t count_nonzero(const FfnWeights& w) noexcept;

}  // namespace moc
