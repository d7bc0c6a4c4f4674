#include "moc/expressivity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "moc/moc_layer.hpp"
#include "moc/random.hpp"

namespace moc {

EmbeddingResult embed_ffn_as_moc(const FfnWeights& w, std::size_t a, std::size_t b) {
  w.validate();
  if (a == 0 || a > b) {
    throw std::invalid_argument("embed_ffn_as_moc: need 1 <= a <= b (a=" + std::to_string(a) +
                                ", b=" + std::to_string(b) + ")");
  }
  const std::size_t d = w.d();
  const std::size_t d_ffn = w.d_ffn();
  const std::size_t groups = (d_ffn + a - 1) / a;

  EmbeddingResult e;
  e.a = a;
  e.b = b;
  e.d_moc = b * groups;
  e.weights = FfnWeights::zeros(d, e.d_moc);
  e.placement.resize(d_ffn);
  for (std::size_t c = 0; c < d_ffn; ++c) {
    const std::size_t col = (c / a) * b + c % a;
    e.placement[c] = col;
    for (std::size_t i = 0; i < d; ++i) {
      e.weights.gate(i, col) = w.gate(i, c);
      e.weights.up(i, col) = w.up(i, c);
    }
    for (std::size_t j = 0; j < d; ++j) e.weights.down(col, j) = w.down(c, j);
  }
  return e;
}

EmbeddingCheck verify_embedding(const FfnWeights& w, const EmbeddingResult& e,
                                std::size_t n_samples, std::uint64_t seed, Criterion criterion) {
  w.validate();
  e.weights.validate();
  if (e.weights.d() != w.d() || e.placement.size() != w.d_ffn()) {
    throw ShapeError("verify_embedding: embedding was not built from these weights");
  }
  const MocConfig cfg = MocConfig::grouped(e.a, e.b, criterion);
  Rng rng(seed);

  EmbeddingCheck check;
  check.criterion = criterion;
  check.exact_guarantee = criterion == Criterion::AbsSiluOutput;
  check.samples = n_samples;
  for (std::size_t n = 0; n < n_samples; ++n) {
    const Matrix x = random_normal(1, w.d(), rng);
    const Matrix reference = ffn_forward(x, w).out;
    const Matrix embedded = moc_forward(x, e.weights, cfg).out;
    check.max_abs_deviation = std::max(check.max_abs_deviation, max_abs_diff(embedded, reference));
  }
  return check;
}

std::size_t count_nonzero(const FfnWeights& w) noexcept {
  std::size_t n = 0;
  for (const Matrix* m : {&w.gate, &w.up, &w.down})
    n += static_cast<std::size_t>(
        std::count_if(m->data().begin(), m->data().end(), [](double v) { return v != 0.0; }));
  return n;
}

}  // namespace moc
