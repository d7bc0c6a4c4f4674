#include "moc/ffn.hpp"

#include <cmath>
#include <string>

namespace moc {

void FfnWeights::validate() const {
  if (up.rows() != gate.rows() || up.cols() != gate.cols()) {
    throw ShapeError("FfnWeights: up " + up.shape_string() + " must match gate " +
                     gate.shape_string());
  }
  if (down.rows() != gate.cols() || down.cols() != gate.rows()) {
    throw ShapeError("FfnWeights: down " + down.shape_string() + " must be the transpose shape of gate " +
                     gate.shape_string());
  }
}

FfnWeights FfnWeights::random(std::size_t d, std::size_t d_ffn, Rng& rng) {
  FfnWeights w;
  w.gate = random_normal(d, d_ffn, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  w.up = random_normal(d, d_ffn, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  w.down = random_normal(d_ffn, d, rng, 1.0 / std::sqrt(static_cast<double>(d_ffn)));
  return w;
}

FfnWeights FfnWeights::zeros(std::size_t d, std::size_t d_ffn) {
  return {Matrix(d, d_ffn), Matrix(d, d_ffn), Matrix(d_ffn, d)};
}

std::size_t DenseTape::stored_elements() const noexcept {
  std::size_t n = x.size() + g.size() + u.size();
  if (s) n += s->size();
  if (z) n += z->size();
  return n;
}

DenseForward ffn_forward(const Matrix& x, const FfnWeights& w, bool gcp) {
  w.validate();
  if (x.cols() != w.d()) {
    throw ShapeError("ffn_forward: input " + x.shape_string() + " does not match d=" +
                     std::to_string(w.d()));
  }
  Matrix g = matmul(x, w.gate);
  Matrix u = matmul(x, w.up);
  Matrix s = silu(g);
  Matrix z = hadamard(s, u);
  Matrix out = matmul(z, w.down);

  DenseTape tape;
  tape.variant = gcp ? TapeVariant::Gcp : TapeVariant::Full;
  tape.x = x;
  tape.g = std::move(g);
  tape.u = std::move(u);
  if (!gcp) {
    tape.s = std::move(s);
    tape.z = std::move(z);
  }
  return {std::move(out), std::move(tape)};
}

FfnGradients ffn_backward(const DenseTape& tape, const Matrix& grad_out, const FfnWeights& w) {
  w.validate();
  const std::size_t rows = tape.x.rows();
  if (tape.x.cols() != w.d() || tape.g.rows() != rows || tape.g.cols() != w.d_ffn() ||
      tape.u.rows() != rows || tape.u.cols() != w.d_ffn()) {
    throw ShapeError("ffn_backward: tape shapes do not match weights (d=" + std::to_string(w.d()) +
                     ", d_ffn=" + std::to_string(w.d_ffn()) + ")");
  }
  if (grad_out.rows() != rows || grad_out.cols() != w.d()) {
    throw ShapeError("ffn_backward: output gradient " + grad_out.shape_string() +
                     " does not match " + std::to_string(rows) + "x" + std::to_string(w.d()));
  }

  FfnGradients grads;
  Matrix s_recomputed;
  Matrix z_recomputed;
  const Matrix* s = nullptr;
  const Matrix* z = nullptr;
  if (tape.variant == TapeVariant::Gcp) {
    s_recomputed = silu(tape.g);
    z_recomputed = hadamard(s_recomputed, tape.u);
    grads.recomputed_elements = s_recomputed.size() + z_recomputed.size();
    s = &s_recomputed;
    z = &z_recomputed;
  } else {
    if (!tape.s || !tape.z) throw std::invalid_argument("ffn_backward: full tape is missing S or Z");
    s = &*tape.s;
    z = &*tape.z;
  }

  grads.down = matmul(transpose(*z), grad_out);
  const Matrix grad_z = matmul(grad_out, transpose(w.down));
  const Matrix grad_s = hadamard(tape.u, grad_z);
  const Matrix grad_u = hadamard(*s, grad_z);
  const Matrix grad_g = hadamard(grad_s, silu_grad(tape.g));

  const Matrix xt = transpose(tape.x);
  grads.gate = matmul(xt, grad_g);
  grads.input = add(matmul(grad_g, transpose(w.gate)), matmul(grad_u, transpose(w.up)));
  grads.up = matmul(xt, grad_u);
  return grads;
}

}  // namespace moc
