#include "moc/moc_layer.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace moc {

void MocConfig::validate(std::size_t d_ffn) const {
  if (const auto* topk = std::get_if<TopKSelection>(&selection)) {
    if (topk->k < 1 || topk->k > d_ffn) {
      throw std::invalid_argument("MocConfig: K=" + std::to_string(topk->k) + " outside [1, " +
                                  std::to_string(d_ffn) + "]");
    }
    return;
  }
  const auto& g = std::get<GroupedSelection>(selection);
  if (g.b == 0 || g.a > g.b || d_ffn % g.b != 0) {
    throw std::invalid_argument("MocConfig: grouped a:b = " + std::to_string(g.a) + ":" +
                                std::to_string(g.b) + " requires a <= b and b | d_ffn=" +
                                std::to_string(d_ffn));
  }
}

std::size_t MocConfig::per_row(std::size_t d_ffn) const {
  validate(d_ffn);
  if (const auto* topk = std::get_if<TopKSelection>(&selection)) return topk->k;
  const auto& g = std::get<GroupedSelection>(selection);
  return g.a * (d_ffn / g.b);
}

ChannelMask MocConfig::make_mask(const Matrix& gate) const {
  validate(gate.cols());
  if (const auto* topk = std::get_if<TopKSelection>(&selection)) {
    return topk_mask(gate, topk->k, criterion);
  }
  const auto& g = std::get<GroupedSelection>(selection);
  return grouped_topk_mask(gate, g.a, g.b, criterion);
}

std::size_t MocTape::stored_values() const noexcept {
  std::size_t n = x.size() + g.size() + u.size();
  if (s) n += s->size();
  if (z) n += z->size();
  return n;
}

namespace {

void check_input(const Matrix& x, const FfnWeights& w, const char* op) {
  w.validate();
  if (x.cols() != w.d()) {
    throw ShapeError(std::string(op) + ": input " + x.shape_string() + " does not match d=" +
                     std::to_string(w.d()));
  }
}

// compact(i, t) = sum_k x(i, k) * w(k, sel_i[t])
Matrix gathered_projection(const Matrix& x, const Matrix& w, const ChannelMask& mask) {
  Matrix out(x.rows(), mask.per_row());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto sel = mask.selected(i);
    for (std::size_t t = 0; t < sel.size(); ++t) {
      double acc = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) acc += x(i, k) * w(k, sel[t]);
      out(i, t) = acc;
    }
  }
  return out;
}

// out(i, c) = sum_t z(i, t) * down(sel_i[t], c)
Matrix gathered_down(const Matrix& z, const Matrix& down, const ChannelMask& mask) {
  Matrix out(z.rows(), down.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto o = out.row(i);
    auto sel = mask.selected(i);
    for (std::size_t t = 0; t < sel.size(); ++t) {
      const double zt = z(i, t);
      auto wrow = down.row(sel[t]);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += zt * wrow[c];
    }
  }
  return out;
}

MocForward forward_from_gate(const Matrix& x, const Matrix& gate, const FfnWeights& w,
                             ChannelMask mask, bool gcp) {
  Matrix g = mask_gather(gate, mask);
  Matrix u = gathered_projection(x, w.up, mask);
  Matrix s = silu(g);
  Matrix z = hadamard(s, u);
  Matrix out = gathered_down(z, w.down, mask);

  MocTape tape;
  tape.x = x;
  tape.mask = std::move(mask);
  tape.g = std::move(g);
  tape.u = std::move(u);
  if (!gcp) {
    tape.s = std::move(s);
    tape.z = std::move(z);
  }
  return {std::move(out), std::move(tape)};
}

}  // namespace

MocForward moc_forward(const Matrix& x, const FfnWeights& w, const MocConfig& cfg) {
  check_input(x, w, "moc_forward");
  cfg.validate(w.d_ffn());
  Matrix gate = matmul(x, w.gate);
  ChannelMask mask = cfg.make_mask(gate);
  return forward_from_gate(x, gate, w, std::move(mask), cfg.gcp);
}

MocForward moc_forward_with_mask(const Matrix& x, const FfnWeights& w, const ChannelMask& mask,
                                 bool gcp) {
  check_input(x, w, "moc_forward_with_mask");
  if (mask.rows() != x.rows() || mask.total_channels() != w.d_ffn()) {
    throw ShapeError("moc_forward_with_mask: mask does not match input/weights");
  }
  Matrix gate = matmul(x, w.gate);
  return forward_from_gate(x, gate, w, mask, gcp);
}

FfnGradients moc_backward(const MocTape& tape, const Matrix& grad_out, const FfnWeights& w,
                          const MocConfig& cfg) {
  w.validate();
  const std::size_t rows = tape.x.rows();
  const std::size_t kept = tape.mask.per_row();
  if (tape.x.cols() != w.d() || tape.mask.rows() != rows ||
      tape.mask.total_channels() != w.d_ffn()) {
    throw ShapeError("moc_backward: tape does not match weights (d=" + std::to_string(w.d()) +
                     ", d_ffn=" + std::to_string(w.d_ffn()) + ")");
  }
  if (cfg.per_row(w.d_ffn()) != kept || cfg.criterion != tape.mask.criterion() ||
      cfg.gcp != tape.checkpointed()) {
    throw std::invalid_argument("moc_backward: tape was not produced under this MocConfig");
  }
  if (tape.g.rows() != rows || tape.g.cols() != kept || tape.u.rows() != rows ||
      tape.u.cols() != kept) {
    throw ShapeError("moc_backward: compact arrays do not match mask cardinality");
  }
  if (grad_out.rows() != rows || grad_out.cols() != w.d()) {
    throw ShapeError("moc_backward: output gradient " + grad_out.shape_string() +
                     " does not match " + std::to_string(rows) + "x" + std::to_string(w.d()));
  }

  FfnGradients grads;
  Matrix s_recomputed;
  Matrix z_recomputed;
  const Matrix* s = nullptr;
  const Matrix* z = nullptr;
  if (tape.checkpointed()) {
    // SiLU(0) = 0, so recomputing on the compact G' reproduces S ⊙ M exactly.
    s_recomputed = silu(tape.g);
    z_recomputed = hadamard(s_recomputed, tape.u);
    grads.recomputed_elements = s_recomputed.size() + z_recomputed.size();
    s = &s_recomputed;
    z = &z_recomputed;
  } else {
    if (!tape.z) throw std::invalid_argument("moc_backward: tape holds S' but not Z'");
    s = &*tape.s;
    z = &*tape.z;
  }

  const std::size_t d = w.d();
  grads.down = Matrix(w.d_ffn(), d);
  grads.gate = Matrix(d, w.d_ffn());
  grads.up = Matrix(d, w.d_ffn());
  grads.input = Matrix(rows, d);

  // grad wrt Z' on kept channels: dZ'(i, t) = sum_c dD(i, c) * W_down(sel[t], c)
  Matrix grad_z(rows, kept);
  for (std::size_t i = 0; i < rows; ++i) {
    auto sel = tape.mask.selected(i);
    auto dd = grad_out.row(i);
    for (std::size_t t = 0; t < kept; ++t) {
      auto wrow = w.down.row(sel[t]);
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += dd[c] * wrow[c];
      grad_z(i, t) = acc;
    }
  }

  // dW_down = Z'^T dD, touching only rows that some token selected.
  for (std::size_t i = 0; i < rows; ++i) {
    auto sel = tape.mask.selected(i);
    auto dd = grad_out.row(i);
    for (std::size_t t = 0; t < kept; ++t) {
      const double zt = (*z)(i, t);
      auto out = grads.down.row(sel[t]);
      for (std::size_t c = 0; c < d; ++c) out[c] += zt * dd[c];
    }
  }

  // dS' = (U ⊙ M) ⊙ dZ',  dU = S' ⊙ dZ',  dG = dS' ⊙ SiLU'(G) on kept entries.
  const Matrix grad_s = hadamard(tape.u, grad_z);
  const Matrix grad_u = hadamard(*s, grad_z);
  const Matrix grad_g = hadamard(grad_s, silu_grad(tape.g));

  // dW_gate = X^T dG, dW_up = X^T dU, scattered into the kept columns.
  for (std::size_t i = 0; i < rows; ++i) {
    auto sel = tape.mask.selected(i);
    auto xi = tape.x.row(i);
    for (std::size_t t = 0; t < kept; ++t) {
      const double gg = grad_g(i, t);
      const double gu = grad_u(i, t);
      const std::size_t j = sel[t];
      for (std::size_t k = 0; k < d; ++k) {
        grads.gate(k, j) += xi[k] * gg;
        grads.up(k, j) += xi[k] * gu;
      }
    }
  }

  // dX = dG W_gate^T + dU W_up^T
  for (std::size_t i = 0; i < rows; ++i) {
    auto sel = tape.mask.selected(i);
    for (std::size_t k = 0; k < d; ++k) {
      double via_gate = 0.0;
      double via_up = 0.0;
      for (std::size_t t = 0; t < kept; ++t) {
        via_gate += grad_g(i, t) * w.gate(k, sel[t]);
        via_up += grad_u(i, t) * w.up(k, sel[t]);
      }
      grads.input(i, k) = via_gate + via_up;
    }
  }
  return grads;
}

double moc_mask_margin(const Matrix& gate, const MocConfig& cfg) {
  const ChannelMask mask = cfg.make_mask(gate);
  const std::size_t block = cfg.is_grouped() ? std::get<GroupedSelection>(cfg.selection).b
                                             : gate.cols();
  double margin = std::numeric_limits<double>::infinity();
  std::vector<bool> chosen(gate.cols());
  for (std::size_t i = 0; i < gate.rows(); ++i) {
    std::fill(chosen.begin(), chosen.end(), false);
    for (auto j : mask.selected(i)) chosen[j] = true;
    for (std::size_t start = 0; start < gate.cols(); start += block) {
      double weakest_in = std::numeric_limits<double>::infinity();
      double strongest_out = -std::numeric_limits<double>::infinity();
      for (std::size_t j = start; j < start + block; ++j) {
        const double score = criterion_score(cfg.criterion, gate(i, j));
        if (chosen[j]) {
          weakest_in = std::min(weakest_in, score);
        } else {
          strongest_out = std::max(strongest_out, score);
        }
      }
      if (weakest_in == std::numeric_limits<double>::infinity() ||
          strongest_out == -std::numeric_limits<double>::infinity()) {
        continue;
      }
      margin = std::min(margin, weakest_in - strongest_out);
    }
  }
  return margin;
}

}  // namespace moc
