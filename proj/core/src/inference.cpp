#include "moc/inference.hpp"

#include <stdexcept>
#include <string>

namespace moc {

namespace {

void finish(MacReport& r) {
  r.dense_macs = 3 * r.d * r.d_ffn;
  r.moc_macs = r.gate_macs + r.up_macs + r.down_macs;
  r.ratio = r.dense_macs == 0 ? 0.0
                              : static_cast<double>(r.moc_macs) / static_cast<double>(r.dense_macs);
  r.dense_weight_bytes = r.dense_macs * r.bytes_per_weight;
  r.moc_weight_bytes = r.moc_macs * r.bytes_per_weight;
}

}  // namespace

MacReport mac_count(std::uint64_t d, std::uint64_t d_ffn, std::uint64_t k,
                    std::uint64_t bytes_per_weight) {
  if (k > d_ffn) {
    throw std::invalid_argument("mac_count: K=" + std::to_string(k) + " exceeds d_ffn=" +
                                std::to_string(d_ffn));
  }
  MacReport r;
  r.d = d;
  r.d_ffn = d_ffn;
  r.k = k;
  r.bytes_per_weight = bytes_per_weight;
  r.gate_macs = d * d_ffn;
  r.up_macs = k * d;
  r.down_macs = k * d;
  finish(r);
  return r;
}

DecodeResult decode_token(const Matrix& x, const FfnWeights& w, const MocConfig& cfg,
                          std::uint64_t bytes_per_weight) {
  w.validate();
  if (x.rows() != 1 || x.cols() != w.d()) {
    throw ShapeError("decode_token: expected a 1x" + std::to_string(w.d()) + " input, got " +
                     x.shape_string());
  }
  if (cfg.gcp) throw std::invalid_argument("decode_token: checkpointing has no meaning at decode");
  cfg.validate(w.d_ffn());

  const std::size_t d = w.d();
  const std::size_t d_ffn = w.d_ffn();
  DecodeResult res;
  WeightAccess& acc = res.access;
  auto xr = x.row(0);

  // g = x W_gate over every column; the ranking needs all of them.
  Matrix g(1, d_ffn);
  auto gr = g.row(0);
  for (std::size_t k = 0; k < d; ++k) {
    auto wrow = w.gate.row(k);
    for (std::size_t j = 0; j < d_ffn; ++j) gr[j] += xr[k] * wrow[j];
    acc.multiplies += d_ffn;
  }
  acc.gate_columns = d_ffn;
  const std::uint64_t gate_macs = acc.multiplies;

  const ChannelMask mask = cfg.make_mask(g);
  const auto active = mask.selected(0);

  res.out = Matrix(1, d);
  auto out = res.out.row(0);
  std::uint64_t up_macs = 0;
  std::uint64_t down_macs = 0;
  for (const auto j : active) {
    double u = 0.0;
    for (std::size_t k = 0; k < d; ++k) u += xr[k] * w.up(k, j);
    up_macs += d;
    acc.up_columns.push_back(j);

    const double z = silu(gr[j]) * u;
    auto wrow = w.down.row(j);
    for (std::size_t c = 0; c < d; ++c) out[c] += z * wrow[c];
    down_macs += d;
    acc.down_rows.push_back(j);
  }
  acc.multiplies += up_macs + down_macs;

  MacReport& r = res.report;
  r.d = d;
  r.d_ffn = d_ffn;
  r.k = active.size();
  r.bytes_per_weight = bytes_per_weight;
  r.gate_macs = gate_macs;
  r.up_macs = up_macs;
  r.down_macs = down_macs;
  finish(r);
  return res;
}

}  // namespace moc
