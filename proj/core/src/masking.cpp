#include "moc/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace moc {

std::string_view to_string(Criterion c) noexcept {
  switch (c) {
    case Criterion::PreSiluValue:
      return "pre_silu";
    case Criterion::PostSiluValue:
      return "post_silu";
    case Criterion::AbsSiluOutput:
      return "abs_silu";
  }
  return "unknown";
}

Criterion parse_criterion(std::string_view name) {
  if (name == "pre_silu" || name == "PreSiluValue") return Criterion::PreSiluValue;
  if (name == "post_silu" || name == "PostSiluValue") return Criterion::PostSiluValue;
  if (name == "abs_silu" || name == "AbsSiluOutput") return Criterion::AbsSiluOutput;
  throw std::invalid_argument("unknown selection criterion '" + std::string(name) + "'");
}

double criterion_score(Criterion c, double g) noexcept {
  switch (c) {
    case Criterion::PreSiluValue:
      return g;
    case Criterion::PostSiluValue:
      return silu(g);
    case Criterion::AbsSiluOutput:
      return std::abs(silu(g));
  }
  return g;
}

ChannelMask::ChannelMask(std::size_t rows, std::size_t total_channels, std::size_t per_row,
                         std::vector<Index> indices, Criterion criterion,
                         std::optional<GroupSpec> group)
    : rows_(rows),
      total_channels_(total_channels),
      per_row_(per_row),
      indices_(std::move(indices)),
      criterion_(criterion),
      group_(group) {
  if (indices_.size() != rows_ * per_row_) {
    throw ShapeError("ChannelMask: expected " + std::to_string(rows_ * per_row_) +
                     " indices, got " + std::to_string(indices_.size()));
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    auto sel = selected(r);
    for (std::size_t t = 0; t < sel.size(); ++t) {
      if (sel[t] >= total_channels_) throw std::out_of_range("ChannelMask: index out of range");
      if (t > 0 && sel[t] <= sel[t - 1]) {
        throw std::invalid_argument("ChannelMask: indices must be strictly increasing");
      }
    }
  }
}

Matrix ChannelMask::to_dense() const {
  Matrix m(rows_, total_channels_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (Index j : selected(r)) m(r, j) = 1.0;
  return m;
}

namespace {

void require_finite(const Matrix& gate, const char* op) {
  if (!gate.all_finite()) throw std::invalid_argument(std::string(op) + ": non-finite gate value");
}

// Appends the indices of the `keep` best-scoring entries of scores[begin, end)
// in increasing index order.
void select_range(std::span<const double> scores, std::size_t begin, std::size_t end,
                  std::size_t keep, std::vector<std::size_t>& scratch,
                  std::vector<ChannelMask::Index>& out) {
  scratch.resize(end - begin);
  std::iota(scratch.begin(), scratch.end(), begin);
  auto better = [&](std::size_t x, std::size_t y) {
    if (scores[x] != scores[y]) return scores[x] > scores[y];
    return x < y;
  };
  std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(keep),
                    scratch.end(), better);
  std::sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(keep));
  for (std::size_t t = 0; t < keep; ++t) out.push_back(static_cast<ChannelMask::Index>(scratch[t]));
}

std::vector<double> row_scores(const Matrix& gate, std::size_t r, Criterion c) {
  auto row = gate.row(r);
  std::vector<double> s(row.size());
  std::transform(row.begin(), row.end(), s.begin(), [c](double g) { return criterion_score(c, g); });
  return s;
}

}  // namespace

ChannelMask topk_mask(const Matrix& gate, std::size_t k, Criterion criterion) {
  if (k < 1 || k > gate.cols()) {
    throw std::invalid_argument("topk_mask: K=" + std::to_string(k) + " outside [1, " +
                                std::to_string(gate.cols()) + "]");
  }
  require_finite(gate, "topk_mask");
  std::vector<ChannelMask::Index> indices;
  indices.reserve(gate.rows() * k);
  std::vector<std::size_t> scratch;
  for (std::size_t r = 0; r < gate.rows(); ++r) {
    const auto scores = row_scores(gate, r, criterion);
    select_range(scores, 0, gate.cols(), k, scratch, indices);
  }
  return ChannelMask(gate.rows(), gate.cols(), k, std::move(indices), criterion);
}

ChannelMask grouped_topk_mask(const Matrix& gate, std::size_t a, std::size_t b,
                              Criterion criterion) {
  if (b == 0 || a > b || gate.cols() % b != 0) {
    throw std::invalid_argument("grouped_topk_mask: need a <= b and b | cols (a=" +
                                std::to_string(a) + ", b=" + std::to_string(b) +
                                ", cols=" + std::to_string(gate.cols()) + ")");
  }
  require_finite(gate, "grouped_topk_mask");
  const std::size_t blocks = gate.cols() / b;
  std::vector<ChannelMask::Index> indices;
  indices.reserve(gate.rows() * blocks * a);
  std::vector<std::size_t> scratch;
  for (std::size_t r = 0; r < gate.rows(); ++r) {
    const auto scores = row_scores(gate, r, criterion);
    for (std::size_t blk = 0; blk < blocks; ++blk)
      select_range(scores, blk * b, (blk + 1) * b, a, scratch, indices);
  }
  return ChannelMask(gate.rows(), gate.cols(), blocks * a, std::move(indices), criterion,
                     GroupSpec{a, b});
}

Matrix mask_gather(const Matrix& x, const ChannelMask& mask) {
  if (x.rows() != mask.rows() || x.cols() != mask.total_channels()) {
    throw ShapeError("mask_gather: matrix " + x.shape_string() + " vs mask " +
                     std::to_string(mask.rows()) + "x" + std::to_string(mask.total_channels()));
  }
  Matrix out(x.rows(), mask.per_row());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto sel = mask.selected(r);
    for (std::size_t t = 0; t < sel.size(); ++t) out(r, t) = x(r, sel[t]);
  }
  return out;
}

Matrix mask_scatter(const Matrix& compact, const ChannelMask& mask) {
  if (compact.rows() != mask.rows() || compact.cols() != mask.per_row()) {
    throw ShapeError("mask_scatter: compact " + compact.shape_string() + " vs mask " +
                     std::to_string(mask.rows()) + "x" + std::to_string(mask.per_row()));
  }
  Matrix out(mask.rows(), mask.total_channels());
  for (std::size_t r = 0; r < compact.rows(); ++r) {
    auto sel = mask.selected(r);
    for (std::size_t t = 0; t < sel.size(); ++t) out(r, sel[t]) = compact(r, t);
  }
  return out;
}

}  // namespace moc
