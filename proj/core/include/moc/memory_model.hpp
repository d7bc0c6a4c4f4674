#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moc/ffn.hpp"
#include "moc/moc_layer.hpp"

namespace moc {

/// Exact fraction with normalized sign and lowest terms.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string to_string() const;

  friend Rational operator+(Rational a, Rational b);
  friend Rational operator*(Rational a, Rational b);
  friend Rational operator/(Rational a, Rational b);
  friend bool operator==(const Rational&, const Rational&) = default;

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

enum class FfnVariant { Dense, DenseGcp, Moc, MocGcp };

std::string_view to_string(FfnVariant v) noexcept;
FfnVariant parse_variant(std::string_view name);
bool is_moc(FfnVariant v) noexcept;
bool is_gcp(FfnVariant v) noexcept;

/// Dimensions of one transformer layer for activation accounting.
struct LayerShape {
  std::uint64_t b = 1;  ///< batch size
  std::uint64_t s = 1;  ///< sequence length
  std::uint64_t d = 1;  ///< hidden width
  std::uint64_t d_ffn = 1;
  std::uint64_t h = 1;  ///< attention heads, must divide d
  std::uint64_t bytes_per_element = 2;
  /// Width of one stored mask index; 0 means "same as bytes_per_element".
  std::uint64_t bytes_per_index = 0;

  void validate() const;
  std::uint64_t tokens() const noexcept { return b * s; }
  std::uint64_t bsd() const noexcept { return b * s * d; }
  std::uint64_t index_bytes() const noexcept {
    return bytes_per_index == 0 ? bytes_per_element : bytes_per_index;
  }
};

/// FFN activation count split into stored values and stored mask indices.
struct FfnActivationCount {
  std::uint64_t values = 0;
  std::uint64_t indices = 0;
  std::uint64_t total() const noexcept { return values + indices; }
};

/// Stored FFN activations (values, mask indices, and the output D).
///   Dense     4bs*d_ffn + bsd      Dense+GCP 2bs*d_ffn + bsd
///   MoC       5bsK + bsd           MoC+GCP   3bsK + bsd
FfnActivationCount ffn_activation_count(const LayerShape& shape, FfnVariant variant,
                                        std::uint64_t k = 0);
std::uint64_t ffn_activation_elems(const LayerShape& shape, FfnVariant variant,
                                   std::uint64_t k = 0);

/// Elementwise values regenerated in backward: 2bs*d_ffn (Dense+GCP), 2bsK (MoC+GCP), else 0.
std::uint64_t gcp_recompute_elems(const LayerShape& shape, FfnVariant variant,
                                  std::uint64_t k = 0);

/// count / (b*s*d) as an exact fraction.
Rational per_bsd(std::uint64_t count, const LayerShape& shape);

struct ComponentCost {
  std::string component;
  std::uint64_t elements = 0;
  std::uint64_t bytes = 0;
};

struct MemoryReport {
  FfnVariant variant = FfnVariant::Dense;
  std::uint64_t k = 0;
  std::uint64_t n_layers = 1;

  ComponentCost attention{"attention"};
  ComponentCost ffn{"ffn"};
  ComponentCost rmsnorm{"rmsnorm"};
  ComponentCost residual{"residual"};
  ComponentCost per_layer{"per_layer"};
  std::optional<ComponentCost> lm_head;
  ComponentCost total{"total"};

  std::uint64_t gcp_recompute_elems = 0;

  /// Rows in output order: per-layer components, per_layer, lm_head (if any), total.
  std::vector<ComponentCost> components() const;
};

/// One layer: attention 5bsd, rmsnorm 2bsd, residual 2bsd, FFN per variant.
MemoryReport layer_activation_elems(const LayerShape& shape, FfnVariant variant,
                                    std::uint64_t k = 0);

struct ModelSpec {
  std::uint64_t n_layers = 1;
  std::uint64_t vocab = 0;
  /// Logits are costed at this width; defaults to 32-bit.
  std::uint64_t lm_head_bytes_per_element = 4;
};

/// n_layers * per-layer + LM-head logits (b*s*vocab).
MemoryReport model_report(const LayerShape& shape, const ModelSpec& model,
                          FfnVariant variant = FfnVariant::Dense, std::uint64_t k = 0);

std::string report_to_csv(const MemoryReport& report);
std::string report_to_json(const MemoryReport& report, int indent = 2);

struct ArrayCount {
  std::string name;
  std::uint64_t expected = 0;
  std::uint64_t actual = 0;
};

/// Compares what a tape really holds against the analytic model.
struct AuditReport {
  bool ok = false;
  std::uint64_t expected = 0;  ///< analytic count with D swapped for X (both bsd)
  std::uint64_t actual = 0;
  std::vector<ArrayCount> arrays;
  std::string diff;  ///< empty when ok
};

AuditReport audit_tape(const DenseTape& tape, const LayerShape& shape, FfnVariant variant);
AuditReport audit_tape(const MocTape& tape, const LayerShape& shape, FfnVariant variant,
                       std::uint64_t k);

}  // namespace moc
