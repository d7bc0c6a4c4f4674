#include "moc/memory_model.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace moc {

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw std::domain_error("Rational: zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = g == 0 ? 0 : num / g;
  den_ = g == 0 ? 1 : den / g;
}

std::string Rational::to_string() const {
  return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
}

Rational operator+(Rational a, Rational b) {
  return Rational(a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_);
}

Rational operator*(Rational a, Rational b) { return Rational(a.num_ * b.num_, a.den_ * b.den_); }

Rational operator/(Rational a, Rational b) { return Rational(a.num_ * b.den_, a.den_ * b.num_); }

std::string_view to_string(FfnVariant v) noexcept {
  switch (v) {
    case FfnVariant::Dense:
      return "dense";
    case FfnVariant::DenseGcp:
      return "dense_gcp";
    case FfnVariant::Moc:
      return "moc";
    case FfnVariant::MocGcp:
      return "moc_gcp";
  }
  return "unknown";
}

FfnVariant parse_variant(std::string_view name) {
  for (auto v : {FfnVariant::Dense, FfnVariant::DenseGcp, FfnVariant::Moc, FfnVariant::MocGcp})
    if (name == to_string(v)) return v;
  throw std::invalid_argument("unknown FFN variant '" + std::string(name) + "'");
}

bool is_moc(FfnVariant v) noexcept { return v == FfnVariant::Moc || v == FfnVariant::MocGcp; }
bool is_gcp(FfnVariant v) noexcept { return v == FfnVariant::DenseGcp || v == FfnVariant::MocGcp; }

void LayerShape::validate() const {
  if (b == 0 || s == 0 || d == 0 || d_ffn == 0 || h == 0 || bytes_per_element == 0) {
    throw std::invalid_argument("LayerShape: all dimensions must be positive");
  }
  if (d % h != 0) {
    throw std::invalid_argument("LayerShape: h=" + std::to_string(h) + " does not divide d=" +
                                std::to_string(d));
  }
}

namespace {

void check_k(const LayerShape& shape, FfnVariant variant, std::uint64_t k) {
  if (is_moc(variant) && k > shape.d_ffn) {
    throw std::invalid_argument("K=" + std::to_string(k) + " exceeds d_ffn=" +
                                std::to_string(shape.d_ffn));
  }
}

ComponentCost cost(std::string name, std::uint64_t elements, std::uint64_t bytes_per) {
  return {std::move(name), elements, elements * bytes_per};
}

}  // namespace

FfnActivationCount ffn_activation_count(const LayerShape& shape, FfnVariant variant,
                                        std::uint64_t k) {
  shape.validate();
  check_k(shape, variant, k);
  const std::uint64_t tokens = shape.tokens();
  const std::uint64_t out = shape.bsd();
  switch (variant) {
    case FfnVariant::Dense:  // G, U, S, Z, D
      return {4 * tokens * shape.d_ffn + out, 0};
    case FfnVariant::DenseGcp:  // G, U, D
      return {2 * tokens * shape.d_ffn + out, 0};
    case FfnVariant::Moc:  // G⊙M, U⊙M, S⊙M, Z⊙M, M, D
      return {4 * tokens * k + out, tokens * k};
    case FfnVariant::MocGcp:  // G⊙M, U⊙M, M, D
      return {2 * tokens * k + out, tokens * k};
  }
  return {};
}

std::uint64_t ffn_activation_elems(const LayerShape& shape, FfnVariant variant, std::uint64_t k) {
  return ffn_activation_count(shape, variant, k).total();
}

std::uint64_t gcp_recompute_elems(const LayerShape& shape, FfnVariant variant, std::uint64_t k) {
  shape.validate();
  check_k(shape, variant, k);
  switch (variant) {
    case FfnVariant::DenseGcp:
      return 2 * shape.tokens() * shape.d_ffn;
    case FfnVariant::MocGcp:
      return 2 * shape.tokens() * k;
    default:
      return 0;
  }
}

Rational per_bsd(std::uint64_t count, const LayerShape& shape) {
  return Rational(static_cast<std::int64_t>(count), static_cast<std::int64_t>(shape.bsd()));
}

std::vector<ComponentCost> MemoryReport::components() const {
  std::vector<ComponentCost> rows{attention, ffn, rmsnorm, residual, per_layer};
  if (lm_head) rows.push_back(*lm_head);
  rows.push_back(total);
  return rows;
}

MemoryReport layer_activation_elems(const LayerShape& shape, FfnVariant variant, std::uint64_t k) {
  shape.validate();
  const std::uint64_t bpe = shape.bytes_per_element;
  const FfnActivationCount f = ffn_activation_count(shape, variant, k);

  MemoryReport r;
  r.variant = variant;
  r.k = is_moc(variant) ? k : 0;
  r.attention = cost("attention", 5 * shape.bsd(), bpe);  // Q, K, V, A, O
  r.ffn = {"ffn", f.total(), f.values * bpe + f.indices * shape.index_bytes()};
  r.rmsnorm = cost("rmsnorm", 2 * shape.bsd(), bpe);
  r.residual = cost("residual", 2 * shape.bsd(), bpe);
  r.per_layer = {"per_layer",
                 r.attention.elements + r.ffn.elements + r.rmsnorm.elements + r.residual.elements,
                 r.attention.bytes + r.ffn.bytes + r.rmsnorm.bytes + r.residual.bytes};
  r.total = {"total", r.per_layer.elements, r.per_layer.bytes};
  r.gcp_recompute_elems = gcp_recompute_elems(shape, variant, k);
  return r;
}

MemoryReport model_report(const LayerShape& shape, const ModelSpec& model, FfnVariant variant,
                          std::uint64_t k) {
  if (model.n_layers == 0) throw std::invalid_argument("model_report: n_layers must be positive");
  MemoryReport r = layer_activation_elems(shape, variant, k);
  r.n_layers = model.n_layers;
  r.total = {"total", r.per_layer.elements * model.n_layers, r.per_layer.bytes * model.n_layers};
  r.gcp_recompute_elems *= model.n_layers;
  if (model.vocab > 0) {
    r.lm_head = cost("lm_head", shape.tokens() * model.vocab, model.lm_head_bytes_per_element);
    r.total.elements += r.lm_head->elements;
    r.total.bytes += r.lm_head->bytes;
  }
  return r;
}

std::string report_to_csv(const MemoryReport& report) {
  std::ostringstream out;
  out << "component,elements,bytes\n";
  for (const auto& c : report.components())
    out << c.component << ',' << c.elements << ',' << c.bytes << '\n';
  return out.str();
}

std::string report_to_json(const MemoryReport& report, int indent) {
  nlohmann::ordered_json j;
  j["variant"] = to_string(report.variant);
  j["k"] = report.k;
  j["n_layers"] = report.n_layers;
  auto& comps = j["components"] = nlohmann::ordered_json::array();
  for (const auto& c : report.components())
    comps.push_back({{"component", c.component}, {"elements", c.elements}, {"bytes", c.bytes}});
  j["gcp_recompute_elems"] = report.gcp_recompute_elems;
  return j.dump(indent);
}

namespace {

AuditReport finish_audit(std::vector<ArrayCount> arrays, std::uint64_t expected_total) {
  AuditReport a;
  a.arrays = std::move(arrays);
  a.expected = expected_total;
  std::uint64_t expected_sum = 0;
  std::ostringstream diff;
  for (const auto& arr : a.arrays) {
    a.actual += arr.actual;
    expected_sum += arr.expected;
    if (arr.actual != arr.expected) {
      diff << arr.name << ": stored " << arr.actual << ", expected " << arr.expected << '\n';
    }
  }
  if (expected_sum != expected_total) {
    diff << "per-array expectations sum to " << expected_sum << " but the model gives "
         << expected_total << '\n';
  }
  if (a.actual != a.expected) {
    diff << "total: stored " << a.actual << ", expected " << a.expected << '\n';
  }
  a.diff = diff.str();
  a.ok = a.diff.empty();
  return a;
}

}  // namespace

AuditReport audit_tape(const DenseTape& tape, const LayerShape& shape, FfnVariant variant) {
  if (is_moc(variant)) throw std::invalid_argument("audit_tape: dense tape audited as MoC variant");
  const bool gcp = variant == FfnVariant::DenseGcp;
  const std::uint64_t act = shape.tokens() * shape.d_ffn;
  std::vector<ArrayCount> arrays{
      {"X", shape.bsd(), tape.x.size()},
      {"G", act, tape.g.size()},
      {"U", act, tape.u.size()},
      {"S", gcp ? 0 : act, tape.s ? tape.s->size() : 0},
      {"Z", gcp ? 0 : act, tape.z ? tape.z->size() : 0},
  };
  // The model counts the output D; the tape holds the input X instead. Both are bsd.
  const std::uint64_t expected = ffn_activation_elems(shape, variant) - shape.bsd() + shape.bsd();
  return finish_audit(std::move(arrays), expected);
}

AuditReport audit_tape(const MocTape& tape, const LayerShape& shape, FfnVariant variant,
                       std::uint64_t k) {
  if (!is_moc(variant)) throw std::invalid_argument("audit_tape: MoC tape audited as dense variant");
  const bool gcp = variant == FfnVariant::MocGcp;
  const std::uint64_t act = shape.tokens() * k;
  std::vector<ArrayCount> arrays{
      {"X", shape.bsd(), tape.x.size()},
      {"G*M", act, tape.g.size()},
      {"U*M", act, tape.u.size()},
      {"S*M", gcp ? 0 : act, tape.s ? tape.s->size() : 0},
      {"Z*M", gcp ? 0 : act, tape.z ? tape.z->size() : 0},
      {"M", act, tape.stored_indices()},
  };
  const std::uint64_t expected =
      ffn_activation_elems(shape, variant, k) - shape.bsd() + shape.bsd();
  return finish_audit(std::move(arrays), expected);
}

}  // namespace moc
