#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "moc/expressivity.hpp"
#include "moc/inference.hpp"
#include "moc/matrix_io.hpp"
#include "moc/random.hpp"

namespace moc::cli {

using nlohmann::ordered_json;

namespace {

constexpr FfnVariant kVariants[] = {FfnVariant::Dense, FfnVariant::DenseGcp, FfnVariant::Moc,
                                    FfnVariant::MocGcp};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : width_(header.size()) { row(header); }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw std::logic_error("csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << '\n';
  }

  std::string str() const { return os_.str(); }

 private:
  std::size_t width_;
  std::ostringstream os_;
};

OutputFormat format_or(const RunConfig& cfg, OutputFormat fallback) {
  return cfg.output.format.value_or(fallback);
}

void emit(const RunConfig& cfg, Io io, const std::string& text) {
  if (!cfg.output.path) {
    io.out << text;
    return;
  }
  std::ofstream f(*cfg.output.path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + cfg.output.path->string());
  f << text;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------- profile

ordered_json shape_json(const LayerShape& s) {
  return {{"b", s.b},  {"s", s.s}, {"d", s.d}, {"d_ffn", s.d_ffn},
          {"h", s.h},  {"bytes_per_element", s.bytes_per_element},
          {"bytes_per_index", s.index_bytes()}};
}

}  // namespace

int cmd_profile(const RunConfig& cfg, Io io) {
  const LayerShape& shape = cfg.require_shape();
  const std::uint64_t k = cfg.moc.per_row(shape.d, shape.d_ffn);
  const ModelSpec model = cfg.has_model ? cfg.model : ModelSpec{1, 0, 4};

  std::vector<MemoryReport> reports;
  for (auto v : kVariants) reports.push_back(model_report(shape, model, v, k));

  if (format_or(cfg, OutputFormat::Csv) == OutputFormat::Csv) {
    std::vector<std::string> header{"component"};
    for (auto v : kVariants) {
      header.push_back(std::string(to_string(v)) + "_elements");
      header.push_back(std::string(to_string(v)) + "_bytes");
    }
    CsvWriter csv(header);
    const auto names = reports.front().components();
    for (std::size_t c = 0; c < names.size(); ++c) {
      std::vector<std::string> row{names[c].component};
      for (const auto& r : reports) {
        const auto comp = r.components()[c];
        row.push_back(std::to_string(comp.elements));
        row.push_back(std::to_string(comp.bytes));
      }
      csv.row(row);
    }
    std::vector<std::string> row{"gcp_recompute"};
    for (const auto& r : reports) {
      row.push_back(std::to_string(r.gcp_recompute_elems));
      row.push_back(std::to_string(r.gcp_recompute_elems * shape.bytes_per_element));
    }
    csv.row(row);
    emit(cfg, io, csv.str());
  } else {
    ordered_json j;
    j["shape"] = shape_json(shape);
    j["k"] = k;
    j["n_layers"] = model.n_layers;
    j["vocab"] = model.vocab;
    ordered_json variants = ordered_json::array();
    for (const auto& r : reports) {
      ordered_json v;
      v["variant"] = to_string(r.variant);
      v["ffn_per_bsd"] = per_bsd(ffn_activation_elems(shape, r.variant, k), shape).to_string();
      v["gcp_recompute_per_bsd"] =
          per_bsd(gcp_recompute_elems(shape, r.variant, k), shape).to_string();
      ordered_json comps = ordered_json::array();
      for (const auto& c : r.components())
        comps.push_back({{"component", c.component}, {"elements", c.elements}, {"bytes", c.bytes}});
      v["components"] = comps;
      v["gcp_recompute_elems"] = r.gcp_recompute_elems;
      variants.push_back(v);
    }
    j["variants"] = variants;
    emit(cfg, io, dump(j));
  }
  io.log << "profile: dense total " << reports[0].total.bytes << " bytes, moc total "
         << reports[2].total.bytes << " bytes (K=" << k << ")\n";
  return kOk;
}

// ------------------------------------------------------------- grad-check

namespace {

// Loss sum(D * dD) through the dense binary-mask formulation; shares nothing
// with the compact backward beyond matmul and silu.
double masked_loss(const Matrix& x, const FfnWeights& w, const Matrix& mask, const Matrix& grad_out) {
  const Matrix g = matmul(x, w.gate);
  const Matrix u = matmul(x, w.up);
  const Matrix z = hadamard(hadamard(silu(g), u), mask);
  const Matrix d = matmul(z, w.down);
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) acc += d.data()[i] * grad_out.data()[i];
  return acc;
}

Matrix central_difference(Matrix& target, double h, const std::function<double()>& loss) {
  Matrix grad(target.rows(), target.cols());
  for (std::size_t i = 0; i < target.size(); ++i) {
    double& v = target.data()[i];
    const double saved = v;
    v = saved + h;
    const double plus = loss();
    v = saved - h;
    const double minus = loss();
    v = saved;
    grad.data()[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

struct GradRow {
  std::size_t instance;
  std::string check;
  std::string matrix;
  double error;
  double tolerance;
  bool pass() const { return error <= tolerance; }
};

void compare_all(std::vector<GradRow>& rows, std::size_t inst, const std::string& check,
                 const FfnGradients& got, const FfnGradients& want, double tol) {
  const std::pair<const char*, std::pair<const Matrix*, const Matrix*>> items[] = {
      {"gate", {&got.gate, &want.gate}},
      {"up", {&got.up, &want.up}},
      {"down", {&got.down, &want.down}},
      {"input", {&got.input, &want.input}}};
  for (const auto& [name, pair] : items)
    rows.push_back({inst, check, name, max_rel_diff(*pair.first, *pair.second), tol});
}

}  // namespace

int cmd_grad_check(const RunConfig& cfg, Io io) {
  const GradCheckSection& gc = cfg.gradcheck;
  Rng rng(cfg.seed);
  std::vector<GradRow> rows;
  const Criterion criteria[] = {Criterion::PreSiluValue, Criterion::PostSiluValue,
                                Criterion::AbsSiluOutput};

  for (std::size_t inst = 0; inst < gc.instances; ++inst) {
    const auto s = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(gc.max_s)));
    const auto d = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(gc.max_d)));
    const auto d_ffn =
        static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(gc.max_d_ffn)));
    const auto k = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(d_ffn)));
    const MocConfig moc_cfg = MocConfig::top_k(k, criteria[inst % 3], inst % 2 == 1);

    const FfnWeights w = FfnWeights::random(d, d_ffn, rng);
    const Matrix x = random_normal(s, d, rng);
    const Matrix grad_out = random_normal(s, d, rng);

    // MoC, frozen mask
    const auto fwd = moc_forward(x, w, moc_cfg);
    FfnGradients analytic = moc_backward(fwd.tape, grad_out, w, moc_cfg);
    if (gc.corrupt && inst == 0) analytic.gate.data()[0] += 1e-3 * (1.0 + std::abs(analytic.gate.data()[0]));
    const Matrix mask = fwd.tape.mask.to_dense();
    FfnWeights ww = w;
    Matrix xx = x;
    auto moc_loss = [&] { return masked_loss(xx, ww, mask, grad_out); };
    FfnGradients fd;
    fd.gate = central_difference(ww.gate, gc.h, moc_loss);
    fd.up = central_difference(ww.up, gc.h, moc_loss);
    fd.down = central_difference(ww.down, gc.h, moc_loss);
    fd.input = central_difference(xx, gc.h, moc_loss);
    compare_all(rows, inst, "moc_vs_fd", analytic, fd, gc.tolerance);

    // Dense
    const Matrix ones(s, d_ffn, 1.0);
    const auto dense = ffn_forward(x, w, inst % 2 == 1);
    const FfnGradients dense_grads = ffn_backward(dense.tape, grad_out, w);
    auto dense_loss = [&] { return masked_loss(xx, ww, ones, grad_out); };
    FfnGradients dense_fd;
    dense_fd.gate = central_difference(ww.gate, gc.h, dense_loss);
    dense_fd.up = central_difference(ww.up, gc.h, dense_loss);
    dense_fd.down = central_difference(ww.down, gc.h, dense_loss);
    dense_fd.input = central_difference(xx, gc.h, dense_loss);
    compare_all(rows, inst, "dense_vs_fd", dense_grads, dense_fd, gc.tolerance);

    // K = d_ffn must reduce to the dense layer.
    const MocConfig full = MocConfig::top_k(d_ffn, moc_cfg.criterion, moc_cfg.gcp);
    const auto full_fwd = moc_forward(x, w, full);
    compare_all(rows, inst, "full_mask_vs_dense", moc_backward(full_fwd.tape, grad_out, w, full),
                dense_grads, gc.degeneracy_tolerance);
  }

  const bool ok = std::all_of(rows.begin(), rows.end(), [](const GradRow& r) { return r.pass(); });
  std::map<std::string, double> worst;
  for (const auto& r : rows) {
    const std::string key = r.check + "." + r.matrix;
    worst[key] = std::max(worst[key], r.error);
  }

  if (format_or(cfg, OutputFormat::Csv) == OutputFormat::Csv) {
    CsvWriter csv({"instance", "check", "matrix", "max_rel_err", "tolerance", "pass"});
    for (const auto& r : rows)
      csv.row({std::to_string(r.instance), r.check, r.matrix, fmt(r.error), fmt(r.tolerance),
               r.pass() ? "1" : "0"});
    emit(cfg, io, csv.str());
  } else {
    ordered_json j;
    j["pass"] = ok;
    j["instances"] = gc.instances;
    j["corrupt"] = gc.corrupt;
    ordered_json summary;
    for (const auto& [key, err] : worst) summary[key] = err;
    j["max_rel_err"] = summary;
    ordered_json list = ordered_json::array();
    for (const auto& r : rows)
      list.push_back({{"instance", r.instance}, {"check", r.check}, {"matrix", r.matrix},
                      {"max_rel_err", r.error}, {"tolerance", r.tolerance}, {"pass", r.pass()}});
    j["rows"] = list;
    emit(cfg, io, dump(j));
  }
  for (const auto& [key, err] : worst) io.log << "grad-check: " << key << " max rel err " << err << "\n";
  io.log << "grad-check: " << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kOk : kCheckFailed;
}

// ----------------------------------------------------------- embed-verify

int cmd_embed_verify(const RunConfig& cfg, Io io) {
  const EmbedSection& e = cfg.embed;
  Rng rng(cfg.seed);
  const FfnWeights w = FfnWeights::random(e.d, e.d_ffn, rng);
  const EmbeddingResult emb = embed_ffn_as_moc(w, e.a, e.b);
  const EmbeddingCheck check = verify_embedding(w, emb, e.samples, cfg.seed + 1, e.criterion);
  const bool ok = check.max_abs_deviation <= e.tolerance;

  if (format_or(cfg, OutputFormat::Json) == OutputFormat::Json) {
    ordered_json j;
    j["a"] = e.a;
    j["b"] = e.b;
    j["d"] = e.d;
    j["d_ffn"] = e.d_ffn;
    j["d_moc"] = emb.d_moc;
    j["criterion"] = to_string(e.criterion);
    j["samples"] = check.samples;
    j["nonzero_params"] = count_nonzero(emb.weights);
    j["max_abs_deviation"] = check.max_abs_deviation;
    j["tolerance"] = e.tolerance;
    j["exact_guarantee"] = check.exact_guarantee;
    j["pass"] = ok;
    emit(cfg, io, dump(j));
  } else {
    CsvWriter csv({"a", "b", "d", "d_ffn", "d_moc", "criterion", "samples", "max_abs_deviation",
                   "tolerance", "pass"});
    csv.row({std::to_string(e.a), std::to_string(e.b), std::to_string(e.d),
             std::to_string(e.d_ffn), std::to_string(emb.d_moc), std::string(to_string(e.criterion)),
             std::to_string(check.samples), fmt(check.max_abs_deviation), fmt(e.tolerance),
             ok ? "1" : "0"});
    emit(cfg, io, csv.str());
  }
  io.log << "embed-verify: d_moc " << emb.d_moc << ", max deviation " << check.max_abs_deviation
         << (ok ? " PASS" : " FAIL") << "\n";
  return ok ? kOk : kCheckFailed;
}

// ------------------------------------------------------------------ train

int cmd_train(const RunConfig& cfg, Io io) {
  const TaskSpec& task = cfg.task.spec;
  const std::size_t k = cfg.task.k ? static_cast<std::size_t>(*cfg.task.k)
                                   : static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(task.d_ffn)));
  const MocConfig moc_cfg = MocConfig::top_k(k, cfg.moc.criterion, cfg.moc.gcp);
  const std::uint64_t task_seed = cfg.task.seed.value_or(cfg.seed + 100);
  const TrainResult r = train_compare(task, cfg.train, moc_cfg, task_seed);

  const Matrix gate = matmul(r.eval_inputs, r.moc_student.gate);
  const ActivationStats st = activation_stats(gate, 50);
  if (cfg.output.gate_path) save_matrix(*cfg.output.gate_path, gate);

  if (format_or(cfg, OutputFormat::Csv) == OutputFormat::Csv) {
    CsvWriter csv({"step", "lr", "dense_loss", "moc_loss"});
    for (const auto& p : r.curve)
      csv.row({std::to_string(p.step), fmt(p.lr), fmt(p.dense_loss), fmt(p.moc_loss)});
    emit(cfg, io, csv.str());
  } else {
    ordered_json j;
    j["k"] = k;
    j["task_seed"] = task_seed;
    j["train_seed"] = cfg.train.seed;
    j["dense_initial_eval"] = r.dense_initial_eval;
    j["dense_final_eval"] = r.dense_final_eval;
    j["moc_initial_eval"] = r.moc_initial_eval;
    j["moc_final_eval"] = r.moc_final_eval;
    j["moc_gate_frac_negative"] = st.frac_negative;
    ordered_json curve = ordered_json::array();
    for (const auto& p : r.curve)
      curve.push_back({{"step", p.step}, {"lr", p.lr}, {"dense_loss", p.dense_loss},
                       {"moc_loss", p.moc_loss}});
    j["curve"] = curve;
    emit(cfg, io, dump(j));
  }
  io.log << "train: dense " << r.dense_initial_eval << " -> " << r.dense_final_eval << ", moc "
         << r.moc_initial_eval << " -> " << r.moc_final_eval << " (K=" << k
         << "), trained gate negative fraction " << st.frac_negative << "\n";
  return kOk;
}

// ------------------------------------------------------------ infer-bench

int cmd_infer_bench(const RunConfig& cfg, Io io) {
  const LayerShape& shape = cfg.require_shape();
  const MocConfig moc_cfg = cfg.moc.to_config(shape.d, shape.d_ffn);
  const std::uint64_t k = moc_cfg.per_row(shape.d_ffn);
  const MacReport mac = mac_count(shape.d, shape.d_ffn, k, shape.bytes_per_element);

  // Instantiating a full-size layer is only worthwhile for small shapes.
  const bool small = 3 * shape.d * shape.d_ffn <= (1u << 22);
  const std::uint64_t tokens = cfg.infer.tokens.value_or(small ? 8 : 0);
  double worst = 0.0;
  bool counts_ok = true;
  if (tokens > 0) {
    MocConfig decode_cfg = moc_cfg;
    decode_cfg.gcp = false;
    Rng rng(cfg.seed);
    const FfnWeights w = FfnWeights::random(shape.d, shape.d_ffn, rng);
    for (std::uint64_t t = 0; t < tokens; ++t) {
      const Matrix x = random_normal(1, shape.d, rng);
      const DecodeResult dec = decode_token(x, w, decode_cfg, shape.bytes_per_element);
      worst = std::max(worst, max_rel_diff(dec.out, moc_forward(x, w, decode_cfg).out));
      counts_ok = counts_ok && dec.access.multiplies == mac.moc_macs;
    }
  }
  const bool ok = worst <= cfg.infer.tolerance && counts_ok;

  if (format_or(cfg, OutputFormat::Json) == OutputFormat::Json) {
    ordered_json j;
    j["d"] = mac.d;
    j["d_ffn"] = mac.d_ffn;
    j["k"] = mac.k;
    j["gate_macs"] = mac.gate_macs;
    j["up_macs"] = mac.up_macs;
    j["down_macs"] = mac.down_macs;
    j["dense_macs"] = mac.dense_macs;
    j["moc_macs"] = mac.moc_macs;
    j["ratio"] = mac.ratio;
    j["bytes_per_weight"] = mac.bytes_per_weight;
    j["dense_weight_bytes"] = mac.dense_weight_bytes;
    j["moc_weight_bytes"] = mac.moc_weight_bytes;
    j["byte_model"] = MacReport::byte_model;
    j["decode_checked_tokens"] = tokens;
    j["decode_max_rel_diff"] = worst;
    j["decode_counts_match"] = counts_ok;
    j["pass"] = ok;
    emit(cfg, io, dump(j));
  } else {
    CsvWriter csv({"metric", "value"});
    csv.row({"d", std::to_string(mac.d)});
    csv.row({"d_ffn", std::to_string(mac.d_ffn)});
    csv.row({"k", std::to_string(mac.k)});
    csv.row({"dense_macs", std::to_string(mac.dense_macs)});
    csv.row({"moc_macs", std::to_string(mac.moc_macs)});
    csv.row({"ratio", fmt(mac.ratio)});
    csv.row({"dense_weight_bytes", std::to_string(mac.dense_weight_bytes)});
    csv.row({"moc_weight_bytes", std::to_string(mac.moc_weight_bytes)});
    csv.row({"decode_checked_tokens", std::to_string(tokens)});
    csv.row({"decode_max_rel_diff", fmt(worst)});
    emit(cfg, io, csv.str());
  }
  io.log << "infer-bench: MACs " << mac.moc_macs << " / " << mac.dense_macs << " = "
         << std::setprecision(4) << mac.ratio << (ok ? "" : " (decode check FAILED)") << "\n";
  return ok ? kOk : kCheckFailed;
}

// ------------------------------------------------------------------ stats

int cmd_stats(const RunConfig& cfg, const std::filesystem::path& input, Io io) {
  Matrix g;
  try {
    g = load_matrix(input);
  } catch (const MatrixFormatError& e) {
    throw ConfigError(std::string("input: ") + e.what());
  }
  const ActivationStats st = activation_stats(g, cfg.stats.bins);

  if (format_or(cfg, OutputFormat::Json) == OutputFormat::Json) {
    ordered_json j;
    j["input"] = input.string();
    j["rows"] = g.rows();
    j["cols"] = g.cols();
    j["elements"] = st.elements;
    j["frac_negative"] = st.frac_negative;
    j["top30_threshold"] = st.top30_threshold;
    j["bin_edges"] = st.bin_edges;
    j["counts"] = st.counts;
    j["cumulative"] = st.cumulative;
    emit(cfg, io, dump(j));
  } else {
    CsvWriter csv({"bin_lo", "bin_hi", "count", "cumulative"});
    for (std::size_t b = 0; b < st.counts.size(); ++b)
      csv.row({fmt(st.bin_edges[b]), fmt(st.bin_edges[b + 1]), std::to_string(st.counts[b]),
               fmt(st.cumulative[b])});
    emit(cfg, io, csv.str());
  }
  io.log << "stats: " << st.elements << " entries, " << st.frac_negative << " negative\n";
  return kOk;
}

}  // namespace moc::cli
