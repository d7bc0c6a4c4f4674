#include "run_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace moc::cli {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) fail(path_, "expected an object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return doc_.contains(key);
  }

  std::optional<std::uint64_t> uint(const char* key) {
    if (!has(key)) return std::nullopt;
    const json& v = doc_.at(key);
    if (!v.is_number_unsigned()) fail(field(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::optional<double> real(const char* key) {
    if (!has(key)) return std::nullopt;
    const json& v = doc_.at(key);
    if (!v.is_number()) fail(field(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(field(key), "expected a finite number");
    return x;
  }

  std::optional<bool> boolean(const char* key) {
    if (!has(key)) return std::nullopt;
    const json& v = doc_.at(key);
    if (!v.is_boolean()) fail(field(key), "expected true or false");
    return v.get<bool>();
  }

  std::optional<std::string> string(const char* key) {
    if (!has(key)) return std::nullopt;
    const json& v = doc_.at(key);
    if (!v.is_string()) fail(field(key), "expected a string");
    return v.get<std::string>();
  }

  std::optional<Section> child(const char* key) {
    if (!has(key)) return std::nullopt;
    return Section(doc_.at(key), field(key));
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : doc_.items()) {
      if (!seen_.count(key)) fail(field(key.c_str()), "unknown key");
    }
  }

  [[noreturn]] static void fail(const std::string& field, const std::string& what) {
    throw ConfigError(field + ": " + what);
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class T>
void assign(T& dst, const std::optional<T>& v) {
  if (v) dst = *v;
}

void set_size(std::size_t& dst, const std::optional<std::uint64_t>& v) {
  if (v) dst = static_cast<std::size_t>(*v);
}

Criterion criterion_field(Section& s, const char* key, Criterion fallback) {
  auto name = s.string(key);
  if (!name) return fallback;
  try {
    return parse_criterion(*name);
  } catch (const std::invalid_argument& e) {
    Section::fail(s.field(key), e.what());
  }
}

// Re-runs a module validator and prefixes its message with the section name.
template <class F>
void validated(const std::string& section, F&& check) {
  try {
    check();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    throw ConfigError(msg.rfind(section + ".", 0) == 0 ? msg : section + ": " + msg);
  }
}

LayerShape parse_shape(Section s) {
  LayerShape shape;
  const char* required[] = {"b", "s", "d", "d_ffn"};
  for (const char* key : required) {
    if (!s.has(key)) Section::fail(s.field(key), "required");
  }
  assign(shape.b, s.uint("b"));
  assign(shape.s, s.uint("s"));
  assign(shape.d, s.uint("d"));
  assign(shape.d_ffn, s.uint("d_ffn"));
  assign(shape.h, s.uint("h"));
  assign(shape.bytes_per_element, s.uint("bytes_per_element"));
  assign(shape.bytes_per_index, s.uint("bytes_per_index"));
  s.finish();
  const std::pair<const char*, std::uint64_t> dims[] = {
      {"b", shape.b}, {"s", shape.s}, {"d", shape.d}, {"d_ffn", shape.d_ffn}, {"h", shape.h},
      {"bytes_per_element", shape.bytes_per_element}};
  for (const auto& [key, value] : dims) {
    if (value == 0) Section::fail(std::string("shape.") + key, "must be positive");
  }
  if (shape.d % shape.h != 0) Section::fail("shape.h", "must divide shape.d");
  validated("shape", [&] { shape.validate(); });
  return shape;
}

ModelSpec parse_model(Section s) {
  ModelSpec m;
  assign(m.n_layers, s.uint("layers"));
  assign(m.vocab, s.uint("vocab"));
  assign(m.lm_head_bytes_per_element, s.uint("lm_head_bytes_per_element"));
  s.finish();
  if (m.n_layers == 0) Section::fail("model.layers", "must be positive");
  return m;
}

MocSection parse_moc(Section s) {
  MocSection m;
  m.k = s.uint("k");
  m.a = s.uint("a");
  m.b = s.uint("b");
  m.criterion = criterion_field(s, "criterion", m.criterion);
  assign(m.gcp, s.boolean("gcp"));
  s.finish();
  if (m.a.has_value() != m.b.has_value()) Section::fail("moc.a", "a and b must be given together");
  if (m.k && m.a) Section::fail("moc.k", "give either k or a:b, not both");
  if (m.k && *m.k == 0) Section::fail("moc.k", "must be positive");
  if (m.a && (*m.a == 0 || *m.a > *m.b)) Section::fail("moc.a", "need 1 <= a <= b");
  return m;
}

TrainConfig parse_train(Section s, bool& seed_set) {
  TrainConfig t;
  assign(t.peak_lr, s.real("peak_lr"));
  assign(t.min_lr, s.real("min_lr"));
  assign(t.beta1, s.real("beta1"));
  assign(t.beta2, s.real("beta2"));
  assign(t.eps, s.real("eps"));
  assign(t.weight_decay, s.real("weight_decay"));
  set_size(t.total_steps, s.uint("total_steps"));
  assign(t.warmup_frac, s.real("warmup_frac"));
  set_size(t.batch, s.uint("batch"));
  if (auto seed = s.uint("seed")) {
    t.seed = *seed;
    seed_set = true;
  }
  s.finish();
  validated("train", [&] { t.validate(); });
  return t;
}

TaskSection parse_task(Section s) {
  TaskSection t;
  set_size(t.spec.d, s.uint("d"));
  set_size(t.spec.d_ffn, s.uint("d_ffn"));
  set_size(t.spec.eval_samples, s.uint("eval_samples"));
  assign(t.spec.teacher_init_scale, s.real("teacher_init_scale"));
  assign(t.spec.student_init_scale, s.real("student_init_scale"));
  t.k = s.uint("k");
  t.seed = s.uint("seed");
  s.finish();
  if (t.spec.d == 0) Section::fail("task.d", "must be positive");
  if (t.spec.d_ffn == 0) Section::fail("task.d_ffn", "must be positive");
  if (t.spec.eval_samples == 0) Section::fail("task.eval_samples", "must be positive");
  if (t.k && (*t.k == 0 || *t.k > t.spec.d_ffn)) Section::fail("task.k", "need 1 <= k <= d_ffn");
  return t;
}

EmbedSection parse_embed(Section s) {
  EmbedSection e;
  assign(e.a, s.uint("a"));
  assign(e.b, s.uint("b"));
  assign(e.d, s.uint("d"));
  assign(e.d_ffn, s.uint("d_ffn"));
  assign(e.samples, s.uint("samples"));
  e.criterion = criterion_field(s, "criterion", e.criterion);
  assign(e.tolerance, s.real("tolerance"));
  s.finish();
  if (e.a == 0 || e.a > e.b) Section::fail("embed.a", "need 1 <= a <= b");
  if (e.d == 0) Section::fail("embed.d", "must be positive");
  if (e.d_ffn == 0) Section::fail("embed.d_ffn", "must be positive");
  if (e.samples == 0) Section::fail("embed.samples", "must be positive");
  return e;
}

GradCheckSection parse_gradcheck(Section s) {
  GradCheckSection g;
  assign(g.instances, s.uint("instances"));
  assign(g.max_s, s.uint("max_s"));
  assign(g.max_d, s.uint("max_d"));
  assign(g.max_d_ffn, s.uint("max_d_ffn"));
  assign(g.h, s.real("h"));
  assign(g.tolerance, s.real("tolerance"));
  assign(g.degeneracy_tolerance, s.real("degeneracy_tolerance"));
  assign(g.corrupt, s.boolean("corrupt"));
  s.finish();
  if (g.instances == 0) Section::fail("gradcheck.instances", "must be positive");
  if (g.max_s == 0) Section::fail("gradcheck.max_s", "must be positive");
  if (g.max_d == 0) Section::fail("gradcheck.max_d", "must be positive");
  if (g.max_d_ffn < 2) Section::fail("gradcheck.max_d_ffn", "must be at least 2");
  if (!(g.h > 0.0)) Section::fail("gradcheck.h", "must be positive");
  return g;
}

OutputFormat parse_format(const std::string& name, const std::string& field) {
  if (name == "csv") return OutputFormat::Csv;
  if (name == "json") return OutputFormat::Json;
  throw ConfigError(field + ": expected \"csv\" or \"json\", got \"" + name + "\"");
}

}  // namespace

std::uint64_t MocSection::per_row(std::uint64_t d, std::uint64_t d_ffn) const {
  if (a) {
    if (d_ffn % *b != 0) {
      throw ConfigError("moc.b: group size " + std::to_string(*b) + " does not divide d_ffn " +
                        std::to_string(d_ffn));
    }
    return *a * (d_ffn / *b);
  }
  if (k) {
    if (*k > d_ffn) {
      throw ConfigError("moc.k: " + std::to_string(*k) + " exceeds d_ffn " + std::to_string(d_ffn));
    }
    return *k;
  }
  return std::clamp<std::uint64_t>(d / 2, 1, d_ffn);
}

MocConfig MocSection::to_config(std::uint64_t d, std::uint64_t d_ffn) const {
  if (a) {
    per_row(d, d_ffn);
    return MocConfig::grouped(*a, *b, criterion, gcp);
  }
  return MocConfig::top_k(per_row(d, d_ffn), criterion, gcp);
}

const LayerShape& RunConfig::require_shape() const {
  if (!shape) throw ConfigError("shape: required for this command (give --config or --preset)");
  return *shape;
}

RunConfig parse_config(const json& doc) {
  Section root(doc, "");
  RunConfig cfg;
  assign(cfg.seed, root.uint("seed"));
  if (auto s = root.child("shape")) cfg.shape = parse_shape(*s);
  if (auto s = root.child("model")) {
    cfg.model = parse_model(*s);
    cfg.has_model = true;
  }
  if (auto s = root.child("moc")) cfg.moc = parse_moc(*s);
  if (auto s = root.child("train")) cfg.train = parse_train(*s, cfg.train_seed_set);
  if (auto s = root.child("task")) cfg.task = parse_task(*s);
  if (auto s = root.child("embed")) cfg.embed = parse_embed(*s);
  if (auto s = root.child("gradcheck")) cfg.gradcheck = parse_gradcheck(*s);
  if (auto s = root.child("infer")) {
    cfg.infer.tokens = s->uint("tokens");
    assign(cfg.infer.tolerance, s->real("tolerance"));
    s->finish();
  }
  if (auto s = root.child("stats")) {
    assign(cfg.stats.bins, s->uint("bins"));
    s->finish();
    if (cfg.stats.bins < 2) Section::fail("stats.bins", "must be at least 2");
  }
  if (auto s = root.child("output")) {
    if (auto f = s->string("format")) cfg.output.format = parse_format(*f, "output.format");
    if (auto p = s->string("path")) cfg.output.path = *p;
    if (auto p = s->string("gate_path")) cfg.output.gate_path = *p;
    s->finish();
  }
  root.finish();
  if (!cfg.train_seed_set) cfg.train.seed = cfg.seed;
  return cfg;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON (" + e.what() + ")");
  }
}

std::vector<std::filesystem::path> preset_dirs() {
  std::vector<std::filesystem::path> dirs;
#ifdef MOC_PRESET_DIR
  dirs.emplace_back(MOC_PRESET_DIR);
#endif
#ifdef MOC_INSTALL_PRESET_DIR
  dirs.emplace_back(MOC_INSTALL_PRESET_DIR);
#endif
  return dirs;
}

std::vector<std::string> preset_names() {
  std::set<std::string> names;
  for (const auto& dir : preset_dirs()) {
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
      if (entry.path().extension() == ".json") names.insert(entry.path().stem().string());
    }
  }
  return {names.begin(), names.end()};
}

json load_preset(const std::string& name) {
  for (const auto& dir : preset_dirs()) {
    const auto path = dir / (name + ".json");
    if (std::filesystem::exists(path)) return load_json_file(path);
  }
  std::string known;
  for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("preset: unknown preset \"" + name + "\" (known: " + known + ")");
}

}  // namespace moc::cli
