#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "moc/memory_model.hpp"
#include "moc/moc_layer.hpp"
#include "moc/trainer.hpp"

namespace moc::cli {

/// Invalid or unreadable configuration. The message starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OutputFormat { Csv, Json };

struct MocSection {
  std::optional<std::uint64_t> k;
  std::optional<std::uint64_t> a;
  std::optional<std::uint64_t> b;
  Criterion criterion = Criterion::PreSiluValue;
  bool gcp = false;

  bool grouped() const noexcept { return a.has_value(); }
  /// Channels kept per row for a layer of width d_ffn; default is d/2 (at least 1, at most d_ffn).
  std::uint64_t per_row(std::uint64_t d, std::uint64_t d_ffn) const;
  MocConfig to_config(std::uint64_t d, std::uint64_t d_ffn) const;
};

struct TaskSection {
  TaskSpec spec;
  std::optional<std::uint64_t> k;  ///< default ceil(0.3 d_ffn)
  std::optional<std::uint64_t> seed;
};

struct EmbedSection {
  std::uint64_t a = 2;
  std::uint64_t b = 3;
  std::uint64_t d = 8;
  std::uint64_t d_ffn = 5;
  std::uint64_t samples = 100;
  Criterion criterion = Criterion::AbsSiluOutput;
  double tolerance = 1e-12;
};

struct GradCheckSection {
  std::uint64_t instances = 20;
  std::uint64_t max_s = 4;
  std::uint64_t max_d = 6;
  std::uint64_t max_d_ffn = 12;
  double h = 1e-6;
  double tolerance = 1e-6;
  double degeneracy_tolerance = 1e-12;
  bool corrupt = false;  ///< self-test: perturb one analytic gradient entry
};

struct InferSection {
  std::optional<std::uint64_t> tokens;  ///< decode-vs-forward checks; default depends on layer size
  double tolerance = 1e-12;
};

struct StatsSection {
  std::uint64_t bins = 50;
};

struct OutputSection {
  std::optional<OutputFormat> format;
  std::optional<std::filesystem::path> path;
  std::optional<std::filesystem::path> gate_path;  ///< train: dump G of the trained MoC student
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::optional<LayerShape> shape;
  ModelSpec model;
  bool has_model = false;
  MocSection moc;
  TrainConfig train;
  bool train_seed_set = false;
  TaskSection task;
  EmbedSection embed;
  GradCheckSection gradcheck;
  InferSection infer;
  StatsSection stats;
  OutputSection output;

  const LayerShape& require_shape() const;
};

/// Parses a merged JSON document. Unknown keys and wrongly typed values are rejected.
RunConfig parse_config(const nlohmann::json& doc);

nlohmann::json load_json_file(const std::filesystem::path& path);

/// Directories searched for bundled presets, in order.
std::vector<std::filesystem::path> preset_dirs();
nlohmann::json load_preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace moc::cli
