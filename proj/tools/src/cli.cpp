#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"

namespace moc::cli {

namespace {

struct Flags {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
  std::string input;
};

// Recursive overlay. Unlike JSON merge-patch, null is kept as a value so the
// strict parser still sees (and rejects) it.
void overlay(nlohmann::json& base, const nlohmann::json& top) {
  for (const auto& [key, value] : top.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object())
      overlay(base[key], value);
    else
      base[key] = value;
  }
}

RunConfig assemble(const Flags& f) {
  nlohmann::json doc = nlohmann::json::object();
  if (!f.preset.empty()) doc = load_preset(f.preset);
  if (!f.config.empty()) {
    const nlohmann::json top = load_json_file(f.config);
    if (!top.is_object()) throw ConfigError("config: top level must be an object");
    if (!doc.is_object()) throw ConfigError("preset: top level must be an object");
    overlay(doc, top);
  }
  if (f.seed) doc["seed"] = *f.seed;
  if (!f.out.empty()) doc["output"]["path"] = f.out;
  if (!f.format.empty()) doc["output"]["format"] = f.format;
  return parse_config(doc);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& log) {
  CLI::App app{"Mixture-of-Channels FFN experiments", "moc"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags flags;
  app.add_option("--config", flags.config, "JSON run configuration");
  app.add_option("--preset", flags.preset, "bundled model preset (60m, 130m, 350m, 1b)");
  app.add_option("--seed", flags.seed, "RNG seed (overrides the config)");
  app.add_option("--out", flags.out, "write the report here instead of stdout");
  app.add_option("--format", flags.format, "report format")->check(CLI::IsMember({"csv", "json"}));

  auto* profile = app.add_subcommand("profile", "activation memory for all four FFN variants");
  auto* grad = app.add_subcommand("grad-check", "finite-difference check of both backward passes");
  auto* embed = app.add_subcommand("embed-verify", "embed a dense FFN into a grouped MoC layer and compare");
  auto* train = app.add_subcommand("train", "paired dense/MoC teacher-regression run");
  auto* infer = app.add_subcommand("infer-bench", "per-token MAC model and sparse decode check");
  auto* stats = app.add_subcommand("stats", "distribution statistics of a saved gate matrix");
  stats->add_option("input", flags.input, "matrix file")->required();
  app.add_subcommand("presets", "list bundled presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, log);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (app.got_subcommand("presets")) {
      for (const auto& name : preset_names()) out << name << "\n";
      return kOk;
    }
    const RunConfig cfg = assemble(flags);
    const Io io{out, log};
    if (profile->parsed()) return cmd_profile(cfg, io);
    if (grad->parsed()) return cmd_grad_check(cfg, io);
    if (embed->parsed()) return cmd_embed_verify(cfg, io);
    if (train->parsed()) return cmd_train(cfg, io);
    if (infer->parsed()) return cmd_infer_bench(cfg, io);
    if (stats->parsed()) return cmd_stats(cfg, flags.input, io);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    log << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kConfigError;
}

}  // namespace moc::cli
