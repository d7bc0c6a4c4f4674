#pragma once

#include <filesystem>
#include <iosfwd>

#include "run_config.hpp"

namespace moc::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigError = 2 };

/// Where a command writes its report, and the user-facing log stream.
struct Io {
  std::ostream& out;  ///< report destination when output.path is unset
  std::ostream& log;  ///< one-line summaries and diagnostics
};

int cmd_profile(const RunConfig& cfg, Io io);
int cmd_grad_check(const RunConfig& cfg, Io io);
int cmd_embed_verify(const RunConfig& cfg, Io io);
int cmd_train(const RunConfig& cfg, Io io);
int cmd_infer_bench(const RunConfig& cfg, Io io);
int cmd_stats(const RunConfig& cfg, const std::filesystem::path& input, Io io);

/// Full command line entry point; never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& log);

}  // namespace moc::cli
