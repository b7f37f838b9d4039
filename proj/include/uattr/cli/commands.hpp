#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "uattr/cli/config.hpp"

namespace uattr::cli {

inline constexpr const char* kVersion = "0.1.0";

struct CommandLine {
  std::string command;
  std::optional<std::filesystem::path> config;
  std::optional<std::string> method;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
};

/// Config file plus flag overrides.
RunConfig resolve_config(const CommandLine& cl);

// Each command reads everything it needs from `cfg`, writes under
// cfg.str("out") and throws on failure. Files created by a failing command
// are removed before the exception leaves.
void cmd_train(const RunConfig& cfg, std::ostream& log);
void cmd_attribute(const RunConfig& cfg, std::ostream& log);
void cmd_evaluate(const RunConfig& cfg, std::ostream& log);
void cmd_sweep(const RunConfig& cfg, std::ostream& log);

/// Runs one command: 0 on success, 1 on operational errors, 2 on config
/// errors, with the message on `err`.
int run_command(const CommandLine& cl, std::ostream& log, std::ostream& err);

/// Argument parsing for the `uattr` executable.
int main_entry(int argc, char** argv);

}  // namespace uattr::cli
