#pragma once

#include <exception>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace stbp {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // runtime errors and failed diagnostic bands
  kExitUsage = 2,    // bad arguments or config
  kExitData = 3,     // unreadable or mismatched data files
};

// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

// Each command writes results to `out`, diagnostics to `err`, and never
// throws. Output directories honour the STBP_OUT_DIR environment variable.
int cmd_train(const std::filesystem::path& config_path, std::ostream& out,
              std::ostream& err);
int cmd_eval(const std::filesystem::path& checkpoint,
             const std::string& dataset, std::ostream& out, std::ostream& err);
int cmd_fuse(const std::filesystem::path& in, const std::filesystem::path& out_path,
             std::ostream& out, std::ostream& err);
int cmd_diagnose(const std::string& kind,
                 const std::filesystem::path& config_path, std::ostream& out,
                 std::ostream& err);

std::vector<std::string> diagnostic_kinds();

}  // namespace stbp
