#pragma once

#include "nfpose/io.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace nfpose::cli {

enum ExitCode : int { Success = 0, ConfigFailure = 2, NumericFailure = 3, IoFailure = 4 };

// Runs one command; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// The resolved configuration stored in an artifact written by run_cli: the
// "config" member of JSON files, the checkpoint header, or the leading
// comment of CSV / PGM files. Throws IoError when none is present.
Json embedded_config(const fs::path& artifact);

// Defaults of every key accepted by `command`, including "command" and "seed".
Json default_config(const std::string& command);

}  // namespace nfpose::cli
