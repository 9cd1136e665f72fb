#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace rare::cli {

inline constexpr char const* artifact_version = "0.1.0";

/// Exit codes of `dispatch`.
enum exit_code : int { ok = 0, usage_error = 1, data_error = 2, numeric_error = 3 };

/// Runs one `rare` invocation. `args[0]` is the program name.
int dispatch(std::vector<std::string> const& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's contents.
[[nodiscard]] std::string file_sha256(std::filesystem::path const& path);

}  // namespace rare::cli
