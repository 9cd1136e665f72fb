#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rare {

enum class errc {
    // data
    io,
    malformed_line,
    malformed_row,
    duplicate_id,
    negative_grade,
    empty_pool,
    empty_collection,
    empty_corpus,
    empty_query,
    missing_negative,
    pool_too_small,
    unknown_dataset,
    bad_magic,
    version_mismatch,
    truncated,
    spec_invalid,
    // programming / argument errors
    ordinal_out_of_range,
    dim_mismatch,
    invalid_argument,
    // numeric
    non_positive_temperature,
    non_finite_params,
    non_finite_loss,
};

/// Broad class of an error, used by the CLI to pick an exit code.
enum class error_class { usage, data, numeric };

[[nodiscard]] std::string_view to_string(errc code) noexcept;
[[nodiscard]] error_class classify(errc code) noexcept;

class error : public std::runtime_error {
  public:
    error(errc code, const std::string& what) : std::runtime_error(what), m_code(code) {}

    [[nodiscard]] errc code() const noexcept { return m_code; }

  private:
    errc m_code;
};

[[noreturn]] void raise(errc code, const std::string& detail);

/// Receives non-fatal diagnostics (duplicate qrels rows, zero query vectors).
/// Defaults to writing `warning: <msg>` on stderr.
using warning_handler = std::function<void(std::string_view)>;

void set_warning_handler(warning_handler handler);
void warn(std::string_view message);

}  // namespace rare
