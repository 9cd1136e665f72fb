#include "rare/error.hpp"

#include <iostream>
#include <mutex>

namespace rare {

std::string_view to_string(errc code) noexcept
{
    switch (code) {
    case errc::io: return "Io";
    case errc::malformed_line: return "MalformedLine";
    case errc::malformed_row: return "MalformedRow";
    case errc::duplicate_id: return "DuplicateId";
    case errc::negative_grade: return "NegativeGrade";
    case errc::empty_pool: return "EmptyPool";
    case errc::empty_collection: return "EmptyCollection";
    case errc::empty_corpus: return "EmptyCorpus";
    case errc::empty_query: return "EmptyQuery";
    case errc::missing_negative: return "MissingNegative";
    case errc::pool_too_small: return "PoolTooSmall";
    case errc::unknown_dataset: return "UnknownDataset";
    case errc::bad_magic: return "BadMagic";
    case errc::version_mismatch: return "VersionMismatch";
    case errc::truncated: return "Truncated";
    case errc::spec_invalid: return "SpecInvalid";
    case errc::ordinal_out_of_range: return "OrdinalOutOfRange";
    case errc::dim_mismatch: return "DimMismatch";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::non_positive_temperature: return "NonPositiveTemperature";
    case errc::non_finite_params: return "NonFiniteParams";
    case errc::non_finite_loss: return "NonFiniteLoss";
    }
    return "Unknown";
}

error_class classify(errc code) noexcept
{
    switch (code) {
    case errc::non_positive_temperature:
    case errc::non_finite_params:
    case errc::non_finite_loss: return error_class::numeric;
    case errc::invalid_argument: return error_class::usage;
    default: return error_class::data;
    }
}

void raise(errc code, const std::string& detail)
{
    throw error(code, std::string(to_string(code)) + ": " + detail);
}

namespace {

std::mutex g_warning_mutex;
warning_handler g_warning_handler;

}  // namespace

void set_warning_handler(warning_handler handler)
{
    std::lock_guard lock(g_warning_mutex);
    g_warning_handler = std::move(handler);
}

void warn(std::string_view message)
{
    std::lock_guard lock(g_warning_mutex);
    if (g_warning_handler) {
        g_warning_handler(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

}  // namespace rare
