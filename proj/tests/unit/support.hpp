#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rare/error.hpp"

namespace testing {

/// Fresh scratch directory per test case.
inline std::filesystem::path scratch(std::string const& name)
{
    auto dir = std::filesystem::path(RARE_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_file(std::filesystem::path const& path, std::string const& content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(std::filesystem::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Collects rare::warn messages for the lifetime of the object.
struct captured_warnings {
    std::vector<std::string> messages;

    captured_warnings()
    {
        rare::set_warning_handler([this](std::string_view m) { messages.emplace_back(m); });
    }
    ~captured_warnings() { rare::set_warning_handler({}); }
    captured_warnings(captured_warnings const&) = delete;
    captured_warnings& operator=(captured_warnings const&) = delete;
};

}  // namespace testing

#define CHECK_ERRC(expr, expected)                                  \
    do {                                                            \
        bool thrown_ = false;                                       \
        try {                                                       \
            (void)(expr);                                           \
        } catch (rare::error const& e) {                            \
            thrown_ = true;                                         \
            CHECK_MESSAGE(e.code() == (expected), e.what());        \
        }                                                           \
        CHECK_MESSAGE(thrown_, "expected rare::error from " #expr); \
    } while (false)
