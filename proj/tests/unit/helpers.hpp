#pragma once

#include "sofa/error.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>

namespace testing {

inline std::filesystem::path source_path(const std::string & rel) {
    return std::filesystem::path(SOFA_SOURCE_DIR) / rel;
}

// Fresh directory under the system temp dir, removed on scope exit.
class temp_dir {
  public:
    temp_dir() {
        static std::atomic<int> counter{0};
        std::random_device      rd;
        path_ = std::filesystem::temp_directory_path() /
                ("sofa-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~temp_dir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    temp_dir(const temp_dir &)             = delete;
    temp_dir & operator=(const temp_dir &) = delete;

    const std::filesystem::path & path() const { return path_; }
    std::filesystem::path         operator/(const std::string & rel) const { return path_ / rel; }

  private:
    std::filesystem::path path_;
};

// The error_kind thrown by fn, or nullopt if it returned normally.
inline std::optional<sofa::error_kind> kind_of(const std::function<void()> & fn) {
    try {
        fn();
    } catch (const sofa::error & e) {
        return e.kind();
    }
    return std::nullopt;
}

// Message of the sofa::error thrown by fn, or "" if none.
inline std::string message_of(const std::function<void()> & fn) {
    try {
        fn();
    } catch (const sofa::error & e) {
        return e.what();
    }
    return "";
}

}  // namespace testing
