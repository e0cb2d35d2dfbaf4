#pragma once
// Shared helpers for the unit tests: temp dirs and fixture paths.

#include <cstdlib>
#include <filesystem>
#include <string>

#include <unistd.h>

namespace testing_support {

namespace fs = std::filesystem;

inline fs::path source_path(const std::string& rel) { return fs::path(CRUX_SOURCE_DIR) / rel; }

class TempDir {
public:
    TempDir() {
        auto tmpl = (fs::temp_directory_path() / "crux-test-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    std::string str(const std::string& rel = "") const { return rel.empty() ? path_.string() : (path_ / rel).string(); }

private:
    fs::path path_;
};

} // namespace testing_support
