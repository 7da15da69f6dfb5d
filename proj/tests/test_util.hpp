#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "psi/io.hpp"

namespace psi::testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("psi_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

  fs::path write(const std::string& name, const std::string& content) const {
    auto p = path_ / name;
    write_file_atomic(p, content);
    return p;
  }

 private:
  fs::path path_;
};

inline fs::path data_dir() { return PSI_DATA_DIR; }
inline fs::path test_dir() { return PSI_TEST_DIR; }

}  // namespace psi::testutil
