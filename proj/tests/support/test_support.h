#pragma once

#include <filesystem>
#include <random>
#include <string>

namespace bencao::testing {

std::filesystem::path data_path(const std::string& relative);
std::filesystem::path fixture_path(const std::string& relative);

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace bencao::testing
