#include "support/test_support.h"

#include <atomic>
#include <chrono>
#include <unistd.h>

namespace bencao::testing {

std::filesystem::path data_path(const std::string& relative) {
  return std::filesystem::path(BENCAO_DATA_DIR) / relative;
}

std::filesystem::path fixture_path(const std::string& relative) {
  return std::filesystem::path(BENCAO_FIXTURE_DIR) / relative;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = std::filesystem::temp_directory_path() /
          ("bencao-test-" + std::to_string(::getpid()) + "-" + std::to_string(stamp) + "-" +
           std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace bencao::testing
