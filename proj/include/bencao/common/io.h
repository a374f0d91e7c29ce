#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace bencao {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);
// Writes via a temporary sibling and rename, so readers never observe a
// half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
// Appends the given lines in a single write and flushes.
void append_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);
std::vector<std::string> read_lines(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);

// UTC wall clock returning ISO-8601 timestamps. Tests inject a stepping
// clock so that persisted records are reproducible.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::string now_iso8601() = 0;
};

class SystemClock final : public Clock {
 public:
  std::string now_iso8601() override;
};

class SteppingClock final : public Clock {
 public:
  explicit SteppingClock(std::int64_t start_epoch_seconds = 1760572800) : next_(start_epoch_seconds) {}
  std::string now_iso8601() override;

 private:
  std::atomic<std::int64_t> next_;
};

std::string format_iso8601(std::chrono::system_clock::time_point tp);

}  // namespace bencao
