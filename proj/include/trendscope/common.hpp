#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace trendscope {

using Json = nlohmann::json;
using Timestamp = std::chrono::sys_seconds;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a. Used for stable record ids and seeded hashing, so its
/// output must never change between releases.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

/// splitmix64 finalizer; turns a counter or hash into a well-mixed word.
std::uint64_t mix64(std::uint64_t x);

std::string hex64(std::uint64_t v);

std::string trim(std::string_view s);

/// trim + collapse internal whitespace runs to one space + ASCII casefold.
std::string normalize_text(std::string_view s);

std::vector<std::string> split_words(std::string_view s);

bool iequals_prefix(std::string_view s, std::string_view prefix);

/// RFC 3339 date-time ("2021-06-01T12:00:00Z", offsets and fractional
/// seconds accepted; fractions are truncated).
Timestamp parse_rfc3339(std::string_view text);
std::string format_rfc3339(Timestamp t);

// Newline-delimited JSON.
std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path,
                 const std::vector<Json>& records);
void append_jsonl(const std::filesystem::path& path, const Json& record);
/// Appends a batch with a single write and fsyncs it.
void append_jsonl_durable(const std::filesystem::path& path, const std::vector<Json>& records);
/// Reads an append-only log, dropping a torn final line. Missing file: empty.
std::vector<Json> read_jsonl_tolerant(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames over the target.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Runs fn(i) for i in [0, count) on at most `width` threads. Exceptions are
/// rethrown on the calling thread (first one wins).
void parallel_for(std::size_t count, std::size_t width,
                  const std::function<void(std::size_t)>& fn);

}  // namespace trendscope
