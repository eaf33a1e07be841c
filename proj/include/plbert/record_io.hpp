// SPDX-License-Identifier: Apache-2.0
//
// Example file format:
//
//   "PLBERT-CORPUS v1\n"
//   repeated records:
//     u32 payload_size | payload | u32 crc32(payload)
//   payload (all little-endian u32):
//     N | n_spans | N phoneme ids | n_spans x (start, length, grapheme)
//
// Records are read one at a time; the reader never holds more than the
// current record in memory.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include "plbert/corpus.hpp"

namespace plbert {

inline constexpr std::string_view kCorpusMagic = "PLBERT-CORPUS v1";

class ExampleWriter {
 public:
  explicit ExampleWriter(const std::filesystem::path& path);
  ExampleWriter(const ExampleWriter&) = delete;
  ExampleWriter& operator=(const ExampleWriter&) = delete;
  ~ExampleWriter();

  void write(const ExampleRecord& record);
  /// Flushes and closes; throws on I/O failure. Called by the destructor
  /// (which swallows errors) if not called explicitly.
  void close();
  std::size_t count() const { return count_; }

 private:
  std::ofstream out_;
  std::vector<std::uint8_t> buffer_;
  std::size_t count_ = 0;
};

class ExampleReader {
 public:
  explicit ExampleReader(const std::filesystem::path& path);

  /// Next record, or std::nullopt at a clean end of file. Throws FormatError
  /// naming the record index on truncation, checksum mismatch or an invalid
  /// payload.
  std::optional<ExampleRecord> next();

  /// Index of the next record to be returned.
  std::size_t index() const { return index_; }
  /// Capacity of the internal payload buffer, in bytes.
  std::size_t buffer_capacity() const { return buffer_.capacity(); }

 private:
  std::ifstream in_;
  std::vector<std::uint8_t> buffer_;
  std::size_t index_ = 0;
};

void write_examples(std::span<const ExampleRecord> records, const std::filesystem::path& path);
std::vector<ExampleRecord> read_examples(const std::filesystem::path& path);

/// CRC-32 (zlib polynomial).
std::uint32_t crc32_bytes(std::span<const std::uint8_t> bytes);

}  // namespace plbert
