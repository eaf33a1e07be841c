// SPDX-License-Identifier: Apache-2.0
#include "plbert/record_io.hpp"

#include <zlib.h>

#include <string>

#include "plbert/errors.hpp"

namespace plbert {

namespace {

// Upper bound on a single payload; anything larger is treated as corruption
// rather than an allocation request.
constexpr std::uint32_t kMaxPayload = 64u << 20;

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  buf.push_back(static_cast<std::uint8_t>(v));
  buf.push_back(static_cast<std::uint8_t>(v >> 8));
  buf.push_back(static_cast<std::uint8_t>(v >> 16));
  buf.push_back(static_cast<std::uint8_t>(v >> 24));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

FormatError record_error(std::size_t index, const std::string& what) {
  return FormatError("PLBERT-CORPUS v1: record " + std::to_string(index) + ": " + what);
}

}  // namespace

std::uint32_t crc32_bytes(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = ::crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

ExampleWriter::ExampleWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error("cannot create example file " + path.string());
  out_ << kCorpusMagic << '\n';
}

ExampleWriter::~ExampleWriter() {
  try {
    close();
  } catch (...) {
  }
}

void ExampleWriter::write(const ExampleRecord& record) {
  validate_record(record);
  buffer_.clear();
  put_u32(buffer_, static_cast<std::uint32_t>(record.phonemes.size()));
  put_u32(buffer_, static_cast<std::uint32_t>(record.spans.size()));
  for (TokenId id : record.phonemes) put_u32(buffer_, static_cast<std::uint32_t>(id));
  for (const auto& s : record.spans) {
    put_u32(buffer_, s.start);
    put_u32(buffer_, s.length);
    put_u32(buffer_, static_cast<std::uint32_t>(s.grapheme));
  }
  std::vector<std::uint8_t> frame;
  frame.reserve(8);
  put_u32(frame, static_cast<std::uint32_t>(buffer_.size()));
  out_.write(reinterpret_cast<const char*>(frame.data()), 4);
  out_.write(reinterpret_cast<const char*>(buffer_.data()), static_cast<std::streamsize>(buffer_.size()));
  frame.clear();
  put_u32(frame, crc32_bytes(buffer_));
  out_.write(reinterpret_cast<const char*>(frame.data()), 4);
  if (!out_) throw Error("write failed at record " + std::to_string(count_));
  ++count_;
}

void ExampleWriter::close() {
  if (!out_.is_open()) return;
  out_.flush();
  const bool ok = static_cast<bool>(out_);
  out_.close();
  if (!ok) throw Error("failed to flush example file");
}

ExampleReader::ExampleReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw DataError("cannot open example file " + path.string());
  std::string header;
  if (!std::getline(in_, header)) throw FormatError("PLBERT-CORPUS: missing header");
  if (!header.starts_with("PLBERT-CORPUS")) throw FormatError("PLBERT-CORPUS: bad magic");
  if (header != kCorpusMagic) throw FormatError("PLBERT-CORPUS: version mismatch ('" + header + "')");
}

std::optional<ExampleRecord> ExampleReader::next() {
  std::uint8_t word[4];
  in_.read(reinterpret_cast<char*>(word), 4);
  if (in_.gcount() == 0 && in_.eof()) return std::nullopt;
  if (in_.gcount() != 4) throw record_error(index_, "truncated length prefix");
  const std::uint32_t size = get_u32(word);
  if (size > kMaxPayload || size < 8 || size % 4 != 0) throw record_error(index_, "implausible payload size");

  buffer_.resize(size);
  in_.read(reinterpret_cast<char*>(buffer_.data()), size);
  if (static_cast<std::uint32_t>(in_.gcount()) != size) throw record_error(index_, "truncated payload");
  in_.read(reinterpret_cast<char*>(word), 4);
  if (in_.gcount() != 4) throw record_error(index_, "truncated checksum");
  if (get_u32(word) != crc32_bytes(buffer_)) throw record_error(index_, "checksum mismatch");

  const std::uint8_t* p = buffer_.data();
  const std::uint32_t n = get_u32(p);
  const std::uint32_t n_spans = get_u32(p + 4);
  if (8ull + 4ull * n + 12ull * n_spans != size) throw record_error(index_, "payload size does not match header");
  p += 8;

  ExampleRecord record;
  record.phonemes.resize(n);
  for (std::uint32_t i = 0; i < n; ++i, p += 4) record.phonemes[i] = static_cast<TokenId>(get_u32(p));
  record.spans.resize(n_spans);
  for (std::uint32_t i = 0; i < n_spans; ++i, p += 12) {
    record.spans[i] = WordSpan{get_u32(p), get_u32(p + 4), static_cast<TokenId>(get_u32(p + 8))};
  }
  try {
    validate_record(record);
  } catch (const FormatError& e) {
    throw record_error(index_, e.what());
  }
  ++index_;
  return record;
}

void write_examples(std::span<const ExampleRecord> records, const std::filesystem::path& path) {
  ExampleWriter writer(path);
  for (const auto& r : records) writer.write(r);
  writer.close();
}

std::vector<ExampleRecord> read_examples(const std::filesystem::path& path) {
  ExampleReader reader(path);
  std::vector<ExampleRecord> records;
  while (auto r = reader.next()) records.push_back(std::move(*r));
  return records;
}

}  // namespace plbert
