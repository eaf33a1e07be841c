// SPDX-License-Identifier: Apache-2.0
#include "plbert/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "plbert/errors.hpp"
#include "plbert/record_io.hpp"

namespace plbert {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::uint32_t crc_of(const void* data, std::size_t n) {
  return crc32_bytes({static_cast<const std::uint8_t*>(data), n});
}

[[noreturn]] void bad(const std::string& what) { throw FormatError(std::string(kCheckpointMagic) + ": " + what); }

std::string read_line(std::istream& in, std::string_view what) {
  std::string line;
  if (!std::getline(in, line)) bad("truncated before " + std::string(what));
  return line;
}

template <class Int>
Int parse_int(std::string_view text, std::string_view what) {
  Int v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size()) bad("invalid " + std::string(what) + " '" + std::string(text) + "'");
  return v;
}

double parse_double(std::string_view text, std::string_view what) {
  const std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) bad("invalid " + std::string(what) + " '" + s + "'");
  return v;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

void write_tensor(std::ostream& out, std::string_view name, const Matrix<float>& m) {
  const std::size_t bytes = m.size() * sizeof(float);
  out << name << ' ' << m.rows() << ' ' << m.cols() << ' ' << hex32(crc_of(m.data(), bytes)) << '\n';
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(bytes));
}

struct Expected {
  std::string name;
  Matrix<float>* target;
};

}  // namespace

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::vector<std::pair<std::string, std::string>> model_config_entries(const ModelConfig& c) {
  return {
      {"model.n_layers", std::to_string(c.n_layers)},
      {"model.hidden", std::to_string(c.hidden)},
      {"model.intermediate", std::to_string(c.intermediate)},
      {"model.heads", std::to_string(c.heads)},
      {"model.embed", std::to_string(c.embed)},
      {"model.max_len", std::to_string(c.max_len)},
      {"model.phoneme_vocab_size", std::to_string(c.phoneme_vocab_size)},
      {"model.grapheme_vocab_size", std::to_string(c.grapheme_vocab_size)},
      {"model.layernorm_eps", format_double(c.layernorm_eps)},
      {"model.dropout", format_double(c.dropout)},
      {"model.init_std", format_double(c.init_std)},
      {"model.tie_mlm_head", c.tie_mlm_head ? "1" : "0"},
  };
}

std::optional<std::string> Checkpoint::setting(std::string_view key) const {
  for (const auto& [k, v] : settings) {
    if (k == key) return v;
  }
  return std::nullopt;
}

void save_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  if (ckpt.kind == CheckpointKind::full && !ckpt.params.has_heads()) {
    throw UsageError("a full checkpoint needs prediction heads");
  }
  if (ckpt.kind == CheckpointKind::encoder && (ckpt.params.has_heads() || ckpt.adam)) {
    throw UsageError("an encoder checkpoint carries no heads or optimizer state");
  }
  std::string block;
  for (const auto& [k, v] : model_config_entries(ckpt.params.config)) block += k + "=" + v + "\n";
  for (const auto& [k, v] : ckpt.settings) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos || v.find('\n') != std::string::npos) {
      throw UsageError("invalid checkpoint setting '" + k + "'");
    }
    block += k + "=" + v + "\n";
  }

  std::vector<std::pair<std::string, const Matrix<float>*>> tensors;
  ckpt.params.for_each([&](const auto& f, const Matrix<float>& m) { tensors.emplace_back(std::string(f.name), &m); });
  if (ckpt.adam) {
    ckpt.adam->m.for_each([&](const auto& f, const Matrix<float>& m) { tensors.emplace_back("adam.m/" + std::string(f.name), &m); });
    ckpt.adam->v.for_each([&](const auto& f, const Matrix<float>& m) { tensors.emplace_back("adam.v/" + std::string(f.name), &m); });
  }

  out << kCheckpointMagic << ' ' << (ckpt.kind == CheckpointKind::full ? "full" : "encoder") << '\n';
  out << "config " << block.size() << ' ' << hex32(crc_of(block.data(), block.size())) << '\n' << block;
  out << "tensors " << tensors.size() << '\n';
  for (const auto& [name, m] : tensors) write_tensor(out, name, *m);
  out << "end\n";
  if (!out) throw DataError("failed to write checkpoint");
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
    save_checkpoint(ckpt, out);
    out.close();
    if (!out) throw DataError("failed to write '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(std::istream& in) {
  Checkpoint ckpt;
  const std::string header = read_line(in, "header");
  const auto head = split_ws(header);
  if (head.size() != 3 || std::string(head[0]) + " " + std::string(head[1]) != kCheckpointMagic) {
    if (header.starts_with("PLBERT-CKPT ")) bad("unsupported version in header '" + header + "'");
    bad("bad magic");
  }
  if (head[2] == "full") {
    ckpt.kind = CheckpointKind::full;
  } else if (head[2] == "encoder") {
    ckpt.kind = CheckpointKind::encoder;
  } else {
    bad("unknown kind '" + std::string(head[2]) + "'");
  }

  const std::string cfg_line = read_line(in, "config");
  const auto cfg = split_ws(cfg_line);
  if (cfg.size() != 3 || cfg[0] != "config") bad("missing config block");
  const auto block_size = parse_int<std::size_t>(cfg[1], "config size");
  if (block_size > (1u << 20)) bad("config block too large");
  std::string block(block_size, '\0');
  if (!in.read(block.data(), static_cast<std::streamsize>(block_size))) bad("truncated config block");
  if (hex32(crc_of(block.data(), block.size())) != cfg[2]) bad("config checksum mismatch");

  ModelConfig& mc = ckpt.params.config;
  std::istringstream lines(block);
  std::string line;
  std::size_t model_keys = 0;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad("malformed config line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (!key.starts_with("model.")) {
      ckpt.settings.emplace_back(key, value);
      continue;
    }
    ++model_keys;
    if (key == "model.n_layers") mc.n_layers = parse_int<std::size_t>(value, key);
    else if (key == "model.hidden") mc.hidden = parse_int<std::size_t>(value, key);
    else if (key == "model.intermediate") mc.intermediate = parse_int<std::size_t>(value, key);
    else if (key == "model.heads") mc.heads = parse_int<std::size_t>(value, key);
    else if (key == "model.embed") mc.embed = parse_int<std::size_t>(value, key);
    else if (key == "model.max_len") mc.max_len = parse_int<std::size_t>(value, key);
    else if (key == "model.phoneme_vocab_size") mc.phoneme_vocab_size = parse_int<std::size_t>(value, key);
    else if (key == "model.grapheme_vocab_size") mc.grapheme_vocab_size = parse_int<std::size_t>(value, key);
    else if (key == "model.layernorm_eps") mc.layernorm_eps = parse_double(value, key);
    else if (key == "model.dropout") mc.dropout = parse_double(value, key);
    else if (key == "model.init_std") mc.init_std = parse_double(value, key);
    else if (key == "model.tie_mlm_head") mc.tie_mlm_head = parse_int<int>(value, key) != 0;
    else bad("unknown config key '" + key + "'");
  }
  if (model_keys != 12) bad("incomplete model config");
  try {
    mc.validate();
  } catch (const UsageError& e) {
    bad(std::string("invalid model config: ") + e.what());
  }

  const bool full = ckpt.kind == CheckpointKind::full;
  ckpt.params = zero_params<float>(mc, full);
  std::vector<Expected> expected;
  ckpt.params.for_each([&](const auto& f, Matrix<float>& m) { expected.push_back({std::string(f.name), &m}); });
  const std::size_t n_params = expected.size();

  const std::string tl_line = read_line(in, "tensor table");
  const auto tl = split_ws(tl_line);
  if (tl.size() != 2 || tl[0] != "tensors") bad("missing tensor table");
  const auto count = parse_int<std::size_t>(tl[1], "tensor count");
  if (count == 3 * n_params && full) {
    ckpt.adam = make_adam_state(ckpt.params);
    ckpt.adam->m.for_each([&](const auto& f, Matrix<float>& m) { expected.push_back({"adam.m/" + std::string(f.name), &m}); });
    ckpt.adam->v.for_each([&](const auto& f, Matrix<float>& m) { expected.push_back({"adam.v/" + std::string(f.name), &m}); });
  } else if (count != n_params) {
    bad("expected " + std::to_string(n_params) + " tensors, found " + std::to_string(count));
  }

  for (const auto& e : expected) {
    const std::string parts_line = read_line(in, "tensor '" + e.name + "'");
    const auto parts = split_ws(parts_line);
    if (parts.size() != 4 || parts[0] != e.name) bad("expected tensor '" + e.name + "'");
    const auto rows = parse_int<std::size_t>(parts[1], "rows");
    const auto cols = parse_int<std::size_t>(parts[2], "cols");
    if (rows != e.target->rows() || cols != e.target->cols()) {
      bad("tensor '" + e.name + "' has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
          ", config implies " + std::to_string(e.target->rows()) + "x" + std::to_string(e.target->cols()));
    }
    const std::size_t bytes = e.target->size() * sizeof(float);
    if (!in.read(reinterpret_cast<char*>(e.target->data()), static_cast<std::streamsize>(bytes))) {
      bad("truncated tensor '" + e.name + "'");
    }
    if (hex32(crc_of(e.target->data(), bytes)) != parts[3]) bad("checksum mismatch in tensor '" + e.name + "'");
  }
  if (read_line(in, "end marker") != "end") bad("missing end marker");
  if (in.peek() != std::char_traits<char>::eof()) bad("trailing data after end marker");
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  return load_checkpoint(in);
}

Checkpoint export_encoder(const Checkpoint& ckpt) {
  Checkpoint out;
  out.kind = CheckpointKind::encoder;
  out.params = strip_heads(ckpt.params);
  return out;
}

}  // namespace plbert
