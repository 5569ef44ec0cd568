#include "hrl/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "hrl/errors.hpp"

namespace hrl {

namespace {

constexpr char kParamMagic[4] = {'H', 'R', 'L', 'L'};
constexpr char kCheckpointMagic[4] = {'H', 'R', 'L', 'C'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> finish() {
    const auto crc = crc32(out_);
    u32(crc);
    return std::move(out_);
  }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > data_.size() - pos_) throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint data ends early");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    auto s = take(n);
    return {s.begin(), s.end()};
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

// Magic, version and checksum shared by both layouts. Returns the payload
// between the version field and the trailing CRC.
std::span<const std::uint8_t> open_envelope(std::span<const std::uint8_t> bytes, const char (&magic)[4]) {
  if (bytes.size() < 12) throw CheckpointError(CheckpointError::Kind::Truncated, "file too short to be a checkpoint");
  if (std::memcmp(bytes.data(), magic, 4) != 0)
    throw CheckpointError(CheckpointError::Kind::Format, "bad magic, expected " + std::string(magic, 4));
  Reader header(bytes.subspan(4, 4));
  const auto version = header.u32();
  if (version != kCheckpointFormatVersion)
    throw CheckpointError(CheckpointError::Kind::Version,
                          "unsupported format version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointFormatVersion) + ")");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (tail.u32() != crc32(body)) throw CheckpointError(CheckpointError::Kind::Checksum, "checksum mismatch");
  return body.subspan(8);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32_z(crc, bytes.data(), bytes.size());
  return static_cast<std::uint32_t>(crc);
}

const NamedParameters& Checkpoint::record(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return r;
  }
  throw CheckpointError(CheckpointError::Kind::Mismatch, "checkpoint has no '" + name + "' record");
}

std::uint64_t Checkpoint::counter(const std::string& name) const {
  for (const auto& [key, value] : counters) {
    if (key == name) return value;
  }
  throw CheckpointError(CheckpointError::Kind::Mismatch, "checkpoint has no '" + name + "' counter");
}

std::vector<std::uint8_t> encode_params(const NetworkSpec& spec, const ParameterSet& params) {
  spec.validate();
  if (params.size() != spec.parameter_count())
    throw std::invalid_argument("parameter count does not match network spec");
  if (!params.all_finite()) throw DivergenceError("refusing to save non-finite parameters");
  Writer w;
  w.bytes(kParamMagic, 4);
  w.u32(kCheckpointFormatVersion);
  w.u32(static_cast<std::uint32_t>(spec.layer_sizes.size()));
  for (auto n : spec.layer_sizes) w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(spec.activation));
  w.u64(params.size());
  for (double v : params.values) w.f64(v);
  return w.finish();
}

NamedParameters decode_params(std::span<const std::uint8_t> bytes) {
  Reader r(open_envelope(bytes, kParamMagic));
  NamedParameters out;
  const auto layers = r.u32();
  out.spec.layer_sizes.resize(layers);
  for (auto& n : out.spec.layer_sizes) n = r.u32();
  out.spec.activation = static_cast<Activation>(r.u32());
  try {
    out.spec.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointError::Kind::Format, std::string("invalid network spec: ") + e.what());
  }
  const auto n = r.u64();
  if (n != out.spec.parameter_count())
    throw CheckpointError(CheckpointError::Kind::Format, "parameter count does not match the stored network spec");
  out.params.values.resize(n);
  for (auto& v : out.params.values) v = r.f64();
  if (!r.done()) throw CheckpointError(CheckpointError::Kind::Format, "trailing bytes after parameters");
  out.params.version = kCheckpointFormatVersion;
  return out;
}

void save_params(const std::filesystem::path& path, const NetworkSpec& spec, const ParameterSet& params) {
  write_file(path, encode_params(spec, params));
}

NamedParameters load_params(const std::filesystem::path& path) {
  return decode_params(read_file(path));
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointFormatVersion);
  w.str(checkpoint.agent);
  w.u32(static_cast<std::uint32_t>(checkpoint.records.size()));
  for (const auto& rec : checkpoint.records) {
    w.str(rec.name);
    const auto blob = encode_params(rec.spec, rec.params);
    w.u64(blob.size());
    w.bytes(blob.data(), blob.size());
  }
  w.u32(static_cast<std::uint32_t>(checkpoint.counters.size()));
  for (const auto& [name, value] : checkpoint.counters) {
    w.str(name);
    w.u64(value);
  }
  return w.finish();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(open_envelope(bytes, kCheckpointMagic));
  Checkpoint out;
  out.agent = r.str();
  const auto records = r.u32();
  for (std::uint32_t i = 0; i < records; ++i) {
    auto name = r.str();
    const auto len = r.u64();
    auto rec = decode_params(r.take(len));
    rec.name = std::move(name);
    out.records.push_back(std::move(rec));
  }
  const auto counters = r.u32();
  for (std::uint32_t i = 0; i < counters; ++i) {
    auto name = r.str();
    out.counters.emplace_back(std::move(name), r.u64());
  }
  if (!r.done()) throw CheckpointError(CheckpointError::Kind::Format, "trailing bytes in checkpoint");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace hrl
