#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hrl/mlp.hpp"

namespace hrl {

/// Parameter file layout, all integers little-endian:
///
///   "HRLL" | u32 version | u32 layer_count | u32 size[layer_count]
///   | u32 activation | u64 n | f64 params[n] | u32 crc32(all previous bytes)
///
/// Agent checkpoints wrap any number of parameter records plus named u64
/// counters:
///
///   "HRLC" | u32 version | u32 len, agent name | u32 record_count
///   | { u32 len, name | u64 len, parameter record }* | u32 counter_count
///   | { u32 len, name | u64 value }* | u32 crc32(all previous bytes)
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct NamedParameters {
  std::string name;
  NetworkSpec spec;
  ParameterSet params;
};

struct Checkpoint {
  std::string agent;
  std::vector<NamedParameters> records;
  std::vector<std::pair<std::string, std::uint64_t>> counters;

  /// Throws CheckpointError(Mismatch) when absent.
  const NamedParameters& record(const std::string& name) const;
  std::uint64_t counter(const std::string& name) const;
};

std::vector<std::uint8_t> encode_params(const NetworkSpec& spec, const ParameterSet& params);
NamedParameters decode_params(std::span<const std::uint8_t> bytes);

void save_params(const std::filesystem::path& path, const NetworkSpec& spec, const ParameterSet& params);
NamedParameters load_params(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace hrl
