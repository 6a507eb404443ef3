// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: the fixed magic bytes, a u32 format version, a u32
// record count, then per record a u32 name length, the name, a u32 rank, u64
// extents and a little-endian f64 payload.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "triad/error.hpp"
#include "triad/tensor.hpp"

namespace triad {

inline constexpr char kCheckpointMagic[] = "VALORCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  using Error::Error;
};
class CheckpointMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
// A record is missing, unexpected, or its shape disagrees with the configured model.
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

void write_checkpoint(std::ostream& out, const std::vector<CheckpointRecord>& records);
void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records);

/// Reads every record or throws; trailing bytes count as corruption.
std::vector<CheckpointRecord> read_checkpoint(std::istream& in);
std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path);

// Strings travel as one f64 per byte.
CheckpointRecord string_record(const std::string& name, const std::string& value);
std::string record_string(const CheckpointRecord& record);

}  // namespace triad
