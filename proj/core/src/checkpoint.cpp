// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace triad {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr std::size_t kMagicSize = sizeof(kCheckpointMagic) - 1;
// Guards against absurd allocations from corrupted headers.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw CheckpointTruncatedError(std::string("checkpoint ends inside ") + what);
  }
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<CheckpointRecord>& records) {
  out.write(kCheckpointMagic, kMagicSize);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (numel(r.shape) != r.data.size()) throw ContractError("record '" + r.name + "' has a payload/shape mismatch");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
    for (std::size_t e : r.shape) put<std::uint64_t>(out, e);
    out.write(reinterpret_cast<const char*>(r.data.data()), static_cast<std::streamsize>(r.data.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("failed to write checkpoint");
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp + " for writing");
    write_checkpoint(out, records);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<CheckpointRecord> read_checkpoint(std::istream& in) {
  char magic[kMagicSize];
  if (!in.read(magic, kMagicSize)) throw CheckpointTruncatedError("checkpoint ends inside the magic bytes");
  if (std::memcmp(magic, kCheckpointMagic, kMagicSize) != 0) throw CheckpointMagicError("not a checkpoint file");
  const auto version = get<std::uint32_t>(in, "the version");
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  }
  const auto count = get<std::uint32_t>(in, "the record count");
  std::vector<CheckpointRecord> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord r;
    const auto name_size = get<std::uint32_t>(in, "a record name length");
    if (name_size > 4096) throw CheckpointTruncatedError("corrupt record name length");
    r.name.resize(name_size);
    if (!in.read(r.name.data(), name_size)) throw CheckpointTruncatedError("checkpoint ends inside a record name");
    const auto rank = get<std::uint32_t>(in, "a record rank");
    if (rank > 8) throw CheckpointTruncatedError("corrupt rank for record '" + r.name + "'");
    std::uint64_t elements = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto e = get<std::uint64_t>(in, "record extents");
      elements *= e;
      if (elements > kMaxElements) throw CheckpointTruncatedError("corrupt extents for record '" + r.name + "'");
      r.shape.push_back(static_cast<std::size_t>(e));
    }
    r.data.resize(static_cast<std::size_t>(elements));
    if (!in.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(elements * sizeof(double)))) {
      throw CheckpointTruncatedError("checkpoint ends inside record '" + r.name + "'");
    }
    records.push_back(std::move(r));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after the last record");
  return records;
}

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

CheckpointRecord string_record(const std::string& name, const std::string& value) {
  CheckpointRecord r{name, {value.size()}, {}};
  for (unsigned char c : value) r.data.push_back(c);
  return r;
}

std::string record_string(const CheckpointRecord& record) {
  std::string out;
  for (double v : record.data) {
    if (!(v >= 0.0 && v < 256.0)) throw CheckpointError("record '" + record.name + "' is not a string");
    out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  return out;
}

}  // namespace triad
