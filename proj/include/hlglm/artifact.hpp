// artifact.hpp -- binary model serialization. Layout: magic "HLGM", u32
// version, u64 header length, JSON header (shapes, names, scalars), u64
// double count, raw little-endian f64 payload (tensors, penalty scales,
// Fisher weights), trailing u64 FNV-1a checksum over everything before it.
// No timestamps or environment data: identical inputs give identical bytes.
#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "hlglm/data.hpp"
#include "hlglm/fit.hpp"

namespace hlglm {

inline constexpr std::uint32_t kArtifactVersion = 1;

struct ModelArtifact {
  std::uint32_t version = kArtifactVersion;
  FittedModel model;
  ZScoreStats zscore;      // feature standardization fitted on training data
  ColumnSchema schema;     // response / feature column names
  std::string config_hash; // hex digest of the resolved run configuration
  std::string tool;        // producer tag, e.g. "hlglm/0.1.0"
};

void save_model(const ModelArtifact& art, const std::string& path);

// UnsupportedVersion names both the file's and the reader's version;
// truncation or byte corruption is ChecksumError.
ModelArtifact load_model(const std::string& path);

std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t h = 14695981039346656037ull);

// 16-hex-char FNV-1a digest of a string (config hashing).
std::string fnv1a_hex(const std::string& text);

// Lattice spec <-> JSON array of dims, shared by the artifact header and the
// standalone lattice files the CLI reads and writes.
nlohmann::json lattice_to_json(const LatticeSpec& spec);
LatticeSpec lattice_from_json(const nlohmann::json& dims);

}  // namespace hlglm
