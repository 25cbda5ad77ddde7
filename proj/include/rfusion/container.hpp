#pragma once

// Binary container shared by checkpoints and datasets:
//
//   "RFUSION\0"  u32 version  u32 kind
//   u32 #metadata, then (string key, string value) pairs
//   u32 #matrices, then (string name, u64 rows, u64 cols, rows*cols f64)
//
// Strings are u32 length + bytes. Everything is little-endian; doubles are
// stored bit-exact so a load/save round trip reproduces the file byte for byte.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace rfusion {

inline constexpr std::uint32_t kContainerVersion = 1;

enum class ContainerKind : std::uint32_t { checkpoint = 1, dataset = 2 };

struct NamedMatrix {
  std::string name;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<double> data;  // row-major
};

struct Container {
  ContainerKind kind = ContainerKind::checkpoint;
  std::map<std::string, std::string> metadata;  // sorted, so files are canonical
  std::vector<NamedMatrix> matrices;

  /// DataError when absent.
  const NamedMatrix& matrix(const std::string& name) const;
  const std::string& meta(const std::string& key) const;
};

std::string encode_container(const Container& c);
/// DataError on a bad magic, version, kind or truncated payload.
Container decode_container(const std::string& bytes);

void save_container(const std::filesystem::path& path, const Container& c);
Container load_container(const std::filesystem::path& path, ContainerKind expected);

}  // namespace rfusion
