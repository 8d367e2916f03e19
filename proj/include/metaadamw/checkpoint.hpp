#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "metaadamw/tensor.hpp"

namespace metaadamw {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

/// Layout (all integers little-endian):
///   "MADWCKPT" | u32 version | u32 len, kind | u64 step | u32 count
///   count x (u32 len, name | u32 rank | rank x u64 extent)
///   every array's data as f64, in table order
struct Checkpoint {
  std::string kind;
  std::uint64_t step = 0;
  std::vector<NamedArray> arrays;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on a bad magic, a different version, or a short
/// blob.
Checkpoint decode_checkpoint(std::string_view blob);

void write_file(const std::string& path, std::string_view bytes);
std::string read_file(const std::string& path);

}  // namespace metaadamw
