#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "uattr/models/dataset.hpp"

namespace uattr::cli {

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

/// Big-endian unsigned-byte IDX file; `expected_magic` fixes type and rank.
IdxArray read_idx(const std::filesystem::path& path, std::uint32_t expected_magic);
IdxArray parse_idx(const std::vector<std::uint8_t>& bytes, std::uint32_t expected_magic);

/// Image/label IDX pair; pixels divided by 255.
models::Dataset ingest_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                           models::Split split = models::Split::Train);

/// 16x16 two-class set: filled discs (label 0) and hollow rings (label 1)
/// with random centre, radius and hole size, plus N(0, 0.1) pixel noise
/// clipped to [0,1].
models::Dataset gen_synthetic(std::uint64_t seed, std::size_t count, models::Split split = models::Split::Train);

}  // namespace uattr::cli
