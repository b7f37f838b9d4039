#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "uattr/models/classifier.hpp"
#include "uattr/models/vae.hpp"

namespace uattr::models {

// Binary weight file, all integers little-endian:
//
//   "UATW"  u8 version(=1)  u8 kind
//   u64 seed  u32 epochs  f64 learning_rate  f64 dropout_rate  u32 trunk_depth
//   u32 layer_count  { u32 rows  u32 cols } * layer_count
//   f64 payload[sum rows*cols]
//   u32 crc32(payload bytes)
//
// Each "layer" entry is one weight matrix or bias row, in model order.

inline constexpr std::uint8_t kCheckpointVersion = 1;

enum class ModelKind : std::uint8_t { Classifier = 1, Vae = 2 };

struct TrainingEcho {
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;
  double learning_rate = 0.0;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class VersionMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class TruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class ShapePayloadError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

std::vector<std::uint8_t> encode_checkpoint(const Classifier& c, const TrainingEcho& echo);
std::vector<std::uint8_t> encode_checkpoint(const VaeModel& v, const TrainingEcho& echo);

struct LoadedClassifier {
  Classifier model;
  TrainingEcho echo;
};
struct LoadedVae {
  VaeModel model;
  TrainingEcho echo;
};

LoadedClassifier decode_classifier(const std::vector<std::uint8_t>& bytes);
LoadedVae decode_vae(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Classifier& c, const TrainingEcho& echo, const std::filesystem::path& path);
void save_checkpoint(const VaeModel& v, const TrainingEcho& echo, const std::filesystem::path& path);
LoadedClassifier load_classifier(const std::filesystem::path& path);
LoadedVae load_vae(const std::filesystem::path& path);

}  // namespace uattr::models
