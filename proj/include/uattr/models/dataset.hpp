#pragma once

#include <cstddef>
#include <vector>

#include "uattr/diffcore/tensor.hpp"

namespace uattr::models {

enum class Split { Train, Validation };

/// Grayscale images flattened row-major, pixel values in [0,1].
struct Dataset {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t num_classes = 0;
  Split split = Split::Train;
  std::vector<diff::Tensor> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
  std::size_t pixel_count() const { return width * height; }
  bool empty() const { return images.empty(); }

  /// Throws std::invalid_argument when pixels or labels are out of range.
  void validate() const;

  /// First `count` samples (or all, if fewer).
  Dataset head(std::size_t count) const;
};

}  // namespace uattr::models
