#include "uattr/models/dataset.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace uattr::models {

void Dataset::validate() const {
  if (images.size() != labels.size()) throw std::invalid_argument("dataset has mismatched image and label counts");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].size() != pixel_count()) {
      throw std::invalid_argument("image " + std::to_string(i) + " does not have width*height pixels");
    }
    for (double v : images[i].data()) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("image " + std::to_string(i) + " has pixels outside [0,1]");
    }
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " outside [0, classes)");
    }
  }
}

Dataset Dataset::head(std::size_t count) const {
  Dataset d = *this;
  const auto n = std::min(count, images.size());
  d.images.resize(n);
  d.labels.resize(n);
  return d;
}

}  // namespace uattr::models
