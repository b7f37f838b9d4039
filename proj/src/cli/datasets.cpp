#include "uattr/cli/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <string>

namespace uattr::cli {

IdxArray parse_idx(const std::vector<std::uint8_t>& bytes, std::uint32_t expected_magic) {
  auto be32 = [&](std::size_t at) {
    return (static_cast<std::uint32_t>(bytes[at]) << 24) | (static_cast<std::uint32_t>(bytes[at + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[at + 2]) << 8) | static_cast<std::uint32_t>(bytes[at + 3]);
  };
  if (bytes.size() < 4) throw IdxError("IDX file is too short for a header");
  const auto magic = be32(0);
  if (magic != expected_magic) {
    char buf[11];
    std::snprintf(buf, sizeof buf, "0x%08x", magic);
    throw IdxError(std::string("bad IDX magic ") + buf);
  }
  const std::size_t rank = magic & 0xff;
  if (bytes.size() < 4 + 4 * rank) throw IdxError("IDX header is truncated");
  IdxArray out;
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const auto d = be32(4 + 4 * i);
    out.dims.push_back(d);
    total *= d;
    if (total > static_cast<std::uint64_t>(std::numeric_limits<std::int32_t>::max())) {
      throw IdxError("IDX dimensions overflow");
    }
  }
  const std::size_t offset = 4 + 4 * rank;
  if (bytes.size() - offset < total) throw IdxError("IDX payload is truncated");
  out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                  bytes.begin() + static_cast<std::ptrdiff_t>(offset + total));
  return out;
}

IdxArray read_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(bytes, expected_magic);
}

models::Dataset ingest_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                           models::Split split) {
  const auto im = read_idx(images, kIdxImageMagic);
  const auto lb = read_idx(labels, kIdxLabelMagic);
  if (im.dims[0] != lb.dims[0]) throw IdxError("image and label files disagree on the sample count");
  models::Dataset d;
  d.split = split;
  d.height = im.dims[1];
  d.width = im.dims[2];
  const std::size_t n = d.pixel_count();
  int max_label = 1;
  for (std::uint32_t i = 0; i < im.dims[0]; ++i) {
    diff::Tensor t({n});
    for (std::size_t p = 0; p < n; ++p) t[p] = static_cast<double>(im.data[i * n + p]) / 255.0;
    d.images.push_back(std::move(t));
    d.labels.push_back(lb.data[i]);
    max_label = std::max(max_label, static_cast<int>(lb.data[i]));
  }
  d.num_classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

models::Dataset gen_synthetic(std::uint64_t seed, std::size_t count, models::Split split) {
  constexpr std::size_t kSide = 16;
  models::Dataset d;
  d.width = kSide;
  d.height = kSide;
  d.num_classes = 2;
  d.split = split;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (std::size_t s = 0; s < count; ++s) {
    const int label = unit(rng) < 0.5 ? 0 : 1;
    const double cx = 7.5 + (unit(rng) - 0.5) * 3.0;
    const double cy = 7.5 + (unit(rng) - 0.5) * 3.0;
    const double outer = 4.0 + 2.5 * unit(rng);
    const double inner = outer * (0.35 + 0.3 * unit(rng));
    diff::Tensor img({kSide * kSide});
    for (std::size_t r = 0; r < kSide; ++r) {
      for (std::size_t c = 0; c < kSide; ++c) {
        const double dist = std::hypot(static_cast<double>(c) - cx, static_cast<double>(r) - cy);
        double v = std::clamp(outer + 0.5 - dist, 0.0, 1.0);
        if (label == 1) v *= std::clamp(dist - inner + 0.5, 0.0, 1.0);
        img[r * kSide + c] = std::clamp(v + noise(rng), 0.0, 1.0);
      }
    }
    d.images.push_back(std::move(img));
    d.labels.push_back(label);
  }
  return d;
}

}  // namespace uattr::cli
