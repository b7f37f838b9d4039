#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "uattr/diffcore/tensor.hpp"

namespace uattr::cli {

using diff::Tensor;

/// Text map file: `key=value` header lines (width, height, method,
/// residual, f_input, f_fiducial), a `values` line, then one signed decimal
/// per pixel in row-major order.
struct MapFile {
  std::size_t width = 0;
  std::size_t height = 0;
  std::string method;
  double residual = 0.0;
  double f_input = 0.0;
  double f_fiducial = 0.0;
  Tensor values;
};

std::string format_number(double v);
void write_map(const std::filesystem::path& path, const MapFile& m);
MapFile read_map(const std::filesystem::path& path);

/// Binary 8-bit PGM; attributions scaled symmetrically by max |a| with 128 at zero.
void write_attribution_pgm(const std::filesystem::path& path, const Tensor& values, std::size_t width,
                           std::size_t height);
std::vector<unsigned char> attribution_gray_levels(const Tensor& values);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Files and directories created by one command. Unless commit() is
/// called, the destructor deletes them again.
class OutputSet {
 public:
  OutputSet() = default;
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet();

  /// Registers `path` for cleanup and creates its missing parent directories.
  std::filesystem::path add(const std::filesystem::path& path);
  void commit() { committed_ = true; }

 private:
  std::vector<std::filesystem::path> files_;
  std::vector<std::filesystem::path> dirs_;
  bool committed_ = false;
};

/// Calls fn(i) for i in [0, count) on up to `threads` workers (0 means the
/// hardware concurrency). Results keep index order; the first failure by
/// index is rethrown.
template <class T>
std::vector<T> parallel_map(std::size_t count, std::size_t threads, const std::function<T(std::size_t)>& fn);

std::size_t resolve_threads(std::size_t requested);
void run_parallel(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

template <class T>
std::vector<T> parallel_map(std::size_t count, std::size_t threads, const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(count);
  run_parallel(count, threads, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

}  // namespace uattr::cli
