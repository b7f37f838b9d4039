#include "uattr/cli/artifacts.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace uattr::cli {

namespace fs = std::filesystem;

std::string format_number(double v) {
  char buf[64];
  if (v == 0.0) v = 0.0;
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf, end);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_map(const fs::path& path, const MapFile& m) {
  if (m.values.size() != m.width * m.height) throw std::invalid_argument("map size does not match width x height");
  std::string s;
  s += "width=" + std::to_string(m.width) + "\n";
  s += "height=" + std::to_string(m.height) + "\n";
  s += "method=" + m.method + "\n";
  s += "residual=" + format_number(m.residual) + "\n";
  s += "f_input=" + format_number(m.f_input) + "\n";
  s += "f_fiducial=" + format_number(m.f_fiducial) + "\n";
  s += "values\n";
  for (double v : m.values.data()) s += format_number(v) + "\n";
  write_text(path, s);
}

MapFile read_map(const fs::path& path) {
  std::istringstream in(read_text(path));
  MapFile m;
  std::string line;
  auto number = [&](const std::string& text) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size()) {
      throw std::runtime_error(path.string() + ": bad number '" + text + "'");
    }
    return v;
  };
  bool in_values = false;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (in_values) {
      if (!line.empty()) values.push_back(number(line));
      continue;
    }
    if (line == "values") {
      in_values = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(path.string() + ": bad header line '" + line + "'");
    const auto key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "width") m.width = static_cast<std::size_t>(number(value));
    else if (key == "height") m.height = static_cast<std::size_t>(number(value));
    else if (key == "method") m.method = value;
    else if (key == "residual") m.residual = number(value);
    else if (key == "f_input") m.f_input = number(value);
    else if (key == "f_fiducial") m.f_fiducial = number(value);
    else throw std::runtime_error(path.string() + ": unknown header key '" + key + "'");
  }
  if (!in_values || m.width == 0 || m.height == 0 || values.size() != m.width * m.height) {
    throw std::runtime_error(path.string() + ": map file is incomplete");
  }
  const std::size_t n = values.size();
  m.values = Tensor({n}, std::move(values));
  return m;
}

std::vector<unsigned char> attribution_gray_levels(const Tensor& values) {
  double scale = 0.0;
  for (double v : values.data()) scale = std::max(scale, std::fabs(v));
  std::vector<unsigned char> out;
  out.reserve(values.size());
  for (double v : values.data()) {
    const double level = scale > 0.0 ? 128.0 + 127.0 * v / scale : 128.0;
    out.push_back(static_cast<unsigned char>(std::clamp(std::lround(level), 0L, 255L)));
  }
  return out;
}

void write_attribution_pgm(const fs::path& path, const Tensor& values, std::size_t width, std::size_t height) {
  if (values.size() != width * height) throw std::invalid_argument("map size does not match width x height");
  const auto levels = attribution_gray_levels(values);
  std::string s = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  s.append(levels.begin(), levels.end());
  write_text(path, s);
}

OutputSet::~OutputSet() {
  if (committed_) return;
  std::error_code ec;
  for (auto it = files_.rbegin(); it != files_.rend(); ++it) fs::remove(*it, ec);
  for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) {
    if (fs::is_directory(*it, ec) && fs::is_empty(*it, ec)) fs::remove(*it, ec);
  }
}

fs::path OutputSet::add(const fs::path& path) {
  std::vector<fs::path> missing;
  for (auto p = path.parent_path(); !p.empty() && !fs::exists(p); p = p.parent_path()) missing.push_back(p);
  for (auto it = missing.rbegin(); it != missing.rend(); ++it) {
    fs::create_directory(*it);
    dirs_.push_back(*it);
  }
  files_.push_back(path);
  return path;
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void run_parallel(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min(resolve_threads(threads), std::max<std::size_t>(count, 1));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace uattr::cli
