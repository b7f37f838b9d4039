#include "uattr/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace uattr::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

}  // namespace

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> d{
      {"seed", "7"},
      {"dataset", "synthetic"},
      {"train_count", "1000"},
      {"val_count", "200"},
      {"train_images", ""},
      {"train_labels", ""},
      {"val_images", ""},
      {"val_labels", ""},
      {"classifier_hidden", "128"},
      {"dropout", "0.5"},
      {"classifier_epochs", "10"},
      {"classifier_lr", "0.001"},
      {"batch_size", "32"},
      {"latent_dim", "16"},
      {"vae_hidden", "256"},
      {"vae_epochs", "50"},
      {"vae_lr", "0.001"},
      {"penalty", "100"},
      {"fiducial_lr", "0.05"},
      {"entropy_target", "0.05"},
      {"max_iterations", "2000"},
      {"tolerance", "1e-5"},
      {"bins", "50"},
      {"posterior_samples", "32"},
      {"posterior_entropy", "false"},
      {"blur_grid", "0.5,1,2,4,8"},
      {"images", "10"},
      {"aggregate", "mean"},
      {"method", "generative"},
      {"pgm", "true"},
      {"threads", "0"},
      {"sweep_latent_dims", "4,8,16,32"},
      {"out", "run"},
  };
  return d;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const auto key = trim(t.substr(0, eq));
    if (c.values_.count(key) != 0) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    c.set(key, trim(t.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (defaults().count(key) == 0) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::raw(const std::string& key) const {
  const auto& d = defaults();
  const auto it = d.find(key);
  if (it == d.end()) throw ConfigError("unknown config key '" + key + "'");
  read_.insert(key);
  const auto v = values_.find(key);
  return v == values_.end() ? it->second : v->second;
}

std::string RunConfig::str(const std::string& key) const { return raw(key); }

std::uint64_t RunConfig::u64(const std::string& key) const {
  const auto& s = raw(key);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw ConfigError("'" + key + "' must be a non-negative integer, got '" + s + "'");
  }
  return v;
}

std::size_t RunConfig::count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

double RunConfig::real(const std::string& key) const {
  const auto& s = raw(key);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("'" + key + "' must be a finite number, got '" + s + "'");
  }
  return v;
}

bool RunConfig::flag(const std::string& key) const {
  const auto& s = raw(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("'" + key + "' must be true or false, got '" + s + "'");
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& part : split(raw(key), ',')) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || end != part.data() + part.size()) {
      throw ConfigError("'" + key + "' must be a comma-separated list of numbers");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> RunConfig::counts(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& part : split(raw(key), ',')) {
    std::size_t v = 0;
    const auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || end != part.data() + part.size()) {
      throw ConfigError("'" + key + "' must be a comma-separated list of integers");
    }
    out.push_back(v);
  }
  return out;
}

std::map<std::string, std::string> RunConfig::consumed() const {
  std::map<std::string, std::string> out;
  for (const auto& k : read_) {
    const auto v = values_.find(k);
    out[k] = v == values_.end() ? defaults().at(k) : v->second;
  }
  return out;
}

std::map<std::string, std::string> RunConfig::effective() const {
  auto out = defaults();
  for (const auto& [k, v] : values_) out[k] = v;
  return out;
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [k, v] : effective()) out += k + "=" + v + "\n";
  return out;
}

}  // namespace uattr::cli
