#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace uattr::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat key=value run configuration. Lines starting with '#' are comments.
/// Every key has a default; keys outside the known set are rejected.
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// Overrides (or sets) one key; throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);

  std::string str(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& key) const;

  /// Effective values of every key read so far, defaults included.
  std::map<std::string, std::string> consumed() const;
  /// Effective values of every known key.
  std::map<std::string, std::string> effective() const;
  /// key=value text of effective(), parseable by parse().
  std::string echo() const;

  static const std::map<std::string, std::string>& defaults();

 private:
  const std::string& raw(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> read_;
};

}  // namespace uattr::cli
