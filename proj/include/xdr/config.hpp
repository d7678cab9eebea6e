#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace xdr {

// Flat key=value experiment configuration. Files are either one `key = value`
// per line (# comments) or a flat JSON object; command-line flags override
// file values. echo() is the canonical serialization embedded in every output
// artifact.
class ExperimentConfig {
 public:
  static ExperimentConfig from_file(const std::string& path);

  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_size_list(
      const std::string& key, const std::vector<std::size_t>& fallback) const;

  std::string echo() const;

 private:
  std::map<std::string, std::string> values_;
};

// Resolves a dataset path against XDR_DATA_DIR when the path itself does not
// exist and the variable is set.
std::string resolve_data_path(const std::string& path);

}  // namespace xdr
