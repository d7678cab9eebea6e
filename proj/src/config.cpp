#include "xdr/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "xdr/io.hpp"

namespace xdr {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  auto in = io::open_in(path, /*binary=*/false);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();

  ExperimentConfig cfg;
  auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    auto j = nlohmann::json::parse(text);
    if (!j.is_object())
      throw std::runtime_error(path + ": config JSON must be a flat object");
    for (auto& [k, v] : j.items()) {
      if (v.is_string())
        cfg.set(k, v.get<std::string>());
      else
        cfg.set(k, v.dump());
    }
    return cfg;
  }

  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": empty config key");
    cfg.set(key, value);
  }
  return cfg;
}

void ExperimentConfig::set(const std::string& key, std::string value) {
  values_[key] = std::move(value);
}

bool ExperimentConfig::has(const std::string& key) const {
  return values_.count(key) != 0;
}

std::string ExperimentConfig::get_str(const std::string& key,
                                      const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double ExperimentConfig::get_double(const std::string& key,
                                    double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': '" + it->second +
                             "' is not a number");
  }
}

std::uint64_t ExperimentConfig::get_u64(const std::string& key,
                                        std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': '" + it->second +
                             "' is not an unsigned integer");
  }
}

std::size_t ExperimentConfig::get_size(const std::string& key,
                                       std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool ExperimentConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw std::runtime_error("config key '" + key + "': '" + it->second +
                           "' is not a boolean");
}

std::vector<std::size_t> ExperimentConfig::get_size_list(
    const std::string& key, const std::vector<std::size_t>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  std::istringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    out.push_back(static_cast<std::size_t>(std::stoull(tok)));
  }
  if (out.empty())
    throw std::runtime_error("config key '" + key + "': empty list");
  for (std::size_t j = 1; j < out.size(); ++j)
    if (out[j] <= out[j - 1])
      throw std::runtime_error("config key '" + key +
                               "': list must be strictly ascending");
  return out;
}

std::string ExperimentConfig::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

std::string resolve_data_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) return path;
  const char* root = std::getenv("XDR_DATA_DIR");
  if (root && *root) {
    fs::path joined = fs::path(root) / path;
    if (fs::exists(joined)) return joined.string();
  }
  return path;
}

}  // namespace xdr
