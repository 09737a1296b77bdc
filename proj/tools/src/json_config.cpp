#include "json_config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "hman/errors.hpp"

namespace hman::cli {

namespace {

std::string scalar_text(const std::string& key, const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number_float()) return v.dump();
  throw ConfigError("config key '" + key + "' must be a string, number, boolean or array of those");
}

std::vector<std::string> config_args(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file '" + file + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(file + ": invalid JSON: " + e.what(), e.byte);
  }
  if (!j.is_object()) throw ConfigError("config file '" + file + "' must hold a JSON object");
  std::vector<std::string> out;
  for (const auto& [key, value] : j.items()) {
    if (key == "config") throw ConfigError("config files cannot include other config files");
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      out.push_back(flag + (value.get<bool>() ? "" : "=false"));
    } else if (value.is_array()) {
      for (const auto& v : value) out.insert(out.end(), {flag, scalar_text(key, v)});
    } else {
      out.insert(out.end(), {flag, scalar_text(key, value)});
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty()) return args;
  std::vector<std::string> rest;
  std::vector<std::string> from_file;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a file name");
      from_file = config_args(args[++i]);
    } else if (a.rfind("--config=", 0) == 0) {
      from_file = config_args(a.substr(9));
    } else {
      rest.push_back(a);
    }
  }
  std::vector<std::string> out = {args.front()};
  out.insert(out.end(), from_file.begin(), from_file.end());
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace hman::cli
