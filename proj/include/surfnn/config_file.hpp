#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "surfnn/common.hpp"
#include "surfnn/optimize.hpp"

namespace surfnn {

/// Plain-text `key = value` pairs, one per line; `#` starts a comment.
using KeyValues = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline KeyValues parse_key_values(std::istream& is, const std::string& source = "config") {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(source + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw InputError(source + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path.string());
  return parse_key_values(is, path.string());
}

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T out{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError("bad value '" + s + "' for key " + key);
  }
  return out;
}

// "32" or "32,32,24".
inline Index3 parse_dims(const std::string& key, const std::string& s) {
  std::stringstream ss(s);
  std::string part;
  std::vector<int> v;
  while (std::getline(ss, part, ',')) v.push_back(parse_number<int>(key, trim(part)));
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw InputError("bad dims '" + s + "' for key " + key);
}

}  // namespace detail

/// Applies every pair to the config; unknown keys are errors.
inline void apply_key_values(const KeyValues& kv, ReconstructionConfig& cfg) {
  using detail::parse_number;
  for (const auto& [key, value] : kv) {
    if (key == "iterations") cfg.iterations = parse_number<int>(key, value);
    else if (key == "step_size") cfg.step_size = parse_number<double>(key, value);
    else if (key == "hct_step_size") cfg.hct_step_size = parse_number<double>(key, value);
    else if (key == "beta1") cfg.beta1 = parse_number<double>(key, value);
    else if (key == "beta2") cfg.beta2 = parse_number<double>(key, value);
    else if (key == "adam_epsilon") cfg.adam_epsilon = parse_number<double>(key, value);
    else if (key == "final_step_fraction") cfg.final_step_fraction = parse_number<double>(key, value);
    else if (key == "squaring_steps") cfg.squaring_steps = parse_number<int>(key, value);
    else if (key == "svf_grid_dims") cfg.svf_grid_dims = detail::parse_dims(key, value);
    else if (key == "hct_grid_dims") cfg.hct_grid_dims = detail::parse_dims(key, value);
    else if (key == "lambda_chamfer") cfg.weights.chamfer = parse_number<double>(key, value);
    else if (key == "lambda_edge_length") cfg.weights.edge_length = parse_number<double>(key, value);
    else if (key == "lambda_normal_consistency") cfg.weights.normal_consistency = parse_number<double>(key, value);
    else if (key == "reduction") {
      if (value == "mean") cfg.reduction = Reduction::Mean;
      else if (value == "sum") cfg.reduction = Reduction::Sum;
      else throw InputError("bad value '" + value + "' for key reduction");
    }
    else if (key == "hct_scale") cfg.hct_scale = parse_number<double>(key, value);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "target_source") cfg.target_source = parse_target_source(value);
    else if (key == "mesh_vertices") cfg.mesh_vertices = parse_number<int>(key, value);
    else if (key == "max_repair_rounds") cfg.max_repair_rounds = parse_number<int>(key, value);
    else if (key == "init_smoothing_iterations") cfg.init_smoothing_iterations = parse_number<int>(key, value);
    else throw InputError("unknown config key '" + key + "'");
  }
}

}  // namespace surfnn
