#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kdst/common.hpp"

namespace kdst::bench {

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (const double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

// Population standard deviation: a single-seed run reports exactly zero.
inline double std_of(const std::vector<double>& v) {
  if (v.size() <= 1) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (const double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("cannot write " + path);
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad json in " + path + ": " + e.what());
  }
  return j;
}

// metrics.json with the wall-clock section removed: the determinism contract
// covers everything else byte for byte.
inline std::string metrics_fingerprint(const std::string& path) {
  auto j = read_json(path);
  j.erase("timing");
  return j.dump(2);
}

}  // namespace kdst::bench
