#pragma once

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace kdst {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct AutodiffError : std::runtime_error {
  explicit AutodiffError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Post-op NaN/Inf scanning. Defaults to on in debug builds, off in release;
// KDST_DEBUG_CHECKS=0/1 or set_debug_checks() override either way.
inline bool& debug_checks_flag() {
  static bool flag = [] {
    if (const char* env = std::getenv("KDST_DEBUG_CHECKS")) {
      return env[0] != '0';
    }
#ifdef NDEBUG
    return false;
#else
    return true;
#endif
  }();
  return flag;
}

inline bool debug_checks_enabled() { return debug_checks_flag(); }
inline void set_debug_checks(bool on) { debug_checks_flag() = on; }

}  // namespace kdst
