#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>

namespace jumpgen {

// All library failures (precondition violations, numeric guards, bad input
// files) throw Error; the CLI maps these to its exit-code convention.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Thread budget for parallel sections: JUMPGEN_THREADS caps parallelism,
// 0 or unset means auto (hardware concurrency).
inline unsigned thread_budget() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const char* env = std::getenv("JUMPGEN_THREADS");
  if (env == nullptr || *env == '\0') return hw;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (end == env || v < 0) throw Error("JUMPGEN_THREADS must be a nonnegative integer");
  if (v == 0) return hw;
  return static_cast<unsigned>(v);
}

}  // namespace jumpgen
