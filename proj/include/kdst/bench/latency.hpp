#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <vector>

namespace kdst::bench {

struct LatencyStats {
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double min_ms = 0.0;
  int runs = 0;
};

// Steady-state latency: `warmups` untimed calls, then the median of `runs`
// timed calls. Single-threaded by construction (the numeric core pins BLAS
// to one thread).
inline LatencyStats measure_latency(const std::function<void()>& fn, int warmups = 10,
                                    int runs = 100) {
  for (int i = 0; i < warmups; ++i) fn();
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(runs));
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  LatencyStats stats;
  stats.runs = runs;
  std::sort(samples.begin(), samples.end());
  stats.median_ms = samples[samples.size() / 2];
  stats.min_ms = samples.front();
  double acc = 0.0;
  for (const double s : samples) acc += s;
  stats.mean_ms = acc / static_cast<double>(samples.size());
  return stats;
}

}  // namespace kdst::bench
