#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spiketime/errors.hpp"

namespace spiketime {

struct EncodingConfig {
  int i_max = 15;
  int t_max = 15;  // last valid step; steps run 0..t_max inclusive
};

// Firing step of a neuron. A neuron that never crossed threshold carries a
// placeholder at t_max with fired == false.
struct SpikeTime {
  int step = 0;
  bool fired = true;

  static SpikeTime placeholder(int t_max) { return {t_max, false}; }

  friend bool operator==(const SpikeTime&, const SpikeTime&) = default;
};

using SpikeTimes = std::vector<SpikeTime>;

// Intensity-to-latency coding: t = floor((i_max - I) / i_max * t_max).
inline SpikeTimes encode_image(std::span<const int> pixels, const EncodingConfig& cfg) {
  if (cfg.i_max < 1 || cfg.t_max < 1) throw UsageError("encoding needs i_max >= 1 and t_max >= 1");
  SpikeTimes out;
  out.reserve(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const int p = pixels[i];
    if (p < 0 || p > cfg.i_max) {
      throw InputError("pixel " + std::to_string(i) + " = " + std::to_string(p) +
                       " outside [0, " + std::to_string(cfg.i_max) + "]");
    }
    // Integer floor of the exact rational; no rounding drift from doubles.
    const std::int64_t num = static_cast<std::int64_t>(cfg.i_max - p) * cfg.t_max;
    out.push_back({static_cast<int>(num / cfg.i_max), true});
  }
  return out;
}

// Indices of the neurons spiking exactly at step t, ascending.
inline std::vector<std::size_t> decode_step_events(std::span<const SpikeTime> times, int t) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i].step == t) idx.push_back(i);
  }
  return idx;
}

}  // namespace spiketime
