#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "spiketime/errors.hpp"
#include "spiketime/fixed_point.hpp"

namespace spiketime {

// Formats used by the fixed-point (hardware) execution mode.
struct FixedFormats {
  QFormat weight = kQ5_7;  // weights, thresholds, membrane and backward potentials
  QFormat delta = kQ1_9;   // output errors and normalized deltas
  QFormat lr = {4, 6};     // 10-bit learning rate

  friend bool operator==(const FixedFormats&, const FixedFormats&) = default;
};

template <class T>
inline constexpr bool is_fixed_v = std::is_same_v<T, FixedPoint>;

// Scalar operations shared by the real and fixed-point datapaths. The fixed
// variants saturate; neither variant multiplies.
template <class T>
struct Arith;

template <>
struct Arith<double> {
  static double zero(QFormat) { return 0.0; }
  static double add(double a, double b) { return a + b; }
  static double neg(double a) { return -a; }
  static bool ge(double a, double b) { return a >= b; }
  static bool gt(double a, double b) { return a > b; }
  static double real(double a) { return a; }
};

template <>
struct Arith<FixedPoint> {
  static FixedPoint zero(QFormat fmt) { return {0, fmt}; }
  static FixedPoint add(FixedPoint a, FixedPoint b) { return add_sat(a, b); }
  static FixedPoint neg(FixedPoint a) { return negate_sat(a); }
  static bool ge(FixedPoint a, FixedPoint b) { return compare(a, b) >= 0; }
  static bool gt(FixedPoint a, FixedPoint b) { return compare(a, b) > 0; }
  static double real(FixedPoint a) { return a.to_real(); }
};

// One fully connected IF layer. weights is row-major [post][pre].
template <class T>
struct Layer {
  std::size_t fan_in = 0;
  std::size_t size = 0;
  std::vector<T> weights;
  std::vector<T> thresholds;

  T& weight(std::size_t post, std::size_t pre) { return weights[post * fan_in + pre]; }
  const T& weight(std::size_t post, std::size_t pre) const { return weights[post * fan_in + pre]; }
  std::span<const T> row(std::size_t post) const { return {weights.data() + post * fan_in, fan_in}; }

  void validate() const {
    if (weights.size() != fan_in * size) throw UsageError("weight matrix does not match layer dims");
    if (thresholds.size() != size) throw UsageError("threshold count does not match layer size");
  }

  friend bool operator==(const Layer&, const Layer&) = default;
};

template <class T>
struct Network {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  std::vector<Layer<T>> layers;          // layers[k] maps layer k to layer k+1
  int t_max = 15;
  FixedFormats formats;

  std::size_t num_inputs() const { return layer_sizes.front(); }
  std::size_t num_outputs() const { return layer_sizes.back(); }

  std::size_t synapse_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.fan_in * l.size;
    return n;
  }

  void validate() const {
    if (layer_sizes.size() < 2) throw UsageError("network needs at least input and output layers");
    if (layers.size() + 1 != layer_sizes.size()) throw UsageError("layer count mismatch");
    if (t_max < 1) throw UsageError("t_max must be >= 1");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      if (l.fan_in != layer_sizes[k] || l.size != layer_sizes[k + 1]) {
        throw UsageError("layer " + std::to_string(k) + " dims do not match layer_sizes");
      }
      l.validate();
      for (const auto& th : l.thresholds) {
        if (!Arith<T>::gt(th, Arith<T>::zero(formats.weight))) throw UsageError("thresholds must be positive");
      }
      if constexpr (is_fixed_v<T>) {
        for (const auto& w : l.weights) {
          if (w.format != formats.weight) throw UsageError("fixed-mode weights must share one format");
        }
      }
    }
  }

  friend bool operator==(const Network&, const Network&) = default;
};

struct InitConfig {
  // One entry per non-input layer, or a single entry broadcast to all.
  std::vector<double> thresholds{1.0};
  double init_min = -0.5;
  double init_max = 0.5;
  std::uint64_t seed = 1;
  int t_max = 15;
};

inline Network<double> random_network(const std::vector<std::size_t>& sizes, const InitConfig& init) {
  if (sizes.size() < 2) throw UsageError("network needs at least two layers");
  for (auto s : sizes) {
    if (s == 0) throw UsageError("layer sizes must be positive");
  }
  if (init.thresholds.empty() ||
      (init.thresholds.size() != 1 && init.thresholds.size() != sizes.size() - 1)) {
    throw UsageError("need one threshold or one per non-input layer");
  }
  if (!(init.init_min <= init.init_max)) throw UsageError("init_min must not exceed init_max");

  Network<double> net;
  net.layer_sizes = sizes;
  net.t_max = init.t_max;
  std::mt19937_64 rng(init.seed);
  std::uniform_real_distribution<double> dist(init.init_min, init.init_max);
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    Layer<double> layer;
    layer.fan_in = sizes[k];
    layer.size = sizes[k + 1];
    layer.weights.resize(layer.fan_in * layer.size);
    for (auto& w : layer.weights) w = dist(rng);
    const double th = init.thresholds.size() == 1 ? init.thresholds[0] : init.thresholds[k];
    layer.thresholds.assign(layer.size, th);
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

}  // namespace spiketime
