#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "spiketime/encoding.hpp"
#include "spiketime/network.hpp"

namespace spiketime {

template <class T>
struct LayerOutput {
  SpikeTimes times;
  std::vector<T> potentials;
};

// spike_times[0] is the input layer; potentials[0] is empty so that both
// vectors are indexed by layer number.
template <class T>
struct ForwardTrace {
  std::vector<SpikeTimes> spike_times;
  std::vector<std::vector<T>> potentials;

  const SpikeTimes& output_times() const { return spike_times.back(); }
  const std::vector<T>& output_potentials() const { return potentials.back(); }
};

namespace detail {

struct InputEvent {
  int step;
  std::size_t index;
};

// Real presynaptic spikes ordered by step, ascending index within a step.
// Placeholders are not spikes and deposit no charge.
inline std::vector<InputEvent> order_events(std::span<const SpikeTime> inputs, int t_max) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(t_max) + 2, 0);
  for (const auto& s : inputs) {
    if (s.fired) ++counts[static_cast<std::size_t>(s.step) + 1];
  }
  for (std::size_t t = 1; t < counts.size(); ++t) counts[t] += counts[t - 1];
  std::vector<InputEvent> events(counts.back());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].fired) continue;
    events[counts[static_cast<std::size_t>(inputs[i].step)]++] = {inputs[i].step, i};
  }
  return events;
}

}  // namespace detail

// Non-leaky IF layer over steps 0..t_max. Each neuron spikes once, at the
// first step whose accumulated potential reaches threshold; potentials keep
// integrating after the spike and are returned as they stand at t_max.
template <class T>
LayerOutput<T> simulate_layer(const Layer<T>& layer, std::span<const SpikeTime> inputs, int t_max,
                              QFormat fmt = kQ5_7) {
  layer.validate();
  if (inputs.size() != layer.fan_in) throw UsageError("input count does not match layer fan-in");
  for (const auto& s : inputs) {
    if (s.step < 0 || s.step > t_max) throw UsageError("input spike time outside [0, t_max]");
  }
  if constexpr (is_fixed_v<T>) {
    if (!layer.weights.empty()) fmt = layer.weights.front().format;
  }

  const auto events = detail::order_events(inputs, t_max);
  LayerOutput<T> out;
  out.times.assign(layer.size, SpikeTime::placeholder(t_max));
  out.potentials.assign(layer.size, Arith<T>::zero(fmt));

  for (std::size_t j = 0; j < layer.size; ++j) {
    const auto row = layer.row(j);
    const T threshold = layer.thresholds[j];
    T v = Arith<T>::zero(fmt);
    bool fired = false;
    std::size_t k = 0;
    while (k < events.size()) {
      const int step = events[k].step;
      for (; k < events.size() && events[k].step == step; ++k) v = Arith<T>::add(v, row[events[k].index]);
      if (!fired && Arith<T>::ge(v, threshold)) {
        out.times[j] = {step, true};
        fired = true;
      }
    }
    out.potentials[j] = v;
  }
  return out;
}

template <class T>
ForwardTrace<T> run_forward(const Network<T>& net, std::span<const SpikeTime> input_times) {
  if (input_times.size() != net.num_inputs()) throw UsageError("input length does not match network input size");
  ForwardTrace<T> trace;
  trace.spike_times.reserve(net.layer_sizes.size());
  trace.potentials.reserve(net.layer_sizes.size());
  trace.spike_times.emplace_back(input_times.begin(), input_times.end());
  trace.potentials.emplace_back();
  for (const auto& layer : net.layers) {
    auto out = simulate_layer(layer, trace.spike_times.back(), net.t_max, net.formats.weight);
    trace.spike_times.push_back(std::move(out.times));
    trace.potentials.push_back(std::move(out.potentials));
  }
  return trace;
}

// Earliest fired output wins; with no output spike, the highest final
// potential. Ties go to the lowest index.
template <class T>
std::size_t classify(const ForwardTrace<T>& trace) {
  const auto& times = trace.output_times();
  const auto& pots = trace.output_potentials();
  std::size_t best = times.size();
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (times[j].fired && (best == times.size() || times[j].step < times[best].step)) best = j;
  }
  if (best != times.size()) return best;
  best = 0;
  for (std::size_t j = 1; j < pots.size(); ++j) {
    if (Arith<T>::gt(pots[j], pots[best])) best = j;
  }
  return best;
}

struct ActiveSynapses {
  std::vector<std::size_t> per_layer;
  std::size_t total = 0;
  std::size_t synapses = 0;

  double fraction() const { return synapses == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(synapses); }
};

// A synapse is active when its presynaptic spike strictly precedes the
// postsynaptic spike (or placeholder).
template <class T>
ActiveSynapses count_active_synapses(const ForwardTrace<T>& trace, const Network<T>& net) {
  if (trace.spike_times.size() != net.layer_sizes.size()) throw UsageError("trace does not belong to network");
  ActiveSynapses result;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& pre = trace.spike_times[k];
    const auto& post = trace.spike_times[k + 1];
    // Counting pre steps below each post step: histogram + prefix sum.
    std::vector<std::size_t> below(static_cast<std::size_t>(net.t_max) + 2, 0);
    for (const auto& s : pre) ++below[static_cast<std::size_t>(s.step) + 1];
    for (std::size_t t = 1; t < below.size(); ++t) below[t] += below[t - 1];
    std::size_t n = 0;
    for (const auto& s : post) n += below[static_cast<std::size_t>(s.step)];
    result.per_layer.push_back(n);
    result.total += n;
    result.synapses += pre.size() * post.size();
  }
  return result;
}

}  // namespace spiketime
