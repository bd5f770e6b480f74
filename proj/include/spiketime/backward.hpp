#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "spiketime/audit.hpp"
#include "spiketime/encoding.hpp"
#include "spiketime/fixed_point.hpp"
#include "spiketime/forward.hpp"
#include "spiketime/network.hpp"

namespace spiketime {

// ---------------------------------------------------------------------------
// Targets, errors, loss

struct TargetTimes {
  std::vector<int> T;
  int gamma = 1;
  int t_min = 0;          // earliest fired output step (t_max when all silent)
  bool all_silent = false;
};

// Label neuron is pulled to t_min - gamma; competitors closer than
// t_min + gamma are pushed out to it; everyone else keeps its time. When no
// output fired, only the label neuron gets a target before t_max. Results
// are clamped to [0, t_max].
inline TargetTimes compute_target_times(std::span<const SpikeTime> output, std::size_t label, int gamma,
                                        int t_max) {
  if (label >= output.size()) throw UsageError("label out of range");
  if (gamma < 1) throw UsageError("gamma must be >= 1");
  TargetTimes tt;
  tt.gamma = gamma;
  tt.T.resize(output.size());
  tt.all_silent = std::none_of(output.begin(), output.end(), [](const SpikeTime& s) { return s.fired; });
  if (tt.all_silent) {
    tt.t_min = t_max;
    for (std::size_t j = 0; j < output.size(); ++j) tt.T[j] = j == label ? t_max - gamma : t_max;
  } else {
    tt.t_min = t_max;
    for (const auto& s : output) {
      if (s.fired) tt.t_min = std::min(tt.t_min, s.step);
    }
    for (std::size_t j = 0; j < output.size(); ++j) {
      if (j == label) {
        tt.T[j] = tt.t_min - gamma;
      } else if (output[j].step < tt.t_min + gamma) {
        tt.T[j] = tt.t_min + gamma;
      } else {
        tt.T[j] = output[j].step;
      }
    }
  }
  for (auto& t : tt.T) t = std::clamp(t, 0, t_max);
  return tt;
}

inline std::vector<double> compute_output_error(std::span<const SpikeTime> actual, const TargetTimes& targets,
                                                int t_max) {
  if (actual.size() != targets.T.size()) throw UsageError("error: length mismatch");
  std::vector<double> e(actual.size());
  for (std::size_t j = 0; j < e.size(); ++j) e[j] = static_cast<double>(targets.T[j] - actual[j].step) / t_max;
  return e;
}

// Fixed-point error in delta_fmt: (T - t) / t_max by shift and division.
inline std::vector<FixedPoint> compute_output_error_fixed(std::span<const SpikeTime> actual,
                                                          const TargetTimes& targets, int t_max,
                                                          QFormat delta_fmt) {
  if (actual.size() != targets.T.size()) throw UsageError("error: length mismatch");
  std::vector<FixedPoint> e(actual.size());
  for (std::size_t j = 0; j < e.size(); ++j) {
    const std::int64_t diff = targets.T[j] - actual[j].step;
    e[j] = from_raw(div_round(diff << delta_fmt.frac_bits, t_max), delta_fmt);
  }
  return e;
}

// Monitoring metric, outside the learning datapath.
inline double loss(std::span<const double> e) {
  double s = 0.0;
  for (double v : e) s += v * v;
  return 0.5 * s;
}

inline double loss(std::span<const FixedPoint> e) {
  std::vector<double> real(e.size());
  std::transform(e.begin(), e.end(), real.begin(), [](const FixedPoint& v) { return v.to_real(); });
  return loss(real);
}

inline std::vector<double> output_deltas(std::span<const double> e, int t_max) {
  std::vector<double> d(e.size());
  for (std::size_t j = 0; j < e.size(); ++j) d[j] = -e[j] / t_max;
  return d;
}

inline std::vector<FixedPoint> output_deltas(std::span<const FixedPoint> e, int t_max) {
  std::vector<FixedPoint> d(e.size());
  for (std::size_t j = 0; j < e.size(); ++j) d[j] = from_raw(div_round(-std::int64_t{e[j].raw}, t_max), e[j].format);
  return d;
}

// ---------------------------------------------------------------------------
// Normalization and delta -> backward spike conversion

enum class Normalization {
  magnitude,   // divide by sum of |delta|
  signed_sum,  // divide by the plain sum
};

template <class D>
struct Normalized {
  std::vector<D> values;
  bool skip = false;  // nothing to propagate
};

inline Normalized<double> normalize_deltas(std::span<const double> deltas,
                                           Normalization mode = Normalization::magnitude) {
  double denom = 0.0;
  for (double d : deltas) denom += mode == Normalization::magnitude ? std::abs(d) : d;
  Normalized<double> out;
  out.values.assign(deltas.size(), 0.0);
  if (denom == 0.0) {
    out.skip = true;
    return out;
  }
  for (std::size_t i = 0; i < deltas.size(); ++i) out.values[i] = deltas[i] / denom;
  return out;
}

// Integer division of each raw value by the (magnitude) sum, producing
// out_fmt. Values may be in any format; they share one.
inline Normalized<FixedPoint> normalize_deltas(std::span<const FixedPoint> deltas, QFormat out_fmt,
                                               Normalization mode = Normalization::magnitude) {
  std::int64_t denom = 0;
  for (const auto& d : deltas) denom += mode == Normalization::magnitude ? std::abs(std::int64_t{d.raw}) : d.raw;
  Normalized<FixedPoint> out;
  out.values.assign(deltas.size(), FixedPoint{0, out_fmt});
  if (denom == 0) {
    out.skip = true;
    return out;
  }
  const bool flip = denom < 0;
  if (flip) denom = -denom;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    std::int64_t q = div_round(std::int64_t{deltas[i].raw} << out_fmt.frac_bits, denom);
    out.values[i] = from_raw(flip ? -q : q, out_fmt);
  }
  return out;
}

struct SignedBackwardSpike {
  std::size_t neuron = 0;
  int tau = 0;
  int polarity = 1;  // +1 or -1

  friend bool operator==(const SignedBackwardSpike&, const SignedBackwardSpike&) = default;
};

// 5-bit hardware encoding: sign bit above a 4-bit time.
inline std::uint8_t encode_backward_spike(const SignedBackwardSpike& s) {
  return static_cast<std::uint8_t>((s.polarity < 0 ? 0x10 : 0x00) | (s.tau & 0x0F));
}

namespace detail {

inline std::optional<SignedBackwardSpike> spike_from_offset(std::size_t neuron, std::int64_t d, int t_max) {
  d = std::clamp<std::int64_t>(d, -t_max, t_max);
  if (d > 0) return SignedBackwardSpike{neuron, static_cast<int>(t_max - d), +1};
  if (d < 0) return SignedBackwardSpike{neuron, static_cast<int>(t_max + d), -1};
  return std::nullopt;
}

}  // namespace detail

// d = round(delta * t_max) (half away from zero); positive d spikes at
// t_max - d with polarity +1, negative d at t_max + d with polarity -1, and
// d == 0 emits nothing. Larger |delta| therefore spikes earlier.
inline std::vector<SignedBackwardSpike> deltas_to_backward_spikes(std::span<const double> normalized, int t_max) {
  std::vector<SignedBackwardSpike> spikes;
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    audit::note_float_mul();
    const double d = std::round(normalized[i] * t_max);
    if (auto s = detail::spike_from_offset(i, static_cast<std::int64_t>(d), t_max)) spikes.push_back(*s);
  }
  return spikes;
}

// Fixed-point variant: delta * t_max via a shift-add chain, then rounding
// by adding half an LSB before the shift.
inline std::vector<SignedBackwardSpike> deltas_to_backward_spikes(std::span<const FixedPoint> normalized,
                                                                  int t_max) {
  std::vector<SignedBackwardSpike> spikes;
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const int frac = normalized[i].format.frac_bits;
    const std::int64_t scaled = shift_add_const(normalized[i].raw, static_cast<unsigned>(t_max));
    const std::int64_t mag = scaled < 0 ? -scaled : scaled;
    const std::int64_t half = frac > 0 ? std::int64_t{1} << (frac - 1) : 0;
    std::int64_t d = (mag + half) >> frac;
    if (scaled < 0) d = -d;
    if (auto s = detail::spike_from_offset(i, d, t_max)) spikes.push_back(*s);
  }
  return spikes;
}

// ---------------------------------------------------------------------------
// Backward IF layer

template <class T>
struct BackwardLayerResult {
  std::vector<T> potentials;  // final Delta per neuron
  std::vector<SignedBackwardSpike> spikes;
};

// Integrates signed backward spikes from layer l+1 into the backward
// potentials of layer l over tau = 0..t_max. A contribution from upper
// neuron j reaches neuron i only if i fired before j in the forward pass.
// Each neuron spikes once, the first time its potential leaves
// [-threshold, +threshold].
template <class T>
BackwardLayerResult<T> backward_layer(std::span<const SignedBackwardSpike> upper_spikes, const Layer<T>& upper,
                                      std::span<const SpikeTime> times_l, std::span<const SpikeTime> times_l1,
                                      std::span<const T> thresholds, int t_max, QFormat fmt = kQ5_7) {
  upper.validate();
  if (times_l.size() != upper.fan_in || times_l1.size() != upper.size || thresholds.size() != upper.fan_in) {
    throw UsageError("backward_layer: dimension mismatch");
  }
  if constexpr (is_fixed_v<T>) {
    if (!upper.weights.empty()) fmt = upper.weights.front().format;
  }
  const std::size_t n = upper.fan_in;
  BackwardLayerResult<T> out;
  out.potentials.assign(n, Arith<T>::zero(fmt));
  std::vector<bool> spiked(n, false);

  std::vector<std::vector<const SignedBackwardSpike*>> by_tau(static_cast<std::size_t>(t_max) + 1);
  for (const auto& s : upper_spikes) {
    if (s.neuron >= upper.size || s.tau < 0 || s.tau > t_max) throw UsageError("backward spike out of range");
    by_tau[static_cast<std::size_t>(s.tau)].push_back(&s);
  }

  for (int tau = 0; tau <= t_max; ++tau) {
    const auto& arriving = by_tau[static_cast<std::size_t>(tau)];
    if (arriving.empty()) continue;
    for (const auto* s : arriving) {
      const auto row = upper.row(s->neuron);
      const int t_upper = times_l1[s->neuron].step;
      for (std::size_t i = 0; i < n; ++i) {
        if (times_l[i].step >= t_upper) continue;
        out.potentials[i] = Arith<T>::add(out.potentials[i], s->polarity > 0 ? row[i] : Arith<T>::neg(row[i]));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (spiked[i]) continue;
      if (Arith<T>::gt(out.potentials[i], thresholds[i])) {
        out.spikes.push_back({i, tau, +1});
        spiked[i] = true;
      } else if (Arith<T>::gt(Arith<T>::neg(thresholds[i]), out.potentials[i])) {
        out.spikes.push_back({i, tau, -1});
        spiked[i] = true;
      }
    }
  }
  return out;
}

inline Normalized<double> effective_hidden_deltas(std::span<const double> potentials,
                                                  Normalization mode = Normalization::magnitude) {
  return normalize_deltas(potentials, mode);
}

inline Normalized<FixedPoint> effective_hidden_deltas(std::span<const FixedPoint> potentials, QFormat delta_fmt,
                                                      Normalization mode = Normalization::magnitude) {
  return normalize_deltas(potentials, delta_fmt, mode);
}

// ---------------------------------------------------------------------------
// Weight update

// W[j][i] += lr * delta[j] for every synapse whose presynaptic spike
// strictly precedes the postsynaptic one. The increment is formed once per
// neuron.
inline void update_weights(Layer<double>& layer, std::span<const double> deltas, std::span<const SpikeTime> pre,
                           std::span<const SpikeTime> post, double lr) {
  if (deltas.size() != layer.size || post.size() != layer.size || pre.size() != layer.fan_in) {
    throw UsageError("update_weights: dimension mismatch");
  }
  for (std::size_t j = 0; j < layer.size; ++j) {
    if (deltas[j] == 0.0) continue;
    audit::note_float_mul();
    const double inc = lr * deltas[j];
    const int t_post = post[j].step;
    double* row = layer.weights.data() + j * layer.fan_in;
    for (std::size_t i = 0; i < layer.fan_in; ++i) {
      if (pre[i].step < t_post) row[i] += inc;
    }
  }
}

inline void update_weights(Layer<FixedPoint>& layer, std::span<const FixedPoint> deltas,
                           std::span<const SpikeTime> pre, std::span<const SpikeTime> post, FixedPoint lr) {
  if (deltas.size() != layer.size || post.size() != layer.size || pre.size() != layer.fan_in) {
    throw UsageError("update_weights: dimension mismatch");
  }
  if (layer.weights.empty()) return;
  const QFormat wfmt = layer.weights.front().format;
  for (std::size_t j = 0; j < layer.size; ++j) {
    if (deltas[j].raw == 0) continue;
    const FixedPoint inc = scalar_mul_shift(deltas[j], lr, wfmt);
    if (inc.raw == 0) continue;
    const int t_post = post[j].step;
    FixedPoint* row = layer.weights.data() + j * layer.fan_in;
    for (std::size_t i = 0; i < layer.fan_in; ++i) {
      if (pre[i].step < t_post) row[i] = add_sat(row[i], inc);
    }
  }
}

// ---------------------------------------------------------------------------
// One online training step

struct BackwardConfig {
  double lr = 0.01;
  int gamma = 1;
  double backward_threshold_scale = 1.0;
  Normalization normalization = Normalization::magnitude;
};

// Per-run constants in the datapath's own number type, prepared once.
template <class T>
struct BackwardParams {
  T lr{};
  int gamma = 1;
  Normalization normalization = Normalization::magnitude;
  // backward_thresholds[k] belongs to the neurons of layer k (k >= 1);
  // index 0 and the output layer are unused.
  std::vector<std::vector<T>> backward_thresholds;
};

template <class T>
BackwardParams<T> make_backward_params(const Network<T>& net, const BackwardConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw UsageError("learning rate must be positive");
  if (cfg.gamma < 1) throw UsageError("gamma must be >= 1");
  BackwardParams<T> p;
  p.gamma = cfg.gamma;
  p.normalization = cfg.normalization;
  if constexpr (is_fixed_v<T>) {
    p.lr = from_real(cfg.lr, net.formats.lr);
    if (p.lr.raw == 0) throw UsageError("learning rate underflows the fixed-point lr format");
  } else {
    p.lr = cfg.lr;
  }
  p.backward_thresholds.resize(net.layer_sizes.size());
  for (std::size_t k = 1; k + 1 < net.layer_sizes.size(); ++k) {
    for (const auto& th : net.layers[k - 1].thresholds) {
      if constexpr (is_fixed_v<T>) {
        p.backward_thresholds[k].push_back(from_real(th.to_real() * cfg.backward_threshold_scale, th.format));
      } else {
        p.backward_thresholds[k].push_back(th * cfg.backward_threshold_scale);
      }
    }
  }
  return p;
}

template <class T>
using delta_t = T;

template <class T>
struct BackwardTrace {
  TargetTimes targets;
  std::vector<delta_t<T>> output_errors;
  std::vector<delta_t<T>> output_deltas;
  // Indexed by layer number; entries for the input layer are empty.
  std::vector<std::vector<T>> backward_potentials;
  std::vector<std::vector<SignedBackwardSpike>> backward_spikes;
  // effective_deltas[k] drives the update of layers[k - 1].
  std::vector<std::vector<delta_t<T>>> effective_deltas;
  bool skipped = false;
};

template <class T>
struct StepResult {
  ForwardTrace<T> forward;
  BackwardTrace<T> backward;
  double loss = 0.0;
  std::size_t predicted = 0;
};

// Forward pass, targets, output deltas, then backward spikes layer by layer
// from the output toward the input. All deltas are derived from the weights
// as they were at the start of the step; updates are applied afterwards,
// output layer first.
template <class T>
StepResult<T> train_step(Network<T>& net, std::span<const SpikeTime> input_times, std::size_t label,
                         const BackwardParams<T>& params) {
  const std::size_t L = net.layer_sizes.size() - 1;  // index of the output layer
  const int t_max = net.t_max;
  StepResult<T> r;
  r.forward = run_forward(net, input_times);
  r.predicted = classify(r.forward);
  const auto& fw = r.forward.spike_times;

  auto& bt = r.backward;
  bt.targets = compute_target_times(fw[L], label, params.gamma, t_max);
  bt.backward_potentials.resize(L + 1);
  bt.backward_spikes.resize(L + 1);
  bt.effective_deltas.resize(L + 1);

  if constexpr (is_fixed_v<T>) {
    bt.output_errors = compute_output_error_fixed(fw[L], bt.targets, t_max, net.formats.delta);
  } else {
    bt.output_errors = compute_output_error(fw[L], bt.targets, t_max);
  }
  r.loss = loss(std::span<const delta_t<T>>(bt.output_errors));
  bt.output_deltas = output_deltas(std::span<const delta_t<T>>(bt.output_errors), t_max);
  bt.effective_deltas[L] = bt.output_deltas;

  Normalized<delta_t<T>> norm_out;
  if constexpr (is_fixed_v<T>) {
    norm_out = normalize_deltas(std::span<const FixedPoint>(bt.output_deltas), net.formats.delta,
                                params.normalization);
  } else {
    norm_out = normalize_deltas(std::span<const double>(bt.output_deltas), params.normalization);
  }
  bt.skipped = norm_out.skip;

  if (!bt.skipped) {
    bt.backward_spikes[L] = deltas_to_backward_spikes(std::span<const delta_t<T>>(norm_out.values), t_max);
    for (std::size_t k = L - 1; k >= 1; --k) {
      auto res = backward_layer<T>(bt.backward_spikes[k + 1], net.layers[k], fw[k], fw[k + 1],
                                   params.backward_thresholds[k], t_max, net.formats.weight);
      Normalized<delta_t<T>> eff;
      if constexpr (is_fixed_v<T>) {
        eff = effective_hidden_deltas(std::span<const FixedPoint>(res.potentials), net.formats.delta,
                                      params.normalization);
      } else {
        eff = effective_hidden_deltas(std::span<const double>(res.potentials), params.normalization);
      }
      bt.backward_potentials[k] = std::move(res.potentials);
      bt.backward_spikes[k] = std::move(res.spikes);
      bt.effective_deltas[k] = std::move(eff.values);
    }
  }

  for (std::size_t k = L; k >= 1; --k) {
    if (bt.effective_deltas[k].empty()) continue;
    update_weights(net.layers[k - 1], std::span<const delta_t<T>>(bt.effective_deltas[k]), fw[k - 1], fw[k],
                   params.lr);
  }
  return r;
}

}  // namespace spiketime
