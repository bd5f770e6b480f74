#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include "spiketime/audit.hpp"
#include "spiketime/backward.hpp"
#include "spiketime/forward.hpp"
#include "spiketime/network.hpp"
#include "spiketime/sample.hpp"

namespace spiketime {

struct TrainConfig {
  int epochs = 100;
  BackwardConfig backward;
  std::uint64_t seed = 1;
  bool shuffle = true;
  int eval_every = 1;    // 0 disables per-epoch test evaluation
  double lr_decay = 1.0; // multiplier applied to lr after each epoch

  void validate() const {
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (!(backward.lr > 0.0)) throw UsageError("lr must be positive");
    if (!(lr_decay > 0.0)) throw UsageError("lr_decay must be positive");
    if (eval_every < 0) throw UsageError("eval_every must be >= 0");
  }
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // online, measured before each sample's update
  std::optional<double> test_accuracy;
  std::optional<double> active_fraction;  // mean over the test set
  audit::MulCounts muls;
  double wall_seconds = 0.0;
};

using MetricsHistory = std::vector<EpochMetrics>;

// Column order is part of the file contract.
inline void write_metrics_csv_header(std::ostream& os) {
  os << "epoch,loss,train_acc,test_acc,sparsity,mul_count,float_mul_count,wall_seconds\n";
}

inline void write_metrics_csv_row(std::ostream& os, const EpochMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
  os << m.epoch << ',' << m.train_loss << ',' << m.train_accuracy << ',' << opt(m.test_accuracy) << ','
     << opt(m.active_fraction) << ',' << m.muls.int_scalar_product + m.muls.float_mul << ',' << m.muls.float_mul
     << ',' << m.wall_seconds << '\n';
}

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  double mean_loss = 0.0;
  double active_fraction = 0.0;
};

template <class T>
EvalResult evaluate(const Network<T>& net, const std::vector<EncodedSample>& data, int gamma = 1) {
  if (data.empty()) throw UsageError("cannot evaluate on an empty dataset");
  const std::size_t C = net.num_outputs();
  EvalResult r;
  r.confusion.assign(C, std::vector<std::size_t>(C, 0));
  std::size_t correct = 0;
  double loss_sum = 0.0, active_sum = 0.0;
  for (const auto& s : data) {
    if (s.label >= C) throw UsageError("label exceeds output layer size");
    const auto trace = run_forward(net, s.times);
    const std::size_t pred = classify(trace);
    ++r.confusion[s.label][pred];
    if (pred == s.label) ++correct;
    const auto targets = compute_target_times(trace.output_times(), s.label, gamma, net.t_max);
    loss_sum += loss(compute_output_error(trace.output_times(), targets, net.t_max));
    active_sum += count_active_synapses(trace, net).fraction();
  }
  const auto n = static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / n;
  r.mean_loss = loss_sum / n;
  r.active_fraction = active_sum / n;
  return r;
}

namespace detail {
template <class T>
bool all_finite(const Network<T>& net) {
  if constexpr (is_fixed_v<T>) {
    return true;
  } else {
    for (const auto& l : net.layers) {
      for (double w : l.weights) {
        if (!std::isfinite(w)) return false;
      }
      for (double th : l.thresholds) {
        if (!std::isfinite(th)) return false;
      }
    }
    return true;
  }
}
}  // namespace detail

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Online training: one train_step per sample, optionally shuffled each epoch
// with a seeded generator. Deterministic for a given seed and config.
template <class T>
MetricsHistory train(Network<T>& net, const std::vector<EncodedSample>& train_set,
                     const std::vector<EncodedSample>* test_set, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = {}) {
  cfg.validate();
  net.validate();
  if (train_set.empty()) throw UsageError("training set is empty");
  for (const auto& s : train_set) {
    if (s.label >= net.num_outputs()) throw UsageError("label exceeds output layer size");
    if (s.times.size() != net.num_inputs()) throw UsageError("sample length does not match network input");
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  BackwardConfig bcfg = cfg.backward;
  MetricsHistory history;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto muls_before = audit::mul_count_audit();
    const auto params = make_backward_params(net, bcfg);
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (auto idx : order) {
      const auto& s = train_set[idx];
      const auto step = train_step(net, s.times, s.label, params);
      loss_sum += step.loss;
      if (step.predicted == s.label) ++correct;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(train_set.size());
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    m.muls = audit::mul_count_audit() - muls_before;
    if (!std::isfinite(m.train_loss) || !detail::all_finite(net)) {
      throw DivergenceError("training diverged in epoch " + std::to_string(epoch));
    }
    const bool last = epoch == cfg.epochs;
    if (test_set != nullptr && !test_set->empty() && cfg.eval_every > 0 &&
        (epoch % cfg.eval_every == 0 || last)) {
      const auto ev = evaluate(net, *test_set, bcfg.gamma);
      m.test_accuracy = ev.accuracy;
      m.active_fraction = ev.active_fraction;
    }
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(m);
    if (on_epoch) on_epoch(m);
    bcfg.lr *= cfg.lr_decay;
  }
  return history;
}

struct ClassSparsity {
  std::size_t label = 0;
  std::size_t samples = 0;
  double mean_active = 0.0;
  double fraction = 0.0;
};

struct SparsityReport {
  std::vector<ClassSparsity> classes;
  std::size_t synapses = 0;
  double mean_active = 0.0;  // over all samples
  double fraction = 0.0;
};

template <class T>
SparsityReport sparsity_report(const Network<T>& net, const std::vector<EncodedSample>& data) {
  if (data.empty()) throw UsageError("cannot report sparsity on an empty dataset");
  const std::size_t C = net.num_outputs();
  std::vector<double> sums(C, 0.0);
  std::vector<std::size_t> counts(C, 0);
  double total = 0.0;
  for (const auto& s : data) {
    if (s.label >= C) throw UsageError("label exceeds output layer size");
    const auto active = count_active_synapses(run_forward(net, s.times), net);
    sums[s.label] += static_cast<double>(active.total);
    ++counts[s.label];
    total += static_cast<double>(active.total);
  }
  SparsityReport r;
  r.synapses = net.synapse_count();
  const double syn = static_cast<double>(r.synapses);
  for (std::size_t c = 0; c < C; ++c) {
    ClassSparsity cs{c, counts[c], 0.0, 0.0};
    if (counts[c] > 0) {
      cs.mean_active = sums[c] / static_cast<double>(counts[c]);
      cs.fraction = syn > 0 ? cs.mean_active / syn : 0.0;
    }
    r.classes.push_back(cs);
  }
  r.mean_active = total / static_cast<double>(data.size());
  r.fraction = syn > 0 ? r.mean_active / syn : 0.0;
  return r;
}

}  // namespace spiketime
