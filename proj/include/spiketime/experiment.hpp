#pragma once

#include <variant>
#include <vector>

#include "spiketime/config.hpp"
#include "spiketime/datasets.hpp"
#include "spiketime/hw_model.hpp"
#include "spiketime/model_io.hpp"
#include "spiketime/sample.hpp"
#include "spiketime/training.hpp"

namespace spiketime {

struct PreparedData {
  Dataset train_raw;
  Dataset test_raw;
  std::vector<EncodedSample> train;
  std::vector<EncodedSample> test;
};

inline data::DatasetSpec spec_for(const DatasetConfig& dc) {
  return dc.cache_dir.empty() ? data::dataset_spec(dc.name) : data::dataset_spec(dc.name, dc.cache_dir);
}

// Loads a dataset that is already in the cache (verifying checksums), applies
// the configured split and subsets, and encodes it. Never downloads.
inline PreparedData prepare_data(const DatasetConfig& dc, int t_max) {
  const auto spec = spec_for(dc);
  for (const auto& f : spec.files) {
    const auto path = spec.cache_dir / f.filename;
    if (!std::filesystem::exists(path)) {
      throw DownloadError(path.string() + " is not cached; run 'spiketime fetch " + dc.name + "' first");
    }
    if (!data::verify_cached(f, path)) throw ChecksumError("checksum mismatch for cached file " + path.string());
  }
  auto loaded = data::load_cached(spec);
  PreparedData p;
  if (loaded.test.samples.empty()) {
    std::tie(p.train_raw, p.test_raw) = split(loaded.train, dc.train_ratio, dc.split_seed);
  } else {
    p.train_raw = std::move(loaded.train);
    p.test_raw = std::move(loaded.test);
  }
  if (dc.train_subset > 0 && dc.train_subset < p.train_raw.samples.size()) {
    p.train_raw = stratified_subset(p.train_raw, dc.train_subset, dc.split_seed);
  }
  if (dc.test_subset > 0 && dc.test_subset < p.test_raw.samples.size()) {
    p.test_raw = stratified_subset(p.test_raw, dc.test_subset, dc.split_seed);
  }
  p.train = encode_dataset(p.train_raw, t_max);
  p.test = encode_dataset(p.test_raw, t_max);
  return p;
}

struct TrainOutcome {
  AnyNetwork model;
  MetricsHistory history;
  EvalResult final_eval;
};

// Builds the initial network from the config (quantizing it for fixed mode)
// and trains it.
inline TrainOutcome run_training(const RunConfig& cfg, const PreparedData& data, const EpochCallback& on_epoch = {}) {
  validate_config(cfg);
  if (cfg.network.layers.front() != data.train.front().times.size()) {
    throw ConfigError("network.layers input size " + std::to_string(cfg.network.layers.front()) +
                      " does not match the dataset's " + std::to_string(data.train.front().times.size()) + " pixels");
  }
  auto real = random_network(cfg.network.layers, cfg.init_config());
  real.formats = cfg.network.formats;
  TrainOutcome out;
  if (cfg.network.mode == Mode::fixed) {
    auto q = hw::quantize_network(real, cfg.network.formats);
    out.history = train(q.net, data.train, &data.test, cfg.train, on_epoch);
    out.final_eval = evaluate(q.net, data.test, cfg.train.backward.gamma);
    out.model = std::move(q.net);
  } else {
    out.history = train(real, data.train, &data.test, cfg.train, on_epoch);
    out.final_eval = evaluate(real, data.test, cfg.train.backward.gamma);
    out.model = std::move(real);
  }
  return out;
}

}  // namespace spiketime
