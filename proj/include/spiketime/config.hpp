#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spiketime/errors.hpp"
#include "spiketime/hw_model.hpp"
#include "spiketime/model_io.hpp"
#include "spiketime/network.hpp"
#include "spiketime/training.hpp"

namespace spiketime {

struct DatasetConfig {
  std::string name = "digits";
  std::filesystem::path cache_dir;  // empty: default cache root
  double train_ratio = 0.8;         // only for sets without a fixed split
  std::uint64_t split_seed = 42;
  std::size_t train_subset = 0;     // 0 keeps everything
  std::size_t test_subset = 0;
  std::vector<std::string> mirrors;
};

struct NetworkConfig {
  std::vector<std::size_t> layers{64, 20, 10};
  std::vector<double> thresholds{6.0};
  double init_min = -0.12;
  double init_max = 0.48;
  std::uint64_t seed = 1;
  int t_max = 15;
  Mode mode = Mode::real;
  FixedFormats formats;
};

struct RunConfig {
  DatasetConfig dataset;
  NetworkConfig network;
  TrainConfig train;
  hw::HwConfig hardware;
  std::filesystem::path out_dir = "run";

  RunConfig() {
    train.epochs = 100;
    train.backward.lr = 0.03;
    train.backward.gamma = 3;
    train.backward.backward_threshold_scale = 0.36;
    train.eval_every = 10;
  }

  InitConfig init_config() const {
    InitConfig ic;
    ic.thresholds = network.thresholds;
    ic.init_min = network.init_min;
    ic.init_max = network.init_max;
    ic.seed = network.seed;
    ic.t_max = network.t_max;
    return ic;
  }
};

namespace detail {

template <class N>
N parse_number(const std::string& key, const std::string& text) {
  N v{};
  const char* b = text.data();
  const char* e = b + text.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || p != e) throw ConfigError(key + ": cannot parse '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

template <class N>
std::vector<N> parse_list(const std::string& key, const std::string& text) {
  std::vector<N> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError(key + ": empty list element");
    out.push_back(parse_number<N>(key, item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline QFormat parse_qformat(const std::string& key, const std::string& text) {
  try {
    return QFormat::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

inline const std::map<std::string, Setter>& setters() {
  using K = const std::string&;
  static const std::map<std::string, Setter> table = {
      {"dataset.name", [](RunConfig& c, K, K v) { c.dataset.name = v; }},
      {"dataset.cache_dir", [](RunConfig& c, K, K v) { c.dataset.cache_dir = v; }},
      {"dataset.train_ratio", [](RunConfig& c, K k, K v) { c.dataset.train_ratio = parse_number<double>(k, v); }},
      {"dataset.split_seed", [](RunConfig& c, K k, K v) { c.dataset.split_seed = parse_number<std::uint64_t>(k, v); }},
      {"dataset.train_subset", [](RunConfig& c, K k, K v) { c.dataset.train_subset = parse_number<std::size_t>(k, v); }},
      {"dataset.test_subset", [](RunConfig& c, K k, K v) { c.dataset.test_subset = parse_number<std::size_t>(k, v); }},
      {"dataset.mirrors",
       [](RunConfig& c, K, K v) {
         c.dataset.mirrors.clear();
         std::stringstream ss(v);
         std::string m;
         while (std::getline(ss, m, ';')) {
           if (!m.empty()) c.dataset.mirrors.push_back(m);
         }
       }},
      {"network.layers", [](RunConfig& c, K k, K v) { c.network.layers = parse_list<std::size_t>(k, v); }},
      {"network.thresholds", [](RunConfig& c, K k, K v) { c.network.thresholds = parse_list<double>(k, v); }},
      {"network.init_min", [](RunConfig& c, K k, K v) { c.network.init_min = parse_number<double>(k, v); }},
      {"network.init_max", [](RunConfig& c, K k, K v) { c.network.init_max = parse_number<double>(k, v); }},
      {"network.seed", [](RunConfig& c, K k, K v) { c.network.seed = parse_number<std::uint64_t>(k, v); }},
      {"network.t_max", [](RunConfig& c, K k, K v) { c.network.t_max = parse_number<int>(k, v); }},
      {"network.mode",
       [](RunConfig& c, K k, K v) {
         if (v == "real") {
           c.network.mode = Mode::real;
         } else if (v == "fixed") {
           c.network.mode = Mode::fixed;
         } else {
           throw ConfigError(k + ": expected real or fixed, got '" + v + "'");
         }
       }},
      {"network.weight_format", [](RunConfig& c, K k, K v) { c.network.formats.weight = parse_qformat(k, v); }},
      {"network.delta_format", [](RunConfig& c, K k, K v) { c.network.formats.delta = parse_qformat(k, v); }},
      {"network.lr_format", [](RunConfig& c, K k, K v) { c.network.formats.lr = parse_qformat(k, v); }},
      {"train.epochs", [](RunConfig& c, K k, K v) { c.train.epochs = parse_number<int>(k, v); }},
      {"train.lr", [](RunConfig& c, K k, K v) { c.train.backward.lr = parse_number<double>(k, v); }},
      {"train.gamma", [](RunConfig& c, K k, K v) { c.train.backward.gamma = parse_number<int>(k, v); }},
      {"train.backward_threshold_scale",
       [](RunConfig& c, K k, K v) { c.train.backward.backward_threshold_scale = parse_number<double>(k, v); }},
      {"train.normalization",
       [](RunConfig& c, K k, K v) {
         if (v == "magnitude") {
           c.train.backward.normalization = Normalization::magnitude;
         } else if (v == "signed_sum") {
           c.train.backward.normalization = Normalization::signed_sum;
         } else {
           throw ConfigError(k + ": expected magnitude or signed_sum, got '" + v + "'");
         }
       }},
      {"train.seed", [](RunConfig& c, K k, K v) { c.train.seed = parse_number<std::uint64_t>(k, v); }},
      {"train.shuffle", [](RunConfig& c, K k, K v) { c.train.shuffle = parse_bool(k, v); }},
      {"train.eval_every", [](RunConfig& c, K k, K v) { c.train.eval_every = parse_number<int>(k, v); }},
      {"train.lr_decay", [](RunConfig& c, K k, K v) { c.train.lr_decay = parse_number<double>(k, v); }},
      {"hardware.parallelism", [](RunConfig& c, K k, K v) { c.hardware.parallelism = parse_number<std::size_t>(k, v); }},
      {"hardware.fmax_hz", [](RunConfig& c, K k, K v) { c.hardware.fmax_hz = parse_number<double>(k, v); }},
      {"hardware.timestamp_bits",
       [](RunConfig& c, K k, K v) { c.hardware.forward_timestamp_bits = parse_number<int>(k, v); }},
      {"output.dir", [](RunConfig& c, K, K v) { c.out_dir = v; }},
  };
  return table;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : detail::setters()) keys.push_back(k);
  return keys;
}

// Sets one "section.key" entry. Throws ConfigError for unknown keys or
// malformed values.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = detail::setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

// Parses "section.key=value".
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like section.key=value: " + assignment);
  set_config_value(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

inline void validate_config(const RunConfig& cfg) {
  try {
    cfg.train.validate();
    cfg.hardware.validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  const auto& n = cfg.network;
  if (n.layers.size() < 2) throw ConfigError("network.layers needs at least an input and an output size");
  for (auto s : n.layers) {
    if (s == 0) throw ConfigError("network.layers entries must be positive");
  }
  if (n.thresholds.size() != 1 && n.thresholds.size() != n.layers.size() - 1) {
    throw ConfigError("network.thresholds needs one value or one per non-input layer");
  }
  for (double th : n.thresholds) {
    if (!(th > 0.0)) throw ConfigError("network.thresholds must be positive");
  }
  if (!(n.init_min <= n.init_max)) throw ConfigError("network.init_min exceeds network.init_max");
  if (n.t_max < 1) throw ConfigError("network.t_max must be >= 1");
  if (cfg.train.backward.gamma < 1) throw ConfigError("train.gamma must be >= 1");
  if (!(cfg.dataset.train_ratio > 0.0 && cfg.dataset.train_ratio < 1.0)) {
    throw ConfigError("dataset.train_ratio must lie in (0, 1)");
  }
  if (cfg.dataset.name != "digits" && cfg.dataset.name != "mnist" && cfg.dataset.name != "fashion-mnist") {
    throw ConfigError("dataset.name must be digits, mnist or fashion-mnist");
  }
}

inline RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>") {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(origin + ": key '" + section + "' outside a section");
    }
    for (const auto& [key, value] : body) {
      try {
        set_config_value(cfg, section + "." + key, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
      }
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

}  // namespace spiketime
