// spiketime command-line front end.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 dataset or
// filesystem error, 3 training divergence.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "spiketime/config.hpp"
#include "spiketime/datasets.hpp"
#include "spiketime/experiment.hpp"
#include "spiketime/hw_model.hpp"
#include "spiketime/model_io.hpp"
#include "spiketime/training.hpp"

namespace fs = std::filesystem;
using namespace spiketime;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kDiverged = 3 };

// Raised for filesystem problems under --out; maps to exit 2.
struct OutputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw OutputError("cannot create output directory " + dir.string());
  const auto probe = dir / ".write-test";
  {
    std::ofstream f(probe);
    if (!f) throw OutputError("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw OutputError("cannot write " + path.string());
  return f;
}

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
  std::optional<std::string> out;
  std::optional<std::string> dataset;

  void attach(CLI::App* cmd, bool need_config) {
    auto* opt = cmd->add_option("-c,--config", path, "INI config file");
    if (need_config) opt->required();
    cmd->add_option("-s,--set", overrides, "override a config entry, e.g. train.epochs=20")->take_all();
    cmd->add_option("-o,--out", out, "output directory (overrides output.dir)");
    cmd->add_option("-d,--dataset", dataset, "dataset name (overrides dataset.name)");
  }

  RunConfig resolve() const {
    RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
    for (const auto& o : overrides) apply_override(cfg, o);
    if (dataset) cfg.dataset.name = *dataset;
    if (out) cfg.out_dir = *out;
    validate_config(cfg);
    return cfg;
  }
};

std::string pct(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * x << '%';
  return os.str();
}

void write_confusion_csv(std::ostream& os, const EvalResult& r) {
  os << "true\\pred";
  for (std::size_t c = 0; c < r.confusion.size(); ++c) os << ',' << c;
  os << '\n';
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    os << t;
    for (auto n : r.confusion[t]) os << ',' << n;
    os << '\n';
  }
}

void print_confusion(std::ostream& os, const EvalResult& r) {
  os << "confusion (rows true, columns predicted):\n     ";
  for (std::size_t c = 0; c < r.confusion.size(); ++c) os << std::setw(6) << c;
  os << '\n';
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    os << std::setw(5) << t;
    for (auto n : r.confusion[t]) os << std::setw(6) << n;
    os << '\n';
  }
}

// A missing or corrupt model file is an argument error (exit 1).
AnyNetwork open_model(const std::string& path) {
  try {
    return load_model(path);
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
}

template <class F>
auto with_model(const AnyNetwork& m, F&& f) {
  return std::visit(std::forward<F>(f), m);
}

// --- fetch ----------------------------------------------------------------

int cmd_fetch(const std::vector<std::string>& names, const std::vector<std::string>& mirrors,
              const std::string& cache_dir, bool force, bool offline) {
  for (const auto& name : names) {
    const auto spec = cache_dir.empty() ? data::dataset_spec(name) : data::dataset_spec(name, cache_dir);
    data::FetchOptions opts;
    opts.mirrors = mirrors;
    opts.force = force;
    opts.allow_network = !offline;
    opts.log = &std::cout;
    const auto r = data::fetch(spec, opts);
    std::cout << name << ": " << r.files.size() << " files in " << spec.cache_dir.string() << " ("
              << r.downloaded << " downloaded)\n";
  }
  return kOk;
}

// --- train ----------------------------------------------------------------

int cmd_train(const ConfigArgs& args, bool quiet) {
  const RunConfig cfg = args.resolve();
  ensure_out_dir(cfg.out_dir);
  const auto data = prepare_data(cfg.dataset, cfg.network.t_max);

  auto csv = open_out(cfg.out_dir / "metrics.csv");
  write_metrics_csv_header(csv);
  auto on_epoch = [&](const EpochMetrics& m) {
    write_metrics_csv_row(csv, m);
    csv.flush();
    if (!quiet) {
      std::cout << "epoch " << std::setw(3) << m.epoch << "  loss " << std::setprecision(5) << m.train_loss
                << "  train " << pct(m.train_accuracy);
      if (m.test_accuracy) std::cout << "  test " << pct(*m.test_accuracy);
      std::cout << "  " << std::setprecision(3) << m.wall_seconds << "s" << std::endl;
    }
  };
  const auto outcome = run_training(cfg, data, on_epoch);
  with_model(outcome.model, [&](const auto& net) { save_model(net, cfg.out_dir / "model.snn"); });

  std::ostringstream summary;
  summary << "dataset        " << cfg.dataset.name << " (" << data.train.size() << " train, " << data.test.size()
          << " test)\n";
  summary << "architecture   ";
  for (std::size_t k = 0; k < cfg.network.layers.size(); ++k) summary << (k ? "-" : "") << cfg.network.layers[k];
  summary << "\nmode           " << (cfg.network.mode == Mode::fixed ? "fixed" : "real") << "\n";
  summary << "epochs         " << cfg.train.epochs << "\n";
  summary << "test accuracy  " << pct(outcome.final_eval.accuracy) << "\n";
  summary << "active synapses " << pct(outcome.final_eval.active_fraction) << " of "
          << with_model(outcome.model, [](const auto& n) { return n.synapse_count(); }) << "\n";
  const auto& last = outcome.history.back();
  summary << "last epoch     scalar products " << last.muls.int_scalar_product << ", float multiplies "
          << last.muls.float_mul << "\n";
  summary << "model          " << (cfg.out_dir / "model.snn").string() << "\n";
  auto sf = open_out(cfg.out_dir / "summary.txt");
  sf << summary.str();
  std::cout << summary.str();
  return kOk;
}

// --- eval -----------------------------------------------------------------

int cmd_eval(const std::string& model_path, const ConfigArgs& args, bool json) {
  const AnyNetwork model = open_model(model_path);
  const RunConfig cfg = args.resolve();
  const int t_max = with_model(model, [](const auto& n) { return n.t_max; });
  const auto data = prepare_data(cfg.dataset, t_max);
  const auto r = with_model(model, [&](const auto& n) { return evaluate(n, data.test, cfg.train.backward.gamma); });

  if (args.out) {
    ensure_out_dir(*args.out);
    auto f = open_out(fs::path(*args.out) / "confusion.csv");
    write_confusion_csv(f, r);
  }
  if (json) {
    nlohmann::json j;
    j["model"] = model_path;
    j["dataset"] = cfg.dataset.name;
    j["samples"] = data.test.size();
    j["accuracy"] = r.accuracy;
    j["mean_loss"] = r.mean_loss;
    j["active_fraction"] = r.active_fraction;
    j["confusion"] = r.confusion;
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "accuracy " << pct(r.accuracy) << " on " << data.test.size() << " " << cfg.dataset.name
              << " test samples\nmean loss " << r.mean_loss << "\n";
    print_confusion(std::cout, r);
  }
  return kOk;
}

// --- sparsity -------------------------------------------------------------

int cmd_sparsity(const std::string& model_path, const ConfigArgs& args) {
  const AnyNetwork model = open_model(model_path);
  const RunConfig cfg = args.resolve();
  const int t_max = with_model(model, [](const auto& n) { return n.t_max; });
  const auto data = prepare_data(cfg.dataset, t_max);
  const auto rep = with_model(model, [&](const auto& n) { return sparsity_report(n, data.test); });

  std::ostringstream csv;
  csv << "class,samples,mean_active,fraction\n";
  std::cout << "class  samples  mean active synapses  percent\n";
  for (const auto& c : rep.classes) {
    csv << c.label << ',' << c.samples << ',' << c.mean_active << ',' << c.fraction << '\n';
    std::cout << std::setw(5) << c.label << std::setw(9) << c.samples << std::setw(22) << std::fixed
              << std::setprecision(1) << c.mean_active << std::setw(9) << pct(c.fraction) << '\n';
  }
  std::cout << "total  " << std::setw(9) << data.test.size() << std::setw(22) << rep.mean_active << std::setw(9)
            << pct(rep.fraction) << "  of " << rep.synapses << " synapses\n";
  if (args.out) {
    ensure_out_dir(*args.out);
    auto f = open_out(fs::path(*args.out) / "sparsity.csv");
    f << csv.str();
  }
  return kOk;
}

// --- export-bram ----------------------------------------------------------

int cmd_export(const std::string& model_path, const std::string& out_dir) {
  const AnyNetwork model = open_model(model_path);
  Network<FixedPoint> fixed;
  if (const auto* real = std::get_if<Network<double>>(&model)) {
    const auto q = hw::quantize_network(*real, real->formats);
    fixed = q.net;
    std::cout << "real-valued model quantized to " << fixed.formats.weight.to_string() << ": " << q.report.values
              << " values, " << q.report.saturated << " saturated, max abs error " << q.report.max_abs_error
              << ", mean abs error " << q.report.mean_abs_error << "\n";
  } else {
    fixed = std::get<Network<FixedPoint>>(model);
    std::cout << "fixed-point model, weights already in " << fixed.formats.weight.to_string() << "\n";
  }
  ensure_out_dir(out_dir);
  const auto images = hw::export_bram(fixed);
  std::size_t files = 0;
  try {
    files = hw::write_bram_files(images, out_dir);
  } catch (const std::runtime_error& e) {
    throw OutputError(e.what());
  }
  std::cout << images.size() << " neuron images (" << files << " files) written to " << out_dir << "\n";
  return kOk;
}

// --- hwreport -------------------------------------------------------------

int cmd_hwreport(const ConfigArgs& args, std::optional<std::string> layers, std::optional<std::size_t> parallelism,
                 std::optional<double> fmax) {
  RunConfig cfg = args.resolve();
  if (layers) set_config_value(cfg, "network.layers", *layers);
  if (parallelism) cfg.hardware.parallelism = *parallelism;
  if (fmax) cfg.hardware.fmax_hz = *fmax;
  validate_config(cfg);
  const auto r = hw::throughput_report(cfg.network.layers, cfg.hardware);

  std::cout << "architecture ";
  for (std::size_t k = 0; k < cfg.network.layers.size(); ++k) std::cout << (k ? "-" : "") << cfg.network.layers[k];
  std::cout << ", parallelism " << cfg.hardware.parallelism << ", fmax " << cfg.hardware.fmax_hz / 1e6 << " MHz\n\n";
  std::cout << "layer  fan_in  neurons  cycles = ceil(fan_in / p)  update cycles\n";
  for (std::size_t k = 0; k < r.layer_cycles.size(); ++k) {
    std::cout << std::setw(5) << k + 1 << std::setw(8) << cfg.network.layers[k] << std::setw(9)
              << cfg.network.layers[k + 1] << std::setw(27) << r.layer_cycles[k] << std::setw(15)
              << r.backward_layer_cycles[k] << '\n';
  }
  std::cout << "\nnetwork cycles per step   " << r.cycles_per_sample << "\n";
  std::cout << "window steps              " << r.window_steps << "\n";
  std::cout << "samples/s                 " << std::setprecision(6) << r.samples_per_second << "   ("
            << hw::ThroughputReport::samples_formula << ")\n";
  std::cout << "FeaPS                     " << r.feaps << "   (" << hw::ThroughputReport::feaps_formula << ")\n";
  std::cout << "update cycles per sample  " << r.backward_cycles_min << ".." << r.backward_cycles_max << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spike-time supervised learning for single-spike SNNs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "spiketime 1.0");

  auto* fetch = app.add_subcommand("fetch", "download and verify datasets into the cache");
  std::vector<std::string> fetch_names{"digits"};
  std::vector<std::string> mirrors;
  std::string cache_dir;
  bool force = false, offline = false;
  fetch->add_option("datasets", fetch_names, "digits, mnist, fashion-mnist");
  fetch->add_option("-m,--mirror", mirrors, "extra base URL tried first (file:// allowed)");
  fetch->add_option("--cache-dir", cache_dir, "cache root (default $SPIKETIME_CACHE_DIR or ~/.cache/spiketime)");
  fetch->add_flag("--force", force, "re-download even if cached");
  fetch->add_flag("--offline", offline, "only use mirrors");

  auto* train = app.add_subcommand("train", "train a network and write model.snn, metrics.csv, summary.txt");
  ConfigArgs train_args;
  train_args.attach(train, true);
  bool quiet = false;
  train->add_flag("-q,--quiet", quiet, "no per-epoch output");

  auto* eval = app.add_subcommand("eval", "evaluate a model on the test split");
  ConfigArgs eval_args;
  std::string eval_model;
  bool json = false;
  eval->add_option("model", eval_model, "model file")->required();
  eval_args.attach(eval, false);
  eval->add_flag("--json", json, "machine-readable report");

  auto* sparsity = app.add_subcommand("sparsity", "per-class active-synapse table");
  ConfigArgs sp_args;
  std::string sp_model;
  sparsity->add_option("model", sp_model, "model file")->required();
  sp_args.attach(sparsity, false);

  auto* exp = app.add_subcommand("export-bram", "write per-neuron BRAM weight images");
  std::string exp_model, exp_out;
  exp->add_option("model", exp_model, "model file")->required();
  exp->add_option("-o,--out", exp_out, "output directory")->required();

  auto* hwr = app.add_subcommand("hwreport", "cycle and throughput model");
  ConfigArgs hw_args;
  hw_args.attach(hwr, false);
  std::optional<std::string> hw_layers;
  std::optional<std::size_t> hw_p;
  std::optional<double> hw_fmax;
  hwr->add_option("-l,--layers", hw_layers, "comma-separated layer sizes, e.g. 64,20,10");
  hwr->add_option("-p,--parallelism", hw_p, "synapses per cycle");
  hwr->add_option("--fmax", hw_fmax, "clock in Hz");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*fetch) return cmd_fetch(fetch_names, mirrors, cache_dir, force, offline);
    if (*train) return cmd_train(train_args, quiet);
    if (*eval) return cmd_eval(eval_model, eval_args, json);
    if (*sparsity) return cmd_sparsity(sp_model, sp_args);
    if (*exp) return cmd_export(exp_model, exp_out);
    if (*hwr) return cmd_hwreport(hw_args, hw_layers, hw_p, hw_fmax);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const FormatError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kData;
  } catch (const DownloadError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kData;
  } catch (const ChecksumError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kData;
  } catch (const InputError& e) {
    std::cerr << "dataset error: " << e.what() << '\n';
    return kData;
  } catch (const OutputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
  return kOk;
}
