#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "spiketime/errors.hpp"
#include "spiketime/fixed_point.hpp"
#include "spiketime/network.hpp"

namespace spiketime::hw {

struct HwConfig {
  std::size_t parallelism = 4;      // synapses fetched and summed per cycle
  double fmax_hz = 142.45e6;        // clock used for the throughput figures
  double fmax_forward_hz = 125.5e6;
  double fmax_backward_hz = 105.3e6;
  int forward_timestamp_bits = 4;   // 16-step window
  int backward_timestamp_bits = 5;  // sign + 4-bit time
  QFormat weight_format = kQ5_7;

  int window_steps() const { return 1 << forward_timestamp_bits; }

  void validate() const {
    if (parallelism < 1) throw UsageError("parallelism must be >= 1");
    if (!(fmax_hz > 0.0)) throw UsageError("fmax must be positive");
    if (forward_timestamp_bits < 1 || forward_timestamp_bits > 16) throw UsageError("bad timestamp width");
  }
};

// ---------------------------------------------------------------------------
// Cycle model

inline std::size_t layer_cycles(std::size_t fan_in, std::size_t parallelism) {
  if (fan_in < 1) throw UsageError("fan_in must be >= 1");
  if (parallelism < 1) throw UsageError("parallelism must be >= 1");
  return (fan_in + parallelism - 1) / parallelism;
}

inline std::size_t network_cycles(const std::vector<std::size_t>& layer_sizes, std::size_t parallelism) {
  if (layer_sizes.size() < 2) throw UsageError("need at least two layers");
  std::size_t total = 0;
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) total += layer_cycles(layer_sizes[k], parallelism);
  return total;
}

inline constexpr std::size_t kBackwardCyclesMin = 3;
inline constexpr std::size_t kBackwardCyclesMax = 5;

// Weight update of one layer, ceil(fan_in / p) confined to the 3..5 cycle
// band the hardware reports.
inline std::size_t backward_layer_cycles(std::size_t fan_in, std::size_t parallelism) {
  return std::clamp(layer_cycles(fan_in, parallelism), kBackwardCyclesMin, kBackwardCyclesMax);
}

struct ThroughputReport {
  std::vector<std::size_t> layer_cycles;  // per non-input layer
  std::size_t cycles_per_sample = 0;
  int window_steps = 16;
  double fmax_hz = 0.0;
  double samples_per_second = 0.0;
  std::size_t input_features = 0;
  double feaps = 0.0;
  std::vector<std::size_t> backward_layer_cycles;
  std::size_t backward_cycles_min = 0;
  std::size_t backward_cycles_max = 0;

  static constexpr const char* samples_formula = "samples/s = fmax / (cycles_per_sample * window_steps)";
  static constexpr const char* feaps_formula = "FeaPS = samples/s * input_features";
};

inline ThroughputReport throughput_report(const std::vector<std::size_t>& layer_sizes, const HwConfig& hw) {
  hw.validate();
  ThroughputReport r;
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    r.layer_cycles.push_back(layer_cycles(layer_sizes[k], hw.parallelism));
    r.backward_layer_cycles.push_back(backward_layer_cycles(layer_sizes[k], hw.parallelism));
  }
  r.cycles_per_sample = network_cycles(layer_sizes, hw.parallelism);
  r.window_steps = hw.window_steps();
  r.fmax_hz = hw.fmax_hz;
  r.samples_per_second = hw.fmax_hz / (static_cast<double>(r.cycles_per_sample) * r.window_steps);
  r.input_features = layer_sizes.front();
  r.feaps = r.samples_per_second * static_cast<double>(r.input_features);
  r.backward_cycles_min = kBackwardCyclesMin * r.layer_cycles.size();
  r.backward_cycles_max = kBackwardCyclesMax * r.layer_cycles.size();
  return r;
}

// ---------------------------------------------------------------------------
// Quantization

struct QuantizationReport {
  double max_abs_error = 0.0;
  double mean_abs_error = 0.0;
  std::size_t saturated = 0;  // values outside the format's range
  std::size_t values = 0;
};

struct QuantizedNetwork {
  Network<FixedPoint> net;
  QuantizationReport report;
};

inline QuantizedNetwork quantize_network(const Network<double>& real, const FixedFormats& formats = {},
                                         Rounding rounding = Rounding::nearest_even) {
  real.validate();
  QuantizedNetwork q;
  q.net.layer_sizes = real.layer_sizes;
  q.net.t_max = real.t_max;
  q.net.formats = formats;
  const QFormat fmt = formats.weight;
  const double lo = std::ldexp(static_cast<double>(fmt.raw_min()), -fmt.frac_bits);
  const double hi = std::ldexp(static_cast<double>(fmt.raw_max()), -fmt.frac_bits);
  double err_sum = 0.0;
  auto convert = [&](double x) {
    const FixedPoint f = from_real(x, fmt, rounding);
    const double err = std::abs(f.to_real() - x);
    if (x < lo || x > hi) {
      ++q.report.saturated;
    } else {
      q.report.max_abs_error = std::max(q.report.max_abs_error, err);
      err_sum += err;
    }
    ++q.report.values;
    return f;
  };
  for (const auto& layer : real.layers) {
    Layer<FixedPoint> fl;
    fl.fan_in = layer.fan_in;
    fl.size = layer.size;
    fl.weights.reserve(layer.weights.size());
    for (double w : layer.weights) fl.weights.push_back(convert(w));
    for (double th : layer.thresholds) {
      FixedPoint f = convert(th);
      if (f.raw <= 0) f.raw = 1;  // thresholds stay positive
      fl.thresholds.push_back(f);
    }
    q.net.layers.push_back(std::move(fl));
  }
  const std::size_t in_range = q.report.values - q.report.saturated;
  q.report.mean_abs_error = in_range ? err_sum / static_cast<double>(in_range) : 0.0;
  q.net.validate();
  return q;
}

inline Network<double> dequantize_network(const Network<FixedPoint>& fixed) {
  Network<double> net;
  net.layer_sizes = fixed.layer_sizes;
  net.t_max = fixed.t_max;
  net.formats = fixed.formats;
  for (const auto& layer : fixed.layers) {
    Layer<double> l;
    l.fan_in = layer.fan_in;
    l.size = layer.size;
    for (const auto& w : layer.weights) l.weights.push_back(w.to_real());
    for (const auto& th : layer.thresholds) l.thresholds.push_back(th.to_real());
    net.layers.push_back(std::move(l));
  }
  return net;
}

// ---------------------------------------------------------------------------
// BRAM weight images
//
// Each neuron owns a sequence of 48-bit words. Word k holds the raw 12-bit
// weights of presynaptic inputs 4k..4k+3, input 4k in bits 0..11, 4k+1 in
// bits 12..23 and so on. Unused slots of the last word are zero.

inline constexpr std::size_t kWeightsPerWord = 4;
inline constexpr int kWeightBits = 12;
inline constexpr std::uint64_t kWeightMask = (std::uint64_t{1} << kWeightBits) - 1;
inline constexpr std::uint64_t kWordMask = (std::uint64_t{1} << (kWeightBits * kWeightsPerWord)) - 1;
inline constexpr std::array<char, 8> kBramMagic{'S', 'N', 'N', 'B', 'R', 'A', 'M', '1'};

struct BramImage {
  std::uint16_t layer = 0;   // network layer number of the neuron (1 = first hidden)
  std::uint16_t neuron = 0;
  std::vector<std::uint64_t> words;

  friend bool operator==(const BramImage&, const BramImage&) = default;
};

inline std::uint64_t pack_word(std::span<const std::int32_t> raws) {
  if (raws.size() > kWeightsPerWord) throw UsageError("at most four weights per word");
  std::uint64_t word = 0;
  for (std::size_t s = 0; s < raws.size(); ++s) {
    word |= (static_cast<std::uint64_t>(static_cast<std::uint32_t>(raws[s])) & kWeightMask) << (kWeightBits * s);
  }
  return word;
}

inline std::array<std::int32_t, kWeightsPerWord> unpack_word(std::uint64_t word) {
  std::array<std::int32_t, kWeightsPerWord> raws{};
  for (std::size_t s = 0; s < kWeightsPerWord; ++s) {
    auto v = static_cast<std::int32_t>((word >> (kWeightBits * s)) & kWeightMask);
    if (v & (1 << (kWeightBits - 1))) v -= (1 << kWeightBits);  // sign-extend
    raws[s] = v;
  }
  return raws;
}

inline std::vector<BramImage> export_bram(const Network<FixedPoint>& net) {
  net.validate();
  if (net.formats.weight.width() != kWeightBits) {
    throw UsageError("BRAM images need 12-bit weights, got " + net.formats.weight.to_string());
  }
  std::vector<BramImage> images;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& layer = net.layers[k];
    for (std::size_t j = 0; j < layer.size; ++j) {
      BramImage img;
      img.layer = static_cast<std::uint16_t>(k + 1);
      img.neuron = static_cast<std::uint16_t>(j);
      std::vector<std::int32_t> raws(layer.fan_in);
      for (std::size_t i = 0; i < layer.fan_in; ++i) raws[i] = layer.weight(j, i).raw;
      for (std::size_t base = 0; base < raws.size(); base += kWeightsPerWord) {
        const std::size_t n = std::min(kWeightsPerWord, raws.size() - base);
        img.words.push_back(pack_word(std::span<const std::int32_t>(raws).subspan(base, n)));
      }
      images.push_back(std::move(img));
    }
  }
  return images;
}

// Writes the weights stored in the images back into a network of the same
// shape.
inline void import_bram(const std::vector<BramImage>& images, Network<FixedPoint>& net) {
  for (const auto& img : images) {
    if (img.layer < 1 || img.layer > net.layers.size()) throw FormatError("BRAM image layer out of range");
    auto& layer = net.layers[img.layer - 1];
    if (img.neuron >= layer.size) throw FormatError("BRAM image neuron out of range");
    if (img.words.size() != (layer.fan_in + kWeightsPerWord - 1) / kWeightsPerWord) {
      throw FormatError("BRAM image word count does not match fan-in");
    }
    for (std::size_t k = 0; k < img.words.size(); ++k) {
      const auto raws = unpack_word(img.words[k]);
      for (std::size_t s = 0; s < kWeightsPerWord; ++s) {
        const std::size_t i = k * kWeightsPerWord + s;
        if (i < layer.fan_in) layer.weight(img.neuron, i) = FixedPoint{raws[s], net.formats.weight};
      }
    }
  }
}

namespace detail {
inline void put_le(std::string& buf, std::uint64_t v, int bytes) {
  for (int b = 0; b < bytes; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}
inline std::uint64_t get_le(const std::string& buf, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + b])) << (8 * b);
  return v;
}
}  // namespace detail

// 16-byte header: magic "SNNBRAM1", u16 layer, u16 neuron, u32 word count,
// all little-endian; then 6 little-endian bytes per word.
inline std::string serialize_bram(const BramImage& img) {
  std::string buf(kBramMagic.begin(), kBramMagic.end());
  detail::put_le(buf, img.layer, 2);
  detail::put_le(buf, img.neuron, 2);
  detail::put_le(buf, img.words.size(), 4);
  for (auto w : img.words) detail::put_le(buf, w & kWordMask, 6);
  return buf;
}

inline BramImage deserialize_bram(const std::string& buf) {
  if (buf.size() < 16 || !std::equal(kBramMagic.begin(), kBramMagic.end(), buf.begin())) {
    throw FormatError("not a BRAM image (bad magic)");
  }
  BramImage img;
  img.layer = static_cast<std::uint16_t>(detail::get_le(buf, 8, 2));
  img.neuron = static_cast<std::uint16_t>(detail::get_le(buf, 10, 2));
  const auto count = detail::get_le(buf, 12, 4);
  if (buf.size() != 16 + 6 * count) throw FormatError("BRAM image truncated or oversized");
  for (std::uint64_t k = 0; k < count; ++k) img.words.push_back(detail::get_le(buf, 16 + 6 * k, 6));
  return img;
}

// Memory-init text: one 12-hex-digit word per line.
inline std::string to_hex_text(const BramImage& img) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (auto w : img.words) os << std::setw(12) << (w & kWordMask) << '\n';
  return os.str();
}

inline std::vector<std::uint64_t> parse_hex_text(const std::string& text) {
  std::vector<std::uint64_t> words;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.size() != 12) throw FormatError("hex memory line must have 12 digits");
    words.push_back(std::stoull(line, nullptr, 16));
  }
  return words;
}

inline std::string bram_basename(const BramImage& img) {
  char name[48];
  std::snprintf(name, sizeof name, "layer%u_neuron%03u", static_cast<unsigned>(img.layer),
                static_cast<unsigned>(img.neuron));
  return name;
}

// Writes <dir>/<basename>.bin and .mem per image. Returns files written.
inline std::size_t write_bram_files(const std::vector<BramImage>& images, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::size_t n = 0;
  for (const auto& img : images) {
    const auto base = dir / bram_basename(img);
    std::ofstream bin(base.string() + ".bin", std::ios::binary);
    std::ofstream mem(base.string() + ".mem");
    if (!bin || !mem) throw std::runtime_error("cannot write BRAM image under " + dir.string());
    const auto data = serialize_bram(img);
    bin.write(data.data(), static_cast<std::streamsize>(data.size()));
    mem << to_hex_text(img);
    if (!bin || !mem) throw std::runtime_error("failed writing " + base.string());
    n += 2;
  }
  return n;
}

inline BramImage read_bram_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_bram(buf);
}

}  // namespace spiketime::hw
