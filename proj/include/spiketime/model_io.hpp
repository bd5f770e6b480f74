#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <variant>
#include <vector>

#include "spiketime/errors.hpp"
#include "spiketime/fixed_point.hpp"
#include "spiketime/network.hpp"

namespace spiketime {

// Binary model file, all integers little-endian:
//
//   "SNNMODEL"  magic
//   u32         version (1)
//   u8          mode (0 real, 1 fixed)
//   3 x u8,u8   weight, delta, lr formats (int bits, frac bits)
//   i32         t_max
//   u32         number of layer sizes L, then L x u32 sizes
//   per layer:  weights [post][pre] then thresholds, each value an IEEE
//               double (real) or an i32 raw word (fixed)

inline constexpr std::array<char, 8> kModelMagic{'S', 'N', 'N', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

enum class Mode : std::uint8_t { real = 0, fixed = 1 };

using AnyNetwork = std::variant<Network<double>, Network<FixedPoint>>;

namespace detail {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { le(v, 4); }
  void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v), 4); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  std::string take() { return std::move(buf_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int b = 0; b < n; ++b) buf_.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}
  void expect(const char* p, std::size_t n, const char* what) {
    need(n);
    if (buf_.compare(pos_, n, p, n) != 0) throw FormatError(std::string("model file: bad ") + what);
    pos_ += n;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(le(4))); }
  double f64() { return std::bit_cast<double>(le(8)); }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError("model file truncated");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int b = 0; b < n; ++b) v |= std::uint64_t{static_cast<unsigned char>(buf_[pos_ + b])} << (8 * b);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

inline void write_format(Writer& w, QFormat f) {
  w.u8(static_cast<std::uint8_t>(f.int_bits));
  w.u8(static_cast<std::uint8_t>(f.frac_bits));
}

inline QFormat read_format(Reader& r) {
  QFormat f;
  f.int_bits = r.u8();
  f.frac_bits = r.u8();
  if (!f.valid()) throw FormatError("model file: invalid Q format " + f.to_string());
  return f;
}

}  // namespace detail

template <class T>
std::string serialize_model(const Network<T>& net) {
  net.validate();
  detail::Writer w;
  w.bytes(kModelMagic.data(), kModelMagic.size());
  w.u32(kModelVersion);
  w.u8(static_cast<std::uint8_t>(is_fixed_v<T> ? Mode::fixed : Mode::real));
  detail::write_format(w, net.formats.weight);
  detail::write_format(w, net.formats.delta);
  detail::write_format(w, net.formats.lr);
  w.i32(net.t_max);
  w.u32(static_cast<std::uint32_t>(net.layer_sizes.size()));
  for (auto s : net.layer_sizes) w.u32(static_cast<std::uint32_t>(s));
  auto put = [&](const T& v) {
    if constexpr (is_fixed_v<T>) {
      w.i32(v.raw);
    } else {
      w.f64(v);
    }
  };
  for (const auto& l : net.layers) {
    for (const auto& v : l.weights) put(v);
    for (const auto& v : l.thresholds) put(v);
  }
  return w.take();
}

inline AnyNetwork deserialize_model(const std::string& buf) {
  detail::Reader r(buf);
  r.expect(kModelMagic.data(), kModelMagic.size(), "magic");
  const auto version = r.u32();
  if (version != kModelVersion) throw FormatError("model file: unsupported version " + std::to_string(version));
  const auto mode = r.u8();
  if (mode > 1) throw FormatError("model file: unknown mode");
  FixedFormats formats;
  formats.weight = detail::read_format(r);
  formats.delta = detail::read_format(r);
  formats.lr = detail::read_format(r);
  const int t_max = r.i32();
  const auto count = r.u32();
  if (count < 2 || count > 64) throw FormatError("model file: bad layer count");
  std::vector<std::size_t> sizes;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto s = r.u32();
    if (s == 0 || s > (1u << 20)) throw FormatError("model file: bad layer size");
    sizes.push_back(s);
  }

  auto build = [&]<class T>(auto get) {
    Network<T> net;
    net.layer_sizes = sizes;
    net.t_max = t_max;
    net.formats = formats;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
      Layer<T> l;
      l.fan_in = sizes[k];
      l.size = sizes[k + 1];
      for (std::size_t i = 0; i < l.fan_in * l.size; ++i) l.weights.push_back(get());
      for (std::size_t i = 0; i < l.size; ++i) l.thresholds.push_back(get());
      net.layers.push_back(std::move(l));
    }
    if (!r.done()) throw FormatError("model file: trailing bytes");
    try {
      net.validate();
    } catch (const UsageError& e) {
      throw FormatError(std::string("model file: ") + e.what());
    }
    return net;
  };

  if (mode == static_cast<std::uint8_t>(Mode::fixed)) {
    return build.template operator()<FixedPoint>([&] { return FixedPoint{saturate(r.i32(), formats.weight), formats.weight}; });
  }
  return build.template operator()<double>([&] { return r.f64(); });
}

template <class T>
void save_model(const Network<T>& net, const std::filesystem::path& path) {
  const auto data = serialize_model(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write model file " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("failed writing model file " + path.string());
}

inline AnyNetwork load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(buf);
}

}  // namespace spiketime
