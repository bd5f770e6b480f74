#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "spiketime/encoding.hpp"
#include "spiketime/errors.hpp"

namespace spiketime {

struct Sample {
  std::vector<int> pixels;
  std::size_t label = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  int i_max = 255;
  std::size_t num_classes = 10;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

// Encoded view used by training and evaluation.
struct EncodedSample {
  SpikeTimes times;
  std::size_t label = 0;
};

inline std::vector<EncodedSample> encode_dataset(const Dataset& data, int t_max) {
  const EncodingConfig cfg{data.i_max, t_max};
  std::vector<EncodedSample> out;
  out.reserve(data.size());
  for (const auto& s : data.samples) out.push_back({encode_image(s.pixels, cfg), s.label});
  return out;
}

namespace detail {

// Shuffles each class with one seeded stream and moves the first quota[c]
// indices of class c to the first side.
inline std::pair<Dataset, Dataset> split_by_quota(const Dataset& data,
                                                  const std::map<std::size_t, std::vector<std::size_t>>& by_class,
                                                  const std::map<std::size_t, std::size_t>& quota, std::mt19937_64& rng) {
  std::vector<std::size_t> first, second;
  for (auto idx_copy : by_class) {
    auto& idx = idx_copy.second;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<std::ptrdiff_t>(quota.at(idx_copy.first));
    first.insert(first.end(), idx.begin(), idx.begin() + n);
    second.insert(second.end(), idx.begin() + n, idx.end());
  }
  std::shuffle(first.begin(), first.end(), rng);
  std::shuffle(second.begin(), second.end(), rng);

  auto take = [&](const std::vector<std::size_t>& idx) {
    Dataset d;
    d.i_max = data.i_max;
    d.num_classes = data.num_classes;
    d.samples.reserve(idx.size());
    for (auto i : idx) d.samples.push_back(data.samples[i]);
    return d;
  };
  return {take(first), take(second)};
}

inline std::map<std::size_t, std::vector<std::size_t>> group_by_class(const Dataset& data) {
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.samples[i].label].push_back(i);
  return by_class;
}

}  // namespace detail

// Stratified, seeded shuffle-split. Each class contributes round(n * ratio)
// samples to the training side.
inline std::pair<Dataset, Dataset> split(const Dataset& data, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("split ratio must lie strictly between 0 and 1");
  const auto by_class = detail::group_by_class(data);
  std::map<std::size_t, std::size_t> quota;
  for (const auto& [label, idx] : by_class) {
    quota[label] = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * ratio));
  }
  std::mt19937_64 rng(seed);
  return detail::split_by_quota(data, by_class, quota, rng);
}

// Stratified subset of exactly n samples (or everything if n >= size).
// Class quotas use largest remainders so the total comes out exact.
inline Dataset stratified_subset(const Dataset& data, std::size_t n, std::uint64_t seed) {
  if (n >= data.size()) return data;
  const auto by_class = detail::group_by_class(data);
  std::map<std::size_t, std::size_t> quota;
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t given = 0;
  for (const auto& [label, idx] : by_class) {
    const double exact = static_cast<double>(idx.size()) * static_cast<double>(n) / static_cast<double>(data.size());
    quota[label] = static_cast<std::size_t>(std::floor(exact));
    given += quota[label];
    rem.emplace_back(exact - std::floor(exact), label);
  }
  // larger remainder first, lower label on ties
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t k = 0; given < n; ++k, ++given) ++quota[rem[k].second];
  std::mt19937_64 rng(seed);
  return detail::split_by_quota(data, by_class, quota, rng).first;
}

}  // namespace spiketime
