#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "spiketime/hw_model.hpp"

using namespace spiketime;
namespace fs = std::filesystem;

TEST(Cycles, QuotedFigures) {
  EXPECT_EQ(hw::layer_cycles(64, 4), 16u);
  EXPECT_EQ(hw::layer_cycles(20, 4), 5u);
  EXPECT_EQ(hw::network_cycles({64, 20, 10}, 4), 21u);
  EXPECT_EQ(hw::network_cycles({64, 20, 20, 10}, 4), 26u);
  EXPECT_EQ(hw::layer_cycles(64, 8), 8u);
  EXPECT_THROW(hw::layer_cycles(0, 4), UsageError);
  EXPECT_THROW(hw::layer_cycles(4, 0), UsageError);
}

TEST(CyclesProperty, CeilDivision) {
  for (std::size_t n = 1; n <= 1024; ++n) {
    ASSERT_EQ(hw::layer_cycles(n, 4), (n + 3) / 4);
    ASSERT_EQ(hw::layer_cycles(n, 4) * 4 >= n, true);
    ASSERT_LT((hw::layer_cycles(n, 4) - 1) * 4, n);
  }
}

TEST(Throughput, FormulaValues) {
  hw::HwConfig cfg;
  const auto r = hw::throughput_report({64, 20, 10}, cfg);
  EXPECT_EQ(r.cycles_per_sample, 21u);
  EXPECT_EQ(r.window_steps, 16);
  EXPECT_DOUBLE_EQ(r.samples_per_second, 142.45e6 / (21.0 * 16.0));
  EXPECT_DOUBLE_EQ(r.feaps, r.samples_per_second * 64.0);
  EXPECT_EQ(r.backward_layer_cycles, (std::vector<std::size_t>{5, 5}));
  EXPECT_EQ(hw::backward_layer_cycles(4, 4), 3u);
  EXPECT_EQ(hw::backward_layer_cycles(784, 4), 5u);
}

TEST(Quantize, ErrorWithinHalfUlp) {
  InitConfig ic;
  ic.init_min = -1.0;
  ic.init_max = 1.0;
  const auto net = random_network({64, 20, 10}, ic);
  const auto q = hw::quantize_network(net);
  EXPECT_EQ(q.report.saturated, 0u);
  EXPECT_LE(q.report.max_abs_error, std::ldexp(1.0, -8));
  const auto back = hw::dequantize_network(q.net);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < net.layers[k].weights.size(); ++i) {
      EXPECT_LE(std::abs(back.layers[k].weights[i] - net.layers[k].weights[i]), std::ldexp(1.0, -8));
    }
  }
}

TEST(Quantize, CountsSaturation) {
  InitConfig ic;
  ic.init_min = 20.0;
  ic.init_max = 30.0;
  const auto q = hw::quantize_network(random_network({4, 2}, ic));
  EXPECT_EQ(q.report.saturated, 8u);
  for (const auto& w : q.net.layers[0].weights) EXPECT_EQ(w.raw, 2047);
}

TEST(Bram, PackOrderLowestIndexInLowBits) {
  const std::vector<std::int32_t> raws{1, 2, 3, -1};
  const auto w = hw::pack_word(raws);
  EXPECT_EQ(w, 0xFFF003002001ull);
  const auto back = hw::unpack_word(w);
  EXPECT_EQ(back[0], 1);
  EXPECT_EQ(back[3], -1);
}

TEST(Bram, SerializedLayout) {
  hw::BramImage img;
  img.layer = 2;
  img.neuron = 7;
  img.words = {0x0123456789ABull};
  const auto bytes = hw::serialize_bram(img);
  ASSERT_EQ(bytes.size(), 22u);
  EXPECT_EQ(bytes.substr(0, 8), "SNNBRAM1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[10]), 7);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 0xAB);
  EXPECT_EQ(static_cast<unsigned char>(bytes[21]), 0x01);
  EXPECT_EQ(hw::to_hex_text(img), "0123456789ab\n");
  EXPECT_EQ(hw::deserialize_bram(bytes), img);
  EXPECT_THROW(hw::deserialize_bram(bytes.substr(0, 20)), FormatError);
  EXPECT_THROW(hw::deserialize_bram("NOTBRAM1" + bytes.substr(8)), FormatError);
}

TEST(BramProperty, ExportImportIdentity) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    InitConfig ic;
    ic.seed = rng();
    ic.init_min = -16.0;
    ic.init_max = 16.0;
    const std::size_t a = 1 + rng() % 30, b = 1 + rng() % 12, c = 1 + rng() % 10;
    const auto q = hw::quantize_network(random_network({a, b, c}, ic)).net;
    const auto images = hw::export_bram(q);
    ASSERT_EQ(images.size(), b + c);
    auto blank = q;
    for (auto& l : blank.layers) {
      for (auto& w : l.weights) w.raw = 0;
    }
    std::vector<hw::BramImage> reread;
    for (const auto& img : images) {
      reread.push_back(hw::deserialize_bram(hw::serialize_bram(img)));
      ASSERT_EQ(hw::parse_hex_text(hw::to_hex_text(img)), img.words);
    }
    hw::import_bram(reread, blank);
    ASSERT_EQ(blank, q);
  }
}

TEST(Bram, FilesOnDisk) {
  InitConfig ic;
  const auto q = hw::quantize_network(random_network({64, 20, 20, 10}, ic)).net;
  const auto dir = fs::temp_directory_path() / ("spiketime-bram-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const auto images = hw::export_bram(q);
  EXPECT_EQ(images.size(), 50u);
  EXPECT_EQ(hw::write_bram_files(images, dir), 100u);
  const auto img = hw::read_bram_file(dir / "layer1_neuron000.bin");
  EXPECT_EQ(img, images.front());
  EXPECT_EQ(img.words.size(), 16u);
  EXPECT_TRUE(fs::exists(dir / "layer3_neuron009.mem"));
  fs::remove_all(dir);
}

TEST(Bram, RequiresTwelveBitWeights) {
  InitConfig ic;
  FixedFormats f;
  f.weight = {6, 8};
  const auto q = hw::quantize_network(random_network({4, 2}, ic), f).net;
  EXPECT_THROW(hw::export_bram(q), UsageError);
}
