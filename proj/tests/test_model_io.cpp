#include <gtest/gtest.h>

#include <random>

#include "spiketime/config.hpp"
#include "spiketime/hw_model.hpp"
#include "spiketime/model_io.hpp"

using namespace spiketime;

TEST(ModelFile, RealRoundTripIsByteIdentical) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    InitConfig ic;
    ic.seed = rng();
    ic.thresholds = {1.5, 0.25};
    ic.t_max = 1 + static_cast<int>(rng() % 255);
    const auto net = random_network({1 + rng() % 40, 1 + rng() % 20, 1 + rng() % 10}, ic);
    const auto bytes = serialize_model(net);
    const auto back = deserialize_model(bytes);
    ASSERT_TRUE(std::holds_alternative<Network<double>>(back));
    ASSERT_EQ(std::get<Network<double>>(back), net);
    ASSERT_EQ(serialize_model(std::get<Network<double>>(back)), bytes);
  }
}

TEST(ModelFile, FixedRoundTripIsByteIdentical) {
  InitConfig ic;
  ic.init_min = -3;
  ic.init_max = 3;
  FixedFormats f;
  f.lr = {2, 8};
  const auto q = hw::quantize_network(random_network({64, 20, 20, 10}, ic), f).net;
  const auto bytes = serialize_model(q);
  EXPECT_EQ(bytes.substr(0, 8), "SNNMODEL");
  const auto back = deserialize_model(bytes);
  ASSERT_TRUE(std::holds_alternative<Network<FixedPoint>>(back));
  EXPECT_EQ(std::get<Network<FixedPoint>>(back), q);
  EXPECT_EQ(std::get<Network<FixedPoint>>(back).formats.lr, (QFormat{2, 8}));
  EXPECT_EQ(serialize_model(std::get<Network<FixedPoint>>(back)), bytes);
}

TEST(ModelFile, RejectsCorruption) {
  InitConfig ic;
  const auto bytes = serialize_model(random_network({4, 3}, ic));
  EXPECT_THROW(deserialize_model("garbage"), FormatError);
  EXPECT_THROW(deserialize_model(bytes.substr(0, bytes.size() - 1)), FormatError);
  EXPECT_THROW(deserialize_model(bytes + "x"), FormatError);
  auto v = bytes;
  v[8] = 9;  // version
  EXPECT_THROW(deserialize_model(v), FormatError);
  auto m = bytes;
  m[12] = 7;  // mode
  EXPECT_THROW(deserialize_model(m), FormatError);
  EXPECT_THROW(load_model("/nonexistent/model.snn"), FormatError);
}

TEST(Config, DefaultsValidate) { EXPECT_NO_THROW(validate_config(RunConfig{})); }

TEST(Config, ParsesSections) {
  const auto cfg = parse_config_text(
      "[dataset]\nname = mnist\ntrain_subset = 1000\n"
      "[network]\nlayers = 784, 400, 10\nthresholds = 10, 5\nmode = fixed\nlr_format = Q2.8\n"
      "[train]\nepochs = 7\nlr = 0.25\ngamma = 2\nnormalization = signed_sum\nshuffle = false\n"
      "[hardware]\nparallelism = 8\n[output]\ndir = /tmp/out\n");
  EXPECT_EQ(cfg.dataset.name, "mnist");
  EXPECT_EQ(cfg.dataset.train_subset, 1000u);
  EXPECT_EQ(cfg.network.layers, (std::vector<std::size_t>{784, 400, 10}));
  EXPECT_EQ(cfg.network.thresholds, (std::vector<double>{10, 5}));
  EXPECT_EQ(cfg.network.mode, Mode::fixed);
  EXPECT_EQ(cfg.network.formats.lr, (QFormat{2, 8}));
  EXPECT_EQ(cfg.train.epochs, 7);
  EXPECT_EQ(cfg.train.backward.lr, 0.25);
  EXPECT_EQ(cfg.train.backward.normalization, Normalization::signed_sum);
  EXPECT_FALSE(cfg.train.shuffle);
  EXPECT_EQ(cfg.hardware.parallelism, 8u);
  EXPECT_EQ(cfg.out_dir, "/tmp/out");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config_text("[train]\nepochz = 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[nonsense]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[train]\nepochs = many\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[network]\nmode = analog\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[train\n"), ConfigError);
  auto cfg = parse_config_text("[train]\nlr = -1\n");
  EXPECT_THROW(validate_config(cfg), ConfigError);
  EXPECT_THROW(load_config("/nonexistent.ini"), ConfigError);
}

TEST(Config, OverridesWinOverFile) {
  auto cfg = parse_config_text("[train]\nepochs = 7\n");
  apply_override(cfg, "train.epochs=3");
  EXPECT_EQ(cfg.train.epochs, 3);
  EXPECT_THROW(apply_override(cfg, "train.nope=1"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "epochs"), ConfigError);
}
