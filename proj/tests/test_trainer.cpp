#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "srgan/checkpoint.hpp"
#include "srgan/data/toy.hpp"
#include "test_util.hpp"

namespace data = srgan::data;
using srgan::ModelBundle;
using srgan::TrainConfig;
using srgan::nd::Tensor;
using testing_util::TempDir;

namespace {

struct Toy {
  data::Dataset raw;
  data::Dataset norm;
  data::SplitSpec split;
};

Toy make_toy(unsigned seed = 1, int per_class = 40) {
  TempDir dir;
  data::ToyConfig cfg;
  cfg.seed = seed;
  cfg.per_class = per_class;
  auto info = data::gen_toy(cfg, dir.path());
  Toy t{info.dataset, data::normalize(info.dataset, info.split).dataset, info.split};
  return t;
}

TrainConfig small_config() {
  TrainConfig c;
  c.m = 16;
  c.srn_iters = 20;
  c.gan_iters = 4;
  c.n_d = 3;
  c.g_extra_updates = 1;
  c.vp_draws = 2;
  c.d_z = 4;
  c.srn_hidden = 8;
  c.gen_hidden = 8;
  c.disc_hidden = 8;
  c.enc_hidden = 6;
  c.post_hidden = 6;
  c.seed = 7;
  return c;
}

template <typename T>
std::vector<Tensor<T>> snapshot(const srgan::nd::MlpParams<T>& p) {
  std::vector<Tensor<T>> out;
  p.for_each_tensor("", [&](const std::string&, const Tensor<T>& t) { out.push_back(t); });
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> all_tensors(const ModelBundle<T>& b) {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  b.for_each_network_tensor([&](const std::string& n, const Tensor<T>& t) { out.emplace_back(n, t); });
  return out;
}

bool bit_equal(const Tensor<double>& a, const Tensor<double>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST(TrainConfig, JsonRoundTripAndUnknownKey) {
  TrainConfig c = small_config();
  c.head = "all";
  c.use_rec = false;
  nlohmann::json j = c;
  TrainConfig back = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  j["bogus"] = 1;
  EXPECT_THROW(j.get<TrainConfig>(), srgan::DataError);
}

TEST(TrainConfig, ValidationRejectsBadCounts) {
  TrainConfig c;
  c.n_d = 0;
  EXPECT_THROW(c.validate(), srgan::DataError);
  c = TrainConfig{};
  c.g_extra_updates = -1;
  EXPECT_THROW(c.validate(), srgan::DataError);
  c = TrainConfig{};
  c.lr = 0;
  EXPECT_THROW(c.validate(), srgan::DataError);
  c = TrainConfig{};
  c.g_extra_updates = 0;
  EXPECT_NO_THROW(c.validate());
}

TEST(Train, ZeroGanIterationsGiveFreshNetworksAndTrainedR) {
  auto toy = make_toy();
  TrainConfig c = small_config();
  c.gan_iters = 0;
  auto fresh = srgan::init_bundle<double>(toy.norm, toy.split, c);
  srgan::TrainResult r;
  auto b = srgan::train<double>(toy.raw, toy.split, c, &r);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(r.srn_history.structure.size(), 20u);
  auto a = all_tensors(fresh);
  auto t = all_tensors(b);
  ASSERT_EQ(a.size(), t.size());
  bool srn_changed = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first.rfind("srn.", 0) == 0)
      srn_changed = srn_changed || !bit_equal(a[i].second, t[i].second);
    else
      EXPECT_TRUE(bit_equal(a[i].second, t[i].second)) << a[i].first;
  }
  EXPECT_TRUE(srn_changed);
}

TEST(Train, PhaseTwoLeavesRUntouched) {
  auto toy = make_toy();
  TrainConfig c = small_config();
  auto b = srgan::init_bundle<double>(toy.norm, toy.split, c);
  c.gan_iters = 0;
  b.config = c;
  srgan::train(b, toy.norm, toy.split);
  const auto before = snapshot(b.srn.net);
  b.config.gan_iters = 3;
  b.config.srn_iters = 0;
  srgan::train(b, toy.norm, toy.split);
  const auto after = snapshot(b.srn.net);
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(bit_equal(before[i], after[i]));
  EXPECT_EQ(b.iteration, 3);
}

TEST(Train, CountersFollowTheSchedule) {
  auto toy = make_toy();
  TrainConfig c = small_config();
  srgan::TrainResult r;
  srgan::train<double>(toy.raw, toy.split, c, &r);
  EXPECT_EQ(r.counters.d_updates, c.gan_iters * c.n_d);
  EXPECT_EQ(r.counters.g_updates, c.gan_iters * (1 + c.g_extra_updates));
  EXPECT_EQ(r.counters.e_updates, c.gan_iters * (1 + c.g_extra_updates));
  EXPECT_EQ(r.counters.f_updates, c.gan_iters * (1 + c.g_extra_updates));
  ASSERT_EQ(r.counters.d_before_g.size(), static_cast<std::size_t>(c.gan_iters));
  for (int k : r.counters.d_before_g) EXPECT_EQ(k, c.n_d);
}

TEST(Train, WithoutReconstructionSkipsEncoderAndPost) {
  auto toy = make_toy();
  TrainConfig c = small_config();
  c.use_rec = false;
  srgan::TrainResult r;
  srgan::train<double>(toy.raw, toy.split, c, &r);
  EXPECT_EQ(r.counters.e_updates, 0);
  EXPECT_EQ(r.counters.f_updates, 0);
  for (const auto& rec : r.history) {
    EXPECT_EQ(rec.loss_e, 0);
    EXPECT_EQ(rec.loss_f, 0);
  }
}

TEST(Train, FixedSeedGivesIdenticalHistory) {
  auto toy = make_toy();
  TrainConfig c = small_config();
  srgan::TrainResult a, b;
  srgan::train<double>(toy.raw, toy.split, c, &a);
  srgan::train<double>(toy.raw, toy.split, c, &b);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i)
    EXPECT_EQ(srgan::loss_csv_row(a.history[i]), srgan::loss_csv_row(b.history[i]));
  for (const auto& rec : a.history)
    for (double v : {rec.loss_d, rec.loss_g, rec.loss_vp, rec.loss_e, rec.loss_f}) EXPECT_TRUE(std::isfinite(v));
}

TEST(Train, AllClassHeadCoversUnseenClasses) {
  auto toy = make_toy();
  TrainConfig c = small_config();
  c.head = "all";
  srgan::TrainResult r;
  auto b = srgan::train<double>(toy.raw, toy.split, c, &r);
  EXPECT_EQ(b.disc.classifier.weight.rows(), 15);
  EXPECT_EQ(r.history.size(), 4u);
}

TEST(Train, NonFiniteLossNamesIterationAndTerm) {
  auto toy = make_toy();
  TrainConfig c = small_config();
  c.use_srn = false;
  auto b = srgan::init_bundle<double>(toy.norm, toy.split, c);
  b.gen.net.layers[0].weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    srgan::train(b, toy.norm, toy.split);
    FAIL() << "expected a numeric error";
  } catch (const srgan::NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("iteration 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("loss_D"), std::string::npos) << msg;
  }
}

TEST(Train, FloatPrecisionRuns) {
  auto toy = make_toy();
  TrainConfig c = small_config();
  c.precision = "float";
  srgan::TrainResult r;
  auto b = srgan::train<float>(toy.raw, toy.split, c, &r);
  EXPECT_EQ(r.history.size(), 4u);
  EXPECT_TRUE(std::isfinite(r.history.back().loss_g));
}

TEST(Train, PivotLossDecreasesOnToy) {
  auto toy = make_toy(1, 100);
  TrainConfig c = small_config();
  c.m = 32;
  c.srn_iters = 0;
  c.use_srn = false;
  c.gan_iters = 2000;
  c.g_extra_updates = 0;
  c.n_d = 2;
  c.gen_hidden = 32;
  c.disc_hidden = 32;
  c.d_z = 8;
  srgan::TrainResult r;
  srgan::train<double>(toy.raw, toy.split, c, &r);
  double first = 0, last = 0;
  for (int i = 0; i < 50; ++i) {
    first += r.history[static_cast<std::size_t>(i)].loss_vp;
    last += r.history[r.history.size() - 1 - static_cast<std::size_t>(i)].loss_vp;
  }
  EXPECT_LT(last, first);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto toy = make_toy();
  TrainConfig c = small_config();
  auto b = srgan::train<double>(toy.raw, toy.split, c);
  TempDir dir;
  srgan::save(b, dir / "model.srgn");
  auto back = srgan::load_checkpoint<double>(dir / "model.srgn");
  auto a = all_tensors(b);
  auto t = all_tensors(back);
  ASSERT_EQ(a.size(), t.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, t[i].first);
    EXPECT_TRUE(bit_equal(a[i].second, t[i].second)) << a[i].first;
  }
  ASSERT_EQ(b.opt_gen.m.size(), back.opt_gen.m.size());
  for (std::size_t k = 0; k < b.opt_gen.m.size(); ++k) {
    EXPECT_TRUE(bit_equal(b.opt_gen.m[k], back.opt_gen.m[k]));
    EXPECT_TRUE(bit_equal(b.opt_gen.v[k], back.opt_gen.v[k]));
  }
  EXPECT_EQ(b.opt_disc.step, back.opt_disc.step);
  EXPECT_EQ(b.iteration, back.iteration);
  EXPECT_EQ(nlohmann::json(b.config), nlohmann::json(back.config));
  EXPECT_EQ(b.head_classes, back.head_classes);
  EXPECT_EQ(srgan::serialize(b), srgan::serialize(back));
}

TEST(Checkpoint, DetectsCorruption) {
  auto toy = make_toy();
  TrainConfig c = small_config();
  c.gan_iters = 1;
  auto b = srgan::train<double>(toy.raw, toy.split, c);
  const auto good = srgan::serialize(b);

  auto flipped = good;
  flipped[good.size() / 2] ^= 0x10;
  EXPECT_THROW(
      {
        try {
          srgan::deserialize<double>(flipped);
        } catch (const srgan::FormatError& e) {
          EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
          throw;
        }
      },
      srgan::FormatError);

  auto magic = good;
  magic[0] = 'X';
  EXPECT_THROW(srgan::deserialize<double>(magic), srgan::FormatError);

  auto version = good;
  version[4] = 99;
  try {
    srgan::deserialize<double>(version);
    FAIL();
  } catch (const srgan::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }

  std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<long>(good.size() - 100));
  try {
    srgan::deserialize<double>(cut);
    FAIL();
  } catch (const srgan::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, BindRejectsWrongVisualWidth) {
  auto toy = make_toy();
  TrainConfig c = small_config();
  c.gan_iters = 0;
  auto b = srgan::train<double>(toy.raw, toy.split, c);
  EXPECT_NO_THROW(srgan::bind(b, toy.norm));
  data::Dataset other = toy.norm;
  other.visual = Tensor<double>::Zero(other.visual.rows(), other.visual.cols() + 1);
  EXPECT_THROW(srgan::bind(b, other), srgan::DimensionError);
}

TEST(Checkpoint, FloatBundleLoadsAsDouble) {
  auto toy = make_toy();
  TrainConfig c = small_config();
  c.precision = "float";
  auto b = srgan::train<float>(toy.raw, toy.split, c);
  auto back = srgan::deserialize<double>(srgan::serialize(b));
  EXPECT_EQ(static_cast<double>(b.gen.net.layers[0].weight(0, 0)), back.gen.net.layers[0].weight(0, 0));
}
