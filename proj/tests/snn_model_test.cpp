#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "menage/snn_model.hpp"
#include "test_support.hpp"

using namespace menage;

namespace {

nlohmann::json layer_json(std::size_t rows, std::size_t cols, nlohmann::json weights) {
  return {{"rows", rows}, {"cols", cols}, {"vth", 1.0}, {"vreset", 0.0},
          {"leak_lambda", 0.9}, {"weights", std::move(weights)}};
}

LayerSpec layer_of(std::size_t rows, std::size_t cols, std::vector<double> w) {
  return LayerSpec(Matrix<double>(rows, cols, std::move(w)), {});
}

ErrorKind kind_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::kState;
}

}  // namespace

TEST(Manifest, TwoLayerShapes) {
  nlohmann::json doc = {{"input_size", 4}, {"timesteps", 3}};
  doc["layers"] = {layer_json(3, 4, std::vector<double>(12, 0.1)),
                   layer_json(2, 3, {{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}})};
  const auto m = parse_manifest(doc);
  ASSERT_EQ(m.layers.size(), 2u);
  EXPECT_EQ(m.layers[0].rows(), 3u);
  EXPECT_EQ(m.layers[0].cols(), 4u);
  EXPECT_EQ(m.layers[1].rows(), 2u);
  EXPECT_EQ(m.layers[1].cols(), 3u);
  EXPECT_DOUBLE_EQ(m.layers[1].weights(1, 2), 0.6);
  EXPECT_DOUBLE_EQ(m.layers[0].lif.leak_lambda, 0.9);
}

TEST(Manifest, DimensionMismatchNamesLayer) {
  nlohmann::json doc = {{"input_size", 4}, {"timesteps", 3}};
  doc["layers"] = {layer_json(3, 4, std::vector<double>(12, 0.1)),
                   layer_json(2, 5, std::vector<double>(10, 0.1))};
  try {
    parse_manifest(doc);
    FAIL() << "expected dimension error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
}

TEST(Manifest, NonFiniteWeight) {
  ModelManifest m;
  m.input_size = 2;
  m.timesteps = 1;
  m.layers.push_back(layer_of(1, 2, {0.5, std::nan("")}));
  EXPECT_EQ(kind_of([&] { m.validate(); }), ErrorKind::kNonFinite);
}

TEST(Manifest, BlobRoundTrip) {
  const auto dir = menage::testing::scratch_dir();
  const auto m = make_synthetic_manifest(5, {4, 3}, 7, {1.0, 0.0, 0.5}, 11);
  save_manifest(m, dir / "manifest.json");
  const auto back = load_manifest(dir / "manifest.json");
  ASSERT_EQ(back.layers.size(), 2u);
  EXPECT_EQ(back.timesteps, 7u);
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& a = m.layers[l].weights.data();
    const auto& b = back.layers[l].weights.data();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t n = 0; n < a.size(); ++n) {
      EXPECT_EQ(b[n], static_cast<double>(static_cast<float>(a[n])));
    }
  }
}

TEST(Manifest, ShortBlobRejected) {
  const auto dir = menage::testing::scratch_dir();
  std::ofstream(dir / "w.bin", std::ios::binary) << "abcd";
  nlohmann::json doc = {{"input_size", 2}, {"timesteps", 1}};
  doc["layers"] = {layer_json(1, 2, "w.bin")};
  EXPECT_EQ(kind_of([&] { parse_manifest(doc, dir); }), ErrorKind::kDimension);
}

TEST(Prune, SmallestMagnitudesGo) {
  const auto p = prune_l1(layer_of(2, 2, {0.5, -0.1, 0.2, -0.9}), 0.5);
  EXPECT_EQ(p.weights.data(), (std::vector<double>{0.5, 0.0, 0.0, -0.9}));
  EXPECT_EQ(p.keep.data(), (std::vector<std::uint8_t>{1, 0, 0, 1}));
}

TEST(Prune, RatioZeroIsIdentity) {
  const auto layer = layer_of(2, 3, {0.1, -0.2, 0.3, 0.0, 0.5, -0.6});
  const auto p = prune_l1(layer, 0.0);
  EXPECT_EQ(p.weights, layer.weights);
  EXPECT_EQ(p.keep, layer.keep);
}

TEST(Prune, TiesBreakRowMajor) {
  const auto p = prune_l1(layer_of(2, 2, {0.3, 0.3, 0.3, 0.3}), 0.25);
  EXPECT_EQ(p.keep.data(), (std::vector<std::uint8_t>{0, 1, 1, 1}));
}

TEST(Prune, RatioOutOfRange) {
  EXPECT_EQ(kind_of([] { prune_l1(layer_of(1, 1, {1.0}), 1.5); }), ErrorKind::kRange);
}

TEST(Prune, CountIsExactFloor) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<int> dim(1, 12);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t r = static_cast<std::size_t>(dim(rng));
    const std::size_t c = static_cast<std::size_t>(dim(rng));
    std::vector<double> w(r * c);
    // Coarse values force plenty of magnitude ties.
    for (auto& x : w) x = std::round(u(rng) * 4) / 4;
    const double ratio = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto p = prune_l1(layer_of(r, c, w), ratio);
    const auto pruned = std::count(p.keep.data().begin(), p.keep.data().end(), 0);
    EXPECT_EQ(static_cast<std::size_t>(pruned),
              static_cast<std::size_t>(std::floor(ratio * static_cast<double>(r * c))));
    // Every survivor is at least as large as every pruned entry.
    double max_pruned = 0, min_kept = 1e9;
    for (std::size_t n = 0; n < w.size(); ++n) {
      if (p.keep.data()[n]) {
        min_kept = std::min(min_kept, std::abs(w[n]));
      } else {
        max_pruned = std::max(max_pruned, std::abs(w[n]));
      }
    }
    if (pruned > 0 && static_cast<std::size_t>(pruned) < w.size()) {
      EXPECT_LE(max_pruned, min_kept);
    }
  }
}

TEST(Quantize, HalfRoundsAwayFromZero) {
  const auto q = quantize_symmetric(layer_of(1, 3, {0.9, -0.45, 0.0}));
  EXPECT_DOUBLE_EQ(q.scale, 0.9 / 127);
  EXPECT_EQ(q.qweights.data(), (std::vector<std::int8_t>{127, -64, 0}));
  EXPECT_FALSE(q.degenerate);
}

TEST(Quantize, AllZeroIsDegenerate) {
  const auto q = quantize_symmetric(layer_of(2, 2, {0, 0, 0, 0}));
  EXPECT_EQ(q.scale, 1.0);
  EXPECT_TRUE(q.degenerate);
  EXPECT_EQ(q.qweights.data(), std::vector<std::int8_t>(4, 0));
}

TEST(Quantize, ErrorWithinHalfScale) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> w(64);
    for (auto& x : w) x = u(rng);
    const auto q = quantize_symmetric(layer_of(8, 8, w));
    for (std::size_t n = 0; n < w.size(); ++n) {
      const double err = std::abs(w[n] - q.qweights.data()[n] * q.scale);
      EXPECT_LE(err, q.scale / 2 * (1 + 1e-12)) << n;
      EXPECT_NE(q.qweights.data()[n], -128);
    }
  }
}

TEST(Quantize, ZerosExactlyOnPruneMask) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> w(48);
    for (auto& x : w) x = u(rng);
    const auto p = prune_l1(layer_of(6, 8, w), 0.4);
    const auto q = quantize_symmetric(p);
    for (std::size_t n = 0; n < w.size(); ++n) {
      if (!p.keep.data()[n]) {
        EXPECT_EQ(q.qweights.data()[n], 0);
      }
    }
  }
}

TEST(SpikeStream, TextRoundTripAndComments) {
  const auto g = parse_spike_text("# header\n0101\n1111\n\n0000\n");
  ASSERT_EQ(g.rows(), 3u);
  ASSERT_EQ(g.cols(), 4u);
  EXPECT_EQ(g(0, 1), 1);
  EXPECT_EQ(g(0, 0), 0);
  EXPECT_EQ(format_spike_text(g), "0101\n1111\n0000\n");
}

TEST(SpikeStream, RaggedTextRejected) {
  EXPECT_EQ(kind_of([] { parse_spike_text("010\n01\n"); }), ErrorKind::kMalformed);
  EXPECT_EQ(kind_of([] { parse_spike_text("012\n"); }), ErrorKind::kMalformed);
}

TEST(SpikeStream, BinaryRoundTrip) {
  const auto g = make_random_stream(13, 19, 0.3, 4);
  const auto bytes = format_spike_binary(g);
  EXPECT_EQ(bytes.size(), 16u + 13u * 3u);
  EXPECT_EQ(bytes.substr(0, 4), "MSPK");
  EXPECT_EQ(parse_spike_binary(bytes), g);

  const auto dir = menage::testing::scratch_dir();
  std::ofstream(dir / "s.bin", std::ios::binary) << bytes;
  EXPECT_EQ(load_spike_stream(dir / "s.bin"), g);
}

TEST(SpikeStream, StreamMustMatchManifest) {
  const auto m = make_synthetic_manifest(4, {2}, 3, {}, 1);
  EXPECT_NO_THROW(check_stream(SpikeGrid(3, 4, 0), m));
  EXPECT_EQ(kind_of([&] { check_stream(SpikeGrid(3, 5, 0), m); }), ErrorKind::kDimension);
  EXPECT_EQ(kind_of([&] { check_stream(SpikeGrid(2, 4, 0), m); }), ErrorKind::kDimension);
}

TEST(Synthetic, SeedDeterminesModel) {
  const auto a = make_synthetic_manifest(6, {5, 4}, 3, {}, 99);
  const auto b = make_synthetic_manifest(6, {5, 4}, 3, {}, 99);
  const auto c = make_synthetic_manifest(6, {5, 4}, 3, {}, 100);
  EXPECT_EQ(a.layers[1].weights, b.layers[1].weights);
  EXPECT_NE(a.layers[0].weights, c.layers[0].weights);
  for (double w : a.layers[0].weights.data()) {
    EXPECT_GE(w, -1.0);
    EXPECT_LE(w, 1.0);
  }
}
