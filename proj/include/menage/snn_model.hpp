#pragma once

// Layered SNN description, manifest/spike-stream file formats, and the
// prune + quantize compile steps.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "menage/analog.hpp"
#include "menage/error.hpp"
#include "menage/matrix.hpp"

namespace menage {

struct LayerSpec {
  Matrix<double> weights;      // rows = destination neurons, cols = sources
  Matrix<std::uint8_t> keep;   // 0 where the connection has been pruned
  LIFParams lif;

  LayerSpec() = default;
  LayerSpec(Matrix<double> w, LIFParams params)
      : weights(std::move(w)), keep(weights.rows(), weights.cols(), 1), lif(params) {}

  std::size_t rows() const { return weights.rows(); }
  std::size_t cols() const { return weights.cols(); }
};

struct ModelManifest {
  std::size_t input_size = 0;
  std::size_t timesteps = 0;
  std::vector<LayerSpec> layers;
  std::string stream_path;  // optional, resolved against the manifest directory

  void validate() const {
    if (timesteps < 1) fail(ErrorKind::kRange, "snn-model", "timesteps must be >= 1");
    if (input_size < 1) fail(ErrorKind::kRange, "snn-model", "input_size must be >= 1");
    if (layers.empty()) fail(ErrorKind::kDimension, "snn-model", "manifest has no layers");
    std::size_t expected = input_size;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.rows() < 1 || layer.cols() < 1) {
        fail(ErrorKind::kDimension, "snn-model",
             "layer " + std::to_string(l) + " has an empty dimension");
      }
      if (layer.cols() != expected) {
        fail(ErrorKind::kDimension, "snn-model",
             "layer " + std::to_string(l) + " expects " + std::to_string(layer.cols()) +
                 " inputs but receives " + std::to_string(expected));
      }
      for (double w : layer.weights.data()) {
        if (!std::isfinite(w)) {
          fail(ErrorKind::kNonFinite, "snn-model",
               "layer " + std::to_string(l) + " contains a non-finite weight");
        }
      }
      layer.lif.validate();
      expected = layer.rows();
    }
  }

  std::size_t output_size() const { return layers.empty() ? 0 : layers.back().rows(); }
};

// T x width grid of 0/1 spikes.
using SpikeGrid = Matrix<std::uint8_t>;

struct QuantizedLayer {
  Matrix<std::int8_t> qweights;
  double scale = 1.0;
  Matrix<std::uint8_t> keep;
  LIFParams lif;
  bool degenerate = false;  // all-zero input layer

  std::size_t rows() const { return qweights.rows(); }
  std::size_t cols() const { return qweights.cols(); }
};

// ---------------------------------------------------------------------------
// Pruning and quantization

inline LayerSpec prune_l1(LayerSpec layer, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    fail(ErrorKind::kRange, "snn-model", "prune ratio must lie in [0, 1]");
  }
  const std::size_t total = layer.weights.size();
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(total)));
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& w = layer.weights.data();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(w[a]) < std::abs(w[b]);
  });
  std::fill(layer.keep.data().begin(), layer.keep.data().end(), std::uint8_t{1});
  for (std::size_t n = 0; n < count; ++n) {
    layer.weights.data()[order[n]] = 0.0;
    layer.keep.data()[order[n]] = 0;
  }
  return layer;
}

inline QuantizedLayer quantize_symmetric(const LayerSpec& layer) {
  QuantizedLayer out;
  out.qweights = Matrix<std::int8_t>(layer.rows(), layer.cols(), 0);
  out.keep = layer.keep;
  out.lif = layer.lif;
  double max_abs = 0.0;
  for (double w : layer.weights.data()) max_abs = std::max(max_abs, std::abs(w));
  if (max_abs == 0.0) {
    out.scale = 1.0;
    out.degenerate = true;
    return out;
  }
  out.scale = max_abs / 127.0;
  const auto& w = layer.weights.data();
  auto& q = out.qweights.data();
  for (std::size_t n = 0; n < w.size(); ++n) {
    if (layer.keep.data()[n] == 0) continue;
    // std::lround rounds halves away from zero.
    const long r = std::lround(w[n] / out.scale);
    q[n] = static_cast<std::int8_t>(std::clamp(r, -128L, 127L));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest I/O

namespace detail {

inline std::vector<double> read_f32_blob(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "snn-model", "cannot open weight blob " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != count * 4) {
    fail(ErrorKind::kDimension, "snn-model",
         "weight blob " + path.string() + " holds " + std::to_string(bytes.size()) +
             " bytes, expected " + std::to_string(count * 4));
  }
  std::vector<double> out(count);
  for (std::size_t n = 0; n < count; ++n) {
    std::uint32_t word = 0;
    for (int b = 3; b >= 0; --b) word = (word << 8) | bytes[n * 4 + static_cast<std::size_t>(b)];
    out[n] = static_cast<double>(std::bit_cast<float>(word));
  }
  return out;
}

inline void write_f32_blob(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "snn-model", "cannot write weight blob " + path.string());
  for (double v : values) {
    const auto word = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) out.put(static_cast<char>((word >> (8 * b)) & 0xFFU));
  }
}

inline std::vector<double> parse_weight_array(const nlohmann::json& node, std::size_t rows,
                                              std::size_t cols, std::size_t layer) {
  std::vector<double> out;
  out.reserve(rows * cols);
  auto push = [&](const nlohmann::json& v) {
    if (!v.is_number()) {
      fail(ErrorKind::kParse, "snn-model",
           "layer " + std::to_string(layer) + " has a non-numeric weight");
    }
    out.push_back(v.get<double>());
  };
  for (const auto& item : node) {
    if (item.is_array()) {
      for (const auto& v : item) push(v);
    } else {
      push(item);
    }
  }
  if (out.size() != rows * cols) {
    fail(ErrorKind::kDimension, "snn-model",
         "layer " + std::to_string(layer) + " lists " + std::to_string(out.size()) +
             " weights, expected " + std::to_string(rows * cols));
  }
  return out;
}

}  // namespace detail

inline ModelManifest parse_manifest(const nlohmann::json& doc,
                                    const std::filesystem::path& base_dir = {}) {
  ModelManifest m;
  try {
    m.input_size = doc.at("input_size").get<std::size_t>();
    m.timesteps = doc.at("timesteps").get<std::size_t>();
    if (doc.contains("stream")) m.stream_path = doc.at("stream").get<std::string>();
    const auto& layers = doc.at("layers");
    if (!layers.is_array()) fail(ErrorKind::kParse, "snn-model", "layers must be an array");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& node = layers[l];
      const auto rows = node.at("rows").get<std::size_t>();
      const auto cols = node.at("cols").get<std::size_t>();
      LIFParams lif;
      lif.vth = node.value("vth", lif.vth);
      lif.vreset = node.value("vreset", lif.vreset);
      lif.leak_lambda = node.value("leak_lambda", lif.leak_lambda);
      const auto& w = node.at("weights");
      std::vector<double> values;
      if (w.is_string()) {
        values = detail::read_f32_blob(base_dir / w.get<std::string>(), rows * cols);
      } else if (w.is_array()) {
        values = detail::parse_weight_array(w, rows, cols, l);
      } else {
        fail(ErrorKind::kParse, "snn-model",
             "layer " + std::to_string(l) + " weights must be an array or a blob path");
      }
      m.layers.emplace_back(Matrix<double>(rows, cols, std::move(values)), lif);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, "snn-model", e.what());
  }
  m.validate();
  return m;
}

inline ModelManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "snn-model", "cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, "snn-model", path.string() + ": " + e.what());
  }
  return parse_manifest(doc, path.parent_path());
}

// Writes the manifest with each layer's weights in a little-endian f32 blob
// next to it (layer<l>.bin).
inline void save_manifest(const ModelManifest& m, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["input_size"] = m.input_size;
  doc["timesteps"] = m.timesteps;
  if (!m.stream_path.empty()) doc["stream"] = m.stream_path;
  doc["layers"] = nlohmann::json::array();
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    const std::string blob = "layer" + std::to_string(l) + ".bin";
    detail::write_f32_blob(path.parent_path() / blob, layer.weights.data());
    doc["layers"].push_back({{"rows", layer.rows()},
                             {"cols", layer.cols()},
                             {"vth", layer.lif.vth},
                             {"vreset", layer.lif.vreset},
                             {"leak_lambda", layer.lif.leak_lambda},
                             {"weights", blob}});
  }
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "snn-model", "cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Spike streams

inline constexpr std::uint32_t kSpikeMagic = 0x4B50534DU;  // "MSPK" little-endian

inline SpikeGrid parse_spike_text(std::string_view text) {
  std::vector<std::uint8_t> bits;
  std::size_t width = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (rows == 0) width = line.size();
    if (line.size() != width) {
      fail(ErrorKind::kMalformed, "snn-model",
           "spike stream line " + std::to_string(line_no) + " has width " +
               std::to_string(line.size()) + ", expected " + std::to_string(width));
    }
    for (char c : line) {
      if (c != '0' && c != '1') {
        fail(ErrorKind::kMalformed, "snn-model",
             "spike stream line " + std::to_string(line_no) + " has a non-0/1 character");
      }
      bits.push_back(c == '1' ? 1 : 0);
    }
    ++rows;
  }
  return SpikeGrid(rows, width, std::move(bits));
}

inline std::string format_spike_text(const SpikeGrid& grid) {
  std::string out;
  out.reserve(grid.rows() * (grid.cols() + 1));
  for (std::size_t t = 0; t < grid.rows(); ++t) {
    for (std::uint8_t b : grid.row(t)) out.push_back(b ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

inline std::string format_spike_binary(const SpikeGrid& grid) {
  std::string out;
  auto put32 = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFU));
  };
  put32(kSpikeMagic);
  put32(static_cast<std::uint32_t>(grid.rows()));
  put32(static_cast<std::uint32_t>(grid.cols()));
  put32(0);
  const std::size_t stride = (grid.cols() + 7) / 8;
  for (std::size_t t = 0; t < grid.rows(); ++t) {
    std::string row(stride, '\0');
    for (std::size_t m = 0; m < grid.cols(); ++m) {
      if (grid(t, m)) row[m / 8] = static_cast<char>(row[m / 8] | (1 << (m % 8)));
    }
    out += row;
  }
  return out;
}

inline SpikeGrid parse_spike_binary(std::string_view bytes) {
  if (bytes.size() < 16) fail(ErrorKind::kMalformed, "snn-model", "spike bitmap header truncated");
  auto get32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int b = 3; b >= 0; --b) {
      v = (v << 8) | static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(b)]);
    }
    return v;
  };
  if (get32(0) != kSpikeMagic) fail(ErrorKind::kMalformed, "snn-model", "bad spike bitmap magic");
  const std::size_t rows = get32(4);
  const std::size_t width = get32(8);
  const std::size_t stride = (width + 7) / 8;
  if (bytes.size() != 16 + rows * stride) {
    fail(ErrorKind::kMalformed, "snn-model", "spike bitmap payload size mismatch");
  }
  SpikeGrid grid(rows, width, 0);
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t m = 0; m < width; ++m) {
      const auto byte = static_cast<unsigned char>(bytes[16 + t * stride + m / 8]);
      grid(t, m) = (byte >> (m % 8)) & 1U;
    }
  }
  return grid;
}

inline SpikeGrid load_spike_stream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "snn-model", "cannot open spike stream " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 4 && bytes.compare(0, 4, "MSPK") == 0) return parse_spike_binary(bytes);
  return parse_spike_text(bytes);
}

inline void check_stream(const SpikeGrid& stream, const ModelManifest& m) {
  if (stream.cols() != m.input_size) {
    fail(ErrorKind::kDimension, "snn-model",
         "spike stream width " + std::to_string(stream.cols()) + " differs from input_size " +
             std::to_string(m.input_size));
  }
  if (stream.rows() != m.timesteps) {
    fail(ErrorKind::kDimension, "snn-model",
         "spike stream has " + std::to_string(stream.rows()) + " timesteps, manifest declares " +
             std::to_string(m.timesteps));
  }
}

// ---------------------------------------------------------------------------
// Synthetic models for tests and the gen-synth command

inline ModelManifest make_synthetic_manifest(std::size_t input_size,
                                             const std::vector<std::size_t>& widths,
                                             std::size_t timesteps, const LIFParams& lif,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  ModelManifest m;
  m.input_size = input_size;
  m.timesteps = timesteps;
  std::size_t cols = input_size;
  for (std::size_t rows : widths) {
    Matrix<double> w(rows, cols);
    for (double& x : w.data()) x = uniform(rng);
    m.layers.emplace_back(std::move(w), lif);
    cols = rows;
  }
  m.validate();
  return m;
}

inline SpikeGrid make_random_stream(std::size_t timesteps, std::size_t width, double density,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution spike(std::clamp(density, 0.0, 1.0));
  SpikeGrid grid(timesteps, width, 0);
  for (auto& b : grid.data()) b = spike(rng) ? 1 : 0;
  return grid;
}

}  // namespace menage
