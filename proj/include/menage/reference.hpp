#pragma once

// Dense synchronous reference for the quantized network. Per timestep and
// layer: v <- lambda * v + (vref / 2^n) * Q s_in, spike where v >= vth, and
// reset spiking neurons. Inputs are accumulated in ascending source order,
// which is the order in which the event-driven chain delivers them.

#include <cmath>
#include <vector>

#include "menage/analog.hpp"
#include "menage/error.hpp"
#include "menage/snn_model.hpp"

namespace menage {

struct ReferenceResult {
  SpikeGrid output;
  std::vector<std::vector<std::vector<double>>> membranes;  // [t][layer][neuron]
};

inline ReferenceResult reference_trajectory(const std::vector<QuantizedLayer>& layers,
                                            const SpikeGrid& stream,
                                            const C2CLadder& ladder = {}) {
  if (layers.empty()) fail(ErrorKind::kState, "core-sim", "reference needs at least one layer");
  if (stream.cols() != layers.front().cols()) {
    fail(ErrorKind::kDimension, "core-sim", "stream width does not match layer 0 inputs");
  }
  const double lsb = std::ldexp(ladder.vref, -ladder.bits);
  std::vector<std::vector<double>> v;
  for (const auto& layer : layers) v.emplace_back(layer.rows(), layer.lif.vreset);

  ReferenceResult out;
  out.output = SpikeGrid(stream.rows(), layers.back().rows(), 0);
  for (std::size_t t = 0; t < stream.rows(); ++t) {
    std::vector<std::uint8_t> spikes(stream.row(t).begin(), stream.row(t).end());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      std::vector<std::uint8_t> next(layer.rows(), 0);
      for (std::size_t i = 0; i < layer.rows(); ++i) {
        double vi = layer.lif.leak_lambda * v[l][i];
        for (std::size_t m = 0; m < layer.cols(); ++m) {
          const auto q = layer.qweights(i, m);
          if (spikes[m] && q != 0) vi += lsb * q;
        }
        if (vi >= layer.lif.vth) {
          next[i] = 1;
          vi = layer.lif.vreset;
        }
        v[l][i] = vi;
      }
      spikes = std::move(next);
    }
    for (std::size_t i = 0; i < spikes.size(); ++i) out.output(t, i) = spikes[i];
    out.membranes.push_back(v);
  }
  return out;
}

inline SpikeGrid reference_forward(const ModelManifest& manifest,
                                   const std::vector<QuantizedLayer>& layers,
                                   const SpikeGrid& stream, const C2CLadder& ladder = {}) {
  check_stream(stream, manifest);
  if (layers.size() != manifest.layers.size()) {
    fail(ErrorKind::kDimension, "core-sim", "quantized layer count differs from the manifest");
  }
  return reference_trajectory(layers, stream, ladder).output;
}

}  // namespace menage
