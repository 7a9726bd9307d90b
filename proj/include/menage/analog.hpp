#pragma once

// Value-level models of the analog datapath: the C2C-ladder multiplying DAC
// used by the synapse engine and the leaky integrate-and-fire neuron engine.
// No noise or mismatch is modeled; all arithmetic is exact IEEE doubles.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "menage/error.hpp"

namespace menage {

struct C2CLadder {
  int bits = 8;
  double vref = 1.0;

  void validate() const {
    if (bits < 1 || bits > 31) {
      fail(ErrorKind::kRange, "analog", "C2C ladder width must be in [1, 31], got " +
                                            std::to_string(bits));
    }
    if (!(vref > 0.0) || !std::isfinite(vref)) {
      fail(ErrorKind::kRange, "analog", "C2C reference voltage must be positive");
    }
  }

  std::int64_t min_word() const { return -(std::int64_t{1} << (bits - 1)); }
  std::int64_t max_word() const { return (std::int64_t{1} << (bits - 1)) - 1; }
};

// Signed multiply: the stored word is two's complement, output vref * w / 2^n.
inline double c2c_multiply(const C2CLadder& ladder, std::int64_t w) {
  if (w < ladder.min_word() || w > ladder.max_word()) {
    fail(ErrorKind::kRange, "analog",
         "weight word " + std::to_string(w) + " does not fit a signed " +
             std::to_string(ladder.bits) + "-bit ladder");
  }
  return std::ldexp(ladder.vref * static_cast<double>(w), -ladder.bits);
}

// Unsigned ladder output, bit by bit: vref * sum_i W_i * 2^(i - n).
inline double c2c_multiply_unsigned(const C2CLadder& ladder, std::uint64_t word) {
  if (word >> ladder.bits != 0) {
    fail(ErrorKind::kRange, "analog",
         "unsigned word " + std::to_string(word) + " wider than " +
             std::to_string(ladder.bits) + " bits");
  }
  double sum = 0.0;
  for (int i = 0; i < ladder.bits; ++i) {
    if ((word >> i) & 1U) sum += std::ldexp(1.0, i - ladder.bits);
  }
  return ladder.vref * sum;
}

struct LIFParams {
  double vth = 1.0;
  double vreset = 0.0;
  double leak_lambda = 1.0;  // per-timestep retention factor

  void validate() const {
    if (!std::isfinite(vth) || !std::isfinite(vreset) || !std::isfinite(leak_lambda)) {
      fail(ErrorKind::kNonFinite, "analog", "LIF parameters must be finite");
    }
    if (!(vth > vreset)) {
      fail(ErrorKind::kRange, "analog", "LIF threshold must exceed the reset voltage");
    }
    if (!(leak_lambda > 0.0 && leak_lambda <= 1.0)) {
      fail(ErrorKind::kRange, "analog", "leak_lambda must lie in (0, 1]");
    }
  }

  bool operator==(const LIFParams&) const = default;
};

// Exact discretization of the homogeneous membrane equation over one step.
inline double derive_lambda(double tau_m, double dt) {
  if (!(tau_m > 0.0) || !(dt > 0.0)) {
    fail(ErrorKind::kRange, "analog", "tau_m and dt must both be positive");
  }
  return std::exp(-dt / tau_m);
}

struct VirtualNeuronState {
  double v = 0.0;
  std::optional<std::uint32_t> assigned_neuron;

  bool operator==(const VirtualNeuronState&) const = default;
};

inline VirtualNeuronState lif_integrate(VirtualNeuronState state, double contribution) {
  state.v += contribution;
  return state;
}

inline VirtualNeuronState lif_leak(VirtualNeuronState state, const LIFParams& params) {
  state.v *= params.leak_lambda;
  return state;
}

struct FireResult {
  bool fired = false;
  VirtualNeuronState state;
};

// Threshold ties fire. At most one spike per call.
inline FireResult lif_fire_check(VirtualNeuronState state, const LIFParams& params) {
  if (state.v >= params.vth) {
    state.v = params.vreset;
    return {true, state};
  }
  return {false, state};
}

}  // namespace menage
