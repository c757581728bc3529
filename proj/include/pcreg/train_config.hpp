#pragma once

#include <cstdint>

#include "pcreg/errors.hpp"

namespace pcreg {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  int steps = 260000;
  std::uint64_t seed = 0;
  bool enable_tsl = true;
  bool enable_pfdl = true;
  /// Run the perturbed auxiliary passes only every k-th step.
  int perturbation_every = 1;
  /// When > 0, train on this many fixed pairs instead of fresh pairs per step.
  int fixed_pairs = 0;
  int checkpoint_every = 0;
  int log_every = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (steps < 0) throw ConfigError("train: steps must be nonnegative");
    if (perturbation_every < 1) throw ConfigError("train: perturbation_every must be >= 1");
    if (fixed_pairs < 0 || checkpoint_every < 0 || log_every < 1) throw ConfigError("train: invalid cadence");
  }
};

}  // namespace pcreg
