#pragma once

#include <cstdint>

#include "semiseg/network.hpp"

namespace semiseg {

/// Adam with decoupled weight decay: theta *= 1 - lr*wd, then the Adam step.
struct AdamWConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamW {
 public:
  AdamW(const ParameterSet& params, AdamWConfig cfg);

  /// One update from `grads`, which are left untouched.
  void step(ParameterSet& params, const Gradients& grads);
  [[nodiscard]] std::uint64_t steps() const { return t_; }
  [[nodiscard]] const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  Gradients m_;
  Gradients v_;
  std::uint64_t t_ = 0;
};

}  // namespace semiseg
