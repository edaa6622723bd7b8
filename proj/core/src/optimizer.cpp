#include "semiseg/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace semiseg {

AdamW::AdamW(const ParameterSet& params, AdamWConfig cfg)
    : cfg_(cfg), m_(zero_gradients(params)), v_(zero_gradients(params)) {
  if (!(cfg_.learning_rate > 0.0)) throw std::invalid_argument("AdamW: learning rate must be positive");
  if (cfg_.weight_decay < 0.0) throw std::invalid_argument("AdamW: weight decay must be >= 0");
}

void AdamW::step(ParameterSet& params, const Gradients& grads) {
  auto& ts = params.tensors();
  if (grads.size() != ts.size() || m_.size() != ts.size()) throw ShapeError("AdamW: gradient layout mismatch");
  ++t_;
  const double lr = cfg_.learning_rate;
  const double decay = 1.0 - lr * cfg_.weight_decay;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    auto& theta = ts[i].values;
    const auto& g = grads[i];
    auto& m = m_[i];
    auto& v = v_[i];
    if (g.size() != theta.size()) throw ShapeError("AdamW: gradient size mismatch for " + ts[i].name);
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      theta[j] *= decay;
      theta[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
    }
  }
}

}  // namespace semiseg
