#include "semiseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace semiseg {

std::string to_string(Reduction r) { return r == Reduction::kMean ? "mean" : "sum"; }

Reduction reduction_from_string(const std::string& s) {
  if (s == "mean") return Reduction::kMean;
  if (s == "sum") return Reduction::kSum;
  throw std::invalid_argument("unknown reduction '" + s + "'");
}

void LossConfig::validate(std::size_t classes) const {
  if (alpha.size() != classes) {
    throw std::invalid_argument("loss: alpha has " + std::to_string(alpha.size()) + " entries for " +
                                std::to_string(classes) + " classes");
  }
  if (gamma < 0.0 || w_gdl < 0.0 || w_fl < 0.0) throw std::invalid_argument("loss: weights must be >= 0");
  for (double a : alpha)
    if (a < 0.0) throw std::invalid_argument("loss: alpha must be >= 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("loss: epsilon must be positive");
}

namespace {

void check_pair(const MaskTensor& pred, const MaskTensor& target) {
  if (!pred.same_layout(target) || pred.size() != target.size()) {
    throw ShapeError("prediction and target differ in classes or dims (" + to_string(pred.dims()) + " vs " +
                     to_string(target.dims()) + ")");
  }
}

struct ClassSums {
  double inter = 0.0;
  double pred_sq = 0.0;
  double target_sq = 0.0;
  double target_sum = 0.0;
};

std::vector<ClassSums> class_sums(const MaskTensor& pred, const MaskTensor& target) {
  std::vector<ClassSums> sums(pred.channels());
  const std::size_t n = pred.channel_size();
  for (std::size_t c = 0; c < pred.channels(); ++c) {
    const double* p = pred.channel(c);
    const double* y = target.channel(c);
    ClassSums s;
    for (std::size_t i = 0; i < n; ++i) {
      s.inter += p[i] * y[i];
      s.pred_sq += p[i] * p[i];
      s.target_sq += y[i] * y[i];
      s.target_sum += y[i];
    }
    sums[c] = s;
  }
  return sums;
}

std::vector<double> weights_from_sums(const std::vector<ClassSums>& sums) {
  std::vector<double> w(sums.size(), 0.0);
  double max_w = 0.0;
  for (std::size_t c = 0; c < sums.size(); ++c) {
    if (sums[c].target_sum > 0.0) {
      w[c] = 1.0 / (sums[c].target_sum * sums[c].target_sum);
      max_w = std::max(max_w, w[c]);
    }
  }
  for (std::size_t c = 0; c < sums.size(); ++c)
    if (!(sums[c].target_sum > 0.0)) w[c] = max_w;
  return w;
}

}  // namespace

std::vector<double> dice_score(const MaskTensor& pred, const MaskTensor& target, double epsilon) {
  check_pair(pred, target);
  const auto sums = class_sums(pred, target);
  std::vector<double> out(sums.size());
  for (std::size_t c = 0; c < sums.size(); ++c) {
    out[c] = (2.0 * sums[c].inter + epsilon) / (sums[c].pred_sq + sums[c].target_sq + epsilon);
  }
  return out;
}

std::vector<double> gdl_class_weights(const MaskTensor& target) {
  std::vector<ClassSums> sums(target.channels());
  const std::size_t n = target.channel_size();
  for (std::size_t c = 0; c < target.channels(); ++c) {
    const double* y = target.channel(c);
    for (std::size_t i = 0; i < n; ++i) sums[c].target_sum += y[i];
  }
  return weights_from_sums(sums);
}

LossWithGrad generalized_dice_loss_grad(const MaskTensor& pred, const MaskTensor& target, double epsilon) {
  check_pair(pred, target);
  const auto sums = class_sums(pred, target);
  const auto w = weights_from_sums(sums);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t c = 0; c < sums.size(); ++c) {
    num += w[c] * sums[c].inter;
    den += w[c] * (sums[c].pred_sq + sums[c].target_sq);
  }
  const double top = 2.0 * num + epsilon;
  const double bottom = den + epsilon;

  LossWithGrad r;
  r.value = 1.0 - top / bottom;
  r.grad.resize(pred.size());
  const std::size_t n = pred.channel_size();
  const double inv_b2 = 1.0 / (bottom * bottom);
  for (std::size_t c = 0; c < sums.size(); ++c) {
    const double* p = pred.channel(c);
    const double* y = target.channel(c);
    double* g = r.grad.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = -(2.0 * w[c] * y[i] * bottom - top * 2.0 * w[c] * p[i]) * inv_b2;
    }
  }
  return r;
}

double generalized_dice_loss(const MaskTensor& pred, const MaskTensor& target, double epsilon) {
  check_pair(pred, target);
  const auto sums = class_sums(pred, target);
  const auto w = weights_from_sums(sums);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t c = 0; c < sums.size(); ++c) {
    num += w[c] * sums[c].inter;
    den += w[c] * (sums[c].pred_sq + sums[c].target_sq);
  }
  return 1.0 - (2.0 * num + epsilon) / (den + epsilon);
}

namespace {

/// x^e with exact shortcuts for the small integer exponents used in practice.
double int_pow(double x, double e) {
  if (e == 0.0) return 1.0;
  if (e == 1.0) return x;
  if (e == 2.0) return x * x;
  return std::pow(x, e);
}

}  // namespace

LossWithGrad focal_loss_grad(const MaskTensor& pred, const MaskTensor& target, const LossConfig& cfg) {
  check_pair(pred, target);
  cfg.validate(pred.channels());
  const double gamma = cfg.gamma;
  const std::size_t n = pred.channel_size();
  const double scale = cfg.reduction == Reduction::kMean ? 1.0 / static_cast<double>(pred.size()) : 1.0;

  LossWithGrad r;
  r.grad.assign(pred.size(), 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < pred.channels(); ++c) {
    const double a = cfg.alpha[c];
    const double* pc = pred.channel(c);
    const double* yc = target.channel(c);
    double* g = r.grad.data() + c * n;
    double channel_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = pc[i];
      const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
      const double q = 1.0 - p;
      const double y = yc[i];
      const bool clamped = raw < kProbClamp || raw > 1.0 - kProbClamp;
      // d/dp of y q^g log p + (1-y) p^g log q; hard targets skip the dead term.
      double value = 0.0;
      double deriv = 0.0;
      if (y != 0.0) {
        const double log_p = std::log(p);
        const double q_g = int_pow(q, gamma);
        value += y * q_g * log_p;
        if (!clamped) deriv += y * (-gamma * int_pow(q, gamma - 1.0) * log_p + q_g / p);
      }
      if (y != 1.0) {
        const double log_q = std::log(q);
        const double p_g = int_pow(p, gamma);
        value += (1.0 - y) * p_g * log_q;
        if (!clamped) deriv += (1.0 - y) * (gamma * int_pow(p, gamma - 1.0) * log_q - p_g / q);
      }
      channel_total += value;
      if (!clamped) g[i] = -a * deriv * scale;
    }
    total += -a * channel_total;
  }
  r.value = total * scale;
  return r;
}

double focal_loss(const MaskTensor& pred, const MaskTensor& target, const LossConfig& cfg) {
  return focal_loss_grad(pred, target, cfg).value;
}

LossWithGrad combined_loss_grad(const MaskTensor& pred, const MaskTensor& target, const LossConfig& cfg) {
  cfg.validate(pred.channels());
  LossWithGrad r;
  r.grad.assign(pred.size(), 0.0);
  if (cfg.w_gdl != 0.0) {
    const auto gdl = generalized_dice_loss_grad(pred, target, cfg.epsilon);
    r.value += cfg.w_gdl * gdl.value;
    for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad[i] += cfg.w_gdl * gdl.grad[i];
  }
  if (cfg.w_fl != 0.0) {
    const auto fl = focal_loss_grad(pred, target, cfg);
    r.value += cfg.w_fl * fl.value;
    for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad[i] += cfg.w_fl * fl.grad[i];
  }
  check_pair(pred, target);
  return r;
}

double combined_loss(const MaskTensor& pred, const MaskTensor& target, const LossConfig& cfg) {
  cfg.validate(pred.channels());
  double v = 0.0;
  if (cfg.w_gdl != 0.0) v += cfg.w_gdl * generalized_dice_loss(pred, target, cfg.epsilon);
  if (cfg.w_fl != 0.0) v += cfg.w_fl * focal_loss(pred, target, cfg);
  check_pair(pred, target);
  return v;
}

}  // namespace semiseg
