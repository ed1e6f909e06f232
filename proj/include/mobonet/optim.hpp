#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mobonet/params.hpp"
#include "mobonet/tensor.hpp"

namespace mobo {

enum class TrainPhase { boundary, fusion };

inline TrainPhase parse_phase(const std::string& s) {
  if (s == "boundary") return TrainPhase::boundary;
  if (s == "fusion") return TrainPhase::fusion;
  throw ArgumentError("unknown training phase: " + s);
}

// Step decay. Boundary phase halves the rate every 100K iterations from 1e-4;
// fusion divides by 10 every 50K from 1e-3. `divisor` shrinks the decay
// interval proportionally so short runs see the same schedule shape.
// `base_lr` <= 0 selects the phase default.
inline double lr_schedule(TrainPhase phase, long iteration, long divisor = 1,
                          double base_lr = 0.0) {
  if (iteration < 0) throw ArgumentError("lr_schedule: negative iteration");
  if (divisor < 1) throw ArgumentError("lr_schedule: divisor must be >= 1");
  const long raw_interval = (phase == TrainPhase::boundary ? 100000L : 50000L) / divisor;
  const long interval = raw_interval < 1 ? 1 : raw_interval;
  const long k = iteration / interval;
  if (phase == TrainPhase::boundary) {
    const double base = base_lr > 0 ? base_lr : 1e-4;
    return base * std::ldexp(1.0, static_cast<int>(-k));
  }
  const double base = base_lr > 0 ? base_lr : 1e-3;
  return base * std::pow(10.0, static_cast<double>(-k));
}

inline double lr_schedule(const std::string& phase, long iteration, long divisor = 1,
                          double base_lr = 0.0) {
  return lr_schedule(parse_phase(phase), iteration, divisor, base_lr);
}

template <typename S>
class AdaGrad {
 public:
  explicit AdaGrad(double lr, double eps = 1e-8) : lr_(lr), eps_(eps) {
    if (lr <= 0) throw ArgumentError("AdaGrad learning rate must be positive");
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  void step(ParamSet<S>& params) {
    auto& items = params.items();
    if (accum_.empty()) {
      accum_.reserve(items.size());
      for (auto& kv : items) accum_.push_back(ArrayX<S>::Zero(kv.second.numel()));
    }
    if (accum_.size() != items.size())
      throw StateError("AdaGrad state does not match the parameter set");
    for (std::size_t i = 0; i < items.size(); ++i) {
      Tensor<S>& t = items[i].second;
      if (!t.has_grad()) throw StateError("AdaGrad step without gradient for " + items[i].first);
      const ArrayX<S>& g = std::as_const(t).grad();
      accum_[i] += g.square();
      t.values() -= static_cast<S>(lr_) * g / (accum_[i].sqrt() + static_cast<S>(eps_));
    }
  }

  const std::vector<ArrayX<S>>& accumulators() const { return accum_; }

 private:
  double lr_;
  double eps_;
  std::vector<ArrayX<S>> accum_;
};

}  // namespace mobo
