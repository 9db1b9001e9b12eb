#pragma once

#include <cstdint>
#include <vector>

#include "pt/tensor.hpp"

namespace pt {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for a fixed list of parameters. The optimizer keeps
/// handles to the parameters, so their storage is updated in place.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamSettings settings = {});

  /// One bias-corrected Adam update using the accumulated gradients.
  /// Parameters without a gradient are treated as having a zero gradient.
  void step(double lr);
  void zero_grad();

  std::int64_t steps() const { return step_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamSettings settings_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t step_ = 0;
};

/// Step-decay schedule: base * factor^floor(epoch / period).
double step_decay_lr(double base, double factor, int period, int epoch);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace pt
