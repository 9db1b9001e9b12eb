#include "pt/optim.hpp"

#include <cmath>

#include "pt/errors.hpp"

namespace pt {

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamSettings settings)
    : params_(std::move(params)), settings_(settings) {
  for (const auto& p : params_) {
    if (!p.requires_grad()) fail(ErrorKind::Config, "Adam parameter does not require grad");
    m_.emplace_back(p.numel(), T(0));
    v_.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  if (!(lr > 0)) fail(ErrorKind::Config, "learning rate must be positive");
  ++step_;
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto values = params_[i].mutable_data();
    const auto grad = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const T g = grad.empty() ? T(0) : grad[j];
      m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * g);
      v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * g * g);
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      values[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + settings_.epsilon));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double step_decay_lr(double base, double factor, int period, int epoch) {
  if (period <= 0) fail(ErrorKind::Config, "decay period must be positive");
  return base * std::pow(factor, static_cast<double>(epoch / period));
}

template class Adam<float>;
template class Adam<double>;

}  // namespace pt
