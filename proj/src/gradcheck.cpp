#include "pt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pt/errors.hpp"

namespace pt {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed() ? "pass" : "FAIL") << " max_rel_err=" << max_relative_error
     << " tol=" << tolerance << " coords=" << coordinates << " failures=" << failures.size();
  if (!passed())
    os << " worst(input=" << worst.input << ",index=" << worst.index
       << ",analytic=" << worst.analytic << ",numeric=" << worst.numeric << ")";
  return os.str();
}

GradCheckReport gradient_check(const std::function<Tensor<double>()>& f,
                               std::vector<Tensor<double>> inputs, GradCheckOptions options) {
  for (auto& in : inputs) {
    if (!in.is_leaf()) fail(ErrorKind::Contract, "gradient_check inputs must be leaf tensors");
    in.set_requires_grad(true);
    in.zero_grad();
  }
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    const Tensor<double> loss = f();
    tape.backward(loss);
  }
  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    const std::vector<double> analytic(inputs[k].grad().begin(), inputs[k].grad().end());
    const std::size_t n = values.size();
    std::size_t stride = 1;
    if (options.max_coordinates_per_input > 0 && n > options.max_coordinates_per_input)
      stride = (n + options.max_coordinates_per_input - 1) / options.max_coordinates_per_input;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double plus = f().item();
      values[i] = saved - options.step;
      const double minus = f().item();
      values[i] = saved;
      GradCheckEntry e;
      e.input = k;
      e.index = i;
      e.analytic = analytic.empty() ? 0.0 : analytic[i];
      e.numeric = (plus - minus) / (2 * options.step);
      const double denom =
          std::max({std::abs(e.analytic), std::abs(e.numeric), options.floor});
      e.relative_error = std::abs(e.analytic - e.numeric) / denom;
      ++report.coordinates;
      if (e.relative_error >= report.max_relative_error) {
        report.max_relative_error = e.relative_error;
        report.worst = e;
      }
      if (!(e.relative_error < options.tolerance)) report.failures.push_back(e);
    }
  }
  return report;
}

}  // namespace pt
