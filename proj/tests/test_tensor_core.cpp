#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pt/errors.hpp"
#include "pt/gradcheck.hpp"
#include "pt/ops.hpp"
#include "pt/optim.hpp"
#include "pt/tensor.hpp"

using namespace pt;
using T64 = Tensor<double>;

namespace {

T64 random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = u(rng);
  return T64(std::move(shape), std::move(v));
}

// Weighted sum with fixed pseudo-random weights, so every output element
// contributes a distinct amount to the checked scalar.
T64 probe(const T64& y) {
  std::vector<double> w(y.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.3 * static_cast<double>(i) + 0.4);
  return ops::sum_all(ops::mul(y, T64(y.shape(), w)));
}

void expect_values(const T64& t, std::vector<double> expected, double tol = 1e-12) {
  REQUIRE(t.numel() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(t.data()[i] == doctest::Approx(expected[i]).epsilon(tol));
}

}  // namespace

TEST_CASE("tensor construction validates shape against data") {
  CHECK_NOTHROW(T64({2, 3}, std::vector<double>(6)));
  try {
    T64({2, 3}, std::vector<double>(5));
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
  }
  CHECK_THROWS_AS(T64({2, 0}, {}), Error);
}

TEST_CASE("matmul hand cases") {
  T64 eye({2, 2}, {1, 0, 0, 1});
  T64 m({2, 2}, {1, 2, 3, 4});
  expect_values(ops::matmul(eye, m), {1, 2, 3, 4});
  expect_values(ops::matmul(T64({1, 2}, {1, 2}), T64({2, 1}, {3, 4})), {11});
  CHECK_THROWS_AS(ops::matmul(T64({2, 3}, std::vector<double>(6)), m), Error);
}

TEST_CASE("matmul_nt equals matmul against an explicit transpose") {
  std::mt19937_64 rng(1);
  auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 5, 4}, rng);
  auto x = ops::matmul_nt(a, b), y = ops::matmul(a, ops::transpose(b));
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-12));
}

TEST_CASE("gradient of sum(A B) with respect to A is B^T broadcast") {
  T64 a({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  T64 b({3, 2}, {0.5, -1, 2, 0.25, -3, 1}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  backward(ops::sum_all(ops::matmul(a, b)));
  // d/dA_ij sum_k (AB)_ik = sum_k B_jk
  const double row[3] = {-0.5, 2.25, -2};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(a.grad()[i * 3 + j] == doctest::Approx(row[j]));
  auto report = gradient_check([&] { return ops::sum_all(ops::matmul(a, b)); }, {a, b});
  CHECK(report.passed());
  CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("softmax values") {
  expect_values(ops::softmax(T64({2}, {0, 0}), 0), {0.5, 0.5});
  expect_values(ops::softmax(T64({3}, {1000, 1000, 1000}), 0), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  // Independent evaluation in long double.
  long double e[3], s = 0;
  for (int i = 0; i < 3; ++i) s += (e[i] = std::exp(static_cast<long double>(i + 1)));
  auto y = ops::softmax(T64({3}, {1, 2, 3}), 0);
  for (int i = 0; i < 3; ++i) CHECK(y.data()[i] == doctest::Approx(static_cast<double>(e[i] / s)).epsilon(1e-14));
  CHECK_THROWS_AS(ops::softmax(T64({2}, {0, NAN}), 0), Error);
}

TEST_CASE("softmax slices sum to one along any axis") {
  std::mt19937_64 rng(2);
  auto x = random_tensor({3, 4, 5}, rng, -30, 30);
  for (std::ptrdiff_t axis = 0; axis < 3; ++axis) {
    auto y = ops::softmax(x, axis);
    const Shape& s = x.shape();
    const std::size_t len = s[axis];
    std::size_t inner = 1;
    for (std::size_t d = axis + 1; d < 3; ++d) inner *= s[d];
    const std::size_t outer = x.numel() / (len * inner);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        double sum = 0;
        for (std::size_t i = 0; i < len; ++i) sum += y.data()[(o * len + i) * inner + in];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      }
  }
  auto f = Tensor<float>({2, 3}, {1e30f, -1e30f, 0, 88, 89, 90});
  auto yf = ops::softmax(f, 1);
  CHECK(yf.data()[0] == 1.0f);
  CHECK(yf.data()[3] + yf.data()[4] + yf.data()[5] == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("layer norm hand cases") {
  auto gain = T64::full({4}, 1), bias = T64::zeros({4});
  expect_values(ops::layer_norm(T64({4}, {5, 5, 5, 5}), gain, bias, 0), {0, 0, 0, 0});
  auto y = ops::layer_norm(T64({2}, {1, 3}), T64::full({2}, 1), T64::zeros({2}), 0, 0.0);
  expect_values(y, {-1, 1});
}

TEST_CASE("elementwise suite hand cases") {
  expect_values(ops::sigmoid(T64({1}, {0})), {0.5});
  expect_values(ops::relu(T64({3}, {-1, 0, 2})), {0, 0, 2});
  expect_values(ops::add(T64({2}, {1, 2}), T64({2}, {3, 4})), {4, 6});
  expect_values(ops::mul(T64({2}, {1, 2}), T64({2}, {3, 4})), {3, 8});
  expect_values(ops::concat<double>({T64({1, 2}, {1, 2}), T64({1, 1}, {3})}, 1), {1, 2, 3});
  auto mr = ops::max_reduce_with_argmax(T64({2, 2}, {1, 7, 4, 2}), 0);
  expect_values(mr.values, {4, 7});
  CHECK(mr.argmax == std::vector<std::size_t>{1, 0});
  auto tie = ops::max_reduce_with_argmax(T64({3}, {2, 5, 5}), 0);
  CHECK(tie.argmax[0] == 1);
  const std::size_t idx[] = {2, 0, 2};
  expect_values(ops::gather_rows(T64({3, 1}, {10, 20, 30}), idx), {30, 10, 30});
  const std::size_t bad[] = {3};
  CHECK_THROWS_AS(ops::gather_rows(T64({3, 1}, {10, 20, 30}), bad), Error);
}

TEST_CASE("scatter then gather restores the original row order") {
  std::mt19937_64 rng(3);
  auto x = random_tensor({9, 2}, rng);
  const int assign[] = {2, 0, 1, 2, 2, 0, 1, 1, 0};
  auto grouped = ops::scatter_rows_by_group(x, assign, 4);
  CHECK_FALSE(grouped.groups[3].defined());
  std::vector<T64> parts;
  std::vector<std::size_t> order;
  for (std::size_t g = 0; g < 4; ++g) {
    if (!grouped.groups[g].defined()) continue;
    parts.push_back(grouped.groups[g]);
    order.insert(order.end(), grouped.members[g].begin(), grouped.members[g].end());
  }
  std::vector<std::size_t> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inverse[order[i]] = i;
  auto back = ops::gather_rows(ops::concat(parts, 0), inverse);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(back.data()[i] == x.data()[i]);
}

TEST_CASE("backward hand cases") {
  SUBCASE("x squared") {
    T64 x = T64::scalar(3, true);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    backward(ops::square(x));
    CHECK(x.grad()[0] == 6);
  }
  SUBCASE("sum of softmax is constant") {
    std::mt19937_64 rng(4);
    auto x = random_tensor({5}, rng);
    x.set_requires_grad(true);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    backward(ops::sum_all(ops::softmax(x, 0)));
    for (double g : x.grad()) CHECK(std::abs(g) < 1e-15);
  }
  SUBCASE("repeated backward accumulates into leaves") {
    T64 x = T64::scalar(2, true);
    for (int i = 0; i < 3; ++i) {
      Tape<double> tape;
      TapeScope<double> scope(tape);
      backward(ops::scale(x, 5.0));
    }
    CHECK(x.grad()[0] == 15);
  }
  SUBCASE("a shared leaf receives the sum over all paths") {
    T64 x = T64::scalar(1.5, true);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto y = ops::add(ops::mul(x, x), ops::scale(x, 4.0));
    backward(y);
    CHECK(x.grad()[0] == doctest::Approx(2 * 1.5 + 4));
  }
  SUBCASE("non-scalar loss and missing tape are contract errors") {
    T64 x({2}, {1, 2}, true);
    Tape<double> tape;
    {
      TapeScope<double> scope(tape);
      auto y = ops::scale(x, 2.0);
      CHECK_THROWS_AS(backward(y), Error);
    }
    CHECK_THROWS_AS(backward(ops::sum_all(x)), Error);
  }
}

TEST_CASE("no tape means no recording") {
  T64 x({2}, {1, 2}, true);
  auto y = ops::sum_all(ops::square(x));
  CHECK(y.is_leaf());
}

TEST_CASE("tape replay is bit-identical") {
  auto run = [] {
    std::mt19937_64 rng(5);
    auto a = random_tensor({4, 3}, rng), w = random_tensor({3, 5}, rng), b = random_tensor({5}, rng);
    w.set_requires_grad(true);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto loss = probe(ops::softmax(ops::linear(a, w, b), 1));
    backward(loss);
    std::vector<double> out(w.grad().begin(), w.grad().end());
    out.push_back(loss.item());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("max reduce gradient is one-hot per slice") {
  T64 x({3, 2}, {1, 9, 8, 2, 3, 4}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  backward(ops::sum_all(ops::max_reduce_with_argmax(x, 0).values));
  const double expected[] = {0, 1, 1, 0, 0, 0};
  for (int i = 0; i < 6; ++i) CHECK(x.grad()[i] == expected[i]);
}

TEST_CASE("every backward rule passes the finite-difference check") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 3; ++trial) {
    std::uniform_int_distribution<std::size_t> ext(2, 8);
    const std::size_t m = ext(rng), k = ext(rng), n = ext(rng);
    auto a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng), bt = random_tensor({n, k}, rng);
    auto c = random_tensor({m, k}, rng), bias = random_tensor({n}, rng), kb = random_tensor({k}, rng);
    auto g = random_tensor({k}, rng, 0.5, 1.5);
    auto batched = random_tensor({2, m, k}, rng);
    // Keep relu/max inputs away from their kinks.
    auto far = random_tensor({m, k}, rng, 0.1, 1);
    for (std::size_t i = 0; i < far.numel(); ++i)
      if (i % 2) far.mutable_data()[i] = -far.data()[i];
    const std::vector<std::pair<const char*, std::function<T64()>>> cases = {
        {"matmul", [&] { return probe(ops::matmul(a, b)); }},
        {"matmul batched", [&] { return probe(ops::matmul(batched, b)); }},
        {"matmul_nt", [&] { return probe(ops::matmul_nt(a, bt)); }},
        {"transpose", [&] { return probe(ops::transpose(a)); }},
        {"add", [&] { return probe(ops::add(a, c)); }},
        {"sub", [&] { return probe(ops::sub(a, c)); }},
        {"mul", [&] { return probe(ops::mul(a, c)); }},
        {"scale", [&] { return probe(ops::scale(a, 1.7)); }},
        {"square", [&] { return probe(ops::square(a)); }},
        {"add_bias", [&] { return probe(ops::add_bias(a, kb)); }},
        {"linear", [&] { return probe(ops::linear(a, b, bias)); }},
        {"sigmoid", [&] { return probe(ops::sigmoid(a)); }},
        {"relu", [&] { return probe(ops::relu(far)); }},
        {"softmax", [&] { return probe(ops::softmax(a, 1)); }},
        {"softmax axis0", [&] { return probe(ops::softmax(a, 0)); }},
        {"layer_norm", [&] { return probe(ops::layer_norm(a, g, kb, 1)); }},
        {"concat", [&] { return probe(ops::concat<double>({a, c}, 1)); }},
        {"max_reduce", [&] { return probe(ops::max_reduce_with_argmax(far, 0).values); }},
        {"gather_rows", [&] {
           const std::size_t idx[] = {0, m - 1, 0};
           return probe(ops::gather_rows(a, idx));
         }},
        {"reshape", [&] { return probe(ops::reshape(a, {k, m})); }},
        {"swap_axes01", [&] { return probe(ops::swap_axes01(batched)); }},
        {"sum_axis", [&] { return probe(ops::sum_axis(batched, 1)); }},
        {"mean_all", [&] { return ops::mean_all(ops::square(a)); }},
        {"smooth_cross_entropy", [&] { return ops::smooth_cross_entropy(kb, 1, 0.2); }},
    };
    for (const auto& [name, f] : cases) {
      CAPTURE(name);
      auto report = gradient_check(f, {a, b, bt, c, bias, kb, g, batched, far});
      CHECK_MESSAGE(report.passed(), report.summary());
      CHECK(report.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("gradient check on a linear function matches to rounding") {
  T64 x({3}, {0.3, -1.2, 2.0}), w({3}, {1.5, -2, 0.5});
  auto report = gradient_check([&] { return ops::sum_all(ops::mul(x, w)); }, {x});
  CHECK(report.max_relative_error < 1e-9);
}

TEST_CASE("gradient check flags a corrupted backward rule") {
  // x * x whose backward claims 3x instead of 2x.
  auto bad_square = [](const T64& x) {
    std::vector<double> v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.data()[i] * x.data()[i];
    auto* nx = x.node().get();
    return record_op<double>("bad_square", {&x}, x.shape(), std::move(v), [nx](detail::Node<double>* o) {
      return [nx, o] {
        for (std::size_t i = 0; i < o->grad.size(); ++i) nx->grad[i] += o->grad[i] * 3 * nx->data[i];
      };
    });
  };
  T64 x({4}, {0.5, -1, 2, 1.5});
  auto report = gradient_check([&] { return ops::sum_all(bad_square(x)); }, {x});
  CHECK_FALSE(report.passed());
  CHECK(report.failures.size() == 4);
  CHECK(report.max_relative_error == doctest::Approx(1.0 / 3).epsilon(1e-4));
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves the parameter unchanged") {
    Tensor<double> w({2}, {1.0, -2.0}, true);
    Adam<double> opt({w});
    opt.zero_grad();
    w.mutable_grad();
    opt.step(0.01);
    CHECK(w.data()[0] == 1.0);
    CHECK(w.data()[1] == -2.0);
  }
  SUBCASE("one step on w^2 from 1 decreases f") {
    Tensor<double> w = Tensor<double>::scalar(1.0, true);
    Adam<double> opt({w});
    {
      Tape<double> tape;
      TapeScope<double> scope(tape);
      backward(ops::square(w));
    }
    opt.step(0.1);
    CHECK(w.item() * w.item() < 1.0);
  }
  SUBCASE("200 steps on a 2-D quadratic reach the minimizer") {
    // f(w) = (w0 - 3)^2 + 10 (w1 + 1)^2, minimizer (3, -1).
    Tensor<double> w({2}, {0.0, 0.0}, true);
    Adam<double> opt({w});
    const T64 target({2}, {3, -1}), weight({2}, {1, 10});
    for (int i = 0; i < 200; ++i) {
      opt.zero_grad();
      Tape<double> tape;
      TapeScope<double> scope(tape);
      backward(ops::sum_all(ops::mul(weight, ops::square(ops::sub(w, target)))));
      opt.step(i < 150 ? 0.1 : 0.01);
    }
    CHECK(std::abs(w.data()[0] - 3) < 1e-3);
    CHECK(std::abs(w.data()[1] + 1) < 1e-3);
  }
  SUBCASE("non-positive learning rate is rejected") {
    Tensor<double> w = Tensor<double>::scalar(1.0, true);
    Adam<double> opt({w});
    CHECK_THROWS_AS(opt.step(0.0), Error);
  }
}

TEST_CASE("step decay schedule") {
  CHECK(step_decay_lr(0.001, 0.7, 20, 0) == 0.001);
  CHECK(step_decay_lr(0.001, 0.7, 20, 19) == 0.001);
  CHECK(step_decay_lr(0.001, 0.7, 20, 40) == doctest::Approx(0.00049).epsilon(1e-12));
  CHECK(step_decay_lr(0.001, 0.7, 20, 40) == 0.001 * 0.7 * 0.7);
}
