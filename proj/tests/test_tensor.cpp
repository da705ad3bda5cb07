// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"

using namespace cssm;
using cssm::testing::gradcheck;
using cssm::testing::probe;
using cssm::testing::random_leaf;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("matmul hand examples") {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(values(matmul(a, Tensor::from({2, 2}, {1, 0, 0, 1}))) == std::vector<double>{1, 2, 3, 4});
  const Tensor y = matmul(a, Tensor::from({2, 1}, {1, 1}));
  CHECK(y.shape() == Shape{2, 1});
  CHECK(values(y) == std::vector<double>{3, 7});
}

TEST_CASE("matmul rejects mismatched inner dimensions and names both shapes") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("gradient of sum(a b) wrt a matches finite differences to 1e-6") {
  std::mt19937_64 rng(11);
  Tensor a = random_leaf({3, 4}, rng);
  Tensor b = random_leaf({4, 2}, rng);
  const auto rep = gradcheck([&] { return sum(matmul(a, b)); }, {{"a", a}});
  CHECK(rep.worst <= 1e-6);
}

TEST_CASE("softmax examples") {
  CHECK(values(softmax(Tensor::from({2}, {0, 0}), 0)) == std::vector<double>{0.5, 0.5});
  const Tensor s = softmax(Tensor::from({2}, {std::log(1.0), std::log(3.0)}), 0);
  CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(values(softmax(Tensor::from({2}, {1000, 1000}), 0)) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("softmax slices sum to one and reject non-finite input") {
  std::mt19937_64 rng(3);
  const Tensor x = Tensor::from({4, 5}, cssm::testing::normal_values(20, rng, 3.0));
  for (std::size_t axis : {0u, 1u}) {
    const Tensor s = softmax(x, axis);
    const Tensor totals = sum_axis(s, axis);
    for (double v : totals.data()) CHECK(std::fabs(v - 1.0) <= 1e-12);
    for (double v : s.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
  CHECK_THROWS_AS(softmax(Tensor::from({2}, {0.0, std::numeric_limits<double>::quiet_NaN()}), 0), NumericError);
  CHECK_THROWS_AS(softmax(Tensor::from({2}, {0.0, std::numeric_limits<double>::infinity()}), 0), NumericError);
}

TEST_CASE("layernorm examples") {
  const Tensor ones = Tensor::full({4}, 1.0), zeros = Tensor::zeros({4});
  CHECK(values(layernorm(Tensor::full({4}, 5.0), ones, zeros)) == std::vector<double>{0, 0, 0, 0});
  const Tensor y = layernorm(Tensor::from({2}, {1, 3}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 0.0);
  CHECK(values(y) == std::vector<double>{-1, 1});
}

TEST_CASE("layernorm gradient to 1e-5") {
  std::mt19937_64 rng(5);
  Tensor x = random_leaf({3, 5}, rng), g = random_leaf({5}, rng), b = random_leaf({5}, rng);
  const Tensor r = random_leaf({3, 5}, rng);
  const auto rep = gradcheck([&] { return probe(layernorm(x, g, b), r); }, {{"x", x}, {"gain", g}, {"bias", b}});
  CHECK(rep.worst <= 1e-5);
}

TEST_CASE("pointwise examples") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(silu(Tensor::scalar(0.0)).item() == 0.0);
  CHECK(sigmoid(Tensor::scalar(std::log(3.0))).item() == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(relu(Tensor::from({3}, {-1, 0, 2}))[2] == 2.0);
  CHECK(softplus(Tensor::scalar(0.0)).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("broadcasting follows trailing-axis alignment") {
  const Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(values(add(a, Tensor::from({3}, {10, 20, 30}))) == std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK(values(mul(a, Tensor::from({2, 1}, {2, 3}))) == std::vector<double>{2, 4, 6, 12, 15, 18});
  CHECK_THROWS_AS(add(a, Tensor::zeros({2})), ShapeError);
  CHECK_THROWS_AS(mul(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("gather and scatter") {
  std::mt19937_64 rng(9);
  const Tensor x = Tensor::from({5, 3}, cssm::testing::normal_values(15, rng));
  std::vector<std::size_t> id(5);
  std::iota(id.begin(), id.end(), 0);
  CHECK(values(gather_rows(x, id)) == values(x));
  std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  CHECK(values(scatter_rows(gather_rows(x, perm), perm, 5)) == values(x));

  const std::vector<std::size_t> dup = {1, 1};
  CHECK_THROWS_AS(scatter_rows(Tensor::zeros({2, 3}), dup, 5), ContractError);
  const std::vector<std::size_t> far = {7};
  CHECK_THROWS_AS(gather_rows(x, far), IndexError);
  CHECK_THROWS_AS(scatter_rows(Tensor::zeros({1, 3}), far, 5), IndexError);
}

TEST_CASE("gather gradient is the indicator of the gathered rows") {
  Tensor x = Tensor::parameter({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  const std::vector<std::size_t> p = {2, 0};
  {
    Tape tape;
    tape.backward(sum(gather_rows(x, p)));
  }
  CHECK(values(Tensor::from({8}, {x.grad().begin(), x.grad().end()})) ==
        std::vector<double>{1, 1, 0, 0, 1, 1, 0, 0});
  x.zero_grad();
  const auto rep = gradcheck([&] { return sum(gather_rows(x, p)); }, {{"x", x}});
  CHECK(rep.worst <= 1e-8);
}

TEST_CASE("backward trivial cases and contract errors") {
  Tensor x = Tensor::parameter({3}, {1, -2, 4});
  {
    Tape tape;
    tape.backward(sum(x));
  }
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 1, 1});
  x.zero_grad();
  {
    Tape tape;
    tape.backward(sum(mul(x, x)));
  }
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2, -4, 8});

  Tape tape;
  const Tensor loss = sum(mul(x, x));
  CHECK_THROWS_AS(tape.backward(mul(x, x)), ContractError);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
}

TEST_CASE("backward is bit-deterministic") {
  std::mt19937_64 rng(21);
  Tensor w = random_leaf({4, 3}, rng);
  const Tensor x = Tensor::from({2, 4}, cssm::testing::normal_values(8, rng));
  auto run = [&] {
    w.zero_grad();
    Tape tape;
    tape.backward(sum(softmax(layernorm(matmul(x, w), Tensor::full({3}, 1.0), Tensor::zeros({3})), 1)));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("composite layernorm-matmul-softmax gradient to 1e-4") {
  std::mt19937_64 rng(2);
  Tensor x = random_leaf({4, 3}, rng), w = random_leaf({3, 5}, rng);
  Tensor g = random_leaf({5}, rng), b = random_leaf({5}, rng);
  const Tensor r = random_leaf({4, 5}, rng);
  const auto rep = gradcheck([&] { return probe(softmax(layernorm(matmul(x, w), g, b), 1), r); },
                             {{"x", x}, {"w", w}, {"g", g}, {"b", b}});
  CHECK(rep.worst <= 1e-4);
}

TEST_CASE("every differentiable op passes a finite-difference check") {
  std::mt19937_64 rng(17);
  Tensor a = random_leaf({3, 4}, rng), b = random_leaf({3, 4}, rng), row = random_leaf({4}, rng);
  Tensor pos = Tensor::parameter({3, 4}, {0.5, 1.2, 2.0, 0.7, 1.5, 0.9, 3.1, 1.1, 0.6, 2.2, 1.4, 0.8});
  const Tensor r = random_leaf({3, 4}, rng);
  const Tensor rt = random_leaf({4, 3}, rng);
  const std::vector<int> targets = {1, 3, 0};
  const std::vector<char> mask = {1, 0, 1};
  const std::vector<std::size_t> idx = {2, 0};
  Tensor a3 = random_leaf({2, 3, 4}, rng);
  const Tensor r3 = random_leaf({2, 3, 1}, rng);
  const Tensor r33 = random_leaf({3, 3}, rng), r24 = random_leaf({2, 4}, rng), r54 = random_leaf({5, 4}, rng);
  const Tensor r64 = random_leaf({6, 4}, rng), r38 = random_leaf({3, 8}, rng);

  struct Case {
    const char* name;
    std::function<Tensor()> f;
    ParamList in;
  };
  const std::vector<Case> cases = {
      {"matmul", [&] { return probe(matmul(a, transpose(b)), r33); }, {{"a", a}, {"b", b}}},
      {"transpose", [&] { return probe(transpose(a), rt); }, {{"a", a}}},
      {"reshape", [&] { return probe(reshape(a, {4, 3}), rt); }, {{"a", a}}},
      {"linear", [&] { return probe(linear(a, transpose(b), Tensor::zeros({3})), r33); }, {{"a", a}, {"b", b}}},
      {"add", [&] { return probe(add(a, row), r); }, {{"a", a}, {"row", row}}},
      {"sub", [&] { return probe(sub(a, row), r); }, {{"a", a}, {"row", row}}},
      {"mul", [&] { return probe(mul(a, b), r); }, {{"a", a}, {"b", b}}},
      {"div", [&] { return probe(div(a, pos), r); }, {{"a", a}, {"pos", pos}}},
      {"scale", [&] { return probe(scale(a, -1.7), r); }, {{"a", a}}},
      {"add_scalar", [&] { return probe(add_scalar(a, 0.3), r); }, {{"a", a}}},
      {"sigmoid", [&] { return probe(sigmoid(a), r); }, {{"a", a}}},
      {"silu", [&] { return probe(silu(a), r); }, {{"a", a}}},
      {"relu", [&] { return probe(relu(a), r); }, {{"a", a}}},
      {"softplus", [&] { return probe(softplus(a), r); }, {{"a", a}}},
      {"exp", [&] { return probe(exp(a), r); }, {{"a", a}}},
      {"log", [&] { return probe(log(pos), r); }, {{"pos", pos}}},
      {"sqrt", [&] { return probe(sqrt(pos), r); }, {{"pos", pos}}},
      {"sum", [&] { return scale(sum(mul(a, a)), 0.5); }, {{"a", a}}},
      {"mean", [&] { return mean(mul(a, r)); }, {{"a", a}}},
      {"sum_axis", [&] { return probe(sum_axis(a3, 2), r3); }, {{"a3", a3}}},
      {"softmax", [&] { return probe(softmax(a, 0), r); }, {{"a", a}}},
      {"cross_entropy", [&] { return cross_entropy(a, targets, mask); }, {{"a", a}}},
      {"gather_rows", [&] { return probe(gather_rows(a, idx), r24); }, {{"a", a}}},
      {"scatter_rows", [&] { return probe(scatter_rows(a, std::vector<std::size_t>{4, 0, 2}, 5), r54); }, {{"a", a}}},
      {"concat_rows", [&] { const Tensor parts[] = {a, b}; return probe(concat_rows(parts), r64); }, {{"a", a}, {"b", b}}},
      {"concat_last", [&] { return probe(concat_last(a, b), r38); }, {{"a", a}, {"b", b}}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CHECK(gradcheck(c.f, c.in).worst <= 1e-4);
  }
}

TEST_CASE("cross entropy value matches a scalar oracle and ignores masked rows") {
  const Tensor logits = Tensor::from({2, 3}, {1.0, 2.0, 0.5, -1.0, 0.0, 3.0});
  const std::vector<int> t = {1, 2};
  const std::vector<char> both = {1, 1}, first = {1, 0}, none = {0, 0};
  auto nll = [](std::vector<double> z, int k) {
    double m = *std::max_element(z.begin(), z.end()), s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return -(z[static_cast<std::size_t>(k)] - m - std::log(s));
  };
  const double l0 = nll({1.0, 2.0, 0.5}, 1), l1 = nll({-1.0, 0.0, 3.0}, 2);
  CHECK(cross_entropy(logits, t, both).item() == doctest::Approx((l0 + l1) / 2).epsilon(1e-14));
  CHECK(cross_entropy(logits, t, first).item() == doctest::Approx(l0).epsilon(1e-14));
  CHECK(cross_entropy(logits, t, none).item() == 0.0);
}
