#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "intnet/autodiff.hpp"

using namespace intnet;
using ad::Act;
using ad::Mode;
using ad::NodePtr;
using ad::Scalar;

namespace {

// Independent oracle: naive triple loop over output channel, position, tap.
std::vector<Scalar> naive_conv(const std::vector<Scalar>& x, std::size_t cin,
                               std::size_t T, const std::vector<Scalar>& w,
                               std::size_t cout, std::size_t k,
                               const std::vector<Scalar>& b) {
  std::vector<Scalar> y(cout * T, 0);
  const std::size_t pad_left = (k - 1) / 2;
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t t = 0; t < T; ++t) {
      Scalar acc = b[o];
      for (std::size_t i = 0; i < cin; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t + kk) -
                                     static_cast<std::ptrdiff_t>(pad_left);
          if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(T)) continue;
          acc += w[(o * cin + i) * k + kk] * x[i * T + pos];
        }
      }
      y[o * T + t] = acc;
    }
  }
  return y;
}

}  // namespace

TEST_CASE("conv1d hand-checked examples") {
  auto x = ad::leaf({1, 3}, {1, 2, 3});
  auto w = ad::leaf({1, 1, 3}, {1, 0, -1});
  auto b = ad::leaf({1}, {0});
  auto y = ad::conv1d(x, w, b);
  CHECK(y->shape == ad::Shape{1, 3});
  CHECK(y->value[0] == doctest::Approx(-2));
  CHECK(y->value[1] == doctest::Approx(-2));
  CHECK(y->value[2] == doctest::Approx(2));

  // identity kernel
  auto w1 = ad::leaf({1, 1, 1}, {1});
  auto y1 = ad::conv1d(x, w1, b);
  CHECK(y1->value == x->value);

  // bias broadcast on zero input
  auto xz = ad::zeros({2, 4});
  auto wz = ad::leaf({1, 2, 3}, std::vector<Scalar>(6, 0.25));
  auto bz = ad::leaf({1}, {0.5});
  auto yz = ad::conv1d(xz, wz, bz);
  for (Scalar v : yz->value) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("conv1d matches the naive oracle on random inputs") {
  RngState rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t cin = 1 + rng.next_below(3);
    const std::size_t cout = 1 + rng.next_below(3);
    const std::size_t T = 1 + rng.next_below(7);
    const std::size_t k = 1 + rng.next_below(5);
    std::vector<Scalar> xv(cin * T), wv(cout * cin * k), bv(cout);
    for (auto& v : xv) v = rng.uniform(-1, 1);
    for (auto& v : wv) v = rng.uniform(-1, 1);
    for (auto& v : bv) v = rng.uniform(-1, 1);
    auto y = ad::conv1d(ad::leaf({cin, T}, xv), ad::leaf({cout, cin, k}, wv),
                        ad::leaf({cout}, bv));
    auto expect = naive_conv(xv, cin, T, wv, cout, k, bv);
    REQUIRE(y->value.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
      CHECK(y->value[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv1d keeps the time length for every kernel size") {
  RngState rng(11);
  for (std::size_t k : {1u, 3u, 4u, 5u}) {
    for (std::size_t T : {1u, 2u, 5u, 9u}) {
      std::vector<Scalar> xv(2 * T), wv(3 * 2 * k);
      for (auto& v : xv) v = rng.uniform(-1, 1);
      for (auto& v : wv) v = rng.uniform(-1, 1);
      auto y = ad::conv1d(ad::leaf({2, T}, xv), ad::leaf({3, 2, k}, wv),
                          ad::zeros({3}));
      CHECK(y->shape == ad::Shape{3, T});
    }
  }
}

TEST_CASE("conv1d rejects channel mismatches") {
  auto x = ad::zeros({2, 3});
  auto w = ad::zeros({1, 3, 3});
  CHECK_THROWS_AS(ad::conv1d(x, w, ad::zeros({1})), DimensionError);
}

TEST_CASE("affine examples") {
  auto eye = ad::leaf({2, 2}, {1, 0, 0, 1});
  auto x = ad::leaf({2}, {3, 4});
  auto zero = ad::zeros({2});
  CHECK(ad::affine(eye, x, zero)->value == x->value);

  auto w0 = ad::zeros({1, 2});
  auto b3 = ad::leaf({1}, {3});
  CHECK(ad::affine(w0, x, b3)->value[0] == doctest::Approx(3));

  auto w = ad::leaf({1, 2}, {1, 2});
  auto b1 = ad::leaf({1}, {1});
  CHECK(ad::affine(w, x, b1)->value[0] == doctest::Approx(12));

  CHECK_THROWS_AS(ad::matvec(w, ad::zeros({3})), DimensionError);
}

TEST_CASE("activations") {
  auto y = ad::relu(ad::leaf({3}, {-1, 0, 2}));
  CHECK(y->value == std::vector<Scalar>{0, 0, 2});
  CHECK(ad::activation(ad::scalar(0), Act::sigmoid)->value[0] ==
        doctest::Approx(0.5));
  CHECK(ad::activation(ad::scalar(0), Act::tanh)->value[0] ==
        doctest::Approx(0.0));
}

TEST_CASE("batch_norm definition and running stats") {
  auto gamma = ad::leaf({1}, {1});
  auto beta = ad::zeros({1});
  ad::BatchNormState state(1);

  SUBCASE("train mode normalizes to zero mean unit variance") {
    auto x = ad::leaf({1, 3}, {1, 2, 3});
    auto y = ad::batch_norm(x, gamma, beta, state, Mode::train);
    Scalar mean = (y->value[0] + y->value[1] + y->value[2]) / 3;
    Scalar var = 0;
    for (Scalar v : y->value) var += (v - mean) * (v - mean);
    var /= 3;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1) < 1e-4);  // eps slightly shrinks the variance
  }
  SUBCASE("gamma zero pins the output to beta") {
    auto g0 = ad::zeros({1});
    auto b7 = ad::leaf({1}, {7});
    auto x = ad::leaf({1, 4}, {3, -1, 2, 9});
    auto y = ad::batch_norm(x, g0, b7, state, Mode::train);
    for (Scalar v : y->value) CHECK(v == doctest::Approx(7));
  }
  SUBCASE("constant input collapses to ~0") {
    auto x = ad::leaf({1, 4}, {2.5, 2.5, 2.5, 2.5});
    auto y = ad::batch_norm(x, gamma, beta, state, Mode::train);
    for (Scalar v : y->value) CHECK(std::abs(v) < 1e-2);
  }
  SUBCASE("eval before any train call fails") {
    auto x = ad::leaf({1, 2}, {1, 2});
    CHECK_THROWS_AS(ad::batch_norm(x, gamma, beta, state, Mode::eval),
                    UninitializedStatsError);
    ad::batch_norm(x, gamma, beta, state, Mode::train);
    CHECK_NOTHROW(ad::batch_norm(x, gamma, beta, state, Mode::eval));
  }
}

TEST_CASE("batch_norm per-channel invariant on random input") {
  RngState rng(21);
  std::vector<Scalar> xv(3 * 16);
  for (auto& v : xv) v = rng.uniform(-4, 4);
  auto gamma = ad::leaf({3}, {1, 1, 1});
  auto beta = ad::zeros({3});
  ad::BatchNormState state(3);
  auto y = ad::batch_norm(ad::leaf({3, 16}, xv), gamma, beta, state,
                          Mode::train, 1e-12);
  for (std::size_t c = 0; c < 3; ++c) {
    Scalar mean = 0, var = 0;
    for (std::size_t t = 0; t < 16; ++t) mean += y->value[c * 16 + t];
    mean /= 16;
    for (std::size_t t = 0; t < 16; ++t) {
      const Scalar d = y->value[c * 16 + t] - mean;
      var += d * d;
    }
    var /= 16;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1) < 1e-6);
  }
}

TEST_CASE("concat_channels") {
  auto a = ad::leaf({1, 2}, {1, 2});
  auto b = ad::leaf({2, 2}, {3, 4, 5, 6});
  CHECK(ad::concat_channels({a})->value == a->value);

  auto y = ad::concat_channels({a, b});
  CHECK(y->shape == ad::Shape{3, 2});
  CHECK(y->value == std::vector<Scalar>{1, 2, 3, 4, 5, 6});

  ad::backward(ad::sum(y));
  CHECK(a->grad == std::vector<Scalar>{1, 1});
  CHECK(b->grad == std::vector<Scalar>{1, 1, 1, 1});

  auto bad = ad::leaf({1, 3}, {1, 2, 3});
  CHECK_THROWS_AS(ad::concat_channels({a, bad}), DimensionError);
}

TEST_CASE("concat then slicing recovers the inputs bit-exactly") {
  RngState rng(5);
  std::vector<NodePtr> inputs;
  std::vector<std::size_t> channels{2, 1, 3};
  for (std::size_t c : channels) {
    std::vector<Scalar> v(c * 4);
    for (auto& x : v) x = rng.uniform(-1, 1);
    inputs.push_back(ad::leaf({c, 4}, v));
  }
  auto y = ad::concat_channels(inputs);
  std::size_t row = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto piece = ad::slice2d(y, row, row + channels[i], 0, 4);
    CHECK(piece->value == inputs[i]->value);
    row += channels[i];
  }
}

TEST_CASE("max_over_time") {
  auto x = ad::leaf({2, 3}, {1, 5, 3, 2, 2, 2});
  auto y = ad::max_over_time(x, 3);
  CHECK(y->value == std::vector<Scalar>{5, 2});

  auto x2 = ad::leaf({1, 3}, {1, 5, 3});
  CHECK(ad::max_over_time(x2, 1)->value == std::vector<Scalar>{1});

  ad::backward(ad::pick(ad::max_over_time(x2, 3), 0));
  CHECK(x2->grad == std::vector<Scalar>{0, 1, 0});

  CHECK_THROWS_AS(ad::max_over_time(x2, 0), EmptyWordError);
  CHECK_THROWS_AS(ad::max_over_time(x2, 4), DimensionError);
}

TEST_CASE("max_over_time ties route to the lowest index") {
  auto x = ad::leaf({1, 3}, {4, 4, 4});
  ad::backward(ad::pick(ad::max_over_time(x, 3), 0));
  CHECK(x->grad == std::vector<Scalar>{1, 0, 0});
}

TEST_CASE("dropout") {
  RngState rng(3);
  auto x = ad::leaf({4}, {1, 2, 3, 4});
  SUBCASE("rate zero and eval mode are the identity") {
    CHECK(ad::dropout(x, 0, Mode::train, &rng)->value == x->value);
    CHECK(ad::dropout(x, 0.9, Mode::eval, nullptr)->value == x->value);
  }
  SUBCASE("rate one is rejected") {
    CHECK_THROWS_AS(ad::dropout(x, 1.0, Mode::train, &rng), ConfigError);
    CHECK_THROWS_AS(ad::dropout(x, -0.1, Mode::train, &rng), ConfigError);
  }
  SUBCASE("inverted scaling keeps the mean at 1") {
    auto ones = ad::leaf({10}, std::vector<Scalar>(10, 1));
    double total = 0;
    const int reps = 100000;
    for (int i = 0; i < reps; ++i) {
      auto y = ad::dropout(ones, 0.5, Mode::train, &rng);
      for (Scalar v : y->value) total += static_cast<double>(v);
    }
    const double mean = total / (reps * 10.0);
    CHECK(std::abs(mean - 1.0) < 0.02);
  }
}

TEST_CASE("backward basics") {
  SUBCASE("sum gives all-ones") {
    auto x = ad::leaf({3}, {5, -1, 2});
    ad::backward(ad::sum(x));
    CHECK(x->grad == std::vector<Scalar>{1, 1, 1});
  }
  SUBCASE("product rule") {
    auto w = ad::leaf({1}, {2});
    auto x = ad::leaf({1}, {3});
    ad::backward(ad::sum(ad::mul(w, x)));
    CHECK(w->grad == std::vector<Scalar>{3});
    CHECK(x->grad == std::vector<Scalar>{2});
  }
  SUBCASE("loss grad is exactly one and doubles on repeat") {
    auto x = ad::leaf({2}, {1, 2});
    auto loss = ad::sum(x);
    ad::backward(loss);
    CHECK(loss->grad[0] == 1.0);
    CHECK(x->grad == std::vector<Scalar>{1, 1});
    ad::backward(loss);
    CHECK(loss->grad[0] == 2.0);
    CHECK(x->grad == std::vector<Scalar>{2, 2});
  }
  SUBCASE("non-scalar loss is a contract error") {
    auto x = ad::leaf({2}, {1, 2});
    CHECK_THROWS_AS(ad::backward(ad::mul(x, x)), ContractError);
  }
  SUBCASE("unreachable leaves keep zero grads") {
    auto x = ad::leaf({2}, {1, 2});
    auto other = ad::leaf({2}, {1, 1});
    ad::backward(ad::sum(x));
    CHECK(other->grad == std::vector<Scalar>{0, 0});
  }
  SUBCASE("diamond-shaped reuse accumulates correctly") {
    auto x = ad::leaf({2}, {1.5, -2});
    auto y = ad::add(ad::mul(x, x), ad::scale(x, 3));  // x^2 + 3x
    ad::backward(ad::sum(y));
    CHECK(x->grad[0] == doctest::Approx(2 * 1.5 + 3));
    CHECK(x->grad[1] == doctest::Approx(2 * -2 + 3));
  }
}

TEST_CASE("non-finite values are an error, never silent") {
  auto big = ad::leaf({1}, {1e308});
  CHECK_THROWS_AS(ad::add(big, big), NumericError);
}

TEST_CASE("grad_check is exact on linear functions") {
  RngState rng(17);
  std::vector<Scalar> wv(6);
  for (auto& v : wv) v = rng.uniform(-1, 1);
  auto w = ad::leaf({2, 3}, wv);
  auto x = ad::leaf({3}, {0.3, -0.7, 1.1});
  std::vector<NodePtr> params{w, x};
  const Scalar err = ad::grad_check(
      [&] { return ad::sum(ad::matvec(w, x)); }, params, 1e-5);
  CHECK(err < 1e-9);
}

TEST_CASE("grad_check covers a composed conv-relu-max-affine chain") {
  // values picked away from the kinks
  auto x = ad::leaf({1, 5}, {0.4, -0.6, 0.9, 0.2, -0.3});
  auto w = ad::leaf({2, 1, 3}, {0.5, -0.4, 0.3, 0.2, 0.6, -0.5});
  auto b = ad::leaf({2}, {0.05, -0.1});
  auto w2 = ad::leaf({1, 2}, {0.7, -0.9});
  auto b2 = ad::leaf({1}, {0.2});
  std::vector<NodePtr> params{x, w, b, w2, b2};
  const Scalar err = ad::grad_check(
      [&] {
        auto m = ad::max_over_time(ad::relu(ad::conv1d(x, w, b)), 5);
        return ad::affine(w2, m, b2);
      },
      params, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("identical seeds give bit-identical streams") {
  RngState a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  RngState c = a.split("child");
  RngState d = b.split("child");
  CHECK(c.next_double() == d.next_double());
  CHECK(c.normal() == d.normal());
}

TEST_CASE("parameter store enumerates deterministically and rejects duplicates") {
  ad::ParamStore store;
  store.add("b.second", {1}, {1});
  store.add("a.first", {1}, {2});
  CHECK(store.all()[0].name == "b.second");  // registration order, not sorted
  CHECK(store.all()[1].name == "a.first");
  CHECK_THROWS_AS(store.add("b.second", {1}, {3}), ContractError);
  CHECK(store.find("a.first") != nullptr);
  CHECK(store.find("missing") == nullptr);
}

TEST_CASE("tensor dump matches the golden file") {
  auto t = ad::leaf({2, 3}, {1.5, 2, 3, 4, 5, 6.25});
  const std::string dumped = ad::dump_tensor(*t);
  std::ifstream golden(std::string(INTNET_FIXTURE_DIR) + "/golden_tensor.txt");
  REQUIRE(golden.good());
  std::string expected((std::istreambuf_iterator<char>(golden)),
                       std::istreambuf_iterator<char>());
  CHECK(dumped == expected);
}
