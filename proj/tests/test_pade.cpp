#include <doctest.h>

#include <cmath>

#include "overmind/pade.hpp"
#include "overmind/series.hpp"

using namespace overmind;

TEST_CASE("series: tanh Maclaurin coefficients") {
  auto c = series::tanh(series::shifted_var(0.0, 8));
  // 0, 1, 0, -1/3, 0, 2/15, 0, -17/315
  CHECK(c[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c[3] == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
  CHECK(c[5] == doctest::Approx(2.0 / 15.0).epsilon(1e-12));
  CHECK(c[7] == doctest::Approx(-17.0 / 315.0).epsilon(1e-12));
}

TEST_CASE("series: sigmoid and softplus are consistent with exp/log") {
  auto sig = series::sigmoid(series::shifted_var(0.3, 7));
  double x = 0.3;
  CHECK(sig[0] == doctest::Approx(1.0 / (1.0 + std::exp(-x))).epsilon(1e-12));
  auto sp = series::softplus(series::shifted_var(0.3, 7));
  CHECK(sp[0] == doctest::Approx(std::log1p(std::exp(x))).epsilon(1e-12));
  // derivative of softplus is sigmoid
  CHECK(sp[1] == doctest::Approx(sig[0]).epsilon(1e-12));
}

TEST_CASE("taylor fit: exp (1,1) has closed-form coefficients") {
  auto p = pade::fit_taylor_pade({1.0, 1.0, 0.5}, 1, 1, {-1, 1});
  REQUIRE(p.a.size() == 2);
  REQUIRE(p.b.size() == 1);
  CHECK(p.a[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.a[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.b[0] == doctest::Approx(-0.5).epsilon(1e-12));
  auto spec = pade::builtin_spec("exp");
  double mae = pade::max_abs_error(p, spec, {-1, 1}, 1001);
  CHECK(mae == doctest::Approx(0.2817181715).epsilon(1e-6));
}

TEST_CASE("taylor fit: tanh (3,2) equals (15x + x^3) / (15 + 6x^2)") {
  auto c = series::tanh(series::shifted_var(0.0, 6));
  auto p = pade::fit_taylor_pade(c, 3, 2, {-1, 1});
  CHECK(p.a[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(p.a[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p.a[2] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(p.a[3] == doctest::Approx(1.0 / 15.0).epsilon(1e-9));
  CHECK(p.b[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(p.b[1] == doctest::Approx(2.0 / 5.0).epsilon(1e-9));
}

TEST_CASE("least-squares MAE improves with order and stays under 0.05") {
  for (const char* fn : {"tanh", "sigmoid"}) {
    auto spec = pade::builtin_spec(fn);
    double prev = 1e9;
    for (std::size_t k = 3; k <= 6; ++k) {
      auto p = pade::fit_least_squares(spec, k, k, spec.default_range);
      double mae = pade::max_abs_error(p, spec, spec.default_range, 1001);
      CHECK(mae < 0.05);
      CHECK(mae <= prev + 1e-12);
      prev = mae;
    }
  }
}

TEST_CASE("taylor-match MAE is monotone over the order sweep on a narrow range") {
  auto spec = pade::builtin_spec("tanh");
  pade::Interval range{-1.5, 1.5};
  double prev = 1e9;
  for (std::size_t k = 1; k <= 4; ++k) {
    auto c = spec.taylor(0.0, 2 * k + 1);
    auto p = pade::fit_taylor_pade(c, k, k, range);
    double mae = pade::max_abs_error(p, spec, range, 1001);
    CHECK(mae <= prev + 1e-12);
    prev = mae;
  }
}

TEST_CASE("eval throws when the denominator collapses") {
  pade::PadeApproximant p;
  p.m = 0;
  p.n = 1;
  p.a = {1.0};
  p.b = {-1.0};  // denominator 1 - x hits zero at x = 1
  CHECK_THROWS_AS(pade::eval(p, 1.0), PoleInRange);
  CHECK(pade::eval(p, 0.5) == doctest::Approx(2.0));
}

TEST_CASE("pole screening rejects fits with in-range sign changes") {
  auto c = series::exp(series::shifted_var(0.0, 3));
  // exp (1,1) has a pole at x = 2; widen the range so the check must fire.
  CHECK_THROWS_AS(pade::fit_taylor_pade(c, 1, 1, {-4, 4}), PoleInRange);
}

TEST_CASE("select_order picks the smallest adequate k") {
  auto spec = pade::builtin_spec("tanh");
  auto p = pade::select_order(spec, 0.05, spec.default_range, 8);
  CHECK(p.m == 3);  // k=2 gives ~0.215 MAE, k=3 ~0.037
  CHECK(p.n == 3);
  CHECK_THROWS_AS(pade::select_order(spec, 1e-12, spec.default_range, 2), TargetUnreachable);
}

TEST_CASE("builtin specs: ids, ranges, aliases") {
  CHECK(pade::builtin_spec("sqrt").taylor == nullptr);
  CHECK(pade::builtin_spec("relu-smooth").function_id == "softplus");
  CHECK(pade::builtin_spec("gelu").default_range.lo == -6.0);
  CHECK_THROWS_AS(pade::builtin_spec("bogus"), UnknownOperator);
  CHECK(pade::gelu_fn(1.0) == doctest::Approx(0.8411919906082768).epsilon(1e-12));
}

TEST_CASE("gelu series provider agrees with the scalar function near 0") {
  auto spec = pade::builtin_spec("gelu");
  auto c = spec.taylor(0.0, 6);
  double x = 0.05;
  double horner = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) horner = horner * x + c[i];
  CHECK(horner == doctest::Approx(pade::gelu_fn(x)).epsilon(1e-8));
}

TEST_CASE("table spec interpolates linearly") {
  auto spec = pade::table_spec("tab", {0.0, 1.0, 4.0}, {0.0, 2.0});
  CHECK(spec.f(0.0) == doctest::Approx(0.0));
  CHECK(spec.f(0.5) == doctest::Approx(0.5));
  CHECK(spec.f(1.5) == doctest::Approx(2.5));
  CHECK(spec.f(2.0) == doctest::Approx(4.0));
  CHECK(spec.f(9.0) == doctest::Approx(4.0));  // clamped
}

TEST_CASE("least-squares fit on sqrt meets a loose target") {
  auto spec = pade::builtin_spec("sqrt");
  auto p = pade::fit_least_squares(spec, 3, 3, spec.default_range);
  CHECK(pade::max_abs_error(p, spec, spec.default_range, 1001) < 0.01);
}
