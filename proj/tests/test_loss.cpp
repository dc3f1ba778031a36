#include <doctest.h>

#include <cmath>
#include <random>

#include "iblab/data.hpp"
#include "iblab/errors.hpp"
#include "iblab/loss.hpp"

using namespace iblab;
using Eigen::VectorXd;

namespace {

// Plain bisection for an increasing function, used as an inverse oracle.
template <class F>
double bisect(F f, double target, double lo, double hi) {
  for (int i = 0; i < 300; ++i) {
    double mid = 0.5 * (lo + hi);
    (f(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

TEST_CASE("make_loss g values and errors") {
  CHECK(make_loss("exp").g(0.3) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(make_loss("poly", 1).g(0.5) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(make_loss("poly", 0.5).g(0.5) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(make_loss("logistic").g(0.42) == doctest::Approx(0.42).epsilon(1e-15));
  for (double m : {0.0, -1.0}) {
    try {
      make_loss("poly", m);
      FAIL("accepted m <= 0");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidParameter);
    }
  }
  CHECK_THROWS_AS(make_loss("hinge"), Error);
}

TEST_CASE("loss values are positive and vanish in the left tail") {
  for (const char* k : {"exp", "logistic"}) {
    LossSpec l = make_loss(k);
    CHECK(l.value(-50) < 1e-6);
  }
  // (1 - z)^-m only reaches 1e-6 at z = 1 - 10^(6/m); checked there instead of at -50.
  for (double m : {0.5, 1.0, 2.0}) {
    LossSpec l = make_loss("poly", m);
    CHECK(l.value(1 - std::pow(10.0, 7 / m)) < 1e-6);
    CHECK(l.value(-50) < l.value(-10));
  }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-60, 20);
  for (const char* k : {"exp", "logistic", "poly"})
    for (int t = 0; t < 1000; ++t) {
      LossSpec l = make_loss(k, 1.5);
      double z = U(rng);
      CHECK(l.value(z) > 0);
      CHECK(l.deriv(z) > 0);
      CHECK(l.second(z) > 0);
    }
}

TEST_CASE("polynomial loss branches against direct formulas") {
  const double m = 2;
  LossSpec l = make_loss("poly", m);
  for (double z : {-7.0, -1.0, -0.1}) {
    CHECK(l.value(z) == doctest::Approx(std::pow(1 - z, -m)).epsilon(1e-14));
    CHECK(l.deriv(z) == doctest::Approx(m * std::pow(1 - z, -m - 1)).epsilon(1e-14));
  }
  for (double z : {0.1, 1.0, 7.0}) {
    CHECK(l.value(z) == doctest::Approx(2 * m * z + std::pow(1 + z, -m)).epsilon(1e-14));
    CHECK(l.deriv(z) == doctest::Approx(2 * m - m * std::pow(1 + z, -m - 1)).epsilon(1e-14));
  }
  // Both branches meet at 0 with value 1 and slope m.
  CHECK(l.value(1e-12) == doctest::Approx(1).epsilon(1e-10));
  CHECK(l.deriv(1e-12) == doctest::Approx(m).epsilon(1e-10));
}

TEST_CASE("g is increasing and convex, f decreasing, round trips") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0, 1);
  for (const char* k : {"exp", "logistic", "poly"})
    for (double m : {0.5, 1.0, 3.0}) {
      LossSpec l = make_loss(k, m);
      CHECK(l.g(0) == 0);
      CHECK(l.g(1) == doctest::Approx(1).epsilon(1e-15));
      for (int t = 0; t < 500; ++t) {
        double a = U(rng), b = U(rng);
        if (a > b) std::swap(a, b);
        if (b - a < 1e-9 || a <= 1e-6) continue;
        CHECK(l.g(b) > l.g(a));
        CHECK(l.g(0.5 * (a + b)) <= 0.5 * (l.g(a) + l.g(b)) + 1e-15);
        CHECK(l.f(b) < l.f(a));
        CHECK(std::abs(l.g_inv(l.g(a)) - a) <= 1e-10 * a);
        CHECK(std::abs(l.f_inv(l.f(a)) - a) <= 1e-10 * a);
      }
    }
}

TEST_CASE("h matches the derivative of g^-1") {
  CHECK(h_map(make_loss("exp"), 0.7) == 1.0);
  CHECK(h_map(make_loss("poly", 1), 0.25) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(h_map(make_loss("poly", 1), 1.0 / 9) == doctest::Approx(1.5).epsilon(1e-14));
  for (double m : {0.5, 1.0, 2.0}) {
    LossSpec l = make_loss("poly", m);
    for (double q = 0.05; q <= 0.95; q += 0.05) {
      const double e = 1e-5;
      const double fd = (std::pow(q + e, m / (m + 1)) - std::pow(q - e, m / (m + 1))) / (2 * e);
      CHECK(std::abs(h_map(l, q) - fd) <= 1e-6);
    }
  }
  CHECK_THROWS_AS(h_map(make_loss("poly", 1), 0.0), Error);
  CHECK_THROWS_AS(h_map(make_loss("poly", 1), 1.5), Error);
}

TEST_CASE("generalized sum") {
  for (const char* k : {"exp", "logistic", "poly"})
    CHECK(std::abs(generalized_sum(make_loss(k, 1), VectorXd::Zero(1))) <= 1e-14);
  CHECK(generalized_sum(make_loss("exp"), VectorXd::Zero(2)) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  const double target = 2 * softplus(-3);
  const double oracle = bisect(softplus, target, -50, 50);
  const double got = generalized_sum(make_loss("logistic"), VectorXd::Constant(2, -3));
  CHECK(got == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(got == doctest::Approx(-2.2827).epsilon(1e-3));
  // log-domain accumulation keeps extreme margins finite
  CHECK(std::isfinite(generalized_sum(make_loss("exp"), VectorXd::Constant(3, 900.0))));
  CHECK(std::isfinite(generalized_sum(make_loss("exp"), VectorXd::Constant(3, -2000.0))));
}

TEST_CASE("dual map") {
  VectorXd q = dual_map(make_loss("exp"), VectorXd::Zero(3));
  for (int i = 0; i < 3; ++i) CHECK(q[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
  q = dual_map(make_loss("exp"), VectorXd{{std::log(3.0), 0.0}});
  CHECK(q[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(0.25).epsilon(1e-14));

  // poly m=1 at p = (-9, -9): l(p) = 1/10, so psi = l^-1(2/10) = 1 - 5
  LossSpec pm = make_loss("poly", 1);
  q = dual_map(pm, VectorXd::Constant(2, -9));
  const double psi = 1 - (1 - (-9.0)) / 2;
  const double want = (1 / 100.0) / std::pow(1 - psi, -2);
  CHECK(q[0] == doctest::Approx(q[1]).epsilon(1e-15));
  CHECK(q[0] == doctest::Approx(want).epsilon(1e-12));
  CHECK(q.sum() < 1);

  // logistic against direct sigmoid ratios
  VectorXd p{{-2.0, 0.5, -7.0}};
  LossSpec lg = make_loss("logistic");
  double s = 0;
  for (int i = 0; i < 3; ++i) s += softplus(p[i]);
  const double ps = bisect(softplus, s, -50, 50);
  auto sig = [](double z) { return 1 / (1 + std::exp(-z)); };
  q = dual_map(lg, p);
  for (int i = 0; i < 3; ++i) CHECK(q[i] == doctest::Approx(sig(p[i]) / sig(ps)).epsilon(1e-10));
}

TEST_CASE("overflow reports the offending index") {
  LossSpec pm = make_loss("poly", 1);
  VectorXd p = VectorXd::Zero(3);
  p[2] = 1e308;
  try {
    generalized_sum(pm, p);
    FAIL("no overflow");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Overflow);
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

namespace {

// Encodings with absent classes are legal inputs for psi, just not for datasets.
MulticlassEncoding manual(std::vector<int> labels, EncodingScheme scheme, int K) {
  MulticlassEncoding e;
  e.K = K;
  e.scheme = scheme;
  e.a = scheme == EncodingScheme::Simplex ? (K - 1.0) / K : 1.0;
  e.b = scheme == EncodingScheme::Simplex ? 1.0 / K : 1.0;
  e.labels = labels;
  e.C.resize(K, labels.size());
  for (int k = 0; k < K; ++k)
    for (size_t i = 0; i < labels.size(); ++i) e.C(k, i) = k == labels[i] ? e.a : -e.b;
  return e;
}

}  // namespace

TEST_CASE("multiclass generalized sum") {
  auto eq = manual({0, 1}, EncodingScheme::EqualAssignment, 3);
  CHECK(multiclass_generalized_sum(make_loss("exp"), eq, Eigen::MatrixXd::Zero(3, 2), Formulation::AdaBoostStyle) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  LossSpec lg = make_loss("logistic");
  CHECK(std::abs(multiclass_generalized_sum(lg, manual({0}, EncodingScheme::Simplex, 2), Eigen::MatrixXd::Zero(2, 1),
                                            Formulation::CrossEntropy)) <= 1e-14);
  CHECK(multiclass_generalized_sum(lg, manual({0}, EncodingScheme::Simplex, 3), Eigen::MatrixXd::Zero(3, 1),
                                   Formulation::CrossEntropy) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  // CE against a direct log-softmax formula on a random point
  std::mt19937_64 rng(11);
  std::normal_distribution<double> N;
  auto sx = manual({2, 0, 1, 1}, EncodingScheme::Simplex, 3);
  Eigen::MatrixXd Xi(3, 4);
  for (int i = 0; i < Xi.size(); ++i) Xi.data()[i] = N(rng);
  double total = 0;
  for (int i = 0; i < 4; ++i) {
    const int y = sx.labels[i];
    double inner = 1;
    for (int k = 0; k < 3; ++k)
      if (k != y) inner += std::exp(sx.C(y, i) * Xi(y, i) - sx.C(k, i) * Xi(k, i));
    total += std::log(inner);
  }
  const double oracle = bisect(softplus, total, -50, 50);
  CHECK(multiclass_generalized_sum(lg, sx, Xi, Formulation::CrossEntropy) == doctest::Approx(oracle).epsilon(1e-12));

  try {
    multiclass_generalized_sum(lg, eq, Eigen::MatrixXd::Zero(3, 2), Formulation::CrossEntropy);
    FAIL("mismatch accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidConfiguration);
  }
  CHECK_THROWS_AS(multiclass_generalized_sum(lg, sx, Xi, Formulation::AdaBoostStyle), Error);
}

TEST_CASE("smoothness bounds") {
  CHECK(smoothness_bound(make_loss("exp"), SmoothnessSetting::MulticlassGeneral, 10, 3).beta == 9);
  CHECK(smoothness_bound(make_loss("logistic"), SmoothnessSetting::MulticlassCE, 10, 4).beta == 32);
  auto b = smoothness_bound(make_loss("exp"), SmoothnessSetting::Binary, 7);
  CHECK(b.beta == 1);
  CHECK_FALSE(b.estimated);
  // l''/l' for poly m=1 on z<=0 is 2/(1-z), sup 2 approached at z=0 from the left
  auto p = smoothness_bound(make_loss("poly", 1), SmoothnessSetting::Binary, 5);
  CHECK(p.estimated);
  CHECK(p.c == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(p.beta == doctest::Approx(5 * p.c));
  // logistic: l''/l' = 1 - sigmoid(z) <= 1
  auto lg = smoothness_bound(make_loss("logistic"), SmoothnessSetting::Binary, 1);
  CHECK(lg.c <= 1);
  CHECK(lg.c > 0.99);
}

TEST_CASE("encodings") {
  auto s = encode_multiclass({0, 1}, EncodingScheme::Simplex, 2);
  CHECK(s.C(0, 0) == 0.5);
  CHECK(s.C(0, 1) == -0.5);
  CHECK(s.C(1, 0) == -0.5);
  CHECK(s.C(1, 1) == 0.5);
  auto e = encode_multiclass({0, 1, 2}, EncodingScheme::EqualAssignment, 3);
  CHECK(e.c(0) == VectorXd{{1.0, -1.0, -1.0}});
  try {
    encode_multiclass({0, 0}, EncodingScheme::Simplex, 2);
    FAIL("missing class accepted");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::InvalidDataset);
  }
}

TEST_CASE("loss json round trip") {
  LossSpec l = LossSpec::from_json(make_loss("poly", 2.5).to_json());
  CHECK(l.kind() == LossKind::Polynomial);
  CHECK(l.m() == 2.5);
  CHECK(make_loss("logistic").to_json()["kind"] == "logistic");
}
