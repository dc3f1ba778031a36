#include <doctest.h>

#include <cmath>
#include <random>

#include "iblab/data.hpp"
#include "iblab/errors.hpp"
#include "iblab/interp.hpp"

using namespace iblab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("minimum-norm interpolation") {
  Dataset o = gen_orthogonal(5, 12, 0.5, 2);
  VectorXd w = mni(o.X, o.y).w;
  CHECK((w - o.X.transpose() * o.y / 0.5).norm() <= 1e-12);

  MatrixXd X{{1.0, 0.0}, {0.0, 0.5}};
  MniResult r = mni(X, VectorXd{{1.0, -1.0}});
  CHECK(r.w[0] == doctest::Approx(1).epsilon(1e-14));
  CHECK(r.w[1] == doctest::Approx(-2).epsilon(1e-14));
  CHECK(r.residual <= 1e-8);
  CHECK(r.condition == doctest::Approx(4).epsilon(1e-12));

  MatrixXd dup(3, 4);
  dup << 1, 2, 3, 4, 1, 2, 3, 4, 0, 1, 0, 1;
  try {
    mni(dup, VectorXd::Ones(3));
    FAIL("singular Gram accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularGram);
  }
}

TEST_CASE("mni residual on random designs") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Dataset ds = gen_subgaussian(8, 30, VectorXd::Ones(30), EntryDist::Gaussian, s);
    MniResult r = mni(ds.X, ds.y);
    CHECK((ds.X * r.w - ds.y).cwiseAbs().maxCoeff() <= 1e-8);
    // w lies in the row space: w = X^T c
    VectorXd c = (ds.X * ds.X.transpose()).ldlt().solve(ds.X * r.w);
    CHECK((ds.X.transpose() * c - r.w).norm() <= 1e-10 * r.w.norm());
  }
}

TEST_CASE("support-vector property") {
  MatrixXd G = 0.7 * MatrixXd::Identity(4, 4);
  SvpReport a = svp_check(G, VectorXd{{1.0, -1.0, 1.0, -1.0}});
  CHECK(a.holds);
  CHECK(a.margin == doctest::Approx(1 / 0.7).epsilon(1e-14));
  CHECK(svp_check(VectorXd{{0.3, 1.0, 0.05}}.asDiagonal().toDenseMatrix(), VectorXd{{-1.0, 1.0, 1.0}}).holds);

  // random search for a 3x3 PD Gram where a near-duplicate pair carries opposing labels
  std::mt19937_64 rng(1);
  std::normal_distribution<double> N;
  bool found = false;
  for (int t = 0; t < 1000 && !found; ++t) {
    MatrixXd X(3, 3);
    for (int i = 0; i < 9; ++i) X.data()[i] = N(rng);
    X.row(1) = X.row(0) + 0.1 * X.row(1);
    MatrixXd G3 = X * X.transpose();
    VectorXd y{{1.0, -1.0, 1.0}};
    VectorXd beta = G3.inverse() * y;  // explicit inversion oracle
    bool sign_ok = (y.array() * beta.array() > 0).all();
    SvpReport r = svp_check(G3, y);
    CHECK(r.holds == sign_ok);
    CHECK((r.beta.col(0) - beta).norm() <= 1e-8 * beta.norm());
    found = !sign_ok;
  }
  CHECK(found);

  MatrixXd notpd{{1.0, 2.0}, {2.0, 1.0}};
  try {
    svp_check(notpd, VectorXd::Ones(2));
    FAIL("indefinite Gram accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotPositiveDefinite);
  }
}

TEST_CASE("multiclass SVP") {
  MatrixXd G = 0.5 * MatrixXd::Identity(3, 3);
  MatrixXd C = encode_multiclass({0, 1, 2}, EncodingScheme::Simplex, 3).C;
  SvpReport r = svp_check_multiclass(G, C);
  CHECK(r.holds);
  CHECK(r.beta.rows() == 3);
  CHECK(r.beta.cols() == 3);
}

TEST_CASE("gram summary") {
  Dataset o = gen_orthogonal(6, 10, 0.3, 4);
  GramSummary g = gram_summary(o.X);
  CHECK(g.alpha == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(g.eps <= 1e-10);

  GramSummary d = gram_summary_of(VectorXd{{1.0, 0.125}}.asDiagonal().toDenseMatrix());
  CHECK(d.alpha == doctest::Approx(0.5625).epsilon(1e-15));
  CHECK(d.eps == doctest::Approx(0.4375).epsilon(1e-14));
  CHECK(d.ratio == doctest::Approx(0.4375 / 0.5625).epsilon(1e-14));
  CHECK(d.lambda_min == doctest::Approx(0.125).epsilon(1e-14));

  Dataset big = gen_subgaussian(50, 3200, VectorXd::Ones(3200), EntryDist::Gaussian, 1);
  CHECK(gram_summary(big.X).ratio < 1.0 / 3);
  CHECK(gram_summary(big.X, 2.0).alpha == 2.0);
}

TEST_CASE("eps_alpha and eigenvectors") {
  MatrixXd I3 = 0.4 * MatrixXd::Identity(3, 3);
  CHECK(eps_alpha(I3, 0.4, VectorXd{{1.0, -2.0, 5.0}}) == 0);
  MatrixXd D = VectorXd{{1.0, 0.125}}.asDiagonal();
  CHECK(eps_alpha(D, 0.5625, VectorXd::Ones(2)) == doctest::Approx(0.4375).epsilon(1e-14));

  MatrixXd G{{2.0, 1.0}, {1.0, 2.0}};
  VectorXd v{{1.0, 1.0}};
  CHECK(eps_alpha(G, 3.0, v) <= 1e-15);
  CHECK(is_eigenvector(G, v));
  CHECK_FALSE(is_eigenvector(G, VectorXd{{1.0, 0.0}}));
  try {
    eps_alpha(G, 1.0, VectorXd::Zero(2));
    FAIL("zero vector accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Domain);
  }
}

TEST_CASE("direction distance") {
  VectorXd w{{0.3, -1.2, 2.0}};
  CHECK(direction_distance(w, 3 * w) <= 1e-15);
  CHECK(direction_distance(w, -w) == doctest::Approx(2).epsilon(1e-15));
  CHECK(direction_distance(VectorXd{{1.0, 0.0}}, VectorXd{{0.0, 1.0}}) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(direction_distance(w, VectorXd::Zero(3)), Error);
}
