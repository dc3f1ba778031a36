#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "iblab/data.hpp"
#include "iblab/dual.hpp"
#include "iblab/errors.hpp"
#include "iblab/gd.hpp"
#include "iblab/harness.hpp"
#include "iblab/interp.hpp"

using namespace iblab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Dataset from_matrix(const MatrixXd& X, const VectorXd& y) {
  Dataset ds;
  ds.X = X;
  ds.y = y;
  return ds;
}

double central(const std::function<double(const VectorXd&)>& f, VectorXd w, int j) {
  const double e = 1e-5;
  VectorXd a = w, b = w;
  a[j] += e;
  b[j] -= e;
  return (f(a) - f(b)) / (2 * e);
}

}  // namespace

TEST_CASE("orthogonal design reaches the MNI direction") {
  Dataset ds = gen_orthogonal(8, 16, 1, 5);
  References refs;
  refs.w_mni = MatrixXd(mni(ds.X, ds.y).w);
  Trajectory t = train_binary(ds, make_loss("logistic"), {}, {}, refs);
  CHECK(t.termination == Termination::RiskBelowThreshold);
  CHECK(t.final().risk() <= 1e-10);
  CHECK(t.final().max_dist_mni() <= 1e-3);
  CHECK(t.beta_estimated);
}

TEST_CASE("symmetric two-point problem") {
  Dataset ds = from_matrix(MatrixXd::Identity(2, 2), VectorXd{{1.0, -1.0}});
  References refs;
  refs.w_mni = MatrixXd(VectorXd{{1.0, -1.0}});
  Trajectory t = train_binary(ds, make_loss("exp"), {}, {}, refs);
  CHECK(t.final().max_dist_mni() <= 1e-12);
  for (const auto& s : t.snapshots) {
    CHECK(s.q(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.q(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  }
  CHECK(t.beta == 1);
  CHECK(t.eta_hat == 1);
}

TEST_CASE("non-separable data is detected") {
  Dataset ds = from_matrix(MatrixXd{{1.0}, {-1.0}}, VectorXd{{1.0, 1.0}});
  StopRule stop;
  stop.stall_window = 2000;
  Trajectory t = train_binary(ds, make_loss("logistic"), {}, stop);
  CHECK(t.termination == Termination::NonSeparableDetected);
}

TEST_CASE("risk and dual objective decrease; snapshots and CSV") {
  Dataset ds = gen_subgaussian(10, 60, VectorXd::Ones(60), EntryDist::Gaussian, 9);
  for (const char* k : {"exp", "logistic", "poly"}) {
    StopRule stop;
    stop.max_iters = 5000;
    Trajectory t = train_binary(ds, make_loss(k, 1), {}, stop);
    CHECK(t.dual_objective_increases == 0);
    CHECK(t.risk_increases == 0);
    for (size_t j = 1; j < t.snapshots.size(); ++j) {
      CHECK(t.snapshots[j].log_risk <= t.snapshots[j - 1].log_risk);
      CHECK(t.snapshots[j].dual_objective <= t.snapshots[j - 1].dual_objective * (1 + 1e-12));
      CHECK(t.snapshots[j].q_min > 0);
      CHECK(t.snapshots[j].q_max <= 1);
      CHECK(t.snapshots[j].risk() > 0);
    }
    // snapshots at 0, 1, 2, 4, ... plus the final iterate
    CHECK(t.snapshots[0].t == 0);
    CHECK(t.snapshots[1].t == 1);
    CHECK(t.snapshots[3].t == 4);
  }
  auto path = std::filesystem::temp_directory_path() / "iblab_traj.csv";
  Trajectory t = train_binary(ds, make_loss("exp"));
  t.write_csv(path.string());
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,risk,eta_hat,dist_mni,dist_dual,q_min,q_max");
  std::filesystem::remove(path);
}

TEST_CASE("gradients match finite differences") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-1, 1);
  for (const char* k : {"exp", "logistic", "poly"})
    for (double m : {0.5, 2.0}) {
      LossSpec l = make_loss(k, m);
      Dataset ds = gen_subgaussian(5, 7, VectorXd::Ones(7), EntryDist::Gaussian, rng());
      VectorXd w(7);
      for (int j = 0; j < 7; ++j) w[j] = U(rng);
      // risk written out directly
      auto R = [&](const VectorXd& v) {
        double s = 0;
        for (int i = 0; i < 5; ++i) s += l.value(-ds.y[i] * ds.X.row(i).dot(v));
        return s / 5;
      };
      CHECK(binary_risk(ds, l, w) == doctest::Approx(R(w)).epsilon(1e-13));
      VectorXd g = binary_gradient(ds, l, w);
      for (int j = 0; j < 7; ++j) CHECK(std::abs(g[j] - central(R, w, j)) <= 1e-6 * g.cwiseAbs().maxCoeff());
    }

  for (int f = 0; f < 2; ++f) {
    const bool ce = f;
    const int K = 3, n = 6, d = 4;
    Dataset ds = multiclass_dataset(n, d, K, ce ? EncodingScheme::Simplex : EncodingScheme::EqualAssignment, 3);
    auto enc = encode_multiclass(ds.classes, ce ? EncodingScheme::Simplex : EncodingScheme::EqualAssignment, K);
    LossSpec l = make_loss(ce ? "logistic" : "exp");
    const Formulation form = ce ? Formulation::CrossEntropy : Formulation::AdaBoostStyle;
    MatrixXd W = MatrixXd::Random(d, K);
    auto R = [&](const VectorXd& v) {
      Eigen::Map<const MatrixXd> Wv(v.data(), d, K);
      MatrixXd S = ds.X * Wv;
      double s = 0;
      for (int i = 0; i < n; ++i) {
        if (ce) {
          double z = 0;
          for (int k = 0; k < K; ++k) z += std::exp(S(i, k));
          s += std::log(z) - S(i, ds.classes[i]);
        } else {
          double z = 0;
          for (int k = 0; k < K; ++k) z -= S(i, k) / enc.C(k, i);
          s += std::exp(z);
        }
      }
      return s / n;
    };
    VectorXd flat = Eigen::Map<VectorXd>(W.data(), W.size());
    CHECK(multiclass_risk(ds, enc, l, form, W) == doctest::Approx(R(flat)).epsilon(1e-13));
    MatrixXd G = multiclass_gradient(ds, enc, l, form, W);
    for (int j = 0; j < W.size(); ++j)
      CHECK(std::abs(G.data()[j] - central(R, flat, j)) <= 1e-6 * G.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("GD dual matches the relaxed program") {
  for (const char* k : {"exp", "logistic", "poly"}) {
    Dataset ds = gen_subgaussian(6, 300, VectorXd::Ones(300), EntryDist::Gaussian, 17);
    LossSpec l = make_loss(k, 1);
    DualSolution s = solve_relaxed(ds.X * ds.X.transpose(), ds.y, l);
    References refs;
    refs.q_dual = MatrixXd(s.q);
    refs.w_dual = MatrixXd(primal_from_dual(ds.X, ds.y, s.q));
    StopRule stop;
    stop.max_iters = 1 << 18;
    Trajectory t = train_binary(ds, l, {}, stop, refs);
    CHECK(t.final().max_dist_q() <= 1e-2);
    CHECK(t.final().max_dist_dual() <= 1e-2);
  }
}

TEST_CASE("multiclass training") {
  Dataset ds = gen_orthogonal(6, 10, 1, 8);
  ds.y.resize(0);
  ds.K = 3;
  ds.classes = {0, 1, 2, 0, 1, 2};
  auto enc = encode_multiclass(ds.classes, EncodingScheme::EqualAssignment, 3);
  References refs;
  MatrixXd M(10, 3);
  for (int k = 0; k < 3; ++k) M.col(k) = ds.X.transpose() * enc.c(k);
  refs.w_mni = M;
  Trajectory t = train_multiclass(ds, enc, make_loss("exp"), Formulation::AdaBoostStyle, {}, {}, refs);
  CHECK(t.beta == 9);
  for (double d : t.final().dist_mni) CHECK(d <= 1e-3);

  // cross-entropy on a random design where the candidate condition holds
  for (std::uint64_t seed = 1;; ++seed) {
    Dataset mc = multiclass_dataset(6, 200, 3, EncodingScheme::Simplex, seed);
    auto sx = encode_multiclass(mc.classes, EncodingScheme::Simplex, 3);
    try {
      ce_candidate(mc.X * mc.X.transpose(), sx);
    } catch (const Error&) {
      continue;
    }
    References r2;
    MatrixXd S(200, 3);
    for (int k = 0; k < 3; ++k) S.col(k) = mni(mc.X, sx.c(k)).w;
    r2.w_mni = S;
    StopRule stop;
    stop.log_risk_threshold = -600;
    stop.max_iters = 1L << 22;
    Trajectory tc = train_multiclass(mc, sx, make_loss("logistic"), Formulation::CrossEntropy, {}, stop, r2);
    CHECK(tc.beta == 18);
    for (double d : tc.final().dist_mni) CHECK(d <= 1e-3);
    break;
  }

  Dataset bad = ds;
  bad.K = 1;
  MulticlassEncoding one;
  one.K = 1;
  one.labels.assign(6, 0);
  one.C = MatrixXd::Ones(1, 6);
  try {
    train_multiclass(bad, one, make_loss("exp"), Formulation::AdaBoostStyle);
    FAIL("K=1 accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidConfiguration);
  }
}

TEST_CASE("importance weighting") {
  Dataset ds = gen_orthogonal(8, 8, 1, 2);
  IWConfig iw;
  iw.S = {0, 1, 2, 3};
  iw.Q = 1;
  try {
    train_importance_weighted(ds, iw);
    FAIL("Q=1 accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidParameter);
  }
  iw.Q = 8;
  iw.m = 1;
  StopRule stop;
  stop.risk_threshold = 0;
  stop.max_iters = 1 << 16;
  IWResult r = train_importance_weighted(ds, iw, {}, stop);
  CHECK(r.margins.target == doctest::Approx(2.0));
  // up-weighted margins start ahead by a factor near Q and settle toward Q^(1/(m+2)) from above
  CHECK(r.margins.ratio > 2.0);
  CHECK(r.margins.ratio < 2.2);
}
