#include "iblab/gd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>

#include "iblab/errors.hpp"
#include "iblab/interp.hpp"

namespace iblab {

namespace {

struct Eval {
  double log_sum;
  Eigen::MatrixXd Q;  // n x K
};

using Evaluator = std::function<Eval(const Eigen::MatrixXd& P)>;

struct Problem {
  const Eigen::MatrixXd* X;
  Eigen::MatrixXd G;
  Eigen::MatrixXd Cinv;  // n x K; P = -Cinv o (X W)
  Eigen::MatrixXd W0;    // d x K
  Evaluator eval;
  double beta;
  bool beta_estimated;
};

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

Snapshot make_snapshot(const Problem& pb, const References& refs, long t, double log_risk, double eta_hat,
                       double fobj, const Eigen::MatrixXd& A, const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q) {
  Snapshot s;
  s.t = t;
  s.log_risk = log_risk;
  s.eta_hat = eta_hat;
  s.dual_objective = fobj;
  s.p = P;
  s.q = Q;
  s.q_min = Q.minCoeff();
  s.q_max = Q.maxCoeff();
  Eigen::MatrixXd W = pb.W0 + pb.X->transpose() * A;
  s.w_dir = W;
  const Eigen::Index K = W.cols();
  for (Eigen::Index k = 0; k < K; ++k) {
    double nk = W.col(k).norm();
    if (nk > 0) s.w_dir.col(k) /= nk;
    auto dist = [&](const std::optional<Eigen::MatrixXd>& ref, const Eigen::VectorXd& v) {
      if (!ref || !(v.norm() > 0)) return nan();
      return direction_distance(v, ref->col(k));
    };
    s.dist_mni.push_back(dist(refs.w_mni, W.col(k)));
    s.dist_dual.push_back(dist(refs.w_dual, W.col(k)));
    s.dist_q.push_back(refs.q_dual ? direction_distance(Q.col(k), refs.q_dual->col(k)) : nan());
  }
  return s;
}

Trajectory run(const Problem& pb, const Schedule& schedule, const StopRule& stop, const References& refs) {
  const Eigen::Index n = pb.G.rows(), K = pb.Cinv.cols();
  Trajectory tr;
  tr.beta = pb.beta;
  tr.beta_estimated = pb.beta_estimated;
  tr.eta_hat = schedule.eta_hat > 0 ? schedule.eta_hat : 1.0 / pb.beta;
  const double eta = tr.eta_hat;
  const double log_n = std::log(static_cast<double>(n));
  const double log_thr = std::isfinite(stop.log_risk_threshold) ? stop.log_risk_threshold
                         : stop.risk_threshold > 0                ? std::log(stop.risk_threshold)
                                                                  : -INFINITY;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, K);
  const Eigen::MatrixXd P0 = -pb.Cinv.cwiseProduct(*pb.X * pb.W0);
  Eigen::MatrixXd P = P0;
  std::vector<double> ladder = stop.ladder;
  std::sort(ladder.begin(), ladder.end(), std::greater<>());
  size_t next_rung = 0;
  long next_snap = 0;
  double best = INFINITY, prev_risk = INFINITY, prev_f = INFINITY;
  long stall = 0;

  Eigen::MatrixXd V(n, K), GV(n, K);

  for (long t = 0;; ++t) {
    Eval e;
    try {
      e = pb.eval(P);
    } catch (const Error& err) {
      throw Error(ErrorKind::TrainingOverflow, "iteration " + std::to_string(t) + ": " + err.what());
    }
    const double log_risk = e.log_sum - log_n;
    if (!std::isfinite(log_risk) || !e.Q.allFinite())
      throw Error(ErrorKind::TrainingOverflow, "non-finite risk at iteration " + std::to_string(t));
    V = pb.Cinv.cwiseProduct(e.Q);
    GV.noalias() = pb.G.lazyProduct(V);  // small n: skip gemm packing
    const double f = 0.5 * V.cwiseProduct(GV).sum();
    if (t > 0) {
      if (f > prev_f * (1 + 1e-12)) ++tr.dual_objective_increases;
      if (log_risk > prev_risk + 1e-12) ++tr.risk_increases;
    }
    prev_f = f;
    prev_risk = log_risk;

    bool reached = log_risk <= log_thr;
    bool capped = t >= stop.max_iters;
    if (log_risk < best + std::log1p(-stop.stall_rel)) {
      best = log_risk;
      stall = 0;
    } else if (++stall >= stop.stall_window) {
      tr.termination = Termination::NonSeparableDetected;
    }
    bool stalled = tr.termination == Termination::NonSeparableDetected;
    bool last = reached || capped || stalled;

    if (t == next_snap || last) {
      tr.snapshots.push_back(make_snapshot(pb, refs, t, log_risk, eta, f, A, P, e.Q));
      if (t == next_snap) next_snap = next_snap == 0 ? 1 : 2 * next_snap;
    }
    while (next_rung < ladder.size() && log_risk <= std::log(ladder[next_rung])) {
      tr.ladder.emplace_back(ladder[next_rung], make_snapshot(pb, refs, t, log_risk, eta, f, A, P, e.Q));
      ++next_rung;
    }
    if (last) {
      tr.iterations = t;
      if (reached) tr.termination = Termination::RiskBelowThreshold;
      else if (!stalled) tr.termination = Termination::MaxIterations;
      break;
    }
    A += eta * V;
    // incremental form of P = P0 - Cinv o (G A); resynced periodically
    if ((t + 1) % 4096 == 0) P = P0 - pb.Cinv.cwiseProduct(pb.G * A);
    else P -= eta * pb.Cinv.cwiseProduct(GV);
  }
  tr.w = pb.W0 + pb.X->transpose() * A;
  return tr;
}

double median(std::vector<double> v) {
  if (v.empty()) return nan();
  std::sort(v.begin(), v.end());
  size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

void require_binary(const Dataset& ds) {
  if (ds.y.size() != ds.n()) throw Error(ErrorKind::InvalidDataset, "binary training needs +-1 labels");
}

}  // namespace

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::RiskBelowThreshold: return "RiskBelowThreshold";
    case Termination::MaxIterations: return "MaxIterations";
    case Termination::NonSeparableDetected: return "NonSeparableDetected";
  }
  return "?";
}

double Snapshot::risk() const { return std::exp(log_risk); }

namespace {
double vmax(const std::vector<double>& v) {
  double m = nan();
  for (double x : v)
    if (!(m >= x)) m = x;
  return m;
}
}  // namespace

double Snapshot::max_dist_mni() const { return vmax(dist_mni); }
double Snapshot::max_dist_dual() const { return vmax(dist_dual); }
double Snapshot::max_dist_q() const { return vmax(dist_q); }

void Trajectory::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "t,risk,eta_hat,dist_mni,dist_dual,q_min,q_max\n";
  char buf[256];
  for (const auto& s : snapshots) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t, s.risk(), s.eta_hat,
                  s.max_dist_mni(), s.max_dist_dual(), s.q_min, s.q_max);
    out << buf;
  }
}

nlohmann::json Trajectory::summary() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  const Snapshot& f = final();
  nlohmann::json j{{"termination", termination_name(termination)},
                   {"iterations", iterations},
                   {"log_risk", f.log_risk},
                   {"eta_hat", eta_hat},
                   {"beta", beta},
                   {"beta_estimated", beta_estimated},
                   {"dist_mni", num(f.max_dist_mni())},
                   {"dist_dual", num(f.max_dist_dual())},
                   {"dist_q", num(f.max_dist_q())},
                   {"dual_objective_increases", dual_objective_increases},
                   {"risk_increases", risk_increases}};
  for (const auto& [thr, s] : ladder)
    j["ladder"].push_back({{"risk", thr}, {"t", s.t}, {"dist_mni", num(s.max_dist_mni())},
                           {"dist_dual", num(s.max_dist_dual())}, {"dist_q", num(s.max_dist_q())}});
  return j;
}

Trajectory train_binary(const Dataset& ds, const LossSpec& loss, const Schedule& schedule, const StopRule& stop,
                        const References& refs, const std::optional<Eigen::VectorXd>& w0) {
  require_binary(ds);
  Problem pb;
  pb.X = &ds.X;
  pb.G = ds.X * ds.X.transpose();
  pb.Cinv = ds.y;
  pb.W0 = w0 ? Eigen::MatrixXd(*w0) : Eigen::MatrixXd::Zero(ds.d(), 1);
  if (pb.W0.rows() != ds.d()) throw Error(ErrorKind::InvalidParameter, "w0 has the wrong dimension");
  SmoothnessBound b = smoothness_bound(loss, SmoothnessSetting::Binary, ds.n());
  pb.beta = b.beta;
  pb.beta_estimated = b.estimated;
  pb.eval = [&loss](const Eigen::MatrixXd& P) {
    PsiEval e = evaluate_psi(loss, P.col(0));
    return Eval{e.log_sum, e.q};
  };
  return run(pb, schedule, stop, refs);
}

Trajectory train_multiclass(const Dataset& ds, const MulticlassEncoding& enc, const LossSpec& loss, Formulation form,
                            const Schedule& schedule, const StopRule& stop, const References& refs) {
  if (enc.K < 2) throw Error(ErrorKind::InvalidConfiguration, "multiclass training needs K >= 2");
  if (enc.n() != ds.n()) throw Error(ErrorKind::InvalidDataset, "encoding and dataset sizes differ");
  if (form == Formulation::AdaBoostStyle && enc.scheme != EncodingScheme::EqualAssignment)
    throw Error(ErrorKind::InvalidConfiguration, "AdaBoost-style formulation needs equal-assignment encoding");
  if (form == Formulation::CrossEntropy &&
      (enc.scheme != EncodingScheme::Simplex || loss.kind() != LossKind::Logistic))
    throw Error(ErrorKind::InvalidConfiguration, "cross-entropy needs simplex encoding and logistic loss");
  Problem pb;
  pb.X = &ds.X;
  pb.G = ds.X * ds.X.transpose();
  pb.Cinv = enc.C.transpose().cwiseInverse();
  pb.W0 = Eigen::MatrixXd::Zero(ds.d(), enc.K);
  SmoothnessBound b = smoothness_bound(
      loss, form == Formulation::CrossEntropy ? SmoothnessSetting::MulticlassCE : SmoothnessSetting::MulticlassGeneral,
      ds.n(), enc.K);
  pb.beta = b.beta;
  pb.beta_estimated = b.estimated;
  pb.eval = [&loss, &enc, form](const Eigen::MatrixXd& P) {
    MulticlassPsiEval e = evaluate_multiclass_psi(loss, enc, P.transpose(), form);
    return Eval{e.log_sum, e.Q.transpose()};
  };
  return run(pb, schedule, stop, refs);
}

nlohmann::json MarginReport::to_json() const {
  return {{"median_in", median_in}, {"median_out", median_out}, {"ratio", ratio}, {"target", target},
          {"rel_error", std::abs(ratio / target - 1)}};
}

IWResult train_importance_weighted(const Dataset& ds, const IWConfig& iw, const Schedule& schedule,
                                   const StopRule& stop) {
  require_binary(ds);
  if (!(iw.Q > 1)) throw Error(ErrorKind::InvalidParameter, "importance weight Q must exceed 1");
  const int n = ds.n();
  Eigen::VectorXd weights = Eigen::VectorXd::Ones(n);
  std::vector<char> in(n, 0);
  for (int i : iw.S) {
    if (i < 0 || i >= n) throw Error(ErrorKind::InvalidParameter, "index in S out of range");
    weights[i] = iw.Q;
    in[i] = 1;
  }
  if (iw.S.empty() || static_cast<int>(iw.S.size()) == n)
    throw Error(ErrorKind::InvalidParameter, "S must be a nonempty proper subset");
  LossSpec loss = make_loss(LossKind::Polynomial, iw.m);
  Problem pb;
  pb.X = &ds.X;
  pb.G = ds.X * ds.X.transpose();
  pb.Cinv = ds.y;
  pb.W0 = Eigen::MatrixXd::Zero(ds.d(), 1);
  // The weighted sum is an unweighted sum over sum(weights) copies, so c * sum(weights) bounds the curvature.
  pb.beta = curvature_constant(loss) * weights.sum();
  pb.beta_estimated = true;
  pb.eval = [&loss, &weights](const Eigen::MatrixXd& P) {
    PsiEval e = evaluate_psi(loss, P.col(0), weights);
    return Eval{e.log_sum, e.q};
  };
  IWResult r;
  r.trajectory = run(pb, schedule, stop, {});
  Eigen::VectorXd w = r.trajectory.w.col(0);
  r.margins.margins = ds.y.cwiseProduct(ds.X * w);
  std::vector<double> a, b;
  for (int i = 0; i < n; ++i) (in[i] ? a : b).push_back(r.margins.margins[i]);
  r.margins.median_in = median(a);
  r.margins.median_out = median(b);
  r.margins.ratio = r.margins.median_in / r.margins.median_out;
  r.margins.target = std::pow(iw.Q, 1.0 / (iw.m + 2));
  return r;
}

double binary_risk(const Dataset& ds, const LossSpec& loss, const Eigen::VectorXd& w) {
  Eigen::VectorXd p = -ds.y.cwiseProduct(ds.X * w);
  double s = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) s += loss.value(p[i]);
  return s / ds.n();
}

Eigen::VectorXd binary_gradient(const Dataset& ds, const LossSpec& loss, const Eigen::VectorXd& w) {
  Eigen::VectorXd p = -ds.y.cwiseProduct(ds.X * w);
  PsiEval e = evaluate_psi(loss, p);
  return -std::exp(e.log_dpsi) / ds.n() * (ds.X.transpose() * ds.y.cwiseProduct(e.q));
}

double multiclass_risk(const Dataset& ds, const MulticlassEncoding& enc, const LossSpec& loss, Formulation form,
                       const Eigen::MatrixXd& W) {
  Eigen::MatrixXd XW = ds.X * W;  // n x K, <w_k, x_i>
  const int n = ds.n(), K = enc.K;
  double s = 0;
  for (int i = 0; i < n; ++i) {
    if (form == Formulation::AdaBoostStyle) {
      double z = 0;
      for (int k = 0; k < K; ++k) z -= XW(i, k) / enc.C(k, i);
      s += loss.value(z);
    } else {
      // -log softmax of the true class
      double mx = XW.row(i).maxCoeff();
      double lse = mx + std::log((XW.row(i).array() - mx).exp().sum());
      s += lse - XW(i, enc.labels[i]);
    }
  }
  return s / n;
}

Eigen::MatrixXd multiclass_gradient(const Dataset& ds, const MulticlassEncoding& enc, const LossSpec& loss,
                                    Formulation form, const Eigen::MatrixXd& W) {
  Eigen::MatrixXd P = -(ds.X * W).transpose().cwiseQuotient(enc.C);  // K x n
  MulticlassPsiEval e = evaluate_multiclass_psi(loss, enc, P, form);
  Eigen::MatrixXd V = e.Q.cwiseQuotient(enc.C).transpose();  // n x K
  return -std::exp(e.log_dpsi) / ds.n() * (ds.X.transpose() * V);
}

}  // namespace iblab
