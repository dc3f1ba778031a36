#include "iblab/dual.hpp"

#include <cmath>
#include <limits>

#include "iblab/errors.hpp"
#include "iblab/interp.hpp"

namespace iblab {

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

struct NewtonOutcome {
  Eigen::VectorXd u;
  double mu = 0;
  int iterations = 0;
  bool ok = false;
  std::string why;
};

// Damped Newton in u = log q on
//   tau == 0:  A q - mu h(q) = 0,                 sum g^-1(q) = 1
//   tau  > 0:  A q - tau / q - mu h(q) = 0,        sum g^-1(q) = 1   (log-barrier)
class CharacteristicNewton {
 public:
  CharacteristicNewton(const Eigen::MatrixXd& A, const LossSpec& loss)
      : A_(A), loss_(loss), n_(static_cast<int>(A.rows())), scale_(A.diagonal().cwiseAbs().mean()) {}

  void residual(const Eigen::VectorXd& u, double mu, double tau, Eigen::VectorXd& F) const {
    Eigen::VectorXd q = u.array().exp();
    Eigen::VectorXd Aq = A_ * q;
    Eigen::VectorXd h = h_vec(loss_, q);
    F.resize(n_ + 1);
    F.head(n_) = Aq - mu * h;
    if (tau > 0) F.head(n_) -= tau * q.cwiseInverse();
    double s = 0;
    for (int i = 0; i < n_; ++i) s += loss_.g_inv(q[i]);
    F[n_] = s - 1.0;
  }

  double merit(const Eigen::VectorXd& F) const {
    return F.head(n_).squaredNorm() / (scale_ * scale_) + F[n_] * F[n_];
  }

  void jacobian(const Eigen::VectorXd& u, double mu, double tau, Eigen::MatrixXd& J) const {
    Eigen::VectorXd q = u.array().exp();
    Eigen::VectorXd h = h_vec(loss_, q);
    J.setZero(n_ + 1, n_ + 1);
    J.topLeftCorner(n_, n_) = A_ * q.asDiagonal();
    for (int i = 0; i < n_; ++i) J(i, i) += tau / q[i] - mu * loss_.h_prime_q(q[i]);
    J.col(n_).head(n_) = -h;
    J.row(n_).head(n_) = h.cwiseProduct(q).transpose();
  }

  // Converged when |F1|_inf <= tol1 and |F2| <= tol2.
  NewtonOutcome run(Eigen::VectorXd u, double mu, double tau, int max_iter, double rel_tol1, double tol2) const {
    NewtonOutcome out;
    Eigen::VectorXd F, Ftry;
    Eigen::MatrixXd J;
    residual(u, mu, tau, F);
    double phi = merit(F);
    auto done = [&](const Eigen::VectorXd& R, double m) {
      double tol1 = rel_tol1 * m;
      return R.head(n_).lpNorm<Eigen::Infinity>() <= tol1 && std::abs(R[n_]) <= tol2;
    };
    for (int it = 0; it < max_iter; ++it) {
      out.iterations = it;
      // Polish a few extra digits past the tolerance before stopping.
      if (done(F * 1e3, mu)) break;
      jacobian(u, mu, tau, J);
      Eigen::VectorXd d = J.fullPivLu().solve(-F);
      if (!d.allFinite()) {
        out.why = "singular Newton system";
        break;
      }
      Eigen::VectorXd du = d.head(n_);
      double dmu = d[n_];
      double t = 1.0, big = du.lpNorm<Eigen::Infinity>();
      if (big > 4.0) t = 4.0 / big;
      while (mu + t * dmu <= 0 && t > 1e-16) t *= 0.5;
      bool accepted = false;
      while (t >= 1e-14) {
        residual(u + t * du, mu + t * dmu, tau, Ftry);
        double ptry = merit(Ftry);
        if (std::isfinite(ptry) && ptry < phi && ptry <= (1 - 1e-4 * t) * phi) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        out.why = "Newton stagnation: step below 1e-14";
        break;
      }
      u += t * du;
      mu += t * dmu;
      F = Ftry;
      phi = merit(F);
      out.iterations = it + 1;
    }
    out.u = u;
    out.mu = mu;
    out.ok = done(F, mu) && mu > 0 && u.allFinite();
    if (!out.ok && out.why.empty()) out.why = "iteration limit reached";
    return out;
  }

  double scale() const { return scale_; }

 private:
  const Eigen::MatrixXd& A_;
  const LossSpec& loss_;
  int n_;
  double scale_;
};

double ls_mu(const Eigen::MatrixXd& A, const LossSpec& loss, const Eigen::VectorXd& q) {
  Eigen::VectorXd h = h_vec(loss, q);
  double mu = h.dot(A * q) / h.squaredNorm();
  if (!(mu > 0)) mu = A.diagonal().mean() * q.mean() / h.mean();
  return mu;
}

Eigen::VectorXd uniform_start(int n, const LossSpec& loss) {
  return Eigen::VectorXd::Constant(n, loss.g(1.0 / n));
}

DualSolution finish(const Eigen::MatrixXd& A, const LossSpec& loss, const NewtonOutcome& r, DualMethod m) {
  DualSolution s;
  s.q = r.u.array().exp();
  s.mu = r.mu;
  s.lambda = Eigen::VectorXd::Zero(s.q.size());
  s.iterations = r.iterations;
  s.method = m;
  fill_residuals(s, A, loss);
  return s;
}

void check_domain(const DualSolution& s) {
  if (s.q.maxCoeff() > 1 + 1e-8)
    throw Error(ErrorKind::DomainViolation, "dual entry " + std::to_string(s.q.maxCoeff()) + " exceeds 1");
}

}  // namespace

const char* method_name(DualMethod m) {
  switch (m) {
    case DualMethod::NewtonGeneral: return "NewtonGeneral";
    case DualMethod::DiagonalClosedForm: return "DiagonalClosedForm";
    case DualMethod::IdentityClosedForm: return "IdentityClosedForm";
    case DualMethod::CECandidate: return "CECandidate";
    case DualMethod::BarrierFallback: return "BarrierFallback";
  }
  return "?";
}

nlohmann::json DualSolution::to_json() const {
  nlohmann::json j{{"q", to_std(q)},
                   {"mu", mu},
                   {"kkt_residual", kkt_residual},
                   {"feasibility_gap", feasibility_gap},
                   {"method", method_name(method)},
                   {"iterations", iterations}};
  if (lambda.size() && lambda.cwiseAbs().maxCoeff() > 0) j["lambda"] = to_std(lambda);
  if (!notes.empty()) j["notes"] = notes;
  return j;
}

void fill_residuals(DualSolution& sol, const Eigen::MatrixXd& A, const LossSpec& loss) {
  Eigen::VectorXd r = A * sol.q - sol.mu * h_vec(loss, sol.q);
  if (sol.lambda.size() == sol.q.size()) r -= sol.lambda;
  sol.kkt_residual = r.lpNorm<Eigen::Infinity>();
  double s = 0;
  for (Eigen::Index i = 0; i < sol.q.size(); ++i) s += loss.g_inv(sol.q[i]);
  sol.feasibility_gap = std::abs(1.0 - s);
}

DualSolution solve_identity(int n, double alpha, const LossSpec& loss) {
  if (n < 1 || !(alpha > 0)) throw Error(ErrorKind::InvalidParameter, "need n >= 1 and alpha > 0");
  DualSolution s;
  const double g = loss.g(1.0 / n);
  s.q = Eigen::VectorXd::Constant(n, g);
  s.mu = alpha * g / loss.h(g);
  s.lambda = Eigen::VectorXd::Zero(n);
  s.method = DualMethod::IdentityClosedForm;
  fill_residuals(s, alpha * Eigen::MatrixXd::Identity(n, n), loss);
  return s;
}

DualSolution solve_diagonal(const Eigen::VectorXd& dvec, const LossSpec& loss) {
  const Eigen::Index n = dvec.size();
  if (n < 1 || !(dvec.minCoeff() > 0)) throw Error(ErrorKind::InvalidParameter, "diagonal entries must be positive");
  auto H = [&](double mu) {
    double s = 0;
    for (Eigen::Index i = 0; i < n; ++i) s += loss.g_inv(loss.f_inv(dvec[i] / mu));
    return s - 1.0;
  };
  int evals = 0;
  double lo = 1.0, hi = 1.0;
  if (H(1.0) < 0) {
    int k = 0;
    while (H(hi) <= 0) {
      if (++k > 200) throw Error(ErrorKind::SolverFailure, "no bracket for mu within 200 doublings");
      lo = hi;
      hi *= 2;
    }
    evals += k;
  } else {
    int k = 0;
    while (H(lo) >= 0) {
      if (++k > 200) throw Error(ErrorKind::SolverFailure, "no bracket for mu within 200 halvings");
      hi = lo;
      lo *= 0.5;
    }
    evals += k;
  }
  for (int it = 0; it < 400 && hi - lo > 2 * std::numeric_limits<double>::epsilon() * hi; ++it, ++evals) {
    double mid = 0.5 * (lo + hi);
    (H(mid) < 0 ? lo : hi) = mid;
  }
  DualSolution s;
  s.mu = 0.5 * (lo + hi);
  s.q.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) s.q[i] = loss.f_inv(dvec[i] / s.mu);
  s.lambda = Eigen::VectorXd::Zero(n);
  s.iterations = evals;
  s.method = DualMethod::DiagonalClosedForm;
  fill_residuals(s, dvec.asDiagonal().toDenseMatrix(), loss);
  return s;
}

DualSolution solve_scaled(const Eigen::MatrixXd& G, const Eigen::VectorXd& sv, const LossSpec& loss,
                          const SolverOptions& opts) {
  const int n = static_cast<int>(G.rows());
  if (G.cols() != n || sv.size() != n) throw Error(ErrorKind::InvalidParameter, "Gram and label sizes differ");
  if (sv.cwiseAbs().minCoeff() == 0) throw Error(ErrorKind::InvalidParameter, "label entries must be nonzero");
  GramSolver check(G, ErrorKind::NotPositiveDefinite, std::numeric_limits<double>::infinity());
  const Eigen::MatrixXd A = sv.asDiagonal() * G * sv.asDiagonal();
  CharacteristicNewton newton(A, loss);
  std::vector<std::string> notes;

  Eigen::VectorXd q0 = opts.init ? *opts.init : uniform_start(n, loss);
  if (q0.size() != n || !(q0.minCoeff() > 0)) throw Error(ErrorKind::InvalidParameter, "initial q must be positive");
  NewtonOutcome r = newton.run(q0.array().log(), ls_mu(A, loss, q0), 0.0, opts.max_iter, opts.tol, opts.feas_tol);
  int spent = r.iterations;
  if (r.ok) {
    DualSolution s = finish(A, loss, r, DualMethod::NewtonGeneral);
    check_domain(s);
    return s;
  }
  notes.push_back("Newton from the default start failed: " + r.why);
  if (!opts.allow_fallback)
    throw Error(ErrorKind::SolverFailure, r.why + " after " + std::to_string(r.iterations) + " iterations");

  if (loss.kind() != LossKind::Exponential) {
    try {
      SolverOptions eo = opts;
      eo.init.reset();
      eo.allow_fallback = false;
      DualSolution e = solve_scaled(G, sv, make_loss(LossKind::Exponential), eo);
      Eigen::VectorXd qe = e.q.unaryExpr([&](double v) { return loss.g(v); });
      r = newton.run(qe.array().log(), ls_mu(A, loss, qe), 0.0, opts.max_iter, opts.tol, opts.feas_tol);
      spent += r.iterations;
      if (r.ok) {
        DualSolution s = finish(A, loss, r, DualMethod::NewtonGeneral);
        s.iterations = spent;
        notes.push_back("converged from the exponential-loss start");
        s.notes = notes;
        check_domain(s);
        return s;
      }
      notes.push_back("Newton from the exponential-loss start failed: " + r.why);
    } catch (const Error& e) {
      notes.push_back(std::string("exponential-loss start unavailable: ") + e.what());
    }
  }

  // Log-barrier continuation on the relaxed program; lambda = tau / q.
  const double unit = newton.scale() / (static_cast<double>(n) * n);
  Eigen::VectorXd qb = uniform_start(n, loss);
  Eigen::VectorXd u = qb.array().log();
  double mu = ls_mu(A, loss, qb), tau = 0;
  for (double t = 1e-2; t >= 1e-8 * 0.999; t *= 0.1) {
    tau = t * unit;
    NewtonOutcome rb = newton.run(u, mu, tau, 4 * opts.max_iter, 1e-10, 1e-12);
    spent += rb.iterations;
    if (!rb.ok)
      throw Error(ErrorKind::SolverFailure, "barrier continuation failed at tau=" + std::to_string(tau) + ": " + rb.why);
    u = rb.u;
    mu = rb.mu;
  }
  DualSolution s;
  s.q = u.array().exp();
  s.mu = mu;
  s.lambda = tau * s.q.cwiseInverse();
  s.iterations = spent;
  s.method = DualMethod::BarrierFallback;
  notes.push_back("barrier fallback active; final tau=" + std::to_string(tau));
  s.notes = notes;
  fill_residuals(s, A, loss);
  check_domain(s);
  return s;
}

DualSolution solve_relaxed(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, const LossSpec& loss,
                           const SolverOptions& opts) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 1.0 && y[i] != -1.0) throw Error(ErrorKind::InvalidParameter, "labels must be +-1");
  return solve_scaled(G, y, loss, opts);
}

Eigen::VectorXd primal_from_dual(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& q) {
  if (q.size() != X.rows() || y.size() != X.rows()) throw Error(ErrorKind::InvalidParameter, "size mismatch");
  if (!(q.minCoeff() >= 0)) throw Error(ErrorKind::Domain, "dual vector must be nonnegative");
  Eigen::VectorXd w = X.transpose() * y.cwiseProduct(q);
  double nw = w.norm();
  if (!(nw > 0)) throw Error(ErrorKind::DegenerateData, "X' diag(y) q vanishes");
  return w / nw;
}

AdjustedLabels adjusted_labels(const Eigen::VectorXd& dvec, const Eigen::VectorXd& y, const LossSpec& loss) {
  if (y.size() != dvec.size()) throw Error(ErrorKind::InvalidParameter, "size mismatch");
  AdjustedLabels a;
  a.dual = solve_diagonal(dvec, loss);
  a.mu = a.dual.mu;
  a.tilde_y = y.cwiseProduct(dvec).cwiseProduct(a.dual.q);
  return a;
}

std::vector<DualSolution> solve_multiclass_general(const Eigen::MatrixXd& G, const MulticlassEncoding& enc,
                                                   const LossSpec& loss, const SolverOptions& opts) {
  if (enc.scheme != EncodingScheme::EqualAssignment)
    throw Error(ErrorKind::InvalidConfiguration, "per-class solve needs equal-assignment encoding");
  std::vector<DualSolution> out;
  for (int k = 0; k < enc.K; ++k) {
    try {
      out.push_back(solve_scaled(G, enc.c(k).cwiseInverse(), loss, opts));
    } catch (const Error& e) {
      throw Error(e.kind(), "class " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json CeCandidate::to_json() const {
  nlohmann::json j{{"mu", mu}, {"balance_residual", balance_residual}, {"sum_gap", sum_gap}};
  for (const auto& s : per_class) j["per_class"].push_back(s.to_json());
  return j;
}

CeCandidate ce_candidate(const Eigen::MatrixXd& G, const MulticlassEncoding& enc) {
  if (enc.scheme != EncodingScheme::Simplex)
    throw Error(ErrorKind::InvalidConfiguration, "cross-entropy candidate needs simplex encoding");
  SvpReport svp = svp_check_multiclass(G, enc.C);
  if (!svp.holds)
    throw Error(ErrorKind::NotApplicable, "c_{k,i} beta_{k,i} <= 0 at k=" + std::to_string(svp.worst_k) +
                                              ", i=" + std::to_string(svp.worst_i));
  const int K = enc.K, n = enc.n();
  double S = 0;
  for (int k = 0; k < K; ++k) S += enc.C.row(k).dot(svp.beta.col(k));
  CeCandidate c;
  c.mu = 1.0 / S;
  c.Q.resize(K, n);
  for (int k = 0; k < K; ++k) c.Q.row(k) = enc.C.row(k).cwiseProduct(svp.beta.col(k).transpose()) / S;
  c.balance_residual = c.Q.cwiseQuotient(enc.C).colwise().sum().cwiseAbs().maxCoeff();
  c.sum_gap = std::abs(c.Q.sum() - 1.0);
  for (int k = 0; k < K; ++k) {
    DualSolution s;
    s.q = c.Q.row(k).transpose();
    s.mu = c.mu;
    s.lambda = Eigen::VectorXd::Zero(n);
    s.method = DualMethod::CECandidate;
    // Stationarity in the CE system is diag(c_k)^-1 G diag(c_k)^-1 q_k = mu 1 (h = 1, lambda = delta = 0).
    Eigen::VectorXd ci = enc.c(k).cwiseInverse();
    s.kkt_residual = (ci.asDiagonal() * G * ci.asDiagonal() * s.q - c.mu * Eigen::VectorXd::Ones(n))
                         .lpNorm<Eigen::Infinity>();
    s.feasibility_gap = c.sum_gap;
    c.per_class.push_back(s);
  }
  return c;
}

}  // namespace iblab
