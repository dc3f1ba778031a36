#include "iblab/interp.hpp"

#include <cmath>

namespace iblab {

GramSolver::GramSolver(const Eigen::MatrixXd& G, ErrorKind fail, double max_condition) : G_(G) {
  if (G.rows() != G.cols() || G.rows() == 0) throw Error(ErrorKind::InvalidParameter, "Gram must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
  lmin_ = es.eigenvalues().minCoeff();
  lmax_ = es.eigenvalues().maxCoeff();
  cond_ = lmin_ > 0 ? lmax_ / lmin_ : std::numeric_limits<double>::infinity();
  if (!(lmin_ > 0)) throw Error(fail, "Gram is not positive definite (lambda_min = " + std::to_string(lmin_) + ")");
  if (cond_ > max_condition) throw Error(fail, "Gram condition number " + std::to_string(cond_) + " exceeds limit");
  llt_.compute(G);
  if (llt_.info() != Eigen::Success) throw Error(fail, "Cholesky factorization failed");
}

Eigen::VectorXd GramSolver::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd x = llt_.solve(b);
  for (int r = 0; r < 2; ++r) x += llt_.solve(b - G_ * x);
  return x;
}

MniResult mni(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets) {
  if (targets.size() != X.rows()) throw Error(ErrorKind::InvalidParameter, "target length must equal n");
  Eigen::MatrixXd G = X * X.transpose();
  GramSolver solver(G);
  MniResult r;
  r.w = X.transpose() * solver.solve(targets);
  r.condition = solver.condition();
  r.residual = (X * r.w - targets).lpNorm<Eigen::Infinity>();
  return r;
}

SvpReport svp_check_multiclass(const Eigen::MatrixXd& G, const Eigen::MatrixXd& C) {
  GramSolver solver(G, ErrorKind::NotPositiveDefinite, std::numeric_limits<double>::infinity());
  const int K = static_cast<int>(C.rows()), n = static_cast<int>(C.cols());
  SvpReport r;
  r.condition = solver.condition();
  r.beta.resize(n, K);
  r.margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    r.beta.col(k) = solver.solve(C.row(k).transpose());
    for (int i = 0; i < n; ++i) {
      double s = C(k, i) * r.beta(i, k);
      if (s < r.margin) {
        r.margin = s;
        r.worst_k = k;
        r.worst_i = i;
      }
    }
  }
  r.holds = r.margin > 0;
  return r;
}

SvpReport svp_check(const Eigen::MatrixXd& G, const Eigen::VectorXd& y) {
  return svp_check_multiclass(G, y.transpose());
}

nlohmann::json SvpReport::to_json() const {
  return {{"holds", holds}, {"margin", margin}, {"worst_class", worst_k}, {"worst_index", worst_i},
          {"condition", condition}};
}

GramSummary gram_summary_of(const Eigen::MatrixXd& G, std::optional<double> alpha) {
  GramSummary s;
  s.G = G;
  const Eigen::Index n = G.rows();
  s.alpha = alpha.value_or(G.trace() / static_cast<double>(n));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
  s.lambda_min = es.eigenvalues().minCoeff();
  s.lambda_max = es.eigenvalues().maxCoeff();
  s.eps = std::max(std::abs(s.lambda_max - s.alpha), std::abs(s.lambda_min - s.alpha));
  s.ratio = s.eps / s.alpha;
  return s;
}

GramSummary gram_summary(const Eigen::MatrixXd& X, std::optional<double> alpha) {
  return gram_summary_of(X * X.transpose(), alpha);
}

nlohmann::json GramSummary::to_json() const {
  return {{"alpha", alpha}, {"eps", eps}, {"ratio", ratio}, {"lambda_min", lambda_min},
          {"lambda_max", lambda_max}, {"condition", lambda_min > 0 ? lambda_max / lambda_min : INFINITY}};
}

double eps_alpha(const Eigen::MatrixXd& G, double alpha, const Eigen::VectorXd& v) {
  double nv = v.norm();
  if (!(nv > 0)) throw Error(ErrorKind::Domain, "eps_alpha of a zero vector");
  return (G * v - alpha * v).norm() / nv;
}

bool is_eigenvector(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, double tol) {
  double k = y.dot(G * y) / y.squaredNorm();
  return k > 0 && eps_alpha(G, k, y) / k <= tol;
}

double direction_distance(const Eigen::VectorXd& w1, const Eigen::VectorXd& w2) {
  double a = w1.norm(), b = w2.norm();
  if (!(a > 0) || !(b > 0)) throw Error(ErrorKind::Domain, "direction of a zero vector");
  if (w1.size() != w2.size()) throw Error(ErrorKind::InvalidParameter, "dimension mismatch");
  return (w1 / a - w2 / b).norm();
}

}  // namespace iblab
