#ifndef IBLAB_INTERP_HPP
#define IBLAB_INTERP_HPP

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>

#include "iblab/errors.hpp"

namespace iblab {

// Cholesky solves against a PD Gram with two rounds of iterative refinement.
class GramSolver {
 public:
  // Throws `fail` if G is not PD or its condition number exceeds max_condition.
  explicit GramSolver(const Eigen::MatrixXd& G, ErrorKind fail = ErrorKind::SingularGram,
                      double max_condition = 1e12);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  double condition() const { return cond_; }
  double lambda_min() const { return lmin_; }
  double lambda_max() const { return lmax_; }

 private:
  Eigen::MatrixXd G_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double cond_ = 0, lmin_ = 0, lmax_ = 0;
};

struct MniResult {
  Eigen::VectorXd w;
  double condition = 0;
  double residual = 0;  // ||Xw - targets||_inf
};

MniResult mni(const Eigen::MatrixXd& X, const Eigen::VectorXd& targets);

struct SvpReport {
  Eigen::MatrixXd beta;  // n x K (K = 1 for binary)
  bool holds = false;
  double margin = 0;
  int worst_k = 0, worst_i = 0;
  double condition = 0;
  nlohmann::json to_json() const;
};

SvpReport svp_check(const Eigen::MatrixXd& G, const Eigen::VectorXd& y);
// C is K x n, one target row per class.
SvpReport svp_check_multiclass(const Eigen::MatrixXd& G, const Eigen::MatrixXd& C);

struct GramSummary {
  Eigen::MatrixXd G;
  double alpha = 0;
  double eps = 0;
  double ratio = 0;
  double lambda_min = 0;
  double lambda_max = 0;
  nlohmann::json to_json() const;
};

GramSummary gram_summary(const Eigen::MatrixXd& X, std::optional<double> alpha = std::nullopt);
GramSummary gram_summary_of(const Eigen::MatrixXd& G, std::optional<double> alpha = std::nullopt);

// ||G v - alpha v|| / ||v||, not divided by alpha.
double eps_alpha(const Eigen::MatrixXd& G, double alpha, const Eigen::VectorXd& v);

// eps_alpha(G, k, y)/k <= tol at the Rayleigh quotient k.
bool is_eigenvector(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, double tol = 1e-10);

double direction_distance(const Eigen::VectorXd& w1, const Eigen::VectorXd& w2);

}  // namespace iblab

#endif
