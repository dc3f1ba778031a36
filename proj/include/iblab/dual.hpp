#ifndef IBLAB_DUAL_HPP
#define IBLAB_DUAL_HPP

#include <Eigen/Dense>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "iblab/loss.hpp"

namespace iblab {

enum class DualMethod { NewtonGeneral, DiagonalClosedForm, IdentityClosedForm, CECandidate, BarrierFallback };

const char* method_name(DualMethod m);

// Solution of  A q = mu h(q) + lambda,  sum g^-1(q) = 1,  q > 0,  mu > 0
// with A = diag(s) G diag(s).
struct DualSolution {
  Eigen::VectorXd q;
  double mu = 0;
  Eigen::VectorXd lambda;  // zero unless the barrier fallback ran
  double kkt_residual = 0;
  double feasibility_gap = 0;
  int iterations = 0;
  DualMethod method = DualMethod::NewtonGeneral;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

struct SolverOptions {
  double tol = 1e-8;        // kkt_residual <= tol * mu
  double feas_tol = 1e-10;  // |1 - sum g^-1(q)|
  int max_iter = 100;
  std::optional<Eigen::VectorXd> init;  // initial q
  bool allow_fallback = true;
};

DualSolution solve_identity(int n, double alpha, const LossSpec& loss);
DualSolution solve_diagonal(const Eigen::VectorXd& dvec, const LossSpec& loss);

DualSolution solve_relaxed(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, const LossSpec& loss,
                           const SolverOptions& opts = {});
// Same system with an arbitrary nonzero scaling s in place of y.
DualSolution solve_scaled(const Eigen::MatrixXd& G, const Eigen::VectorXd& s, const LossSpec& loss,
                          const SolverOptions& opts = {});

// Residuals of the characteristic system at (q, mu, lambda).
void fill_residuals(DualSolution& sol, const Eigen::MatrixXd& A, const LossSpec& loss);

Eigen::VectorXd primal_from_dual(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& q);

struct AdjustedLabels {
  Eigen::VectorXd tilde_y;
  double mu = 0;
  DualSolution dual;
};

AdjustedLabels adjusted_labels(const Eigen::VectorXd& dvec, const Eigen::VectorXd& y, const LossSpec& loss);

std::vector<DualSolution> solve_multiclass_general(const Eigen::MatrixXd& G, const MulticlassEncoding& enc,
                                                   const LossSpec& loss, const SolverOptions& opts = {});

struct CeCandidate {
  std::vector<DualSolution> per_class;
  Eigen::MatrixXd Q;  // K x n
  double mu = 0;
  double balance_residual = 0;  // max_i |sum_k q_{k,i} / c_{k,i}|
  double sum_gap = 0;           // |sum_k 1'q_k - 1|
  nlohmann::json to_json() const;
};

CeCandidate ce_candidate(const Eigen::MatrixXd& G, const MulticlassEncoding& enc);

}  // namespace iblab

#endif
