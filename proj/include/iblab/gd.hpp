#ifndef IBLAB_GD_HPP
#define IBLAB_GD_HPP

#include <Eigen/Dense>
#include <json.hpp>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "iblab/data.hpp"
#include "iblab/loss.hpp"

namespace iblab {

struct Schedule {
  double eta_hat = 0.0;  // normalized step; 0 means 1/beta
};

struct StopRule {
  double risk_threshold = 1e-10;
  // Overrides risk_threshold when finite; reaches far below the double range.
  double log_risk_threshold = std::numeric_limits<double>::quiet_NaN();
  long max_iters = 1L << 20;
  long stall_window = 10000;
  double stall_rel = 1e-14;
  std::vector<double> ladder{1e-4, 1e-6, 1e-8, 1e-10};
};

enum class Termination { RiskBelowThreshold, MaxIterations, NonSeparableDetected };
const char* termination_name(Termination t);

// Reference directions; columns are classes (one column for binary).
struct References {
  std::optional<Eigen::MatrixXd> w_mni;
  std::optional<Eigen::MatrixXd> w_dual;
  std::optional<Eigen::MatrixXd> q_dual;  // n x K
};

struct Snapshot {
  long t = 0;
  double log_risk = 0;
  double eta_hat = 0;
  double dual_objective = 0;
  Eigen::MatrixXd w_dir;  // d x K, each column unit norm
  Eigen::MatrixXd p;      // n x K
  Eigen::MatrixXd q;      // n x K
  std::vector<double> dist_mni, dist_dual, dist_q;
  double q_min = 0, q_max = 0;

  double risk() const;
  double max_dist_mni() const;
  double max_dist_dual() const;
  double max_dist_q() const;
};

struct Trajectory {
  std::vector<Snapshot> snapshots;  // t = 0, 1, 2, 4, ... and the final iterate
  std::vector<std::pair<double, Snapshot>> ladder;
  Termination termination = Termination::MaxIterations;
  long iterations = 0;
  double beta = 1;
  bool beta_estimated = false;
  double eta_hat = 0;
  long dual_objective_increases = 0;
  long risk_increases = 0;
  Eigen::MatrixXd w;  // d x K final iterate

  const Snapshot& final() const { return snapshots.back(); }
  void write_csv(const std::string& path) const;
  nlohmann::json summary() const;
};

Trajectory train_binary(const Dataset& ds, const LossSpec& loss, const Schedule& schedule = {},
                        const StopRule& stop = {}, const References& refs = {},
                        const std::optional<Eigen::VectorXd>& w0 = std::nullopt);

Trajectory train_multiclass(const Dataset& ds, const MulticlassEncoding& enc, const LossSpec& loss,
                            Formulation form, const Schedule& schedule = {}, const StopRule& stop = {},
                            const References& refs = {});

struct IWConfig {
  std::vector<int> S;
  double Q = 2.0;
  double m = 1.0;
};

struct MarginReport {
  Eigen::VectorXd margins;
  double median_in = 0, median_out = 0, ratio = 0, target = 0;
  nlohmann::json to_json() const;
};

struct IWResult {
  Trajectory trajectory;
  MarginReport margins;
};

IWResult train_importance_weighted(const Dataset& ds, const IWConfig& iw, const Schedule& schedule = {},
                                   const StopRule& stop = {});

// Plain risk and gradient, used by the finite-difference checks.
double binary_risk(const Dataset& ds, const LossSpec& loss, const Eigen::VectorXd& w);
Eigen::VectorXd binary_gradient(const Dataset& ds, const LossSpec& loss, const Eigen::VectorXd& w);
double multiclass_risk(const Dataset& ds, const MulticlassEncoding& enc, const LossSpec& loss, Formulation form,
                       const Eigen::MatrixXd& W);
Eigen::MatrixXd multiclass_gradient(const Dataset& ds, const MulticlassEncoding& enc, const LossSpec& loss,
                                    Formulation form, const Eigen::MatrixXd& W);

}  // namespace iblab

#endif
