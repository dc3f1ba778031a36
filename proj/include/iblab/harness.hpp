#ifndef IBLAB_HARNESS_HPP
#define IBLAB_HARNESS_HPP

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "iblab/data.hpp"
#include "iblab/dual.hpp"
#include "iblab/gd.hpp"
#include "iblab/loss.hpp"

namespace iblab {

constexpr const char* kSchemaVersion = "1";

// Worker count: hardware concurrency capped by IBLAB_THREADS.
int worker_count();
// Runs body(i) for i in [0, count); results must be written by index.
void parallel_for(int count, const std::function<void(int)>& body);

// FNV-1a 64 of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);
// Adds config_hash, schema_version and seed fields.
nlohmann::json stamp(nlohmann::json artifact, const nlohmann::json& config);

struct TrialResult {
  std::uint64_t seed = 0;
  int d = 0;
  double ratio = 0;
  double eps_over_alpha = 0;
  double dual_dist = 0;
  double primal_dist = 0;
  double bound_ratio = 0;   // primal_dist / (eps_alpha(y)/alpha)
  double dual_bound = 0;    // 2/(1-2 ratio) * eps/alpha
  double primal_bound = 0;  // 4 dual_dist + 12 eps/alpha
  bool in_regime = false;   // ratio <= 1/3
  bool dual_ok = true, primal_ok = true;
  std::string method;
  int iterations = 0;
  double kkt_residual = 0;
  double runtime_ms = 0;
  bool failed = false;
  std::string error;
  nlohmann::json to_json() const;
};

// Dual solve plus the two-stage bound quantities for targets v (labels or c_k).
TrialResult evaluate_trial(const Eigen::MatrixXd& X, const Eigen::VectorXd& v, const LossSpec& loss,
                           std::optional<double> alpha = std::nullopt);

struct SweepConfig {
  int n = 50;
  std::vector<int> ds;
  std::vector<std::uint64_t> seeds;
  LossSpec loss = make_loss("poly", 1.0);
  EntryDist entry = EntryDist::Gaussian;
  std::optional<double> alpha;
  nlohmann::json to_json() const;
};

struct SweepPoint {
  int d = 0;
  double median_primal = 0;
  double median_dual = 0;
  int trials = 0, failed = 0, in_regime = 0;
};

struct SweepTable {
  std::vector<TrialResult> trials;
  std::vector<SweepPoint> points;
  double slope = 0;  // least squares of log median_primal on log d
  bool strictly_decreasing = false;
  int dual_violations = 0, primal_violations = 0;
  nlohmann::json to_json() const;
  void write_csv(const std::string& path) const;
};

SweepTable scaling_sweep(const SweepConfig& cfg);

struct ConverseReport {
  LossSpec loss = make_loss("exp");
  Eigen::VectorXd dvec, y, q, tilde_y;
  double mu = 0;
  double spread = 0;
  double interp_distance = 0;  // direction distance between X w_bar and tilde_y
  bool plain_interpolation = false;
  std::string label;
  nlohmann::json to_json() const;
};

ConverseReport converse_demo(const Eigen::VectorXd& dvec, const Eigen::VectorXd& y, const LossSpec& loss);

struct IWDemo {
  IWResult result;
  double dual_ratio = 0;  // ratio from the reweighted diagonal system
  double runtime_ms = 0;
  nlohmann::json to_json() const;
};

IWDemo iw_demo(int n, double Q, double m, long iters, std::uint64_t seed = 0);

struct MulticlassDemoConfig {
  int n = 30, d = 2000, K = 3;
  std::vector<std::uint64_t> seeds;
  LossSpec loss = make_loss("exp");
  bool cross_entropy = false;
  bool train = false;
  double log_risk_threshold = -600;
  long max_iters = 1L << 22;
  nlohmann::json to_json() const;
};

struct MulticlassTrial {
  std::uint64_t seed = 0;
  std::vector<TrialResult> per_class;  // general: per-class two-stage bounds
  double balance_residual = 0, sum_gap = 0;  // cross-entropy candidate
  bool condition_holds = true;
  std::vector<double> trained_dist;  // per-class distance to simplex / per-class MNI
  double runtime_ms = 0;
  std::string error;
  nlohmann::json to_json() const;
};

std::vector<MulticlassTrial> multiclass_demo(const MulticlassDemoConfig& cfg);

// Multiclass dataset on isotropic Gaussian rows, rows rescaled to max_k c_{k,i}.
Dataset multiclass_dataset(int n, int d, int K, EncodingScheme scheme, std::uint64_t seed);

// Verification suite: one named check per invariant.
struct CheckResult {
  std::string id;
  std::string module;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

std::vector<std::string> suite_names();
std::vector<CheckResult> run_suite(const std::string& suite, std::uint64_t seed = 20240601);
nlohmann::json suite_report(const std::vector<CheckResult>& results);

}  // namespace iblab

#endif
