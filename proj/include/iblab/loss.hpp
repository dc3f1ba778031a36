#ifndef IBLAB_LOSS_HPP
#define IBLAB_LOSS_HPP

#include <Eigen/Dense>
#include <json.hpp>
#include <string>
#include <vector>

namespace iblab {

enum class LossKind { Exponential, Logistic, Polynomial };

// A convex, increasing loss with the tail maps g, g^-1, h = (g^-1)', f = h/d.
// Immutable once built; every member is a pure function.
class LossSpec {
 public:
  LossSpec(LossKind kind, double m);

  LossKind kind() const { return kind_; }
  double m() const { return m_; }
  double degree() const { return m_; }
  std::string name() const;

  double value(double z) const;
  double deriv(double z) const;
  double second(double z) const;
  double log_value(double z) const;
  double log_deriv(double z) const;
  // Both logs at once, sharing the transcendental work.
  void log_value_deriv(double z, double& log_l, double& log_dl) const;

  // l^-1 on (0, inf) and (l')^-1 on the range of l'.
  double inverse(double s) const;
  double inverse_log(double log_s) const;
  double deriv_inverse(double s) const;
  // log l'(l^-1(s)) given log s.
  double log_deriv_at_inverse(double log_s) const;

  double g(double d) const;
  double g_inv(double q) const;
  double h(double q) const;
  // q * h'(q), finite at q -> 0 for the identity maps.
  double h_prime_q(double q) const;
  double f(double d) const;
  double f_inv(double u) const;

  nlohmann::json to_json() const;
  static LossSpec from_json(const nlohmann::json& j);

 private:
  double poly_inverse_upper(double s) const;
  LossKind kind_;
  double m_;
  double log_m_ = 0.0;
};

LossSpec make_loss(const std::string& kind, double m = 0.0);
LossSpec make_loss(LossKind kind, double m = 0.0);

// Clamp floor applied to q before h is evaluated.
constexpr double kQFloor = 1e-12;

double h_map(const LossSpec& loss, double q);
Eigen::VectorXd h_vec(const LossSpec& loss, const Eigen::VectorXd& q);

// Everything GD needs from one evaluation of psi.
struct PsiEval {
  double log_sum = 0.0;    // log sum_i w_i l(xi_i)
  double psi = 0.0;        // l^-1 of the sum
  double log_dpsi = 0.0;   // log l'(psi)
  Eigen::VectorXd q;       // gradient of psi
};

// weights empty means all ones.
PsiEval evaluate_psi(const LossSpec& loss, const Eigen::VectorXd& xi,
                     const Eigen::VectorXd& weights = Eigen::VectorXd());
double generalized_sum(const LossSpec& loss, const Eigen::VectorXd& xi);
Eigen::VectorXd dual_map(const LossSpec& loss, const Eigen::VectorXd& p);

enum class EncodingScheme { EqualAssignment, Simplex };

// Labels are 0-based class indices. C is K x n with C(k, i) = a if k == y_i else -b.
struct MulticlassEncoding {
  int K = 0;
  EncodingScheme scheme = EncodingScheme::EqualAssignment;
  double a = 1.0;
  double b = 1.0;
  std::vector<int> labels;
  Eigen::MatrixXd C;

  int n() const { return static_cast<int>(labels.size()); }
  Eigen::VectorXd c(int k) const { return C.row(k).transpose(); }
};

enum class Formulation { AdaBoostStyle, CrossEntropy };

struct MulticlassPsiEval {
  double log_sum = 0.0;
  double psi = 0.0;
  double log_dpsi = 0.0;
  Eigen::VectorXd q;   // per-example dual of the scalar reduction
  Eigen::MatrixXd Q;   // K x n gradient of psi in Xi
};

MulticlassPsiEval evaluate_multiclass_psi(const LossSpec& loss, const MulticlassEncoding& enc,
                                          const Eigen::MatrixXd& Xi, Formulation form);
double multiclass_generalized_sum(const LossSpec& loss, const MulticlassEncoding& enc,
                                  const Eigen::MatrixXd& Xi, Formulation form);

enum class SmoothnessSetting { Binary, MulticlassGeneral, MulticlassCE };

struct SmoothnessBound {
  double beta = 1.0;
  bool estimated = false;
  double c = 1.0;  // sup of l''/l' on the grid
};

double curvature_constant(const LossSpec& loss);
SmoothnessBound smoothness_bound(const LossSpec& loss, SmoothnessSetting setting, int n = 1,
                                 int K = 1);

}  // namespace iblab

#endif
