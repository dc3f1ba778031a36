#include "iblab/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iblab/errors.hpp"

namespace iblab {

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sum_exp(const Eigen::VectorXd& v) {
  double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidParameter: return "invalid-parameter";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Overflow: return "overflow";
    case ErrorKind::InvalidConfiguration: return "invalid-configuration";
    case ErrorKind::InvalidDataset: return "invalid-dataset";
    case ErrorKind::SingularGram: return "singular-gram";
    case ErrorKind::NotPositiveDefinite: return "not-positive-definite";
    case ErrorKind::SolverFailure: return "solver-failure";
    case ErrorKind::DomainViolation: return "domain-violation";
    case ErrorKind::NotApplicable: return "not-applicable";
    case ErrorKind::NormalizationViolation: return "normalization-violation";
    case ErrorKind::DegenerateData: return "degenerate-data";
    case ErrorKind::TrainingOverflow: return "training-overflow";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SolverFailure:
    case ErrorKind::DomainViolation:
    case ErrorKind::TrainingOverflow:
      return 3;
    default:
      return 2;
  }
}

LossSpec::LossSpec(LossKind kind, double m) : kind_(kind), m_(m) {
  if (kind == LossKind::Polynomial && !(m > 0 && std::isfinite(m)))
    throw Error(ErrorKind::InvalidParameter, "polynomial loss needs degree m > 0");
  if (kind != LossKind::Polynomial) m_ = 0.0;
  log_m_ = kind == LossKind::Polynomial ? std::log(m_) : 0.0;
}

std::string LossSpec::name() const {
  switch (kind_) {
    case LossKind::Exponential: return "exp";
    case LossKind::Logistic: return "logistic";
    case LossKind::Polynomial: return "poly";
  }
  return "?";
}

double LossSpec::value(double z) const {
  switch (kind_) {
    case LossKind::Exponential: return std::exp(z);
    case LossKind::Logistic: return softplus(z);
    case LossKind::Polynomial:
      return z <= 0 ? std::pow(1 - z, -m_) : 2 * m_ * z + std::pow(1 + z, -m_);
  }
  return 0;
}

double LossSpec::deriv(double z) const {
  switch (kind_) {
    case LossKind::Exponential: return std::exp(z);
    case LossKind::Logistic: return sigmoid(z);
    case LossKind::Polynomial:
      return z <= 0 ? m_ * std::pow(1 - z, -(m_ + 1)) : 2 * m_ - m_ * std::pow(1 + z, -(m_ + 1));
  }
  return 0;
}

double LossSpec::second(double z) const {
  switch (kind_) {
    case LossKind::Exponential: return std::exp(z);
    case LossKind::Logistic: return sigmoid(z) * sigmoid(-z);
    case LossKind::Polynomial:
      return m_ * (m_ + 1) * std::pow(z <= 0 ? 1 - z : 1 + z, -(m_ + 2));
  }
  return 0;
}

double LossSpec::log_value(double z) const {
  switch (kind_) {
    case LossKind::Exponential: return z;
    case LossKind::Logistic:
      // log(log1p(e^z)) = z + log(1 - e^z/2 + ...) deep in the tail
      return z < -35 ? z - 0.5 * std::exp(z) : std::log(softplus(z));
    case LossKind::Polynomial:
      return z <= 0 ? -m_ * std::log1p(-z) : std::log(value(z));
  }
  return 0;
}

double LossSpec::log_deriv(double z) const {
  switch (kind_) {
    case LossKind::Exponential: return z;
    case LossKind::Logistic: return -softplus(-z);
    case LossKind::Polynomial:
      return z <= 0 ? log_m_ - (m_ + 1) * std::log1p(-z) : std::log(deriv(z));
  }
  return 0;
}

void LossSpec::log_value_deriv(double z, double& lv, double& ld) const {
  switch (kind_) {
    case LossKind::Exponential:
      lv = ld = z;
      return;
    case LossKind::Logistic: {
      double sp = softplus(z);
      lv = z < -35 ? z - 0.5 * std::exp(z) : std::log(sp);
      ld = z - sp;
      return;
    }
    case LossKind::Polynomial:
      if (z <= 0) {
        double L = std::log1p(-z);
        lv = -m_ * L;
        ld = log_m_ - (m_ + 1) * L;
      } else {
        lv = std::log(value(z));
        ld = std::log(deriv(z));
      }
      return;
  }
}

double LossSpec::poly_inverse_upper(double s) const {
  // l is convex on z > 0 and l(s/2m) >= s, so Newton from the right end decreases monotonically.
  double lo = (s - 1) / (2 * m_), hi = s / (2 * m_);
  double z = hi;
  for (int it = 0; it < 100; ++it) {
    double next = z - (value(z) - s) / deriv(z);
    if (!(next < z) || next < lo) break;
    if (z - next <= 4 * std::numeric_limits<double>::epsilon() * z) {
      z = next;
      break;
    }
    z = next;
  }
  if (std::abs(value(z) - s) <= 8 * std::numeric_limits<double>::epsilon() * s) return z;
  // Guarded bisection if Newton left the bracket.
  for (int it = 0; it < 200 && hi - lo > 4 * std::numeric_limits<double>::epsilon() * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    (value(mid) < s ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double LossSpec::inverse(double s) const {
  if (!(s > 0)) throw Error(ErrorKind::Domain, "loss inverse needs s > 0");
  if (!std::isfinite(s)) throw Error(ErrorKind::Overflow, "loss inverse of a non-finite value");
  switch (kind_) {
    case LossKind::Exponential: return std::log(s);
    case LossKind::Logistic: return s > 30 ? s + std::log1p(-std::exp(-s)) : std::log(std::expm1(s));
    case LossKind::Polynomial: return s <= 1 ? 1 - std::pow(s, -1 / m_) : poly_inverse_upper(s);
  }
  return 0;
}

double LossSpec::inverse_log(double ls) const {
  if (std::isnan(ls)) throw Error(ErrorKind::Domain, "loss inverse of NaN");
  switch (kind_) {
    case LossKind::Exponential: return ls;
    case LossKind::Logistic:
      if (ls < -30) return ls + 0.5 * std::exp(ls);
      break;
    case LossKind::Polynomial:
      if (ls <= 0) return 1 - std::exp(-ls / m_);
      break;
  }
  if (ls > 709) throw Error(ErrorKind::Overflow, "generalized sum overflows");
  return inverse(std::exp(ls));
}

double LossSpec::deriv_inverse(double s) const {
  switch (kind_) {
    case LossKind::Exponential:
      if (!(s > 0)) break;
      return std::log(s);
    case LossKind::Logistic:
      if (!(s > 0 && s < 1)) break;
      return std::log(s / (1 - s));
    case LossKind::Polynomial:
      if (!(s > 0 && s < 2 * m_)) break;
      return s <= m_ ? 1 - std::pow(m_ / s, 1 / (m_ + 1)) : std::pow(m_ / (2 * m_ - s), 1 / (m_ + 1)) - 1;
  }
  throw Error(ErrorKind::Domain, "derivative inverse outside the range of l'");
}

double LossSpec::log_deriv_at_inverse(double ls) const {
  switch (kind_) {
    case LossKind::Exponential: return ls;
    case LossKind::Logistic:
      // l'(l^-1(s)) = 1 - e^{-s}
      if (ls < -30) return ls - 0.5 * std::exp(ls);
      if (ls > 709) return 0.0;
      return std::log(-std::expm1(-std::exp(ls)));
    case LossKind::Polynomial:
      if (ls <= 0) return log_m_ + (m_ + 1) / m_ * ls;
      return log_deriv(inverse_log(ls));
  }
  return 0;
}

double LossSpec::g(double d) const {
  return kind_ == LossKind::Polynomial ? std::pow(d, (m_ + 1) / m_) : d;
}

double LossSpec::g_inv(double q) const {
  return kind_ == LossKind::Polynomial ? std::pow(q, m_ / (m_ + 1)) : q;
}

double LossSpec::h(double q) const {
  if (kind_ != LossKind::Polynomial) return 1.0;
  return m_ / (m_ + 1) * std::pow(std::max(q, kQFloor), -1 / (m_ + 1));
}

double LossSpec::h_prime_q(double q) const {
  if (kind_ != LossKind::Polynomial) return 0.0;
  return -h(q) / (m_ + 1);
}

double LossSpec::f(double d) const {
  if (kind_ != LossKind::Polynomial) return 1.0 / d;
  return m_ / (m_ + 1) * std::pow(d, -(m_ + 2) / (m_ + 1));
}

double LossSpec::f_inv(double u) const {
  if (kind_ != LossKind::Polynomial) return 1.0 / u;
  return std::pow((m_ + 1) * u / m_, -(m_ + 1) / (m_ + 2));
}

nlohmann::json LossSpec::to_json() const {
  nlohmann::json j{{"kind", name()}};
  if (kind_ == LossKind::Polynomial) j["m"] = m_;
  return j;
}

LossSpec LossSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw Error(ErrorKind::InvalidParameter, "loss JSON needs a string \"kind\"");
  return make_loss(j["kind"].get<std::string>(), j.value("m", 0.0));
}

LossSpec make_loss(const std::string& kind, double m) {
  if (kind == "exp" || kind == "exponential") return LossSpec(LossKind::Exponential, 0);
  if (kind == "logistic" || kind == "log") return LossSpec(LossKind::Logistic, 0);
  if (kind == "poly" || kind == "polynomial") return LossSpec(LossKind::Polynomial, m);
  throw Error(ErrorKind::InvalidParameter, "unknown loss kind '" + kind + "'");
}

LossSpec make_loss(LossKind kind, double m) { return LossSpec(kind, m); }

double h_map(const LossSpec& loss, double q) {
  if (!(q > 0 && q <= 1)) throw Error(ErrorKind::Domain, "h needs q in (0, 1]");
  return loss.h(q);
}

Eigen::VectorXd h_vec(const LossSpec& loss, const Eigen::VectorXd& q) {
  return q.unaryExpr([&](double v) { return loss.h(v); });
}

PsiEval evaluate_psi(const LossSpec& loss, const Eigen::VectorXd& xi, const Eigen::VectorXd& weights) {
  const Eigen::Index n = xi.size();
  if (n < 1) throw Error(ErrorKind::InvalidParameter, "generalized sum of an empty vector");
  const bool weighted = weights.size() > 0;
  if (weighted && weights.size() != n) throw Error(ErrorKind::InvalidParameter, "weight length mismatch");
  PsiEval out;
  out.q.resize(n);  // holds log l'(xi_i) until the end
  Eigen::VectorXd terms(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isnan(xi[i])) throw Error(ErrorKind::Domain, "NaN at index " + std::to_string(i));
    double lv = 0, ld = 0;
    loss.log_value_deriv(xi[i], lv, ld);
    if (weighted) {
      double lw = std::log(weights[i]);
      lv += lw;
      ld += lw;
    }
    if (!std::isfinite(lv) && lv > 0)
      throw Error(ErrorKind::Overflow, "loss overflows at index " + std::to_string(i));
    terms[i] = lv;
    out.q[i] = ld;
  }
  out.log_sum = log_sum_exp(terms);
  out.psi = loss.inverse_log(out.log_sum);
  out.log_dpsi = loss.log_deriv_at_inverse(out.log_sum);
  for (Eigen::Index i = 0; i < n; ++i) out.q[i] = std::min(1.0, std::exp(out.q[i] - out.log_dpsi));
  return out;
}

double generalized_sum(const LossSpec& loss, const Eigen::VectorXd& xi) { return evaluate_psi(loss, xi).psi; }

Eigen::VectorXd dual_map(const LossSpec& loss, const Eigen::VectorXd& p) { return evaluate_psi(loss, p).q; }

MulticlassPsiEval evaluate_multiclass_psi(const LossSpec& loss, const MulticlassEncoding& enc,
                                          const Eigen::MatrixXd& Xi, Formulation form) {
  const int K = enc.K, n = enc.n();
  if (Xi.rows() != K || Xi.cols() != n)
    throw Error(ErrorKind::InvalidParameter, "Xi must be K x n");
  MulticlassPsiEval out;
  out.Q.resize(K, n);
  if (form == Formulation::AdaBoostStyle) {
    if (enc.scheme != EncodingScheme::EqualAssignment)
      throw Error(ErrorKind::InvalidConfiguration, "AdaBoost-style formulation needs equal-assignment encoding");
    Eigen::VectorXd s = Xi.colwise().sum().transpose();
    PsiEval e = evaluate_psi(loss, s);
    out.log_sum = e.log_sum;
    out.psi = e.psi;
    out.log_dpsi = e.log_dpsi;
    out.q = e.q;
    for (int k = 0; k < K; ++k) out.Q.row(k) = e.q.transpose();
    return out;
  }
  if (enc.scheme != EncodingScheme::Simplex || loss.kind() != LossKind::Logistic)
    throw Error(ErrorKind::InvalidConfiguration, "cross-entropy needs simplex encoding and logistic loss");
  Eigen::VectorXd z(n);
  Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(K, n);
  Eigen::VectorXd v(K - 1);
  for (int i = 0; i < n; ++i) {
    const int y = enc.labels[i];
    for (int k = 0, j = 0; k < K; ++k)
      if (k != y) v[j++] = enc.C(y, i) * Xi(y, i) - enc.C(k, i) * Xi(k, i);
    const double mx = v.maxCoeff();
    double sum = 0;
    for (int j = 0; j < K - 1; ++j) sum += (v[j] = std::exp(v[j] - mx));
    z[i] = mx + std::log(sum);
    for (int k = 0, j = 0; k < K; ++k)
      if (k != y) pi(k, i) = v[j++] / sum;
  }
  PsiEval e = evaluate_psi(loss, z);
  out.log_sum = e.log_sum;
  out.psi = e.psi;
  out.log_dpsi = e.log_dpsi;
  out.q = e.q;
  for (int i = 0; i < n; ++i) {
    const int y = enc.labels[i];
    for (int k = 0; k < K; ++k)
      out.Q(k, i) = k == y ? enc.C(y, i) * e.q[i] : -enc.C(k, i) * pi(k, i) * e.q[i];
  }
  return out;
}

double multiclass_generalized_sum(const LossSpec& loss, const MulticlassEncoding& enc,
                                  const Eigen::MatrixXd& Xi, Formulation form) {
  return evaluate_multiclass_psi(loss, enc, Xi, form).psi;
}

double curvature_constant(const LossSpec& loss) {
  constexpr int kGrid = 100000;
  double c = 0;
  for (int j = 0; j < kGrid; ++j) {
    double z = -50.0 + 55.0 * j / (kGrid - 1);
    c = std::max(c, loss.second(z) / loss.deriv(z));
  }
  return c;
}

SmoothnessBound smoothness_bound(const LossSpec& loss, SmoothnessSetting setting, int n, int K) {
  if (setting == SmoothnessSetting::Binary) K = 1;
  const double k2 = static_cast<double>(K) * K;
  SmoothnessBound b;
  if (setting == SmoothnessSetting::MulticlassCE) {
    b.beta = 2 * k2;
    return b;
  }
  if (loss.kind() == LossKind::Exponential) {
    b.beta = k2;
    return b;
  }
  b.c = curvature_constant(loss);
  b.beta = b.c * std::max(n, 1) * k2;
  b.estimated = true;
  return b;
}

}  // namespace iblab
