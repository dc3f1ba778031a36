// Invariant suite behind `iblab verify`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <map>
#include <random>

#include "iblab/data.hpp"
#include "iblab/dual.hpp"
#include "iblab/errors.hpp"
#include "iblab/gd.hpp"
#include "iblab/harness.hpp"
#include "iblab/interp.hpp"
#include "iblab/loss.hpp"

namespace iblab {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::vector<LossSpec> all_losses() {
  return {make_loss(LossKind::Exponential), make_loss(LossKind::Logistic), make_loss(LossKind::Polynomial, 0.5),
          make_loss(LossKind::Polynomial, 1), make_loss(LossKind::Polynomial, 2)};
}

std::string tag(const LossSpec& l) {
  return l.kind() == LossKind::Polynomial ? fmt("poly%g", l.m()) : l.name();
}

double unif(std::mt19937_64& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
int unif_int(std::mt19937_64& rng, int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); }

VectorXd unif_vec(std::mt19937_64& rng, int n, double a, double b) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = unif(rng, a, b);
  return v;
}

VectorXd sign_vec(std::mt19937_64& rng, int n) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng() & 1 ? 1.0 : -1.0;
  return v;
}

// Direction with unit max-norm: half the probes use cube vertices.
MatrixXd maxnorm_dir(std::mt19937_64& rng, int r, int c) {
  MatrixXd v(r, c);
  const bool vertex = rng() & 1;
  for (int i = 0; i < v.size(); ++i) v.data()[i] = vertex ? (rng() & 1 ? 1.0 : -1.0) : unif(rng, -1, 1);
  return v / v.cwiseAbs().maxCoeff();
}

Dataset random_design(int n, int d, std::uint64_t seed) {
  return gen_subgaussian(n, d, VectorXd::Ones(d), EntryDist::Gaussian, seed);
}

// Random PD Gram with random labels for which the support-vector property fails.
MatrixXd svp_failing(std::mt19937_64& rng, int n, VectorXd& y) {
  for (;;) {
    MatrixXd X = MatrixXd::Random(n, n);
    X.rowwise() += VectorXd::Random(n).transpose() * 2.0;  // shared component correlates the rows
    MatrixXd G = X * X.transpose();
    G /= G.diagonal().maxCoeff();
    y = sign_vec(rng, n);
    try {
      GramSolver gs(G);
      if (!svp_check(G, y).holds) return G;
    } catch (const Error&) {
    }
  }
}

// Exhaustive active-set solution of min ½qᵀAq s.t. q ≥ 0, 1ᵀq ≥ 1 for small n.
VectorXd active_set_oracle(const MatrixXd& A) {
  const int n = static_cast<int>(A.rows());
  VectorXd best;
  double best_obj = INFINITY;
  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> S;
    for (int i = 0; i < n; ++i)
      if (mask >> i & 1) S.push_back(i);
    const int s = static_cast<int>(S.size());
    MatrixXd As(s, s);
    for (int a = 0; a < s; ++a)
      for (int b = 0; b < s; ++b) As(a, b) = A(S[a], S[b]);
    VectorXd z = As.ldlt().solve(VectorXd::Ones(s));
    if (!(z.minCoeff() > 0)) continue;
    VectorXd q = VectorXd::Zero(n);
    for (int a = 0; a < s; ++a) q[S[a]] = z[a] / z.sum();
    VectorXd grad = A * q;
    const double mu = q.dot(grad);
    bool ok = true;
    for (int i = 0; i < n; ++i)
      if (!(mask >> i & 1) && grad[i] < mu * (1 - 1e-12)) ok = false;
    const double obj = 0.5 * mu;
    if (ok && obj < best_obj) best_obj = obj, best = q;
  }
  return best;
}

double fd_rel_error(const VectorXd& g, const VectorXd& fd) {
  return (g - fd).cwiseAbs().maxCoeff() / std::max(g.cwiseAbs().maxCoeff(), 1e-300);
}

// ---------------------------------------------------------------- loss

Outcome chebyshev_sum(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = -INFINITY;
  std::string where;
  for (const auto& loss : all_losses())
    for (int t = 0; t < 10000; ++t) {
      const int n = unif_int(rng, 2, 30);
      VectorXd q = unif_vec(rng, n, 0, 1).cwiseMax(1e-9);
      VectorXd h = h_vec(loss, q);
      const double lhs = std::sqrt(double(n)) * h.dot(q), rhs = q.sum() * h.norm();
      const double gap = (lhs - rhs) / rhs;
      if (gap > worst) worst = gap, where = tag(loss);
    }
  return {worst <= 1e-12, fmt("max relative excess %.3g (%s), 5 losses x 1e4 draws", worst, where.c_str())};
}

Outcome sigma_superadditive(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = -INFINITY;
  std::string where;
  for (const auto& loss : all_losses()) {
    auto sigma = [&](double s) { return std::exp(loss.log_deriv_at_inverse(std::log(s))) * loss.inverse(s); };
    const double l0 = loss.value(0);
    for (int t = 0; t < 10000; ++t) {
      const double total = (t % 2 ? unif(rng, 0, 1) : std::pow(10.0, -8 * unif(rng, 0, 1))) * l0 * (1 - 1e-9);
      const double v = unif(rng, 0.001, 0.999);
      const double a = total * v, b = total - a;
      const double sa = sigma(a), sb = sigma(b), sab = sigma(a + b);
      const double gap = (sa + sb - sab) / (std::abs(sa) + std::abs(sb) + 1e-300);
      if (gap > worst) worst = gap, where = tag(loss);
    }
  }
  return {worst <= 1e-12, fmt("max relative excess %.3g (%s)", worst, where.c_str())};
}

struct PsiProbe {
  std::function<double(const MatrixXd&)> psi;
  int rows, cols;
  double beta;
  bool row_only;  // cross-entropy: convex only along single-class directions
  std::string name;
};

std::vector<PsiProbe> psi_probes(std::mt19937_64& rng, int n) {
  std::vector<PsiProbe> out;
  static std::map<std::string, double> c_cache;
  for (const auto& loss : all_losses()) {
    auto b = smoothness_bound(loss, SmoothnessSetting::Binary, n);
    out.push_back({[loss](const MatrixXd& xi) { return evaluate_psi(loss, xi.col(0)).psi; }, n, 1, b.beta, false,
                   "binary/" + tag(loss)});
  }
  const int K = 3;
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = unif_int(rng, 0, K - 1);
  for (int k = 0; k < K; ++k) labels[k % n] = k;
  MulticlassEncoding eq = encode_multiclass(labels, EncodingScheme::EqualAssignment, K);
  MulticlassEncoding sx = encode_multiclass(labels, EncodingScheme::Simplex, K);
  for (const auto& loss : all_losses()) {
    auto b = smoothness_bound(loss, SmoothnessSetting::MulticlassGeneral, n, K);
    out.push_back({[loss, eq](const MatrixXd& xi) {
                     return evaluate_multiclass_psi(loss, eq, xi, Formulation::AdaBoostStyle).psi;
                   },
                   K, n, b.beta, false, "adaboost/" + tag(loss)});
  }
  LossSpec lg = make_loss(LossKind::Logistic);
  out.push_back({[lg, sx](const MatrixXd& xi) {
                   return evaluate_multiclass_psi(lg, sx, xi, Formulation::CrossEntropy).psi;
                 },
                 K, n, smoothness_bound(lg, SmoothnessSetting::MulticlassCE, n, K).beta, true, "ce/logistic"});
  return out;
}

MatrixXd probe_point(std::mt19937_64& rng, int r, int c) {
  MatrixXd xi(r, c);
  const double lo = unif(rng, -12, -1), hi = lo + unif(rng, 0.5, 6);
  for (int i = 0; i < xi.size(); ++i) xi.data()[i] = unif(rng, lo, hi);
  return xi;
}

Outcome psi_line_convexity(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = INFINITY;
  std::string where;
  for (auto& pr : psi_probes(rng, 6))
    for (int t = 0; t < 1000; ++t) {
      MatrixXd xi = probe_point(rng, pr.rows, pr.cols), v = maxnorm_dir(rng, pr.rows, pr.cols);
      if (pr.row_only) {
        const int k = unif_int(rng, 0, pr.rows - 1);
        for (int r = 0; r < pr.rows; ++r)
          if (r != k) v.row(r).setZero();
      }
      const double step = 1e-2;
      const double d2 = pr.psi(xi + step * v) + pr.psi(xi - step * v) - 2 * pr.psi(xi);
      if (d2 < worst) worst = d2, where = pr.name;
    }
  return {worst >= -1e-8, fmt("min second difference %.3g (%s), 1e3 probes per setting", worst, where.c_str())};
}

Outcome psi_smoothness(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0;
  std::string where;
  for (auto& pr : psi_probes(rng, 6))
    for (int t = 0; t < 1000; ++t) {
      MatrixXd xi = probe_point(rng, pr.rows, pr.cols), v = maxnorm_dir(rng, pr.rows, pr.cols);
      const double step = 1e-3;
      const double curv = (pr.psi(xi + step * v) + pr.psi(xi - step * v) - 2 * pr.psi(xi)) / (step * step);
      if (curv / pr.beta > worst) worst = curv / pr.beta, where = pr.name;
    }
  return {worst <= 1.01, fmt("max curvature / beta = %.4f (%s)", worst, where.c_str())};
}

Outcome dual_range(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double qmin = INFINITY, qmax = 0;
  for (const auto& loss : all_losses())
    for (int t = 0; t < 2000; ++t) {
      const int n = unif_int(rng, 1, 20);
      const double lo = unif(rng, -200, 5);
      VectorXd q = dual_map(loss, unif_vec(rng, n, lo, lo + unif(rng, 0, 50)));
      qmin = std::min(qmin, q.minCoeff());
      qmax = std::max(qmax, q.maxCoeff());
    }
  return {qmin > 0 && qmax <= 1, fmt("q in [%.3g, %.17g]", qmin, qmax)};
}

Outcome dual_limit(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0;
  std::string where;
  for (const auto& loss : all_losses())
    for (int t = 0; t < 200; ++t) {
      const int n = unif_int(rng, 2, 10);
      VectorXd a = unif_vec(rng, n, 0.01, 1);
      a /= a.sum();
      const double s = 1e-9;  // every l(p_i) <= 1e-9
      VectorXd p(n), want(n);
      for (int i = 0; i < n; ++i) p[i] = loss.inverse(a[i] * s), want[i] = loss.g(a[i]);
      const double err = (dual_map(loss, p) - want).cwiseAbs().maxCoeff();
      if (err > worst) worst = err, where = tag(loss);
    }
  return {worst <= 1e-4, fmt("max |q - g(alpha)| = %.3g (%s)", worst, where.c_str())};
}

Outcome g_limit(std::uint64_t) {
  double worst = 0;
  for (const auto& loss : all_losses())
    for (double b : {1.0, 2.0, 10.0}) {
      const double a = 1e-8;
      const double r = std::exp(loss.log_deriv_at_inverse(std::log(a)) - loss.log_deriv_at_inverse(std::log(a * b)));
      worst = std::max(worst, std::abs(r - loss.g(1 / b)));
    }
  return {worst <= 1e-4, fmt("max deviation %.3g at a=1e-8", worst)};
}

Outcome roundtrips(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double rt = 0, fd = 0;
  for (const auto& loss : all_losses())
    for (int t = 0; t < 2000; ++t) {
      const double d = std::pow(10.0, -unif(rng, 0, 6));
      rt = std::max(rt, std::abs(loss.g_inv(loss.g(d)) - d) / d);
      rt = std::max(rt, std::abs(loss.f_inv(loss.f(d)) - d) / d);
      const double z = unif(rng, -30, 5);
      rt = std::max(rt, std::abs(loss.inverse(loss.value(z)) - z) / std::max(1.0, std::abs(z)));
      rt = std::max(rt, std::abs(loss.deriv_inverse(loss.deriv(z)) - z) / std::max(1.0, std::abs(z)));
      const double s = loss.value(z), ds = std::exp(loss.log_deriv_at_inverse(std::log(s)));
      rt = std::max(rt, std::abs(ds - loss.deriv(loss.inverse(s))) / ds);
      const double q = unif(rng, 0.01, 0.99), e = 1e-6 * q;
      const double dg = (loss.g_inv(q + e) - loss.g_inv(q - e)) / (2 * e);
      fd = std::max(fd, std::abs(dg - loss.h(q)) / loss.h(q));
      const double dh = q * (loss.h(q + e) - loss.h(q - e)) / (2 * e);
      fd = std::max(fd, std::abs(dh - loss.h_prime_q(q)) / loss.h(q));
    }
  return {rt <= 1e-10 && fd <= 1e-6, fmt("round-trip rel err %.3g, derivative fd rel err %.3g", rt, fd)};
}

Outcome smoothness_constants(std::uint64_t) {
  const double ce = smoothness_bound(make_loss(LossKind::Logistic), SmoothnessSetting::MulticlassCE, 10, 4).beta;
  const double ex = smoothness_bound(make_loss(LossKind::Exponential), SmoothnessSetting::Binary, 10).beta;
  return {ce == 32 && ex == 1, fmt("CE K=4 beta=%g, exp binary beta=%g", ce, ex)};
}

// ---------------------------------------------------------------- data

Outcome determinism(std::uint64_t seed) {
  auto same = [](const Dataset& a, const Dataset& b) {
    return a.X.size() == b.X.size() && (a.X.array() == b.X.array()).all() && (a.y.array() == b.y.array()).all();
  };
  VectorXd lam = VectorXd::LinSpaced(40, 1, 0.1);
  bool ok = same(gen_subgaussian(8, 40, lam, EntryDist::Gaussian, seed),
                 gen_subgaussian(8, 40, lam, EntryDist::Gaussian, seed)) &&
            same(gen_subgaussian(8, 40, lam, EntryDist::Rademacher, seed),
                 gen_subgaussian(8, 40, lam, EntryDist::Rademacher, seed)) &&
            same(gen_orthogonal(8, 20, 0.5, seed), gen_orthogonal(8, 20, 0.5, seed)) &&
            same(gen_diagonal_gram(4, 6, VectorXd::LinSpaced(4, 0.2, 1), seed),
                 gen_diagonal_gram(4, 6, VectorXd::LinSpaced(4, 0.2, 1), seed)) &&
            random_classes(30, 4, seed) == random_classes(30, 4, seed);
  const bool differs = !same(gen_orthogonal(8, 20, 0.5, seed), gen_orthogonal(8, 20, 0.5, seed + 1));
  return {ok && differs, ok ? "bit-identical on repeat, seed-sensitive" : "repeat generation differs"};
}

Outcome gram_tolerance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = unif_int(rng, 1, 20), d = n + unif_int(rng, 0, 3 * n);
    const double alpha = unif(rng, 0.05, 1);
    Dataset o = gen_orthogonal(n, d, alpha, rng());
    MatrixXd E = o.X * o.X.transpose() - alpha * MatrixXd::Identity(n, n);
    worst = std::max(worst, E.cwiseAbs().maxCoeff() / alpha);
    VectorXd dv = unif_vec(rng, n, 0.05, 1);
    Dataset g = gen_diagonal_gram(n, d, dv, rng());
    MatrixXd D = g.X * g.X.transpose();
    D.diagonal() -= dv;
    worst = std::max(worst, D.cwiseAbs().maxCoeff() / dv.maxCoeff());
  }
  return {worst <= 1e-10, fmt("max relative Gram error %.3g over 100 configs of each kind", worst)};
}

Outcome concentration(std::uint64_t seed) {
  const int n = 25, seeds = 20;
  int hit16 = 0, hit64 = 0;
  for (int s = 0; s < seeds; ++s) {
    hit16 += gram_summary(random_design(n, 16 * n, derive_seed(seed, s)).X).ratio <= 1.0 / 3;
    hit64 += gram_summary(random_design(n, 64 * n, derive_seed(seed, 100 + s)).X).ratio <= 1.0 / 3;
  }
  return {hit64 >= 0.95 * seeds, fmt("ratio <= 1/3 in %d/20 seeds at d=16n, %d/20 at d=64n (n=%d)", hit16, hit64, n)};
}

Outcome effective_dims_bounds(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int bad = 0;
  for (int t = 0; t < 500; ++t) {
    const int d = unif_int(rng, 1, 200);
    VectorXd lam = unif_vec(rng, d, 0, 1).array().pow(unif(rng, 1, 8));
    lam[0] = std::max(lam[0], 1e-3);
    EffectiveDims e = effective_dims(lam);
    bad += !(e.d2 >= 1 - 1e-12 && e.d2 <= d + 1e-9 && e.d_inf >= 1 - 1e-12 && e.d_inf <= d + 1e-9 &&
             e.d2 <= e.d_inf * e.d_inf * (1 + 1e-12));
  }
  return {bad == 0, fmt("%d violations of 1<=d2<=d, 1<=d_inf<=d, d2<=d_inf^2 in 500 spectra", bad)};
}

Outcome encodings(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double sx = 0;
  bool pm = true;
  for (int K = 2; K <= 6; ++K) {
    auto labels = random_classes(3 * K, K, rng());
    auto s = encode_multiclass(labels, EncodingScheme::Simplex, K);
    sx = std::max(sx, s.C.colwise().sum().cwiseAbs().maxCoeff());
    auto e = encode_multiclass(labels, EncodingScheme::EqualAssignment, K);
    pm = pm && (e.C.array().abs() == 1).all();
  }
  return {sx <= 1e-12 && pm, fmt("simplex column sums <= %.2g, equal-assignment entries %s", sx, pm ? "+-1" : "not +-1")};
}

// ---------------------------------------------------------------- interp

Outcome mni_optimality(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = -INFINITY, resid = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = unif_int(rng, 1, 8), d = n + unif_int(rng, 1, 20);
    MatrixXd X = random_design(n, d, rng()).X;
    VectorXd targets = unif_vec(rng, n, -1, 1);
    VectorXd w = mni(X, targets).w;
    VectorXd z = unif_vec(rng, d, -1, 1);
    MatrixXd G = X * X.transpose();
    VectorXd wp = w + z - X.transpose() * G.ldlt().solve(X * z);
    resid = std::max(resid, (X * wp - targets).cwiseAbs().maxCoeff());
    worst = std::max(worst, w.norm() - wp.norm());
  }
  return {worst <= 1e-12 && resid <= 1e-9, fmt("max ||mni||-||w'|| = %.3g, perturbed residual %.3g", worst, resid)};
}

Outcome eps_domination(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = -INFINITY;
  for (int t = 0; t < 200; ++t) {
    const int n = unif_int(rng, 2, 12);
    MatrixXd G = random_design(n, unif_int(rng, n, 5 * n), rng()).X;
    G = G * G.transpose();
    const double alpha = unif(rng, 0.1, 2) * G.trace() / n;
    VectorXd v = unif_vec(rng, n, -1, 1).normalized();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(G - alpha * MatrixXd::Identity(n, n));
    const double op = es.eigenvalues().cwiseAbs().maxCoeff();
    worst = std::max(worst, (eps_alpha(G, alpha, v) - op) / op);
  }
  return {worst <= 1e-12, fmt("max (eps_alpha - ||G - alpha I||)/||.|| = %.3g", worst)};
}

// ---------------------------------------------------------------- dual

Outcome kkt_invariants(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int solves = 0, bad = 0;
  double kkt = 0, feas = 0;
  for (const auto& loss : all_losses())
    for (int t = 0; t < 10; ++t) {
      const int n = unif_int(rng, 2, 16);
      Dataset ds = random_design(n, 8 * n, rng());
      MatrixXd G = ds.X * ds.X.transpose();
      if (loss.kind() == LossKind::Exponential && !svp_check(G, ds.y).holds) continue;
      DualSolution s = solve_relaxed(G, ds.y, loss);
      ++solves;
      kkt = std::max(kkt, s.kkt_residual / s.mu);
      feas = std::max(feas, s.feasibility_gap);
      bad += !(s.q.minCoeff() > 0 && s.q.maxCoeff() <= 1 && s.mu > 0 && s.kkt_residual <= 1e-8 * s.mu &&
               s.feasibility_gap <= 1e-10);
    }
  return {bad == 0, fmt("%d/%d solves violate; max kkt/mu %.3g, max feasibility gap %.3g", bad, solves, kkt, feas)};
}

Outcome directional_sandwich(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = -INFINITY;
  for (const auto& loss : all_losses())
    for (int t = 0; t < 10; ++t) {
      const int n = unif_int(rng, 2, 16);
      Dataset ds = random_design(n, unif_int(rng, 2, 16) * n, rng());
      MatrixXd G = ds.X * ds.X.transpose();
      if (loss.kind() == LossKind::Exponential && !svp_check(G, ds.y).holds) continue;
      VectorXd q = solve_relaxed(G, ds.y, loss).q;
      const double lhs = direction_distance(q, VectorXd::Ones(n));
      const double rhs = direction_distance(h_vec(loss, q), q);
      worst = std::max(worst, lhs - rhs);
    }
  return {worst <= 1e-8, fmt("max dist(q,1) - dist(h(q),q) = %.3g", worst)};
}

Outcome two_stage_bounds(std::uint64_t seed) {
  int regime = 0, dual_bad = 0, primal_bad = 0, failed = 0;
  double worst = 0;
  for (const auto& loss : {make_loss(LossKind::Logistic), make_loss(LossKind::Polynomial, 1)})
    for (int s = 0; s < 6; ++s) {
      Dataset ds = random_design(20, 1280, derive_seed(seed, s));
      TrialResult r = evaluate_trial(ds.X, ds.y, loss);
      failed += r.failed;
      if (!r.in_regime) continue;
      ++regime;
      dual_bad += !r.dual_ok;
      primal_bad += !r.primal_ok;
      worst = std::max(worst, r.dual_dist / r.dual_bound);
    }
  return {regime > 0 && failed == 0 && dual_bad == 0 && primal_bad == 0,
          fmt("%d in-regime trials, %d dual / %d primal violations, max dual/bound %.3g", regime, dual_bad,
              primal_bad, worst)};
}

Outcome multiclass_two_stage(std::uint64_t seed) {
  int regime = 0, bad = 0;
  for (int s = 0; s < 3; ++s) {
    Dataset ds = multiclass_dataset(12, 768, 3, EncodingScheme::EqualAssignment, derive_seed(seed, s));
    auto enc = encode_multiclass(ds.classes, EncodingScheme::EqualAssignment, 3);
    for (const auto& loss : {make_loss(LossKind::Exponential), make_loss(LossKind::Polynomial, 1)})
      for (int k = 0; k < 3; ++k) {
        TrialResult r = evaluate_trial(ds.X, enc.c(k), loss);
        if (r.failed) ++bad;
        if (!r.in_regime) continue;
        ++regime;
        bad += !r.dual_ok || !r.primal_ok;
      }
  }
  return {regime > 0 && bad == 0, fmt("%d in-regime class solves, %d violations", regime, bad)};
}

Outcome converse_spread(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double least = INFINITY;
  int used = 0;
  for (double m : {0.5, 1.0, 2.0})
    for (int t = 0; t < 20; ++t) {
      const int n = unif_int(rng, 2, 8);
      VectorXd dv = unif_vec(rng, n, 0.05, 1), y = sign_vec(rng, n);
      MatrixXd G = dv.asDiagonal();
      const double alpha = y.dot(G * y) / y.squaredNorm();  // minimizer of eps_alpha over alpha
      if (eps_alpha(G, alpha, y) <= 1e-3 * alpha) continue;
      ++used;
      VectorXd q = solve_relaxed(G, y, make_loss(LossKind::Polynomial, m)).q;
      least = std::min(least, q.maxCoeff() - q.minCoeff());
    }
  return {used > 0 && least > 1e-6, fmt("min spread %.3g over %d non-eigenvector instances", least, used)};
}

Outcome exp_svp_reduction(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int used = 0;
  double worst = 0;
  while (used < 30) {
    const int n = unif_int(rng, 2, 12);
    Dataset ds = random_design(n, n + unif_int(rng, 0, 4 * n), rng());
    MatrixXd G = ds.X * ds.X.transpose();
    SvpReport sv = svp_check(G, ds.y);
    if (!sv.holds) continue;
    ++used;
    VectorXd ref = ds.y.asDiagonal() * G.ldlt().solve(ds.y);
    worst = std::max(worst, direction_distance(solve_relaxed(G, ds.y, make_loss(LossKind::Exponential)).q, ref));
  }
  return {worst <= 1e-6, fmt("max distance to diag(y)G^-1y direction %.3g over %d SVP instances", worst, used)};
}

Outcome barrier_active_set(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0;
  int barrier = 0;
  for (int t = 0; t < 10; ++t) {
    VectorXd y;
    MatrixXd G = svp_failing(rng, unif_int(rng, 3, 6), y);
    DualSolution s = solve_relaxed(G, y, make_loss(LossKind::Exponential));
    barrier += s.method == DualMethod::BarrierFallback;
    VectorXd ref = active_set_oracle(y.asDiagonal() * G * y.asDiagonal());
    worst = std::max(worst, (s.q - ref).cwiseAbs().maxCoeff());
  }
  return {barrier == 10 && worst <= 1e-5, fmt("%d/10 used the barrier path, max |q - active-set q| %.3g", barrier, worst)};
}

Outcome closed_forms(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double id = 0, dg = 0;
  for (const auto& loss : all_losses()) {
    for (int n : {4, 16})
      for (double a : {0.25, 1.0}) {
        MatrixXd G = a * MatrixXd::Identity(n, n);
        VectorXd y = sign_vec(rng, n);
        id = std::max(id, direction_distance(solve_relaxed(G, y, loss).q, solve_identity(n, a, loss).q));
      }
    if (loss.kind() == LossKind::Logistic) continue;
    for (int t = 0; t < 10; ++t) {
      const int n = unif_int(rng, 1, 10);
      VectorXd dv = unif_vec(rng, n, 0.05, 1);
      MatrixXd G = dv.asDiagonal();
      DualSolution a = solve_relaxed(G, sign_vec(rng, n), loss), b = solve_diagonal(dv, loss);
      dg = std::max({dg, (a.q - b.q).cwiseAbs().maxCoeff(), std::abs(a.mu - b.mu) / b.mu});
    }
  }
  VectorXd q = solve_diagonal(VectorXd{{1.0 / 8, 1.0}}, make_loss(LossKind::Polynomial, 1)).q;
  const double hand = std::max(std::abs(q[0] - 4.0 / 9), std::abs(q[1] - 1.0 / 9));
  return {id <= 1e-10 && dg <= 1e-8 && hand <= 1e-10,
          fmt("identity %.3g, Newton vs bisection %.3g, dvec (1,8) hand case %.3g", id, dg, hand)};
}

Outcome ce_balance(std::uint64_t seed) {
  int holds = 0, tried = 0;
  double bal = 0, gap = 0;
  for (int s = 0; holds < 5 && s < 200; ++s) {
    const int K = s % 2 ? 3 : 5;
    Dataset ds = multiclass_dataset(12, 400, K, EncodingScheme::Simplex, derive_seed(seed, s));
    auto enc = encode_multiclass(ds.classes, EncodingScheme::Simplex, K);
    ++tried;
    try {
      CeCandidate c = ce_candidate(ds.X * ds.X.transpose(), enc);
      ++holds;
      bal = std::max(bal, c.balance_residual);
      gap = std::max(gap, c.sum_gap);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NotApplicable) throw;
    }
  }
  return {holds > 0 && bal <= 1e-10 && gap <= 1e-10,
          fmt("%d/%d designs satisfy the condition; balance %.3g, sum gap %.3g", holds, tried, bal, gap)};
}

// ---------------------------------------------------------------- gd

Outcome dual_monotone(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  long dual_inc = 0, risk_inc = 0;
  double qmin = INFINITY, qmax = 0;
  for (const auto& loss : all_losses())
    for (int t = 0; t < 3; ++t) {
      Dataset ds = random_design(8, 64, rng());
      StopRule stop;
      stop.max_iters = 1 << 14;
      Trajectory tr = train_binary(ds, loss, {}, stop);
      dual_inc += tr.dual_objective_increases;
      risk_inc += tr.risk_increases;
      for (const auto& s : tr.snapshots)
        if (s.t > 0) qmin = std::min(qmin, s.q_min), qmax = std::max(qmax, s.q_max);
    }
  return {dual_inc == 0 && risk_inc == 0 && qmin > 0 && qmax <= 1,
          fmt("dual increases %ld, risk increases %ld, q in [%.3g, %.6g]", dual_inc, risk_inc, qmin, qmax)};
}

Outcome gradient_fd(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0;
  std::string where;
  auto check = [&](const std::function<double(const VectorXd&)>& f, const VectorXd& w, const VectorXd& g,
                   const std::string& name) {
    VectorXd fd(w.size());
    for (int j = 0; j < w.size(); ++j) {
      const double e = 1e-5 * std::max(1.0, std::abs(w[j]));
      VectorXd a = w, b = w;
      a[j] += e;
      b[j] -= e;
      fd[j] = (f(a) - f(b)) / (2 * e);
    }
    const double err = fd_rel_error(g, fd);
    if (err > worst) worst = err, where = name;
  };
  for (const auto& loss : all_losses())
    for (int t = 0; t < 5; ++t) {
      Dataset ds = random_design(6, 10, rng());
      VectorXd w = unif_vec(rng, 10, -1, 1);
      check([&](const VectorXd& v) { return binary_risk(ds, loss, v); }, w, binary_gradient(ds, loss, w),
            "binary/" + tag(loss));
    }
  const int K = 3;
  for (int f = 0; f < 2; ++f) {
    const bool ce = f == 1;
    const auto scheme = ce ? EncodingScheme::Simplex : EncodingScheme::EqualAssignment;
    const auto form = ce ? Formulation::CrossEntropy : Formulation::AdaBoostStyle;
    for (const auto& loss : all_losses()) {
      if (ce && loss.kind() != LossKind::Logistic) continue;
      for (int t = 0; t < 3; ++t) {
        Dataset ds = multiclass_dataset(6, 5, K, scheme, rng());
        auto enc = encode_multiclass(ds.classes, scheme, K);
        MatrixXd W = MatrixXd::Random(5, K);
        MatrixXd Gm = multiclass_gradient(ds, enc, loss, form, W);
        auto risk = [&](const VectorXd& v) {
          return multiclass_risk(ds, enc, loss, form, Eigen::Map<const MatrixXd>(v.data(), 5, K));
        };
        check(risk, Eigen::Map<VectorXd>(W.data(), W.size()), Eigen::Map<VectorXd>(Gm.data(), Gm.size()),
              (ce ? "ce/" : "adaboost/") + tag(loss));
      }
    }
  }
  return {worst <= 1e-6, fmt("max relative gradient error %.3g (%s)", worst, where.c_str())};
}

Outcome gd_dual_agreement(std::uint64_t seed) {
  double worst = 0;
  std::string where;
  for (const auto& loss : {make_loss(LossKind::Exponential), make_loss(LossKind::Logistic),
                           make_loss(LossKind::Polynomial, 1)})
    for (int design = 0; design < 2; ++design) {
      Dataset ds = design ? random_design(8, 512, derive_seed(seed, 1)) : gen_orthogonal(8, 8, 1, seed);
      MatrixXd G = ds.X * ds.X.transpose();
      References refs;
      refs.q_dual = MatrixXd(solve_relaxed(G, ds.y, loss).q);
      StopRule stop;
      stop.max_iters = 1 << 18;
      Trajectory tr = train_binary(ds, loss, {}, stop, refs);
      const double d = tr.final().max_dist_q();
      if (d > worst) worst = d, where = tag(loss) + (design ? "/random" : "/orthogonal");
    }
  return {worst <= 1e-2, fmt("max dist(q_T, q_bar) %.3g (%s)", worst, where.c_str())};
}

Outcome gd_mni_agreement(std::uint64_t seed) {
  double worst = 0;
  std::string where;
  Dataset orth = gen_orthogonal(8, 16, 1, seed);
  for (const auto& loss : all_losses()) {
    References refs;
    refs.w_mni = MatrixXd(mni(orth.X, orth.y).w);
    StopRule stop;
    stop.max_iters = 1 << 14;
    const double d = train_binary(orth, loss, {}, stop, refs).final().max_dist_mni();
    if (d > worst) worst = d, where = tag(loss) + "/identity";
  }
  std::mt19937_64 rng(seed);
  for (int t = 0; t < 3;) {
    Dataset ds = random_design(8, 256, rng());
    if (!svp_check(ds.X * ds.X.transpose(), ds.y).holds) continue;
    ++t;
    References refs;
    refs.w_mni = MatrixXd(mni(ds.X, ds.y).w);
    StopRule stop;
    stop.log_risk_threshold = -700;
    stop.max_iters = 1 << 22;
    const double d = train_binary(ds, make_loss(LossKind::Exponential), {}, stop, refs).final().max_dist_mni();
    if (d > worst) worst = d, where = "exp/svp";
  }
  return {worst <= 1e-3, fmt("max dist(w_T, w_mni) %.3g (%s)", worst, where.c_str())};
}

// ---------------------------------------------------------------- harness

Outcome reproducibility(std::uint64_t seed) {
  SweepConfig cfg;
  cfg.n = 10;
  cfg.ds = {40, 160};
  cfg.seeds = {seed, seed + 1};
  cfg.loss = make_loss(LossKind::Polynomial, 1);
  auto strip = [](nlohmann::json j) {
    for (auto& t : j["trials"]) t.erase("runtime_ms");
    return j.dump();
  };
  const bool same = strip(scaling_sweep(cfg).to_json()) == strip(scaling_sweep(cfg).to_json());
  const std::string h1 = config_hash(cfg.to_json()), h2 = config_hash(cfg.to_json());
  cfg.seeds.push_back(seed + 2);
  const bool sens = config_hash(cfg.to_json()) != h1;
  nlohmann::json art = stamp(nlohmann::json::object(), SweepConfig{}.to_json());
  const bool stamped = art.contains("config_hash") && art.contains("schema_version") && art.contains("seeds");
  return {same && h1 == h2 && sens && stamped,
          fmt("rerun identical: %s, hash stable: %s, hash sensitive: %s, stamped: %s", same ? "yes" : "no",
              h1 == h2 ? "yes" : "no", sens ? "yes" : "no", stamped ? "yes" : "no")};
}

Outcome converse_examples(std::uint64_t) {
  VectorXd y{{1.0, -1.0, 1.0, 1.0}};
  ConverseReport flat = converse_demo(VectorXd::Constant(4, 0.7), y, make_loss(LossKind::Polynomial, 1));
  VectorXd y2{{1.0, -1.0}};
  ConverseReport ex = converse_demo(VectorXd{{1.0, 8.0}}, y2, make_loss(LossKind::Exponential));
  const double par = direction_distance(ex.tilde_y, y2);
  return {flat.spread <= 1e-10 && par <= 1e-10 && ex.plain_interpolation && flat.interp_distance <= 1e-8,
          fmt("constant dvec spread %.3g, exp adjusted-label distance to y %.3g", flat.spread, par)};
}

struct Entry {
  const char* id;
  const char* module;
  Outcome (*fn)(std::uint64_t);
};

const std::vector<Entry>& registry() {
  static const std::vector<Entry> r = {
      {"chebyshev_sum", "loss", chebyshev_sum},
      {"sigma_superadditive", "loss", sigma_superadditive},
      {"psi_line_convexity", "loss", psi_line_convexity},
      {"psi_smoothness", "loss", psi_smoothness},
      {"dual_range", "loss", dual_range},
      {"dual_limit", "loss", dual_limit},
      {"g_limit", "loss", g_limit},
      {"roundtrips", "loss", roundtrips},
      {"smoothness_constants", "loss", smoothness_constants},
      {"determinism", "data", determinism},
      {"gram_tolerance", "data", gram_tolerance},
      {"concentration", "data", concentration},
      {"effective_dims", "data", effective_dims_bounds},
      {"encodings", "data", encodings},
      {"mni_optimality", "interp", mni_optimality},
      {"eps_domination", "interp", eps_domination},
      {"kkt_invariants", "dual", kkt_invariants},
      {"directional_sandwich", "dual", directional_sandwich},
      {"two_stage_bounds", "dual", two_stage_bounds},
      {"multiclass_two_stage", "dual", multiclass_two_stage},
      {"converse_spread", "dual", converse_spread},
      {"exp_svp_reduction", "dual", exp_svp_reduction},
      {"barrier_active_set", "dual", barrier_active_set},
      {"closed_forms", "dual", closed_forms},
      {"ce_balance", "dual", ce_balance},
      {"dual_monotone", "gd", dual_monotone},
      {"gradient_fd", "gd", gradient_fd},
      {"gd_dual_agreement", "gd", gd_dual_agreement},
      {"gd_mni_agreement", "gd", gd_mni_agreement},
      {"reproducibility", "harness", reproducibility},
      {"converse_examples", "harness", converse_examples},
  };
  return r;
}

}  // namespace

std::vector<std::string> suite_names() { return {"loss", "data", "interp", "dual", "gd", "harness", "all"}; }

std::vector<CheckResult> run_suite(const std::string& suite, std::uint64_t seed) {
  const auto names = suite_names();
  if (std::find(names.begin(), names.end(), suite) == names.end())
    throw Error(ErrorKind::InvalidConfiguration, "unknown suite '" + suite + "'");
  std::vector<const Entry*> picked;
  std::vector<std::uint64_t> index;  // registry position keeps per-check seeds independent of the suite
  for (size_t j = 0; j < registry().size(); ++j)
    if (suite == "all" || suite == registry()[j].module) picked.push_back(&registry()[j]), index.push_back(j);
  std::vector<CheckResult> out(picked.size());
  parallel_for(static_cast<int>(picked.size()), [&](int i) {
    const Entry& e = *picked[i];
    auto t0 = std::chrono::steady_clock::now();
    CheckResult& r = out[i];
    r.id = std::string(e.module) + "." + e.id;
    r.module = e.module;
    try {
      Outcome o = e.fn(derive_seed(seed, index[i]));
      r.pass = o.pass;
      r.detail = o.detail;
    } catch (const std::exception& ex) {
      r.pass = false;
      r.detail = std::string("exception: ") + ex.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  return out;
}

}  // namespace iblab
