#include "iblab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "iblab/errors.hpp"
#include "iblab/interp.hpp"

namespace iblab {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

// Absolute slack for the two-stage inequalities; far below any bound value seen in practice.
constexpr double kBoundSlack = 1e-12;

}  // namespace

int worker_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("IBLAB_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) hw = std::min(hw, cap);
  }
  return hw;
}

void parallel_for(int count, const std::function<void(int)>& body) {
  const int workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < count;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json stamp(nlohmann::json artifact, const nlohmann::json& config) {
  artifact["schema_version"] = kSchemaVersion;
  artifact["config_hash"] = config_hash(config);
  artifact["config"] = config;
  if (config.contains("seed")) artifact["seed"] = config["seed"];
  if (config.contains("seeds")) artifact["seeds"] = config["seeds"];
  return artifact;
}

nlohmann::json TrialResult::to_json() const {
  nlohmann::json j{{"seed", seed},
                   {"d", d},
                   {"ratio", num(ratio)},
                   {"eps_over_alpha", num(eps_over_alpha)},
                   {"dual_dist", num(dual_dist)},
                   {"primal_dist", num(primal_dist)},
                   {"bound_ratio", num(bound_ratio)},
                   {"dual_bound", num(dual_bound)},
                   {"primal_bound", num(primal_bound)},
                   {"in_regime", in_regime},
                   {"dual_ok", dual_ok},
                   {"primal_ok", primal_ok},
                   {"method", method},
                   {"iterations", iterations},
                   {"kkt_residual", num(kkt_residual)},
                   {"runtime_ms", runtime_ms},
                   {"failed", failed}};
  if (!error.empty()) j["error"] = error;
  return j;
}

TrialResult evaluate_trial(const Eigen::MatrixXd& X, const Eigen::VectorXd& v, const LossSpec& loss,
                           std::optional<double> alpha) {
  auto t0 = Clock::now();
  TrialResult r;
  r.d = static_cast<int>(X.cols());
  try {
    GramSummary gs = gram_summary(X, alpha);
    r.ratio = gs.ratio;
    r.eps_over_alpha = eps_alpha(gs.G, gs.alpha, v) / gs.alpha;
    DualSolution sol = solve_scaled(gs.G, v, loss);
    r.method = method_name(sol.method);
    r.iterations = sol.iterations;
    r.kkt_residual = sol.kkt_residual;
    const Eigen::Index n = v.size();
    r.dual_dist = direction_distance(sol.q, Eigen::VectorXd::Ones(n));
    Eigen::VectorXd w = X.transpose() * v.cwiseInverse().cwiseProduct(sol.q);
    r.primal_dist = direction_distance(w, mni(X, v).w);
    r.bound_ratio = r.eps_over_alpha > 0 ? r.primal_dist / r.eps_over_alpha : 0.0;
    r.in_regime = r.ratio <= 1.0 / 3.0;
    if (r.in_regime) {
      r.dual_bound = 2.0 / (1.0 - 2.0 * r.ratio) * r.eps_over_alpha;
      r.primal_bound = 4.0 * r.dual_dist + 12.0 * r.eps_over_alpha;
      r.dual_ok = r.dual_dist <= r.dual_bound + kBoundSlack;
      r.primal_ok = r.primal_dist <= r.primal_bound + kBoundSlack;
    }
  } catch (const std::exception& e) {
    r.failed = true;
    r.error = e.what();
  }
  r.runtime_ms = ms_since(t0);
  return r;
}

nlohmann::json SweepConfig::to_json() const {
  nlohmann::json j{{"n", n}, {"ds", ds}, {"seeds", seeds}, {"loss", loss.to_json()},
                   {"entry", entry == EntryDist::Gaussian ? "gaussian" : "rademacher"}};
  if (alpha) j["alpha"] = *alpha;
  return j;
}

SweepTable scaling_sweep(const SweepConfig& cfg) {
  if (cfg.ds.size() < 2) throw Error(ErrorKind::InvalidConfiguration, "sweep needs at least two values of d");
  if (cfg.seeds.empty()) throw Error(ErrorKind::InvalidConfiguration, "seed list is empty");
  for (size_t j = 0; j < cfg.ds.size(); ++j) {
    if (cfg.ds[j] < cfg.n) throw Error(ErrorKind::InvalidConfiguration, "every d must be >= n");
    if (j && cfg.ds[j] <= cfg.ds[j - 1]) throw Error(ErrorKind::InvalidConfiguration, "d list must increase strictly");
  }
  const int nd = static_cast<int>(cfg.ds.size()), ns = static_cast<int>(cfg.seeds.size());
  SweepTable tab;
  tab.trials.resize(static_cast<size_t>(nd) * ns);
  parallel_for(nd * ns, [&](int idx) {
    const int d = cfg.ds[idx / ns];
    const std::uint64_t seed = cfg.seeds[idx % ns];
    TrialResult r;
    try {
      Dataset ds = gen_subgaussian(cfg.n, d, Eigen::VectorXd::Ones(d), cfg.entry, seed);
      r = evaluate_trial(ds.X, ds.y, cfg.loss, cfg.alpha);
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
    }
    r.seed = seed;
    r.d = d;
    tab.trials[idx] = r;
  });
  std::vector<double> lx, ly;
  for (int j = 0; j < nd; ++j) {
    SweepPoint p;
    p.d = cfg.ds[j];
    std::vector<double> prim, dual;
    for (int s = 0; s < ns; ++s) {
      const TrialResult& r = tab.trials[static_cast<size_t>(j) * ns + s];
      ++p.trials;
      if (r.failed) {
        ++p.failed;
        continue;
      }
      prim.push_back(r.primal_dist);
      dual.push_back(r.dual_dist);
      if (r.in_regime) {
        ++p.in_regime;
        tab.dual_violations += !r.dual_ok;
        tab.primal_violations += !r.primal_ok;
      }
    }
    p.median_primal = median(prim);
    p.median_dual = median(dual);
    if (p.median_primal > 0) {
      lx.push_back(std::log(static_cast<double>(p.d)));
      ly.push_back(std::log(p.median_primal));
    }
    tab.points.push_back(p);
  }
  tab.strictly_decreasing = true;
  for (size_t j = 1; j < tab.points.size(); ++j)
    if (!(tab.points[j].median_primal < tab.points[j - 1].median_primal)) tab.strictly_decreasing = false;
  tab.slope = std::numeric_limits<double>::quiet_NaN();
  if (lx.size() >= 2) {
    double mx = 0, my = 0;
    for (size_t j = 0; j < lx.size(); ++j) mx += lx[j], my += ly[j];
    mx /= lx.size();
    my /= ly.size();
    double sxy = 0, sxx = 0;
    for (size_t j = 0; j < lx.size(); ++j) sxy += (lx[j] - mx) * (ly[j] - my), sxx += (lx[j] - mx) * (lx[j] - mx);
    tab.slope = sxy / sxx;
  }
  return tab;
}

nlohmann::json SweepTable::to_json() const {
  nlohmann::json j{{"slope", num(slope)}, {"strictly_decreasing", strictly_decreasing},
                   {"dual_violations", dual_violations}, {"primal_violations", primal_violations}};
  for (const auto& p : points)
    j["points"].push_back({{"d", p.d}, {"median_primal", num(p.median_primal)}, {"median_dual", num(p.median_dual)},
                           {"trials", p.trials}, {"failed", p.failed}, {"in_regime", p.in_regime}});
  for (const auto& t : trials) j["trials"].push_back(t.to_json());
  return j;
}

void SweepTable::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "d,seed,ratio,eps_over_alpha,dual_dist,primal_dist,bound_ratio,in_regime,dual_ok,primal_ok,method,failed\n";
  char buf[512];
  for (const auto& t : trials) {
    std::snprintf(buf, sizeof buf, "%d,%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%d,%s,%d\n", t.d,
                  static_cast<unsigned long long>(t.seed), t.ratio, t.eps_over_alpha, t.dual_dist, t.primal_dist,
                  t.bound_ratio, t.in_regime, t.dual_ok, t.primal_ok, t.method.c_str(), t.failed);
    out << buf;
  }
}

nlohmann::json ConverseReport::to_json() const {
  return {{"loss", loss.to_json()}, {"dvec", to_std(dvec)}, {"y", to_std(y)}, {"q", to_std(q)},
          {"tilde_y", to_std(tilde_y)}, {"mu", mu}, {"spread", spread}, {"interp_distance", interp_distance},
          {"plain_interpolation", plain_interpolation}, {"label", label}};
}

ConverseReport converse_demo(const Eigen::VectorXd& dvec, const Eigen::VectorXd& y, const LossSpec& loss) {
  if (dvec.size() != y.size() || dvec.size() == 0) throw Error(ErrorKind::InvalidParameter, "dvec and y sizes differ");
  if (!(dvec.minCoeff() > 0)) throw Error(ErrorKind::InvalidParameter, "dvec entries must be positive");
  ConverseReport r;
  r.loss = loss;
  r.y = y;
  r.dvec = dvec / dvec.maxCoeff();  // row norms <= 1
  const int n = static_cast<int>(dvec.size());
  Dataset ds = gen_diagonal_gram(n, n, r.dvec, 0);
  AdjustedLabels a = adjusted_labels(r.dvec, y, loss);
  r.q = a.dual.q;
  r.mu = a.mu;
  r.tilde_y = a.tilde_y;
  r.spread = r.q.maxCoeff() - r.q.minCoeff();
  Eigen::VectorXd w = primal_from_dual(ds.X, y, r.q);
  r.interp_distance = direction_distance(ds.X * w, r.tilde_y);
  r.plain_interpolation = loss.kind() != LossKind::Polynomial;
  r.label = r.plain_interpolation ? "g identity: plain interpolation" : "adjusted labels";
  return r;
}

nlohmann::json IWDemo::to_json() const {
  nlohmann::json j = result.margins.to_json();
  j["dual_ratio"] = dual_ratio;
  j["trajectory"] = result.trajectory.summary();
  j["runtime_ms"] = runtime_ms;
  return j;
}

IWDemo iw_demo(int n, double Q, double m, long iters, std::uint64_t seed) {
  if (n < 2) throw Error(ErrorKind::InvalidParameter, "importance weighting needs n >= 2");
  auto t0 = Clock::now();
  Dataset ds = gen_orthogonal(n, n, 1.0, seed);
  IWConfig iw;
  iw.Q = Q;
  iw.m = m;
  for (int i = 0; i < n / 2; ++i) iw.S.push_back(i);
  StopRule stop;
  stop.risk_threshold = 0;
  stop.max_iters = iters;
  IWDemo out;
  out.result = train_importance_weighted(ds, iw, {}, stop);
  // Reweighted diagonal system: d_i = Q^{-2/m} on S, labels scaled back by Q^{1/m}.
  Eigen::VectorXd dv = Eigen::VectorXd::Ones(n);
  for (int i : iw.S) dv[i] = std::pow(Q, -2.0 / m);
  DualSolution sol = solve_diagonal(dv, make_loss(LossKind::Polynomial, m));
  const double in = std::pow(Q, 1.0 / m) * dv[0] * sol.q[0], out_ = dv[n - 1] * sol.q[n - 1];
  out.dual_ratio = in / out_;
  out.runtime_ms = ms_since(t0);
  return out;
}

nlohmann::json MulticlassDemoConfig::to_json() const {
  return {{"n", n}, {"d", d}, {"K", K}, {"seeds", seeds}, {"loss", loss.to_json()},
          {"cross_entropy", cross_entropy}, {"train", train}, {"log_risk_threshold", log_risk_threshold},
          {"max_iters", max_iters}};
}

nlohmann::json MulticlassTrial::to_json() const {
  nlohmann::json j{{"seed", seed}, {"condition_holds", condition_holds}, {"balance_residual", balance_residual},
                   {"sum_gap", sum_gap}, {"trained_dist", trained_dist}, {"runtime_ms", runtime_ms}};
  for (const auto& r : per_class) j["per_class"].push_back(r.to_json());
  if (!error.empty()) j["error"] = error;
  return j;
}

Dataset multiclass_dataset(int n, int d, int K, EncodingScheme scheme, std::uint64_t seed) {
  Dataset ds = gen_subgaussian(n, d, Eigen::VectorXd::Ones(d), EntryDist::Gaussian, seed);
  ds.y.resize(0);
  ds.K = K;
  ds.classes = random_classes(n, K, seed);
  rescale_rows(ds, scheme == EncodingScheme::Simplex ? (K - 1.0) / K : 1.0);
  return ds;
}

std::vector<MulticlassTrial> multiclass_demo(const MulticlassDemoConfig& cfg) {
  if (cfg.K < 2) throw Error(ErrorKind::InvalidConfiguration, "multiclass needs K >= 2");
  if (cfg.seeds.empty()) throw Error(ErrorKind::InvalidConfiguration, "seed list is empty");
  const EncodingScheme scheme = cfg.cross_entropy ? EncodingScheme::Simplex : EncodingScheme::EqualAssignment;
  if (cfg.cross_entropy && cfg.loss.kind() != LossKind::Logistic)
    throw Error(ErrorKind::InvalidConfiguration, "cross-entropy runs use the logistic loss");
  std::vector<MulticlassTrial> out(cfg.seeds.size());
  parallel_for(static_cast<int>(cfg.seeds.size()), [&](int s) {
    auto t0 = Clock::now();
    MulticlassTrial& tr = out[s];
    tr.seed = cfg.seeds[s];
    try {
      Dataset ds = multiclass_dataset(cfg.n, cfg.d, cfg.K, scheme, tr.seed);
      MulticlassEncoding enc = encode_multiclass(ds.classes, scheme, cfg.K);
      Eigen::MatrixXd G = ds.X * ds.X.transpose();
      Eigen::MatrixXd M(ds.d(), cfg.K);
      for (int k = 0; k < cfg.K; ++k) M.col(k) = mni(ds.X, enc.c(k)).w;
      if (cfg.cross_entropy) {
        try {
          CeCandidate c = ce_candidate(G, enc);
          tr.balance_residual = c.balance_residual;
          tr.sum_gap = c.sum_gap;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::NotApplicable) throw;
          tr.condition_holds = false;
          tr.error = e.what();
        }
      } else {
        for (int k = 0; k < cfg.K; ++k) {
          TrialResult r = evaluate_trial(ds.X, enc.c(k), cfg.loss);
          r.seed = tr.seed;
          tr.per_class.push_back(r);
        }
      }
      if (cfg.train && tr.condition_holds) {
        References refs;
        refs.w_mni = M;
        StopRule stop;
        stop.log_risk_threshold = cfg.log_risk_threshold;
        stop.max_iters = cfg.max_iters;
        Trajectory t = train_multiclass(ds, enc, cfg.loss,
                                        cfg.cross_entropy ? Formulation::CrossEntropy : Formulation::AdaBoostStyle,
                                        {}, stop, refs);
        tr.trained_dist = t.final().dist_mni;
      }
    } catch (const std::exception& e) {
      tr.error = e.what();
    }
    tr.runtime_ms = ms_since(t0);
  });
  return out;
}

nlohmann::json suite_report(const std::vector<CheckResult>& results) {
  nlohmann::json j{{"schema_version", kSchemaVersion}};
  int failed = 0;
  for (const auto& r : results) {
    failed += !r.pass;
    j["checks"].push_back({{"id", r.id}, {"module", r.module}, {"pass", r.pass}, {"detail", r.detail},
                           {"seconds", r.seconds}});
  }
  j["failed"] = failed;
  j["total"] = results.size();
  return j;
}

}  // namespace iblab
