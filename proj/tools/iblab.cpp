#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "iblab/data.hpp"
#include "iblab/dual.hpp"
#include "iblab/errors.hpp"
#include "iblab/gd.hpp"
#include "iblab/harness.hpp"
#include "iblab/interp.hpp"
#include "iblab/loss.hpp"

using namespace iblab;
using nlohmann::json;

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }
Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void emit(const json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << j.dump(2) << "\n";
}

void ensure_parent(const std::string& prefix) {
  auto parent = std::filesystem::path(prefix).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

// Values from --config replace whatever the command line supplied.
void apply_config(CLI::App* sub, const json& cfg) {
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    CLI::Option* opt = nullptr;
    try {
      opt = sub->get_option("--" + it.key());
    } catch (const CLI::OptionNotFound&) {
      throw Error(ErrorKind::InvalidConfiguration, "unknown config key '" + it.key() + "' for " + sub->get_name());
    }
    auto as_str = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    opt->clear();
    if (it->is_array())
      for (const auto& v : *it) opt->add_result(as_str(v));
    else if (it->is_boolean())
      opt->add_result(it->get<bool>() ? "true" : "false");
    else
      opt->add_result(as_str(*it));
    opt->run_callback();
  }
}

struct LossOpts {
  std::string kind = "poly";
  double m = 1;
  void add(CLI::App* s) {
    s->add_option("--loss", kind, "exp | logistic | poly")->capture_default_str();
    s->add_option("--m", m, "polynomial degree")->capture_default_str();
  }
  LossSpec get() const { return make_loss(kind, kind.rfind("poly", 0) == 0 ? m : 0.0); }
};

EntryDist parse_entry(const std::string& s) {
  if (s == "gaussian") return EntryDist::Gaussian;
  if (s == "rademacher") return EntryDist::Rademacher;
  throw Error(ErrorKind::InvalidConfiguration, "entry must be gaussian or rademacher");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit-bias lab: dual solves, gradient descent, and scaling experiments"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file whose keys override subcommand flags");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a dataset (CSV + meta JSON)");
  int g_n = 50, g_d = 200, g_K = 0;
  std::string g_ens = "subgaussian", g_spec = "iso", g_entry = "gaussian", g_out = "data/run";
  double g_alpha = 1, g_decay = 1, g_cap = 0;
  std::vector<double> g_dvec;
  std::uint64_t g_seed = 1;
  gen->add_option("--n", g_n)->capture_default_str();
  gen->add_option("--d", g_d)->capture_default_str();
  gen->add_option("--ensemble", g_ens, "subgaussian | orthogonal | diagonal")->capture_default_str();
  gen->add_option("--spectrum", g_spec, "iso | power (lambda_j = j^-decay)")->capture_default_str();
  gen->add_option("--decay", g_decay)->capture_default_str();
  gen->add_option("--entry", g_entry, "gaussian | rademacher")->capture_default_str();
  gen->add_option("--alpha", g_alpha, "orthogonal ensemble scale")->capture_default_str();
  gen->add_option("--dvec", g_dvec, "diagonal Gram entries")->delimiter(',');
  gen->add_option("--K", g_K, "number of classes; 0 keeps binary labels")->capture_default_str();
  gen->add_option("--row-cap", g_cap, "rescale rows to this max norm (0 = leave)");
  gen->add_option("--seed", g_seed)->capture_default_str();
  gen->add_option("--out", g_out, "output prefix")->capture_default_str();

  // solve-dual
  auto* sd = app.add_subcommand("solve-dual", "solve the relaxed dual program");
  std::string sd_data, sd_out, sd_method = "auto";
  LossOpts sd_loss;
  bool sd_ce = false;
  double sd_tol = 1e-8, sd_feas = 1e-10;
  sd->add_option("--data", sd_data, "dataset prefix")->required();
  sd_loss.add(sd);
  sd->add_option("--method", sd_method, "auto | newton | diagonal | identity")->capture_default_str();
  sd->add_flag("--ce", sd_ce, "multiclass: cross-entropy candidate (simplex encoding)");
  sd->add_option("--tol", sd_tol)->capture_default_str();
  sd->add_option("--feas-tol", sd_feas)->capture_default_str();
  sd->add_option("--out", sd_out);

  // mni
  auto* mn = app.add_subcommand("mni", "minimum-norm interpolator and SVP report");
  std::string mn_data, mn_out;
  std::optional<double> mn_alpha;
  mn->add_option("--data", mn_data)->required();
  mn->add_option("--alpha", mn_alpha, "reference scale (default tr(G)/n)");
  mn->add_option("--out", mn_out);

  // train
  auto* tr = app.add_subcommand("train", "gradient descent with normalized steps");
  std::string tr_data, tr_out = "train", tr_form = "adaboost";
  LossOpts tr_loss;
  double tr_eta = 0, tr_risk = 1e-10, tr_logrisk = std::nan("");
  long tr_iters = 1L << 20;
  bool tr_refs = true;
  tr->add_option("--data", tr_data)->required();
  tr_loss.add(tr);
  tr->add_option("--eta-hat", tr_eta, "normalized step (0 = 1/beta)")->capture_default_str();
  tr->add_option("--risk", tr_risk, "stop when risk falls below")->capture_default_str();
  tr->add_option("--log-risk", tr_logrisk, "stop when log risk falls below (overrides --risk)");
  tr->add_option("--max-iters", tr_iters)->capture_default_str();
  tr->add_option("--formulation", tr_form, "multiclass: adaboost | ce")->capture_default_str();
  tr->add_option("--refs", tr_refs, "compute MNI and dual references")->capture_default_str();
  tr->add_option("--out", tr_out, "output prefix (.csv, .json)")->capture_default_str();

  // scaling-sweep
  auto* sw = app.add_subcommand("scaling-sweep", "distance to MNI versus dimension");
  SweepConfig swc;
  swc.ds = {100, 200, 400, 800, 1600, 3200};
  for (std::uint64_t s = 1; s <= 20; ++s) swc.seeds.push_back(s);
  LossOpts sw_loss;
  std::string sw_entry = "gaussian", sw_out = "sweep";
  std::optional<double> sw_alpha;
  sw->add_option("--n", swc.n)->capture_default_str();
  sw->add_option("--ds", swc.ds)->delimiter(',')->capture_default_str();
  sw->add_option("--seeds", swc.seeds)->delimiter(',')->capture_default_str();
  sw_loss.add(sw);
  sw->add_option("--entry", sw_entry)->capture_default_str();
  sw->add_option("--alpha", sw_alpha);
  sw->add_option("--out", sw_out, "output prefix (.csv, .json)")->capture_default_str();

  // converse-demo
  auto* cv = app.add_subcommand("converse-demo", "adjusted labels on a diagonal Gram");
  std::vector<double> cv_dvec{1, 8}, cv_y{1, -1};
  LossOpts cv_loss;
  std::string cv_out;
  cv->add_option("--dvec", cv_dvec)->delimiter(',')->capture_default_str();
  cv->add_option("--y", cv_y)->delimiter(',')->capture_default_str();
  cv_loss.add(cv);
  cv->add_option("--out", cv_out);

  // iw-demo
  auto* iw = app.add_subcommand("iw-demo", "importance-weighted training on an orthogonal design");
  int iw_n = 16;
  double iw_Q = 8, iw_m = 1;
  long iw_iters = 1L << 22;
  std::uint64_t iw_seed = 1;
  std::string iw_out;
  iw->add_option("--n", iw_n)->capture_default_str();
  iw->add_option("--Q", iw_Q)->capture_default_str();
  iw->add_option("--m", iw_m)->capture_default_str();
  iw->add_option("--iters", iw_iters)->capture_default_str();
  iw->add_option("--seed", iw_seed)->capture_default_str();
  iw->add_option("--out", iw_out);

  // multiclass-demo
  auto* mc = app.add_subcommand("multiclass-demo", "per-class bounds or cross-entropy exactness");
  MulticlassDemoConfig mcc;
  for (std::uint64_t s = 1; s <= 10; ++s) mcc.seeds.push_back(s);
  LossOpts mc_loss;
  std::string mc_out;
  mc->add_option("--n", mcc.n)->capture_default_str();
  mc->add_option("--d", mcc.d)->capture_default_str();
  mc->add_option("--K", mcc.K)->capture_default_str();
  mc->add_option("--seeds", mcc.seeds)->delimiter(',')->capture_default_str();
  mc_loss.add(mc);
  mc->add_flag("--ce", mcc.cross_entropy, "cross-entropy with simplex encoding");
  mc->add_flag("--train", mcc.train, "also run gradient descent");
  mc->add_option("--log-risk", mcc.log_risk_threshold)->capture_default_str();
  mc->add_option("--max-iters", mcc.max_iters)->capture_default_str();
  mc->add_option("--out", mc_out);

  // verify
  auto* vf = app.add_subcommand("verify", "run the invariant suite");
  std::string vf_suite = "all", vf_out;
  std::uint64_t vf_seed = 20240601;
  vf->add_option("--suite", vf_suite, "loss | data | interp | dual | gd | harness | all")->capture_default_str();
  vf->add_option("--seed", vf_seed)->capture_default_str();
  vf->add_option("--out", vf_out, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    json config = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Error(ErrorKind::InvalidConfiguration, "cannot read config " + config_path);
      try {
        config = json::parse(in);
      } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfiguration, std::string("config is not valid JSON: ") + e.what());
      }
      if (!config.is_object()) throw Error(ErrorKind::InvalidConfiguration, "config must be a JSON object");
      try {
        apply_config(sub, config);
      } catch (const CLI::ParseError& e) {
        throw Error(ErrorKind::InvalidConfiguration, std::string("bad config value: ") + e.what());
      }
    }
    // Record every option of the subcommand, so the hash covers defaults too.
    json effective{{"subcommand", sub->get_name()}};
    for (const CLI::Option* o : sub->get_options()) {
      if (o->get_name() == "--help" || o->get_lnames().empty()) continue;
      auto r = o->results();
      if (r.empty()) {
        std::string def = o->get_default_str();
        if (!def.empty()) effective[o->get_lnames()[0]] = def;
      } else {
        effective[o->get_lnames()[0]] = r.size() == 1 && o->get_items_expected_max() <= 1 ? json(r[0]) : json(r);
      }
    }

    if (sub == gen) {
      Dataset ds;
      if (g_ens == "subgaussian") {
        Eigen::VectorXd lam = Eigen::VectorXd::Ones(g_d);
        if (g_spec == "power")
          for (int j = 0; j < g_d; ++j) lam[j] = std::pow(j + 1.0, -g_decay);
        else if (g_spec != "iso")
          throw Error(ErrorKind::InvalidConfiguration, "spectrum must be iso or power");
        ds = gen_subgaussian(g_n, g_d, lam, parse_entry(g_entry), g_seed);
      } else if (g_ens == "orthogonal") {
        ds = gen_orthogonal(g_n, g_d, g_alpha, g_seed);
      } else if (g_ens == "diagonal") {
        if (static_cast<int>(g_dvec.size()) != g_n)
          throw Error(ErrorKind::InvalidConfiguration, "--dvec needs n entries");
        ds = gen_diagonal_gram(g_n, g_d, to_eigen(g_dvec), g_seed);
      } else {
        throw Error(ErrorKind::InvalidConfiguration, "unknown ensemble " + g_ens);
      }
      if (g_K > 0) {
        ds.y.resize(0);
        ds.K = g_K;
        ds.classes = random_classes(g_n, g_K, g_seed);
      }
      if (g_cap > 0) rescale_rows(ds, g_cap);
      ensure_parent(g_out);
      save_dataset(ds, g_out);
      std::printf("wrote %s.csv and %s.meta.json (n=%d, d=%d)\n", g_out.c_str(), g_out.c_str(), ds.n(), ds.d());
      return 0;
    }

    if (sub == sd) {
      Dataset ds = load_dataset(sd_data);
      LossSpec loss = sd_loss.get();
      Eigen::MatrixXd G = ds.X * ds.X.transpose();
      SolverOptions opts;
      opts.tol = sd_tol;
      opts.feas_tol = sd_feas;
      json out;
      if (ds.multiclass()) {
        if (sd_ce) {
          out = ce_candidate(G, encode_multiclass(ds.classes, EncodingScheme::Simplex, ds.K)).to_json();
        } else {
          auto enc = encode_multiclass(ds.classes, EncodingScheme::EqualAssignment, ds.K);
          for (const auto& s : solve_multiclass_general(G, enc, loss, opts)) out["per_class"].push_back(s.to_json());
        }
      } else if (sd_method == "diagonal") {
        Eigen::MatrixXd off = G;
        off.diagonal().setZero();
        if (off.cwiseAbs().maxCoeff() > 1e-10 * G.diagonal().maxCoeff())
          throw Error(ErrorKind::InvalidConfiguration, "Gram is not diagonal");
        out = solve_diagonal(G.diagonal(), loss).to_json();
      } else if (sd_method == "identity") {
        const double a = G.trace() / ds.n();
        if ((G - a * Eigen::MatrixXd::Identity(ds.n(), ds.n())).cwiseAbs().maxCoeff() > 1e-10 * a)
          throw Error(ErrorKind::InvalidConfiguration, "Gram is not a multiple of the identity");
        out = solve_identity(ds.n(), a, loss).to_json();
      } else if (sd_method == "auto" || sd_method == "newton") {
        out = solve_relaxed(G, ds.y, loss, opts).to_json();
      } else {
        throw Error(ErrorKind::InvalidConfiguration, "unknown method " + sd_method);
      }
      out["loss"] = loss.to_json();
      emit(stamp(out, effective), sd_out);
      return 0;
    }

    if (sub == mn) {
      Dataset ds = load_dataset(mn_data);
      json out;
      Eigen::MatrixXd G = ds.X * ds.X.transpose();
      out["gram"] = gram_summary_of(G, mn_alpha).to_json();
      if (ds.multiclass()) {
        auto enc = encode_multiclass(ds.classes, EncodingScheme::EqualAssignment, ds.K);
        for (int k = 0; k < ds.K; ++k) {
          MniResult r = mni(ds.X, enc.c(k));
          out["per_class"].push_back({{"w", to_std(r.w)}, {"condition", r.condition}, {"residual", r.residual}});
        }
        out["svp"] = svp_check_multiclass(G, enc.C).to_json();
      } else {
        MniResult r = mni(ds.X, ds.y);
        out["w"] = to_std(r.w);
        out["condition"] = r.condition;
        out["residual"] = r.residual;
        out["svp"] = svp_check(G, ds.y).to_json();
      }
      emit(stamp(out, effective), mn_out);
      return 0;
    }

    if (sub == tr) {
      Dataset ds = load_dataset(tr_data);
      LossSpec loss = tr_loss.get();
      Schedule sch;
      sch.eta_hat = tr_eta;
      StopRule stop;
      stop.risk_threshold = tr_risk;
      stop.log_risk_threshold = tr_logrisk;
      stop.max_iters = tr_iters;
      References refs;
      Eigen::MatrixXd G = ds.X * ds.X.transpose();
      Trajectory t;
      if (ds.multiclass()) {
        const bool ce = tr_form == "ce";
        if (!ce && tr_form != "adaboost") throw Error(ErrorKind::InvalidConfiguration, "formulation is adaboost or ce");
        auto enc = encode_multiclass(ds.classes, ce ? EncodingScheme::Simplex : EncodingScheme::EqualAssignment, ds.K);
        if (tr_refs) {
          Eigen::MatrixXd M(ds.d(), ds.K);
          for (int k = 0; k < ds.K; ++k) M.col(k) = mni(ds.X, enc.c(k)).w;
          refs.w_mni = M;
        }
        t = train_multiclass(ds, enc, loss, ce ? Formulation::CrossEntropy : Formulation::AdaBoostStyle, sch, stop,
                             refs);
      } else {
        if (tr_refs) {
          refs.w_mni = Eigen::MatrixXd(mni(ds.X, ds.y).w);
          try {
            DualSolution s = solve_relaxed(G, ds.y, loss);
            refs.q_dual = Eigen::MatrixXd(s.q);
            refs.w_dual = Eigen::MatrixXd(primal_from_dual(ds.X, ds.y, s.q));
          } catch (const Error& e) {
            std::fprintf(stderr, "dual reference unavailable: %s\n", e.what());
          }
        }
        t = train_binary(ds, loss, sch, stop, refs);
      }
      ensure_parent(tr_out);
      t.write_csv(tr_out + ".csv");
      emit(stamp(t.summary(), effective), tr_out + ".json");
      std::printf("%s after %ld iterations, risk %.3g\n", termination_name(t.termination), t.iterations,
                  t.final().risk());
      return 0;
    }

    if (sub == sw) {
      swc.loss = sw_loss.get();
      swc.entry = parse_entry(sw_entry);
      swc.alpha = sw_alpha;
      SweepTable tab = scaling_sweep(swc);
      ensure_parent(sw_out);
      tab.write_csv(sw_out + ".csv");
      emit(stamp(tab.to_json(), effective), sw_out + ".json");
      for (const auto& p : tab.points)
        std::printf("d=%6d  median primal %.4g  median dual %.4g  in-regime %d/%d\n", p.d, p.median_primal,
                    p.median_dual, p.in_regime, p.trials);
      std::printf("slope %.3f, strictly decreasing: %s, violations dual %d primal %d\n", tab.slope,
                  tab.strictly_decreasing ? "yes" : "no", tab.dual_violations, tab.primal_violations);
      return 0;
    }

    if (sub == cv) {
      ConverseReport r = converse_demo(to_eigen(cv_dvec), to_eigen(cv_y), cv_loss.get());
      std::printf("%s: spread %.6g, X w_bar vs adjusted labels distance %.3g\n", r.label.c_str(), r.spread,
                  r.interp_distance);
      emit(stamp(r.to_json(), effective), cv_out);
      return 0;
    }

    if (sub == iw) {
      IWDemo r = iw_demo(iw_n, iw_Q, iw_m, iw_iters, iw_seed);
      std::printf("margin ratio %.5f, target %.5f, reweighted dual ratio %.5f\n", r.result.margins.ratio,
                  r.result.margins.target, r.dual_ratio);
      emit(stamp(r.to_json(), effective), iw_out);
      return 0;
    }

    if (sub == mc) {
      mcc.loss = mc_loss.get();
      auto trials = multiclass_demo(mcc);
      json out{{"trials", json::array()}};
      for (const auto& t : trials) out["trials"].push_back(t.to_json());
      emit(stamp(out, effective), mc_out);
      return 0;
    }

    if (sub == vf) {
      auto t0 = std::chrono::steady_clock::now();
      auto results = run_suite(vf_suite, vf_seed);
      int failed = 0;
      for (const auto& r : results) {
        failed += !r.pass;
        std::printf("%-4s %-32s %6.2fs  %s\n", r.pass ? "PASS" : "FAIL", r.id.c_str(), r.seconds, r.detail.c_str());
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("%zu checks, %d failed, %.1fs\n", results.size(), failed, secs);
      json rep = suite_report(results);
      rep["seconds"] = secs;
      if (!vf_out.empty()) emit(stamp(rep, effective), vf_out);
      return failed ? 4 : 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", error_kind_name(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
