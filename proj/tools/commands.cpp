#include "commands.hpp"

#include <spdlog/spdlog.h>

#include <Eigen/QR>
#include <filesystem>
#include <fstream>
#include <random>

#include "slidecraft/adjoint.hpp"
#include "slidecraft/numfmt.hpp"
#include "slidecraft/sensitivity.hpp"

namespace slidecraft::app {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) raise(Errc::ConfigError, p.string() + ": cannot write");
  out << content;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json vec_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json mat_json(const Mat& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

Json list_json(const std::vector<double>& v) { return Json(v); }

int fail(const std::string& out, const Error& e) {
  const int code = is_input_error(e.code()) ? 1 : 2;
  spdlog::error("{}", e.what());
  Json j;
  j["error"] = std::string(errc_name(e.code()));
  j["message"] = e.what();
  j["exit_code"] = code;
  try {
    write_file(fs::path(out) / "error.json", dump(j));
  } catch (const std::exception& w) {
    spdlog::error("could not write error.json: {}", w.what());
  }
  return code;
}

template <typename F>
int guarded(const std::string& out, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    return fail(out, e);
  } catch (const std::exception& e) {
    return fail(out, Error(Errc::NonFiniteState, std::string("unexpected failure: ") + e.what()));
  }
}

void log_warnings(const HybridTrajectory& traj) {
  for (const auto& w : traj.warnings) spdlog::warn("{}", w);
}

ControlGrid random_direction(const ProblemBundle& b, const ControlGrid& u, std::mt19937_64& rng, double eps) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  ControlGrid d = u;
  for (Eigen::Index k = 0; k < d.values.cols(); ++k)
    for (Eigen::Index j = 0; j < d.values.rows(); ++j) {
      double v = U(rng);
      // central differences need u ± εd inside the box
      if (u.values(j, k) - eps < b.sys.u_lo[j] || u.values(j, k) + eps > b.sys.u_hi[j]) v = 0.0;
      d.values(j, k) = v;
    }
  return d;
}

Json multipliers_json(const Multipliers& m) {
  Json j;
  j["alpha0"] = m.alpha0;
  j["alpha1"] = vec_json(m.alpha1);
  j["alpha2"] = vec_json(m.alpha2);
  j["normalization"] = m.normalization;
  return j;
}

Multipliers multipliers_from(const Json& j) {
  Multipliers m;
  m.alpha0 = j.at("alpha0").get<double>();
  auto v = [](const Json& a) {
    Vec out(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i].get<double>();
    return out;
  };
  m.alpha1 = v(j.at("alpha1"));
  m.alpha2 = v(j.at("alpha2"));
  m.normalization = j.at("normalization").get<double>();
  return m;
}

Json iterate_json(const PenaltyIterate& it) {
  Json j;
  j["k"] = it.k;
  j["c"] = it.c;
  j["F0"] = it.F0;
  j["g1"] = list_json(it.g1);
  j["g2"] = list_json(it.g2);
  j["M"] = it.M;
  j["beta"] = it.beta;
  j["sigma"] = it.sigma;
  j["t_c"] = it.t_c;
  j["alpha"] = it.alpha;
  j["Fc_before"] = it.Fc_before;
  j["Fc_after"] = it.Fc_after;
  j["n_switches"] = it.n_switches;
  j["qp_iterations"] = it.qp_iterations;
  j["penalty_trials"] = it.penalty_trials;
  j["backtracks"] = it.backtracks;
  j["u"] = vec_json(it.u);
  j["d"] = vec_json(it.d);
  return j;
}

Json kkt_to_json(const KktReport& rep, const Multipliers& m, const Json& cq) {
  Json j;
  j["case"] = rep.case_label;
  j["all_pass"] = rep.all_pass;
  Json items = Json::array();
  for (const auto& it : rep.items) {
    Json e;
    e["item"] = it.name;
    e["residual"] = it.worst.value;
    e["t"] = it.worst.t;
    e["where"] = it.worst.where;
    e["tol"] = it.tol;
    e["pass"] = it.pass;
    items.push_back(e);
  }
  j["items"] = items;
  if (rep.nu_terminal) {
    Json nu;
    nu["terminal"] = *rep.nu_terminal;
    nu["endpoint"] = *rep.nu_endpoint;
    nu["conventions_disagree"] = rep.nu_conventions_disagree;
    j["nu"] = nu;
  }
  j["multipliers"] = multipliers_json(m);
  j["cq_heuristic"] = cq;
  return j;
}

// Rank of the equality gradients and active inequality count; a heuristic
// look at the constraint qualification, not a proof.
Json cq_probe(const ProblemBundle& b, const HybridTrajectory& traj, const ControlGrid& u, const Multipliers& m) {
  Json j;
  j["label"] = "heuristic";
  FunctionalGradients g = functional_gradients(b.sys, traj, u);
  const int ne = static_cast<int>(g.g1.size());
  j["equalities"] = ne;
  if (ne > 0) {
    Mat A(ne, u.m() * u.size());
    for (int i = 0; i < ne; ++i) A.row(i) = flatten(g.g1[i]).transpose();
    Eigen::ColPivHouseholderQR<Mat> qr(A);
    qr.setThreshold(1e-10);
    j["equality_gradient_rank"] = static_cast<int>(qr.rank());
  } else {
    j["equality_gradient_rank"] = 0;
  }
  int active = 0;
  for (Eigen::Index i = 0; i < m.alpha2.size(); ++i) active += m.alpha2[i] > 0.0;
  j["inequalities_with_positive_multiplier"] = active;
  return j;
}

ControlGrid control_from(const ProblemBundle& b, const Json& rows, const std::string& where) {
  ControlGrid u = b.u0;
  if (!rows.is_array() || static_cast<int>(rows.size()) != u.m())
    raise(Errc::ConfigError, where + ": final control has the wrong shape");
  for (int j = 0; j < u.m(); ++j) {
    if (!rows[j].is_array() || static_cast<int>(rows[j].size()) != u.size())
      raise(Errc::ConfigError, where + ": final control has the wrong shape");
    for (int k = 0; k < u.size(); ++k) u.values(j, k) = rows[j][k].get<double>();
  }
  return u;
}

}  // namespace

GradcheckSummary gradcheck(const ProblemBundle& b, int dirs, unsigned seed, double eps) {
  const ControlGrid& u = b.u0;
  HybridTrajectory traj = simulate(b.sys, u, b.sim);
  std::mt19937_64 rng(seed);
  std::vector<ControlGrid> D;
  for (int i = 0; i < dirs; ++i) D.push_back(random_direction(b, u, rng, eps));
  GradcheckSummary out;
  Json fns = Json::array();
  for (FunctionalId id : all_functionals(b.sys)) {
    Mat g = gradient(b.sys, traj, u, adjoint_pass(b.sys, traj, u, id));
    Json rows = Json::array();
    double worst = 0.0, worst_dual = 0.0;
    for (int i = 0; i < dirs; ++i) {
      double adj = pair(g, D[i]);
      double fd = fd_directional_derivative(b.sys, u, D[i], id, {eps}, b.sim).front().value;
      double lin = directional_value(b.sys, traj, linearize_forward(b.sys, traj, u, D[i]), id);
      double rel = std::abs(adj - fd) / std::max({std::abs(adj), std::abs(fd), 1e-8});
      double dual = std::abs(adj - lin) / std::max({std::abs(adj), std::abs(lin), 1e-12});
      worst = std::max(worst, rel);
      worst_dual = std::max(worst_dual, dual);
      Json r;
      r["direction"] = i;
      r["adjoint"] = adj;
      r["fd"] = fd;
      r["linearized"] = lin;
      r["rel_error"] = rel;
      r["duality_error"] = dual;
      rows.push_back(r);
    }
    Json f;
    f["functional"] = id.name();
    f["max_rel_error"] = worst;
    f["max_duality_error"] = worst_dual;
    f["directions"] = rows;
    fns.push_back(f);
    out.max_rel_error = std::max(out.max_rel_error, worst);
    out.max_duality = std::max(out.max_duality, worst_dual);
  }
  Json& r = out.report;
  r["problem"] = b.name;
  r["seed"] = seed;
  r["dirs"] = dirs;
  r["eps"] = eps;
  r["switches"] = static_cast<int>(traj.switches.size());
  r["max_rel_error"] = out.max_rel_error;
  r["max_duality_error"] = out.max_duality;
  r["tol"] = 1e-4;
  r["pass"] = out.max_rel_error <= 1e-4;
  r["functionals"] = fns;
  return out;
}

KktReport check_run_dir(const std::string& dir, Json& kkt) {
  const fs::path d(dir);
  for (const char* f : {"problem.json", "report.json", "costates.csv", "costate_jumps.csv"})
    if (!fs::exists(d / f)) raise(Errc::ConfigError, (d / f).string() + ": missing; not a run directory");
  ProblemBundle b = load_problem((d / "problem.json").string());
  Json report;
  try {
    report = Json::parse(read_file((d / "report.json").string()));
  } catch (const Json::exception& e) {
    raise(Errc::ConfigError, (d / "report.json").string() + ": " + e.what());
  }
  ControlGrid u;
  Multipliers m;
  try {
    u = control_from(b, report.at("final").at("u"), "report.json");
    m = multipliers_from(report.at("final").at("multipliers"));
  } catch (const Json::exception& e) {
    raise(Errc::ConfigError, "report.json: " + std::string(e.what()));
  }
  HybridTrajectory traj = simulate(b.sys, u, b.sim);
  AdjointPath p = read_costates(b.sys, traj, u, read_file((d / "costates.csv").string()),
                                read_file((d / "costate_jumps.csv").string()));
  KktTolerances tol;
  tol.feas = b.algo.feas_tol;
  KktReport rep = check_conditions(b.sys, traj, u, p, m, tol);
  kkt = kkt_to_json(rep, m, cq_probe(b, traj, u, m));
  return rep;
}

int cmd_simulate(const std::string& config, const std::string& out) {
  return guarded(out, [&] {
    ProblemBundle b = load_problem(config);
    HybridTrajectory traj = simulate(b.sys, b.u0, b.sim);
    log_warnings(traj);
    write_file(fs::path(out) / "trajectory.csv", trajectory_csv(b.sys, traj, b.u0));
    write_file(fs::path(out) / "switches.csv", switches_csv(b.sys, traj));
    spdlog::info("simulated {} switches, x(tf) written to {}", traj.switches.size(), out);
    return 0;
  });
}

int cmd_solve(const std::string& config, const std::string& out, std::optional<bool> beta_nonneg) {
  return guarded(out, [&] {
    const std::string source = read_file(config);
    ProblemBundle b = load_problem(config);
    if (beta_nonneg) b.algo.beta_nonneg = *beta_nonneg;
    const fs::path d(out);
    write_file(d / "problem.json", source);

    RunResult r = run(b.sys, b.u0, b.algo, b.sim);
    for (const auto& it : r.history)
      spdlog::info("k={} c={} Fc={} M={} sigma={} alpha={}", it.k, it.c, it.Fc_before, it.M, it.sigma, it.alpha);
    const HybridTrajectory& traj = r.merit.traj;
    log_warnings(traj);
    Multipliers m = assemble_multipliers(r.last, r.c, r.merit.g2, b.algo.feas_tol);
    AdjointPath path = adjoint_pass(b.sys, traj, r.u, combined_terminal_row(b.sys, m, traj.xf));

    Json rep;
    rep["problem"] = b.name;
    rep["status"] = status_name(r.status);
    rep["iterations"] = static_cast<int>(r.history.size());
    const PenaltyIterate& last = r.history.back();
    rep["final_F0"] = r.merit.F0;
    rep["final_M"] = r.merit.M;
    rep["final_sigma"] = last.sigma;
    rep["c_final"] = r.c;
    const int settled = penalty_settled_at(r.history);
    Json trend;
    trend["penalty_settled_at"] = settled;
    trend["penalty_constant_after_20_percent"] = settled <= static_cast<int>(0.2 * r.history.size()) + 1;
    trend["sigma_below_tol"] = std::abs(last.sigma) <= b.algo.sigma_tol;
    trend["M_below_feas_tol"] = r.merit.M <= b.algo.feas_tol;
    rep["trend"] = trend;
    Json fin;
    fin["basis"] = basis_name(r.u.basis);
    fin["N"] = r.u.N;
    fin["u"] = mat_json(r.u.values);
    fin["x_tf"] = vec_json(traj.xf);
    fin["g1"] = list_json(r.merit.g1);
    fin["g2"] = list_json(r.merit.g2);
    fin["switches"] = static_cast<int>(traj.switches.size());
    fin["multipliers"] = multipliers_json(m);
    rep["final"] = fin;
    rep["warnings"] = traj.warnings;
    Json its = Json::array();
    for (const auto& it : r.history) its.push_back(iterate_json(it));
    rep["iterates"] = its;

    write_file(d / "report.json", dump(rep));
    write_file(d / "convergence.csv", convergence_csv(r.history));
    write_file(d / "trajectory.csv", trajectory_csv(b.sys, traj, r.u));
    write_file(d / "switches.csv", switches_csv(b.sys, traj));
    write_file(d / "costates.csv", costate_csv(b.sys, traj, path));
    write_file(d / "costate_jumps.csv", jumps_csv(path));

    Json kkt;
    KktReport k = check_run_dir(out, kkt);
    write_file(d / "kkt.json", dump(kkt));
    spdlog::info("status {} after {} iterations; KKT {}", status_name(r.status), r.history.size(),
                 k.all_pass ? "pass" : "fail");
    return r.status == RunStatus::Optimal ? 0 : 2;
  });
}

int cmd_gradcheck(const std::string& config, const std::string& out, int dirs, std::optional<unsigned> seed) {
  return guarded(out, [&] {
    ProblemBundle b = load_problem(config);
    if (dirs < 1) raise(Errc::ConfigError, "--dirs must be at least 1");
    GradcheckSummary g = gradcheck(b, dirs, seed.value_or(b.seed));
    write_file(fs::path(out) / "gradcheck.json", dump(g.report));
    spdlog::info("max rel_error {} over {} directions", g.max_rel_error, dirs);
    return g.max_rel_error <= 1e-4 ? 0 : 2;
  });
}

int cmd_check_kkt(const std::string& run_dir) {
  return guarded(run_dir, [&] {
    Json kkt;
    KktReport rep = check_run_dir(run_dir, kkt);
    write_file(fs::path(run_dir) / "kkt.json", dump(kkt));
    for (const auto& it : rep.items)
      spdlog::info("{}: {} ({}) at t={} [{}]", it.name, it.pass ? "pass" : "FAIL", it.worst.value, it.worst.t,
                   it.worst.where);
    return rep.all_pass ? 0 : 2;
  });
}

}  // namespace slidecraft::app
