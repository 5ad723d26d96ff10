#include "config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "slidecraft/numfmt.hpp"

namespace slidecraft::app {

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& why) { raise(Errc::ConfigError, path + ": " + why); }

std::string child(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string elem(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

void allow(const Json& obj, const std::string& path, const std::set<std::string>& keys) {
  if (!obj.is_object()) bad(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [k, v] : obj.items())
    if (!keys.count(k)) bad(child(path, k), "unknown key");
}

const Json& need(const Json& obj, const std::string& path, const std::string& key) {
  if (!obj.contains(key)) bad(child(path, key), "missing");
  return obj.at(key);
}

double number(const Json& v, const std::string& path) {
  if (!v.is_number()) bad(path, "expected a number");
  return v.get<double>();
}

int integer(const Json& v, const std::string& path) {
  if (!v.is_number_integer()) bad(path, "expected an integer");
  return v.get<int>();
}

std::string text(const Json& v, const std::string& path) {
  if (!v.is_string()) bad(path, "expected a string");
  return v.get<std::string>();
}

Expr expr(const Json& v, const std::string& path, int n, int m) {
  std::string src = text(v, path);
  try {
    return parse_expression(src, n, m);
  } catch (const Error& e) {
    std::string w = e.what();
    auto name = errc_name(e.code());
    throw Error(e.code(), path + ": " + w.substr(std::min(w.size(), name.size() + 2)));
  }
}

std::vector<Expr> expr_list(const Json& v, const std::string& path, int n, int m, int expected = -1) {
  if (!v.is_array()) bad(path, "expected an array of expressions");
  if (expected >= 0 && static_cast<int>(v.size()) != expected)
    bad(path, "expected " + std::to_string(expected) + " expressions, got " + std::to_string(v.size()));
  std::vector<Expr> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(expr(v[i], elem(path, i), n, m));
  return out;
}

template <typename T, typename F>
void opt(const Json& obj, const std::string& path, const std::string& key, T& field, F conv) {
  if (obj.contains(key)) field = conv(obj.at(key), child(path, key));
}

}  // namespace

ProblemBundle parse_problem(const Json& doc) {
  allow(doc, "", {"name", "description", "dims", "horizon", "dynamics", "cost", "constraints", "initial", "control",
                  "algorithm", "sim", "seed"});
  ProblemBundle b;
  if (doc.contains("name")) b.name = text(doc["name"], "name");
  if (doc.contains("description")) text(doc["description"], "description");

  const Json& dims = need(doc, "", "dims");
  allow(dims, "dims", {"n", "m"});
  const int n = integer(need(dims, "dims", "n"), "dims.n");
  const int m = integer(need(dims, "dims", "m"), "dims.m");
  if (n < 1) bad("dims.n", "must be at least 1");
  if (m < 1) bad("dims.m", "must be at least 1");
  HybridSystem& s = b.sys;
  s.n = n;
  s.m = m;

  const Json& hor = need(doc, "", "horizon");
  allow(hor, "horizon", {"t0", "tf"});
  s.t0 = hor.contains("t0") ? number(hor["t0"], "horizon.t0") : 0.0;
  s.tf = number(need(hor, "horizon", "tf"), "horizon.tf");
  if (!(s.tf > s.t0)) bad("horizon.tf", "must exceed t0");

  const Json& dyn = need(doc, "", "dynamics");
  allow(dyn, "dynamics", {"f1", "f2", "h", "eta_exit"});
  s.f1 = expr_list(need(dyn, "dynamics", "f1"), "dynamics.f1", n, m, n);
  s.f2 = dyn.contains("f2") ? expr_list(dyn["f2"], "dynamics.f2", n, m, n) : s.f1;
  s.h = expr(need(dyn, "dynamics", "h"), "dynamics.h", n, 0);
  if (dyn.contains("eta_exit")) s.eta_exit = expr(dyn["eta_exit"], "dynamics.eta_exit", n, m);

  const Json& cost = need(doc, "", "cost");
  allow(cost, "cost", {"phi"});
  s.phi = expr(need(cost, "cost", "phi"), "cost.phi", n, 0);

  if (doc.contains("constraints")) {
    const Json& con = doc["constraints"];
    allow(con, "constraints", {"g1", "g2"});
    if (con.contains("g1")) s.g1 = expr_list(con["g1"], "constraints.g1", n, 0);
    if (con.contains("g2")) s.g2 = expr_list(con["g2"], "constraints.g2", n, 0);
  }

  const Json& ini = need(doc, "", "initial");
  allow(ini, "initial", {"x0"});
  const Json& x0 = need(ini, "initial", "x0");
  if (!x0.is_array() || static_cast<int>(x0.size()) != n) bad("initial.x0", "expected " + std::to_string(n) + " numbers");
  s.x0 = Vec(n);
  for (int i = 0; i < n; ++i) s.x0[i] = number(x0[i], elem("initial.x0", i));

  const Json& ctl = need(doc, "", "control");
  allow(ctl, "control", {"N", "basis", "box", "u0"});
  const int N = integer(need(ctl, "control", "N"), "control.N");
  if (N < 1) bad("control.N", "must be at least 1");
  Basis basis = Basis::PiecewiseConstant;
  if (ctl.contains("basis")) {
    std::string bn = text(ctl["basis"], "control.basis");
    if (bn == "constant" || bn == "piecewise_constant")
      basis = Basis::PiecewiseConstant;
    else if (bn == "linear" || bn == "piecewise_linear")
      basis = Basis::PiecewiseLinear;
    else
      bad("control.basis", "expected \"constant\" or \"linear\", got \"" + bn + "\"");
  }
  const Json& box = need(ctl, "control", "box");
  if (!box.is_array() || static_cast<int>(box.size()) != m) bad("control.box", "expected " + std::to_string(m) + " [lo, hi] pairs");
  s.u_lo = Vec(m);
  s.u_hi = Vec(m);
  for (int j = 0; j < m; ++j) {
    std::string p = elem("control.box", j);
    if (!box[j].is_array() || box[j].size() != 2) bad(p, "expected [lo, hi]");
    s.u_lo[j] = number(box[j][0], p + "[0]");
    s.u_hi[j] = number(box[j][1], p + "[1]");
    if (!(s.u_lo[j] < s.u_hi[j])) bad(p, "lo must be below hi");
  }

  if (doc.contains("sim")) {
    const Json& sim = doc["sim"];
    allow(sim, "sim", {"h_int", "tol_surface", "tol_event", "max_switches", "min_switch_gap", "eps_deg", "eps_sign"});
    opt(sim, "sim", "h_int", b.sim.h_int, number);
    opt(sim, "sim", "tol_surface", b.sim.tol_surface, number);
    opt(sim, "sim", "tol_event", b.sim.tol_event, number);
    opt(sim, "sim", "max_switches", b.sim.max_switches, integer);
    opt(sim, "sim", "min_switch_gap", b.sim.min_switch_gap, number);
    opt(sim, "sim", "eps_deg", s.eps_deg, number);
    opt(sim, "sim", "eps_sign", s.eps_sign, number);
  }
  if (doc.contains("algorithm")) {
    const Json& a = doc["algorithm"];
    allow(a, "algorithm", {"gamma", "eta", "c0", "kappa", "sigma_tol", "max_outer", "max_backtracks",
                           "max_penalty_updates", "feas_tol", "tol_kkt", "beta_nonneg"});
    AlgoParams& p = b.algo;
    opt(a, "algorithm", "gamma", p.gamma, number);
    opt(a, "algorithm", "eta", p.eta, number);
    opt(a, "algorithm", "c0", p.c0, number);
    opt(a, "algorithm", "kappa", p.kappa, number);
    opt(a, "algorithm", "sigma_tol", p.sigma_tol, number);
    opt(a, "algorithm", "max_outer", p.max_outer, integer);
    opt(a, "algorithm", "max_backtracks", p.max_backtracks, integer);
    opt(a, "algorithm", "max_penalty_updates", p.max_penalty_updates, integer);
    opt(a, "algorithm", "feas_tol", p.feas_tol, number);
    opt(a, "algorithm", "tol_kkt", p.tol_kkt, number);
    if (a.contains("beta_nonneg")) {
      if (!a["beta_nonneg"].is_boolean()) bad("algorithm.beta_nonneg", "expected true or false");
      p.beta_nonneg = a["beta_nonneg"].get<bool>();
    }
  }
  if (doc.contains("seed")) {
    const Json& sd = doc["seed"];
    if (!sd.is_number_unsigned()) bad("seed", "expected a non-negative integer");
    b.seed = sd.get<unsigned>();
  }

  // the library validators name the offending field; report them as config errors
  auto wrap = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (e.code() == Errc::ConfigError) throw;
      std::string w = e.what();
      throw Error(Errc::ConfigError, w);
    }
  };
  wrap([&] { validate_system(s); });
  wrap([&] { validate_sim_config(b.sim); });
  wrap([&] { validate_params(b.algo); });

  b.u0 = ControlGrid(N, basis, s.t0, s.tf, m);
  if (ctl.contains("u0")) {
    const Json& u0 = ctl["u0"];
    if (u0.is_string()) {
      if (u0.get<std::string>() != "zero") bad("control.u0", "expected \"zero\" or numbers");
    } else if (u0.is_array() && static_cast<int>(u0.size()) == m && (m == 0 || u0[0].is_number())) {
      for (int j = 0; j < m; ++j) b.u0.values.row(j).setConstant(number(u0[j], elem("control.u0", j)));
    } else if (u0.is_array() && static_cast<int>(u0.size()) == m) {
      for (int j = 0; j < m; ++j) {
        std::string p = elem("control.u0", j);
        if (!u0[j].is_array() || static_cast<int>(u0[j].size()) != b.u0.size())
          bad(p, "expected " + std::to_string(b.u0.size()) + " coefficients");
        for (int k = 0; k < b.u0.size(); ++k) b.u0.values(j, k) = number(u0[j][k], elem(p, k));
      }
    } else {
      bad("control.u0", "expected \"zero\", one value per control, or one coefficient row per control");
    }
  }
  if (!inside_box(s, b.u0)) bad("control.u0", "initial control leaves the box");
  return b;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::ConfigError, path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ProblemBundle load_problem(const std::string& path) {
  Json doc;
  try {
    doc = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    raise(Errc::ConfigError, path + ": " + e.what());
  }
  return parse_problem(doc);
}

}  // namespace slidecraft::app
