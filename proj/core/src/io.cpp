#include "psopt/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace psopt {
namespace {

using nlohmann::json;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  return f;
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace

void write_solution_csv(const std::string& path, const OcpDefinition& ocp,
                        const SolutionBundle& s) {
  std::ofstream f = open_out(path);
  f << "t";
  for (int q = 0; q < ocp.n_x; ++q) f << ",x_" << q;
  for (int c = 0; c < ocp.n_u; ++c) f << ",u_" << c;
  for (int q = 0; q < ocp.n_x; ++q) f << ",lambda_" << q;
  f << ",H";
  for (int j = 0; j < ocp.n_h; ++j) f << ",mu_" << j;
  f << "\n";
  for (int i = 0; i < s.t.size(); ++i) {
    f << num(s.t(i));
    for (int q = 0; q < ocp.n_x; ++q) f << "," << num(s.X(i, q));
    for (int c = 0; c < ocp.n_u; ++c) f << "," << num(s.U(i, c));
    for (int q = 0; q < ocp.n_x; ++q) f << "," << num(s.Lambda(i, q));
    f << "," << num(s.H(i));
    for (int j = 0; j < ocp.n_h; ++j) f << "," << num(s.Mu(i, j));
    f << "\n";
  }
  if (!f) throw std::runtime_error("short write to '" + path + "'");
}

void write_events_csv(const std::string& path, const OcpDefinition& ocp,
                      const SolutionBundle& s) {
  std::ofstream f = open_out(path);
  f << "k,value,lower,upper,nu\n";
  Vec e;
  if (ocp.n_e > 0 && s.X.rows() > 0) {
    try {
      e = ocp.events->value(s.X.row(0).transpose(),
                            s.X.row(s.X.rows() - 1).transpose(), s.t0, s.tf, s.p);
    } catch (const std::exception&) {
      e = Vec::Constant(ocp.n_e, std::nan(""));
    }
  }
  for (int k = 0; k < ocp.n_e; ++k) {
    double val = e.size() > k ? e(k) : std::nan("");
    f << k << "," << num(val) << "," << num(ocp.e_lo(k)) << "," << num(ocp.e_hi(k))
      << "," << num(s.nu(k)) << "\n";
  }
  if (!f) throw std::runtime_error("short write to '" + path + "'");
}

void write_vnv_text(const std::string& path, const VnvReport& report) {
  std::ofstream f = open_out(path);
  f << report.text();
  if (!f) throw std::runtime_error("short write to '" + path + "'");
}

void write_vnv_trace_csv(const std::string& path, const OcpDefinition& ocp,
                         const SolutionBundle& s, const VnvReport& report) {
  const int nn = static_cast<int>(s.t.size());
  // Flag the node nearest each detected switch.
  std::vector<std::vector<int>> flags(ocp.n_u, std::vector<int>(nn, 0));
  for (const auto& sw : report.switches) {
    if (sw.channel < 0 || sw.channel >= ocp.n_u) continue;
    int best = 0;
    for (int i = 1; i < nn; ++i)
      if (std::abs(s.grid.tau(i) - sw.tau) < std::abs(s.grid.tau(best) - sw.tau))
        best = i;
    flags[sw.channel][best] = 1;
  }
  std::ofstream f = open_out(path);
  f << "t,H";
  for (int q = 0; q < ocp.n_x; ++q) f << ",lambda_" << q;
  for (int j = 0; j < ocp.n_h; ++j) f << ",mu_" << j;
  for (int c = 0; c < ocp.n_u; ++c) f << ",switch_" << c;
  f << "\n";
  for (int i = 0; i < nn; ++i) {
    f << num(s.t(i)) << "," << num(s.H(i));
    for (int q = 0; q < ocp.n_x; ++q) f << "," << num(s.Lambda(i, q));
    for (int j = 0; j < ocp.n_h; ++j) f << "," << num(s.Mu(i, j));
    for (int c = 0; c < ocp.n_u; ++c) f << "," << flags[c][i];
    f << "\n";
  }
  if (!f) throw std::runtime_error("short write to '" + path + "'");
}

std::string make_run_json(const OcpDefinition& ocp, const SolverConfig& cfg,
                          const ScalingMap& map, const SolutionBundle& s,
                          const VnvReport* report) {
  json j;
  j["problem"] = {{"name", ocp.name},
                  {"states", ocp.n_x},
                  {"controls", ocp.n_u},
                  {"parameters", ocp.n_p},
                  {"events", ocp.n_e},
                  {"path_constraints", ocp.n_h},
                  {"constants", ocp.constants}};
  j["config"] = {{"n0", cfg.n0},
                 {"n_max", cfg.n_max},
                 {"delta0", cfg.delta0},
                 {"delta_final", cfg.delta_final},
                 {"sigmas", cfg.sigmas},
                 {"max_inner_iters", cfg.max_inner_iters},
                 {"backtrack_depth", cfg.backtrack_depth},
                 {"perturb_rounds", cfg.perturb_rounds},
                 {"escape_attempts", cfg.escape_attempts},
                 {"feasible_tol", cfg.feasible_tol},
                 {"auto_scale", cfg.auto_scale},
                 {"seed", cfg.seed},
                 {"log_level", cfg.log_level}};
  j["scaling"] = {{"gx", vec_json(map.gx)}, {"sx", vec_json(map.sx)},
                  {"gu", vec_json(map.gu)}, {"su", vec_json(map.su)},
                  {"gt", map.gt},           {"st", map.st},
                  {"gJ", map.gJ}};

  json diags = json::array();
  for (const auto& d : s.notes) {
    const char* sev = d.severity == Severity::Error     ? "error"
                      : d.severity == Severity::Warning ? "warning"
                                                        : "info";
    diags.push_back({{"severity", sev}, {"code", d.code}, {"message", d.message}});
  }
  j["diagnostics"] = diags;

  // Iteration summary: per solve stage, iterations and closing merit.
  json stages = json::array();
  {
    std::string cur;
    int cur_n = -1, iters = 0;
    double last_merit = 0.0, last_delta = 0.0;
    auto flush = [&]() {
      if (cur.empty()) return;
      stages.push_back({{"stage", cur},
                        {"N", cur_n},
                        {"iterations", iters},
                        {"final_merit", last_merit},
                        {"delta", last_delta}});
    };
    for (const auto& rec : s.log) {
      if (rec.stage != cur || rec.N != cur_n) {
        flush();
        cur = rec.stage;
        cur_n = rec.N;
        iters = 0;
      }
      ++iters;
      last_merit = rec.merit;
      last_delta = rec.delta;
    }
    flush();
  }
  j["iterations"] = {{"total", s.log.size()}, {"stages", stages}};

  j["result"] = {{"status", to_string(s.status)},
                 {"cost", s.cost},
                 {"t0", s.t0},
                 {"tf", s.tf},
                 {"N", s.grid.N},
                 {"residual_inf", s.residual_inf},
                 {"feasibility_inf", s.feasibility_inf},
                 {"p", vec_json(s.p)},
                 {"nu", vec_json(s.nu)}};

  if (report) {
    json checks = json::array();
    for (const auto& c : report->checks)
      checks.push_back({{"name", c.name},
                        {"applicable", c.applicable},
                        {"informational", c.informational},
                        {"pass", c.pass},
                        {"value", c.value},
                        {"threshold", c.threshold},
                        {"detail", c.detail}});
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(report->bundle_hash));
    json segs = json::array();
    for (const auto& [a, b] : report->costate_flat_segments) segs.push_back({a, b});
    j["verification"] = {{"all_pass", report->all_pass},
                         {"bundle", hash},
                         {"hamiltonian_mean", report->hamiltonian_mean},
                         {"hamiltonian_dev", report->hamiltonian_dev},
                         {"switching_verdicts", report->switching_verdicts},
                         {"complementarity_verdict", report->complementarity_verdict},
                         {"costate_flat_segments", segs},
                         {"jump_times", report->jump_times},
                         {"optimization_errors", vec_json(report->optimization_errors)},
                         {"terminal_truth_errors", vec_json(report->terminal_truth_errors)},
                         {"checks", checks}};
  }
  return j.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f = open_out(path);
  f << content;
  if (!f) throw std::runtime_error("short write to '" + path + "'");
}

bool validate_run_json(const std::string& text, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) return fail("not valid JSON");
  for (const char* key : {"problem", "config", "scaling", "diagnostics",
                          "iterations", "result"})
    if (!j.contains(key)) return fail(std::string("missing field '") + key + "'");
  if (!j["diagnostics"].is_array()) return fail("'diagnostics' must be an array");
  const json& r = j["result"];
  if (!r.contains("status") || !r["status"].is_string())
    return fail("'result.status' must be a string");
  for (const char* key : {"cost", "t0", "tf", "residual_inf", "feasibility_inf"})
    if (!r.contains(key) || !r[key].is_number())
      return fail(std::string("'result.") + key + "' must be a number");
  if (!r.contains("N") || !r["N"].is_number_integer())
    return fail("'result.N' must be an integer");
  const json& sc = j["scaling"];
  for (const char* key : {"gx", "sx", "gu", "su"})
    if (!sc.contains(key) || !sc[key].is_array())
      return fail(std::string("'scaling.") + key + "' must be an array");
  if (j.contains("verification")) {
    const json& v = j["verification"];
    if (!v.contains("all_pass") || !v["all_pass"].is_boolean())
      return fail("'verification.all_pass' must be a boolean");
    if (!v.contains("checks") || !v["checks"].is_array())
      return fail("'verification.checks' must be an array");
    for (const auto& c : v["checks"])
      if (!c.contains("name") || !c.contains("pass"))
        return fail("each verification check needs 'name' and 'pass'");
  }
  if (why) why->clear();
  return true;
}

int log_level_from_env(int fallback) {
  const char* v = std::getenv("PSOPT_LOG");
  if (!v || !*v) return fallback;
  char* end = nullptr;
  long lv = std::strtol(v, &end, 10);
  if (end == v || *end != '\0') return fallback;
  return static_cast<int>(lv);
}

}  // namespace psopt
