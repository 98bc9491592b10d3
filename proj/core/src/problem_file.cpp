#include "psopt/problem_file.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>

#include "psopt/exprlang.hpp"

namespace psopt {
namespace {

using expr::NodePtr;
using expr::Slot;

using ConstMap = std::map<std::string, double>;

// Node function whose rows are expression trees; first derivatives are
// symbolic, taken once at construction.
class ExprNodeFn final : public NodeFn {
 public:
  ExprNodeFn(std::vector<NodePtr> rows, int nx, int nu, int np,
             std::shared_ptr<const ConstMap> constants)
      : rows_(std::move(rows)),
        nx_(nx),
        nu_(nu),
        np_(np),
        constants_(std::move(constants)) {
    const int m = static_cast<int>(rows_.size());
    dx_.resize(m);
    du_.resize(m);
    dp_.resize(m);
    dt_.resize(m);
    for (int r = 0; r < m; ++r) {
      for (int i = 0; i < nx_; ++i) dx_[r].push_back(expr::diff(rows_[r], Slot::X, i));
      for (int i = 0; i < nu_; ++i) du_[r].push_back(expr::diff(rows_[r], Slot::U, i));
      for (int i = 0; i < np_; ++i) dp_[r].push_back(expr::diff(rows_[r], Slot::P, i));
      dt_[r] = expr::diff(rows_[r], Slot::T, 0);
    }
  }

  int out_dim() const override { return static_cast<int>(rows_.size()); }

  Vec value(const Vec& x, const Vec& u, double t, const Vec& p) const override {
    expr::Env env = make_env(x, u, t, p);
    Vec v(out_dim());
    for (int r = 0; r < out_dim(); ++r) v(r) = expr::eval(rows_[r], env);
    return v;
  }

  void jacobians(const Vec& x, const Vec& u, double t, const Vec& p, Mat* Jx,
                 Mat* Ju, Vec* Jt, Mat* Jp) const override {
    expr::Env env = make_env(x, u, t, p);
    const int m = out_dim();
    if (Jx) {
      Jx->resize(m, nx_);
      for (int r = 0; r < m; ++r)
        for (int i = 0; i < nx_; ++i) (*Jx)(r, i) = expr::eval(dx_[r][i], env);
    }
    if (Ju) {
      Ju->resize(m, nu_);
      for (int r = 0; r < m; ++r)
        for (int i = 0; i < nu_; ++i) (*Ju)(r, i) = expr::eval(du_[r][i], env);
    }
    if (Jt) {
      Jt->resize(m);
      for (int r = 0; r < m; ++r) (*Jt)(r) = expr::eval(dt_[r], env);
    }
    if (Jp) {
      Jp->resize(m, np_);
      for (int r = 0; r < m; ++r)
        for (int i = 0; i < np_; ++i) (*Jp)(r, i) = expr::eval(dp_[r][i], env);
    }
  }

 private:
  expr::Env make_env(const Vec& x, const Vec& u, double t, const Vec& p) const {
    expr::Env env;
    env.x = x.data();
    env.nx = nx_;
    env.u = u.data();
    env.nu = nu_;
    env.p = p.data();
    env.np = np_;
    env.t = t;
    env.constants = constants_.get();
    return env;
  }

  std::vector<NodePtr> rows_;
  int nx_, nu_, np_;
  std::shared_ptr<const ConstMap> constants_;
  std::vector<std::vector<NodePtr>> dx_, du_, dp_;
  std::vector<NodePtr> dt_;
};

class ExprBoundaryFn final : public BoundaryFn {
 public:
  ExprBoundaryFn(std::vector<NodePtr> rows, int nx, int np,
                 std::shared_ptr<const ConstMap> constants)
      : rows_(std::move(rows)), nx_(nx), np_(np), constants_(std::move(constants)) {
    const int m = static_cast<int>(rows_.size());
    dx0_.resize(m);
    dxf_.resize(m);
    dp_.resize(m);
    dt0_.resize(m);
    dtf_.resize(m);
    for (int r = 0; r < m; ++r) {
      for (int i = 0; i < nx_; ++i) {
        dx0_[r].push_back(expr::diff(rows_[r], Slot::X0, i));
        dxf_[r].push_back(expr::diff(rows_[r], Slot::XF, i));
      }
      for (int i = 0; i < np_; ++i) dp_[r].push_back(expr::diff(rows_[r], Slot::P, i));
      dt0_[r] = expr::diff(rows_[r], Slot::T0, 0);
      dtf_[r] = expr::diff(rows_[r], Slot::TF, 0);
    }
  }

  int out_dim() const override { return static_cast<int>(rows_.size()); }

  Vec value(const Vec& x0, const Vec& xf, double t0, double tf,
            const Vec& p) const override {
    expr::Env env = make_env(x0, xf, t0, tf, p);
    Vec v(out_dim());
    for (int r = 0; r < out_dim(); ++r) v(r) = expr::eval(rows_[r], env);
    return v;
  }

  void jacobians(const Vec& x0, const Vec& xf, double t0, double tf, const Vec& p,
                 Mat* Jx0, Mat* Jxf, Vec* Jt0, Vec* Jtf, Mat* Jp) const override {
    expr::Env env = make_env(x0, xf, t0, tf, p);
    const int m = out_dim();
    if (Jx0) {
      Jx0->resize(m, nx_);
      for (int r = 0; r < m; ++r)
        for (int i = 0; i < nx_; ++i) (*Jx0)(r, i) = expr::eval(dx0_[r][i], env);
    }
    if (Jxf) {
      Jxf->resize(m, nx_);
      for (int r = 0; r < m; ++r)
        for (int i = 0; i < nx_; ++i) (*Jxf)(r, i) = expr::eval(dxf_[r][i], env);
    }
    if (Jt0) {
      Jt0->resize(m);
      for (int r = 0; r < m; ++r) (*Jt0)(r) = expr::eval(dt0_[r], env);
    }
    if (Jtf) {
      Jtf->resize(m);
      for (int r = 0; r < m; ++r) (*Jtf)(r) = expr::eval(dtf_[r], env);
    }
    if (Jp) {
      Jp->resize(m, np_);
      for (int r = 0; r < m; ++r)
        for (int i = 0; i < np_; ++i) (*Jp)(r, i) = expr::eval(dp_[r][i], env);
    }
  }

 private:
  expr::Env make_env(const Vec& x0, const Vec& xf, double t0, double tf,
                     const Vec& p) const {
    expr::Env env;
    env.x0 = x0.data();
    env.xf = xf.data();
    env.nx = nx_;
    env.p = p.data();
    env.np = np_;
    env.t0 = t0;
    env.tf = tf;
    env.constants = constants_.get();
    return env;
  }

  std::vector<NodePtr> rows_;
  int nx_, np_;
  std::shared_ptr<const ConstMap> constants_;
  std::vector<std::vector<NodePtr>> dx0_, dxf_, dp_;
  std::vector<NodePtr> dt0_, dtf_;
};

// ---- line-level helpers ----------------------------------------------

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_number(const std::string& s, double* out) {
  std::string t = trim(s);
  if (t == "inf" || t == "+inf") {
    *out = kInf;
    return true;
  }
  if (t == "-inf") {
    *out = -kInf;
    return true;
  }
  try {
    size_t pos = 0;
    double v = std::stod(t, &pos);
    if (pos != t.size()) return false;
    *out = v;
    return true;
  } catch (...) {
    return false;
  }
}

// Splits "<head> in [lo, hi]" into its parts; head may itself contain
// brackets (the bounds clause is always the last bracket pair).
bool split_in_bounds(const std::string& s, std::string* head, double* lo, double* hi) {
  std::string t = trim(s);
  if (t.empty() || t.back() != ']') return false;
  size_t open = t.rfind('[');
  if (open == std::string::npos) return false;
  std::string inside = t.substr(open + 1, t.size() - open - 2);
  size_t comma = inside.find(',');
  if (comma == std::string::npos) return false;
  if (!parse_number(inside.substr(0, comma), lo)) return false;
  if (!parse_number(inside.substr(comma + 1), hi)) return false;
  std::string pre = trim(t.substr(0, open));
  if (pre.size() < 2 || pre.compare(pre.size() - 2, 2, "in") != 0) return false;
  if (pre.size() > 2) {
    char c = pre[pre.size() - 3];
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == ']') return false;
  }
  *head = trim(pre.substr(0, pre.size() - 2));
  return true;
}

// "f[3]" -> ("f", 3)
bool parse_indexed(const std::string& s, std::string* base, int* idx) {
  std::string t = trim(s);
  size_t open = t.find('[');
  if (open == std::string::npos || t.back() != ']') return false;
  *base = trim(t.substr(0, open));
  std::string is = trim(t.substr(open + 1, t.size() - open - 2));
  if (is.empty()) return false;
  try {
    size_t pos = 0;
    int v = std::stoi(is, &pos);
    if (pos != is.size() || v < 0) return false;
    *idx = v;
    return true;
  } catch (...) {
    return false;
  }
}

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

// ---- staging ----------------------------------------------------------

struct PendingExpr {
  std::string text;
  int line = 0;
  bool set = false;
};

struct PendingBounded {
  std::string text;
  double lo = 0, hi = 0;
  int line = 0;
};

struct Interval {
  double lo = 0, hi = 0;
  int line = 0;
  bool set = false;
};

struct Stage {
  std::string name;
  int nx = -1, nu = -1, np = -1;
  ConstMap constants;
  PendingExpr endpoint_cost, running_cost;
  std::map<int, PendingExpr> dynamics;
  std::map<int, PendingBounded> events, path;
  Interval t0, tf;
  std::map<int, Interval> x_box, u_box;
  std::map<std::string, double> solver;
};

enum class Domain { PathFn, EndpointFn };

void walk(const NodePtr& n, const std::function<void(const expr::Node&)>& f) {
  f(*n);
  for (const auto& a : n->args) walk(a, f);
}

const char* slot_name(Slot s) {
  switch (s) {
    case Slot::X: return "x";
    case Slot::U: return "u";
    case Slot::P: return "p";
    case Slot::X0: return "x0";
    case Slot::XF: return "xf";
    case Slot::T: return "t";
    case Slot::T0: return "t0";
    case Slot::TF: return "tf";
    default: return "?";
  }
}

class Builder {
 public:
  Builder(const std::string& origin, LoadedProblem* out) : origin_(origin), out_(out) {}

  void err(int line, const std::string& code, const std::string& msg) {
    out_->diagnostics.push_back(
        {Severity::Error, code, origin_ + ":" + std::to_string(line) + ": " + msg});
  }
  void warn(int line, const std::string& code, const std::string& msg) {
    out_->diagnostics.push_back(
        {Severity::Warning, code, origin_ + ":" + std::to_string(line) + ": " + msg});
  }

  // Parses expression text, then checks that only the slots allowed in this
  // domain appear, indices are in range and constants are declared.
  NodePtr compile(const PendingExpr& pe, Domain dom, const Stage& st) {
    NodePtr node;
    try {
      node = expr::parse(pe.text);
    } catch (const expr::SyntaxError& e) {
      err(pe.line, "syntax_error", std::string(e.what()));
      return nullptr;
    }
    bool ok = true;
    walk(node, [&](const expr::Node& n) {
      if (n.kind != expr::Kind::Var) return;
      switch (n.slot) {
        case Slot::X:
        case Slot::U:
        case Slot::T:
          if (dom == Domain::EndpointFn) {
            err(pe.line, "wrong_domain",
                std::string(slot_name(n.slot)) +
                    " is a running quantity; endpoint expressions see x0, xf, t0, tf, p");
            ok = false;
          }
          break;
        case Slot::X0:
        case Slot::XF:
        case Slot::T0:
        case Slot::TF:
          if (dom == Domain::PathFn) {
            err(pe.line, "wrong_domain",
                std::string(slot_name(n.slot)) +
                    " is an endpoint quantity; running expressions see x, u, t, p");
            ok = false;
          }
          break;
        default:
          break;
      }
      int limit = -1;
      switch (n.slot) {
        case Slot::X:
        case Slot::X0:
        case Slot::XF: limit = st.nx; break;
        case Slot::U: limit = st.nu; break;
        case Slot::P: limit = st.np; break;
        default: break;
      }
      if (limit >= 0 && n.index >= limit) {
        err(pe.line, "index_out_of_range",
            std::string(slot_name(n.slot)) + "[" + std::to_string(n.index) +
                "] exceeds declared dimension " + std::to_string(limit));
        ok = false;
      }
      if (n.slot == Slot::Constant && !st.constants.count(n.name)) {
        err(pe.line, "unknown_constant",
            "constant '" + n.name + "' is not declared in [constants]");
        ok = false;
      }
    });
    return ok ? node : nullptr;
  }

 private:
  std::string origin_;
  LoadedProblem* out_;
};

const std::set<std::string> kSections = {"dimensions", "constants", "cost",
                                         "dynamics",   "events",    "path",
                                         "time",       "search",    "solver"};

}  // namespace

LoadedProblem parse_problem_text(const std::string& text, const std::string& origin) {
  LoadedProblem res;
  Builder b(origin, &res);
  Stage st;

  std::istringstream in(text);
  std::string raw;
  std::string section;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[' && line.back() == ']' &&
        line.find(',') == std::string::npos && line.find('=') == std::string::npos) {
      section = trim(line.substr(1, line.size() - 2));
      if (!kSections.count(section)) {
        b.err(lineno, "unknown_section", "unknown section [" + section + "]");
        section = "!skip";
      }
      continue;
    }
    if (section == "!skip") continue;

    size_t eq = line.find('=');
    std::string key = eq == std::string::npos ? "" : trim(line.substr(0, eq));
    std::string val = eq == std::string::npos ? "" : trim(line.substr(eq + 1));

    if (section.empty()) {
      if (key == "name" && !val.empty()) {
        st.name = val;
      } else {
        b.err(lineno, "stray_line", "expected 'name = ...' or a [section] header");
      }
      continue;
    }

    if (section == "dimensions") {
      double v;
      if (eq == std::string::npos || !parse_number(val, &v) || v != std::floor(v) || v < 0) {
        b.err(lineno, "bad_dimension", "expected '<kind> = <nonnegative integer>'");
        continue;
      }
      if (key == "states") st.nx = static_cast<int>(v);
      else if (key == "controls") st.nu = static_cast<int>(v);
      else if (key == "parameters") st.np = static_cast<int>(v);
      else b.err(lineno, "bad_dimension", "unknown dimension '" + key + "'");
      continue;
    }

    if (section == "constants") {
      double v;
      if (eq == std::string::npos || !valid_identifier(key) || !parse_number(val, &v)) {
        b.err(lineno, "bad_constant", "expected '<identifier> = <number>'");
        continue;
      }
      if (st.constants.count(key))
        b.warn(lineno, "duplicate_constant", "constant '" + key + "' redefined");
      st.constants[key] = v;
      continue;
    }

    if (section == "cost") {
      if (eq == std::string::npos || val.empty()) {
        b.err(lineno, "bad_cost", "expected 'endpoint = <expr>' or 'running = <expr>'");
        continue;
      }
      if (key == "endpoint") st.endpoint_cost = {val, lineno, true};
      else if (key == "running") st.running_cost = {val, lineno, true};
      else b.err(lineno, "bad_cost", "unknown cost term '" + key + "'");
      continue;
    }

    if (section == "dynamics") {
      std::string base;
      int idx;
      if (eq == std::string::npos || !parse_indexed(key, &base, &idx) || base != "f" ||
          val.empty()) {
        b.err(lineno, "bad_dynamics", "expected 'f[i] = <expr>'");
        continue;
      }
      if (st.dynamics.count(idx))
        b.err(lineno, "duplicate_row", "f[" + std::to_string(idx) + "] defined twice");
      st.dynamics[idx] = {val, lineno, true};
      continue;
    }

    if (section == "events" || section == "path") {
      const bool ev = section == "events";
      std::string base;
      int idx;
      std::string want = ev ? "e" : "h";
      if (eq == std::string::npos || !parse_indexed(key, &base, &idx) || base != want) {
        b.err(lineno, ev ? "bad_event" : "bad_path",
              "expected '" + want + "[k] = <expr> in [lo, hi]'");
        continue;
      }
      std::string head;
      double lo, hi;
      if (!split_in_bounds(val, &head, &lo, &hi) || head.empty()) {
        b.err(lineno, ev ? "bad_event" : "bad_path",
              "expected '" + want + "[k] = <expr> in [lo, hi]'");
        continue;
      }
      if (lo > hi) {
        b.err(lineno, "inverted_bounds", "lower bound exceeds upper bound");
        continue;
      }
      auto& dst = ev ? st.events : st.path;
      if (dst.count(idx))
        b.err(lineno, "duplicate_row", want + "[" + std::to_string(idx) + "] defined twice");
      dst[idx] = {head, lo, hi, lineno};
      continue;
    }

    if (section == "time") {
      std::string head;
      double lo, hi;
      if (split_in_bounds(line, &head, &lo, &hi)) {
        // fall through with parsed interval
      } else if (eq != std::string::npos && parse_number(val, &lo)) {
        head = key;
        hi = lo;
      } else {
        b.err(lineno, "bad_time", "expected 't0 in [lo, hi]' or 't0 = <number>'");
        continue;
      }
      if (lo > hi) {
        b.err(lineno, "inverted_bounds", "lower bound exceeds upper bound");
        continue;
      }
      if (head == "t0") st.t0 = {lo, hi, lineno, true};
      else if (head == "tf") st.tf = {lo, hi, lineno, true};
      else b.err(lineno, "bad_time", "expected t0 or tf on the left of 'in'");
      continue;
    }

    if (section == "search") {
      std::string head;
      double lo, hi;
      if (!split_in_bounds(line, &head, &lo, &hi)) {
        b.err(lineno, "bad_search", "expected 'x[i] in [lo, hi]' or 'u[i] in [lo, hi]'");
        continue;
      }
      std::string base;
      int idx;
      if (!parse_indexed(head, &base, &idx) || (base != "x" && base != "u")) {
        b.err(lineno, "bad_search", "search entries are x[i] or u[i]");
        continue;
      }
      if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
        b.err(lineno, "bad_search", "search intervals must be finite with lo <= hi");
        continue;
      }
      auto& dst = base == "x" ? st.x_box : st.u_box;
      if (dst.count(idx))
        b.err(lineno, "duplicate_row", base + "[" + std::to_string(idx) + "] listed twice");
      dst[idx] = {lo, hi, lineno, true};
      continue;
    }

    if (section == "solver") {
      double v;
      if (eq == std::string::npos || !valid_identifier(key) || !parse_number(val, &v)) {
        b.err(lineno, "bad_solver_setting", "expected '<key> = <number>'");
        continue;
      }
      st.solver[key] = v;
      continue;
    }
  }

  // ---- validation and assembly ----------------------------------------

  if (st.nx < 1) b.err(0, "missing_dimension", "[dimensions] must declare states >= 1");
  if (st.nu < 0) b.err(0, "missing_dimension", "[dimensions] must declare controls");
  if (st.np < 0) st.np = 0;
  if (!st.t0.set) b.err(0, "missing_time", "[time] must give t0");
  if (!st.tf.set) b.err(0, "missing_time", "[time] must give tf");

  if (has_errors(res.diagnostics)) return res;

  for (int i = 0; i < st.nx; ++i)
    if (!st.dynamics.count(i))
      b.err(0, "missing_dynamics", "f[" + std::to_string(i) + "] is not defined");
  for (const auto& [i, pe] : st.dynamics)
    if (i >= st.nx)
      b.err(pe.line, "index_out_of_range",
            "f[" + std::to_string(i) + "] exceeds declared states");
  auto check_contiguous = [&](const std::map<int, PendingBounded>& rows,
                              const std::string& what) {
    int k = 0;
    for (const auto& [i, pb] : rows) {
      if (i != k)
        b.err(pb.line, "missing_row",
              what + " indices must be contiguous from 0; missing " + what + "[" +
                  std::to_string(k) + "]");
      ++k;
    }
  };
  check_contiguous(st.events, "e");
  check_contiguous(st.path, "h");
  for (int i = 0; i < st.nx; ++i)
    if (!st.x_box.count(i))
      b.err(0, "missing_search", "[search] must give x[" + std::to_string(i) + "]");
  for (int i = 0; i < st.nu; ++i)
    if (!st.u_box.count(i))
      b.err(0, "missing_search", "[search] must give u[" + std::to_string(i) + "]");
  for (const auto& [i, iv] : st.x_box)
    if (i >= st.nx)
      b.err(iv.line, "index_out_of_range", "search x index exceeds declared states");
  for (const auto& [i, iv] : st.u_box)
    if (i >= st.nu)
      b.err(iv.line, "index_out_of_range", "search u index exceeds declared controls");

  if (has_errors(res.diagnostics)) return res;

  auto constants = std::make_shared<const ConstMap>(st.constants);

  auto compile_rows = [&](const std::vector<PendingExpr>& pes, Domain dom) {
    std::vector<NodePtr> rows;
    for (const auto& pe : pes) {
      NodePtr n = b.compile(pe, dom, st);
      if (n) rows.push_back(n);
    }
    return rows;
  };

  OcpDefinition& ocp = res.ocp;
  ocp.name = st.name.empty() ? "unnamed" : st.name;
  ocp.n_x = st.nx;
  ocp.n_u = st.nu;
  ocp.n_p = st.np;
  ocp.n_e = static_cast<int>(st.events.size());
  ocp.n_h = static_cast<int>(st.path.size());
  ocp.constants = st.constants;

  PendingExpr e_cost = st.endpoint_cost.set ? st.endpoint_cost : PendingExpr{"0", 0, true};
  PendingExpr r_cost = st.running_cost.set ? st.running_cost : PendingExpr{"0", 0, true};
  std::vector<NodePtr> ec = compile_rows({e_cost}, Domain::EndpointFn);
  std::vector<NodePtr> rc = compile_rows({r_cost}, Domain::PathFn);

  std::vector<PendingExpr> dyn_pes;
  for (int i = 0; i < st.nx; ++i) dyn_pes.push_back(st.dynamics[i]);
  std::vector<NodePtr> dyn = compile_rows(dyn_pes, Domain::PathFn);

  std::vector<PendingExpr> ev_pes, path_pes;
  ocp.e_lo.resize(ocp.n_e);
  ocp.e_hi.resize(ocp.n_e);
  for (const auto& [i, pb] : st.events) {
    ev_pes.push_back({pb.text, pb.line, true});
    ocp.e_lo(i) = pb.lo;
    ocp.e_hi(i) = pb.hi;
  }
  ocp.h_lo.resize(ocp.n_h);
  ocp.h_hi.resize(ocp.n_h);
  for (const auto& [i, pb] : st.path) {
    path_pes.push_back({pb.text, pb.line, true});
    ocp.h_lo(i) = pb.lo;
    ocp.h_hi(i) = pb.hi;
  }
  std::vector<NodePtr> ev = compile_rows(ev_pes, Domain::EndpointFn);
  std::vector<NodePtr> ph = compile_rows(path_pes, Domain::PathFn);

  if (has_errors(res.diagnostics)) return res;

  ocp.endpoint_cost = std::make_shared<ExprBoundaryFn>(ec, st.nx, st.np, constants);
  ocp.running_cost = std::make_shared<ExprNodeFn>(rc, st.nx, st.nu, st.np, constants);
  ocp.dynamics = std::make_shared<ExprNodeFn>(dyn, st.nx, st.nu, st.np, constants);
  ocp.events = std::make_shared<ExprBoundaryFn>(ev, st.nx, st.np, constants);
  if (ocp.n_h > 0)
    ocp.path = std::make_shared<ExprNodeFn>(ph, st.nx, st.nu, st.np, constants);

  ocp.t0_lo = st.t0.lo;
  ocp.t0_hi = st.t0.hi;
  ocp.tf_lo = st.tf.lo;
  ocp.tf_hi = st.tf.hi;

  ocp.box.x_lo.resize(st.nx);
  ocp.box.x_hi.resize(st.nx);
  for (const auto& [i, iv] : st.x_box) {
    ocp.box.x_lo(i) = iv.lo;
    ocp.box.x_hi(i) = iv.hi;
  }
  ocp.box.u_lo.resize(st.nu);
  ocp.box.u_hi.resize(st.nu);
  for (const auto& [i, iv] : st.u_box) {
    ocp.box.u_lo(i) = iv.lo;
    ocp.box.u_hi(i) = iv.hi;
  }

  res.solver_settings = st.solver;

  for (const auto& d : doctor(ocp)) res.diagnostics.push_back(d);
  res.ok = !has_errors(res.diagnostics);
  return res;
}

LoadedProblem load_problem_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    LoadedProblem res;
    res.diagnostics.push_back(
        {Severity::Error, "io_error", "cannot open problem file '" + path + "'"});
    return res;
  }
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_problem_text(ss.str(), path);
}

std::vector<Diagnostic> apply_solver_settings(
    const std::map<std::string, double>& settings, SolverConfig* cfg) {
  std::vector<Diagnostic> out;
  auto warn = [&](const std::string& k, const std::string& msg) {
    out.push_back({Severity::Warning, "bad_solver_setting", "[solver] " + k + ": " + msg});
  };
  for (const auto& [k, v] : settings) {
    if (k == "n0" || k == "n_max" || k == "max_iters" || k == "seed" ||
        k == "log_level") {
      if (v != std::floor(v) || v < 0) {
        warn(k, "expected a nonnegative integer");
        continue;
      }
      int iv = static_cast<int>(v);
      if (k == "n0") cfg->n0 = iv;
      else if (k == "n_max") cfg->n_max = iv;
      else if (k == "max_iters") cfg->max_inner_iters = iv;
      else if (k == "seed") cfg->seed = static_cast<unsigned>(iv);
      else cfg->log_level = iv;
    } else if (k == "tol") {
      if (!(v > 0)) {
        warn(k, "expected a positive tolerance");
        continue;
      }
      cfg->delta_final = v;
    } else if (k == "feasible_tol") {
      if (!(v > 0)) {
        warn(k, "expected a positive tolerance");
        continue;
      }
      cfg->feasible_tol = v;
    } else if (k == "auto_scale") {
      cfg->auto_scale = v != 0;
    } else {
      warn(k, "unrecognized key");
    }
  }
  return out;
}

}  // namespace psopt
