#include "psopt/exprlang.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace psopt::expr {

SyntaxError::SyntaxError(const std::string& msg, int line, int column)
    : std::runtime_error("syntax error at line " + std::to_string(line) +
                         ", column " + std::to_string(column) + ": " + msg),
      line(line),
      column(column) {}

namespace {

NodePtr make(Node n) { return std::make_shared<const Node>(std::move(n)); }

bool is_number(const NodePtr& n, double v) {
  return n->kind == Kind::Number && n->number == v;
}

NodePtr make_var(Slot slot, int index, std::string name = {}) {
  Node n;
  n.kind = Kind::Var;
  n.slot = slot;
  n.index = index;
  n.name = std::move(name);
  return make(std::move(n));
}

NodePtr make_neg(NodePtr a) {
  if (a->kind == Kind::Number) return number(-a->number);
  if (a->kind == Kind::Neg) return a->args[0];
  Node n;
  n.kind = Kind::Neg;
  n.args = {std::move(a)};
  return make(std::move(n));
}

NodePtr make_bin(Kind kind, NodePtr a, NodePtr b) {
  if (a->kind == Kind::Number && b->kind == Kind::Number) {
    switch (kind) {
      case Kind::Add: return number(a->number + b->number);
      case Kind::Sub: return number(a->number - b->number);
      case Kind::Mul: return number(a->number * b->number);
      case Kind::Div:
        if (b->number != 0.0) return number(a->number / b->number);
        break;
      case Kind::Pow: {
        double v = std::pow(a->number, b->number);
        if (std::isfinite(v)) return number(v);
        break;
      }
      default: break;
    }
  }
  switch (kind) {
    case Kind::Add:
      if (is_number(a, 0.0)) return b;
      if (is_number(b, 0.0)) return a;
      break;
    case Kind::Sub:
      if (is_number(b, 0.0)) return a;
      if (is_number(a, 0.0)) return make_neg(std::move(b));
      break;
    case Kind::Mul:
      if (is_number(a, 0.0) || is_number(b, 0.0)) return number(0.0);
      if (is_number(a, 1.0)) return b;
      if (is_number(b, 1.0)) return a;
      if (is_number(a, -1.0)) return make_neg(std::move(b));
      if (is_number(b, -1.0)) return make_neg(std::move(a));
      break;
    case Kind::Div:
      if (is_number(a, 0.0)) return number(0.0);
      if (is_number(b, 1.0)) return a;
      break;
    case Kind::Pow:
      if (is_number(b, 1.0)) return a;
      if (is_number(b, 0.0)) return number(1.0);
      break;
    default: break;
  }
  Node n;
  n.kind = kind;
  n.args = {std::move(a), std::move(b)};
  return make(std::move(n));
}

NodePtr make_add(NodePtr a, NodePtr b) { return make_bin(Kind::Add, std::move(a), std::move(b)); }
NodePtr make_sub(NodePtr a, NodePtr b) { return make_bin(Kind::Sub, std::move(a), std::move(b)); }
NodePtr make_mul(NodePtr a, NodePtr b) { return make_bin(Kind::Mul, std::move(a), std::move(b)); }
NodePtr make_div(NodePtr a, NodePtr b) { return make_bin(Kind::Div, std::move(a), std::move(b)); }
NodePtr make_pow(NodePtr a, NodePtr b) { return make_bin(Kind::Pow, std::move(a), std::move(b)); }

NodePtr make_call(const std::string& func, std::vector<NodePtr> args) {
  bool all_const = true;
  for (const auto& a : args) all_const &= (a->kind == Kind::Number);
  Node n;
  n.kind = Kind::Call;
  n.name = func;
  n.args = std::move(args);
  if (all_const) {
    Env env;
    double v = eval(make(Node(n)), env, nullptr);
    if (std::isfinite(v)) return number(v);
  }
  return make(std::move(n));
}

struct Parser {
  const std::string& text;
  size_t pos = 0;
  int line = 1;
  int col = 1;

  explicit Parser(const std::string& t) : text(t) {}

  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(msg, line, col); }

  char peek() const { return pos < text.size() ? text[pos] : '\0'; }

  char get() {
    char c = peek();
    ++pos;
    if (c == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    return c;
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(peek()))) get();
  }

  bool accept(char c) {
    skip_ws();
    if (peek() == c) {
      get();
      return true;
    }
    return false;
  }

  void expect(char c, const std::string& what) {
    if (!accept(c)) fail("expected '" + std::string(1, c) + "' " + what);
  }

  NodePtr parse_expression() {
    NodePtr lhs = parse_term();
    for (;;) {
      skip_ws();
      if (accept('+')) {
        lhs = make_add(lhs, parse_term());
      } else if (accept('-')) {
        lhs = make_sub(lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      skip_ws();
      if (accept('*')) {
        lhs = make_mul(lhs, parse_unary());
      } else if (accept('/')) {
        lhs = make_div(lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    if (accept('-')) return make_neg(parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    skip_ws();
    if (accept('^')) return make_pow(base, parse_unary());
    return base;
  }

  NodePtr parse_primary() {
    skip_ws();
    char c = peek();
    if (c == '\0') fail("unexpected end of expression");
    if (c == '(') {
      get();
      NodePtr inner = parse_expression();
      expect(')', "to close parenthesis");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  NodePtr parse_number() {
    size_t start = pos;
    while (pos < text.size() &&
           (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.'))
      get();
    if (pos < text.size() && (peek() == 'e' || peek() == 'E')) {
      size_t mark = pos;
      int mark_col = col;
      get();
      if (peek() == '+' || peek() == '-') get();
      if (std::isdigit(static_cast<unsigned char>(peek()))) {
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(peek()))) get();
      } else {
        pos = mark;  // bare 'e' belongs to an identifier that follows
        col = mark_col;
      }
    }
    std::string tok = text.substr(start, pos - start);
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) fail("malformed number '" + tok + "'");
    return number(v);
  }

  NodePtr parse_identifier() {
    int id_line = line, id_col = col;
    size_t start = pos;
    while (pos < text.size() &&
           (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_'))
      get();
    std::string name = text.substr(start, pos - start);
    skip_ws();

    static const std::map<std::string, Slot> indexed = {
        {"x", Slot::X}, {"u", Slot::U}, {"p", Slot::P}, {"x0", Slot::X0}, {"xf", Slot::XF}};
    if (auto it = indexed.find(name); it != indexed.end()) {
      if (peek() != '[')
        throw SyntaxError("expected '[' after '" + name + "'", id_line, id_col);
      get();
      skip_ws();
      size_t dstart = pos;
      while (pos < text.size() && std::isdigit(static_cast<unsigned char>(peek()))) get();
      if (pos == dstart) fail("expected index after '" + name + "['");
      int index = std::atoi(text.substr(dstart, pos - dstart).c_str());
      expect(']', "to close index");
      return make_var(it->second, index);
    }
    if (name == "t") return make_var(Slot::T, 0);
    if (name == "t0") return make_var(Slot::T0, 0);
    if (name == "tf") return make_var(Slot::TF, 0);

    static const std::vector<std::string> funcs = {"sin", "cos", "tan",  "exp",
                                                   "log", "sqrt", "abs", "atan2"};
    bool is_func = std::find(funcs.begin(), funcs.end(), name) != funcs.end();
    if (peek() == '(') {
      if (!is_func)
        throw SyntaxError("unknown function '" + name + "'", id_line, id_col);
      get();
      std::vector<NodePtr> args;
      args.push_back(parse_expression());
      while (accept(',')) args.push_back(parse_expression());
      expect(')', "to close argument list of " + name);
      size_t want = name == "atan2" ? 2 : 1;
      if (args.size() != want)
        throw SyntaxError(name + " takes " + std::to_string(want) + " argument(s)",
                          id_line, id_col);
      return make_call(name, std::move(args));
    }
    if (is_func)
      throw SyntaxError("expected '(' after function '" + name + "'", id_line, id_col);
    return make_var(Slot::Constant, 0, name);
  }
};

double lookup(const Env& env, const Node& n) {
  auto idx = [&](const double* base, int count, const char* what) {
    if (base == nullptr || n.index < 0 || n.index >= count)
      throw EvalError(std::string(what) + "[" + std::to_string(n.index) +
                      "] is not available in this context");
    return base[n.index];
  };
  switch (n.slot) {
    case Slot::X: return idx(env.x, env.nx, "x");
    case Slot::U: return idx(env.u, env.nu, "u");
    case Slot::P: return idx(env.p, env.np, "p");
    case Slot::X0: return idx(env.x0, env.x0 ? env.nx : 0, "x0");
    case Slot::XF: return idx(env.xf, env.xf ? env.nx : 0, "xf");
    case Slot::T: return env.t;
    case Slot::T0: return env.t0;
    case Slot::TF: return env.tf;
    case Slot::Constant: {
      if (env.constants) {
        auto it = env.constants->find(n.name);
        if (it != env.constants->end()) return it->second;
      }
      throw EvalError("unknown constant '" + n.name + "'");
    }
  }
  throw EvalError("corrupt expression node");
}

void warn(std::vector<Diagnostic>* warnings, const std::string& func, double arg) {
  if (!warnings) return;
  std::ostringstream os;
  os << func << " evaluated outside its domain (argument " << arg << ")";
  warnings->push_back({Severity::Warning, "domain_" + func, os.str()});
}

}  // namespace

NodePtr number(double v) {
  Node n;
  n.kind = Kind::Number;
  n.number = v;
  return make(std::move(n));
}

NodePtr parse(const std::string& text) {
  Parser p(text);
  NodePtr e = p.parse_expression();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("unexpected trailing input");
  return e;
}

double eval(const NodePtr& n, const Env& env, std::vector<Diagnostic>* warnings) {
  switch (n->kind) {
    case Kind::Number: return n->number;
    case Kind::Var: return lookup(env, *n);
    case Kind::Neg: return -eval(n->args[0], env, warnings);
    case Kind::Add: return eval(n->args[0], env, warnings) + eval(n->args[1], env, warnings);
    case Kind::Sub: return eval(n->args[0], env, warnings) - eval(n->args[1], env, warnings);
    case Kind::Mul: return eval(n->args[0], env, warnings) * eval(n->args[1], env, warnings);
    case Kind::Div: return eval(n->args[0], env, warnings) / eval(n->args[1], env, warnings);
    case Kind::Pow:
      return std::pow(eval(n->args[0], env, warnings), eval(n->args[1], env, warnings));
    case Kind::Call: {
      double a = eval(n->args[0], env, warnings);
      if (n->name == "sin") return std::sin(a);
      if (n->name == "cos") return std::cos(a);
      if (n->name == "tan") return std::tan(a);
      if (n->name == "exp") return std::exp(a);
      if (n->name == "abs") return std::abs(a);
      if (n->name == "log") {
        if (a <= 0.0) {
          warn(warnings, "log", a);
          return std::numeric_limits<double>::quiet_NaN();
        }
        return std::log(a);
      }
      if (n->name == "sqrt") {
        if (a < 0.0) {
          warn(warnings, "sqrt", a);
          return std::numeric_limits<double>::quiet_NaN();
        }
        return std::sqrt(a);
      }
      if (n->name == "atan2") {
        double b = eval(n->args[1], env, warnings);
        return std::atan2(a, b);
      }
      throw EvalError("unknown function '" + n->name + "'");
    }
  }
  throw EvalError("corrupt expression node");
}

NodePtr diff(const NodePtr& n, Slot slot, int index) {
  switch (n->kind) {
    case Kind::Number: return number(0.0);
    case Kind::Var:
      return number(n->slot == slot && n->index == index ? 1.0 : 0.0);
    case Kind::Neg: return make_neg(diff(n->args[0], slot, index));
    case Kind::Add: return make_add(diff(n->args[0], slot, index), diff(n->args[1], slot, index));
    case Kind::Sub: return make_sub(diff(n->args[0], slot, index), diff(n->args[1], slot, index));
    case Kind::Mul: {
      const NodePtr &a = n->args[0], &b = n->args[1];
      return make_add(make_mul(diff(a, slot, index), b), make_mul(a, diff(b, slot, index)));
    }
    case Kind::Div: {
      const NodePtr &a = n->args[0], &b = n->args[1];
      NodePtr num = make_sub(make_mul(diff(a, slot, index), b), make_mul(a, diff(b, slot, index)));
      return make_div(num, make_mul(b, b));
    }
    case Kind::Pow: {
      const NodePtr &a = n->args[0], &b = n->args[1];
      NodePtr da = diff(a, slot, index);
      if (b->kind == Kind::Number) {
        // d a^c = c a^(c-1) a'
        return make_mul(make_mul(b, make_pow(a, number(b->number - 1.0))), da);
      }
      // d a^b = a^b (b' log a + b a'/a)
      NodePtr db = diff(b, slot, index);
      NodePtr term = make_add(make_mul(db, make_call("log", {a})), make_div(make_mul(b, da), a));
      return make_mul(make_pow(a, b), term);
    }
    case Kind::Call: {
      const NodePtr& g = n->args[0];
      NodePtr dg = diff(g, slot, index);
      if (n->name == "sin") return make_mul(make_call("cos", {g}), dg);
      if (n->name == "cos") return make_neg(make_mul(make_call("sin", {g}), dg));
      if (n->name == "tan") {
        NodePtr sec2 = make_div(number(1.0), make_pow(make_call("cos", {g}), number(2.0)));
        return make_mul(sec2, dg);
      }
      if (n->name == "exp") return make_mul(make_call("exp", {g}), dg);
      if (n->name == "log") return make_div(dg, g);
      if (n->name == "sqrt")
        return make_div(dg, make_mul(number(2.0), make_call("sqrt", {g})));
      if (n->name == "abs") return make_mul(make_div(g, make_call("abs", {g})), dg);
      if (n->name == "atan2") {
        const NodePtr& h = n->args[1];
        NodePtr dh = diff(h, slot, index);
        NodePtr num = make_sub(make_mul(dg, h), make_mul(g, dh));
        NodePtr den = make_add(make_mul(g, g), make_mul(h, h));
        return make_div(num, den);
      }
      throw EvalError("unknown function '" + n->name + "'");
    }
  }
  throw EvalError("corrupt expression node");
}

namespace {

int precedence(const Node& n) {
  switch (n.kind) {
    case Kind::Add:
    case Kind::Sub: return 1;
    case Kind::Mul:
    case Kind::Div: return 2;
    case Kind::Neg: return 3;
    case Kind::Pow: return 4;
    default: return 5;
  }
}

void print(const NodePtr& n, std::ostream& os) {
  auto child = [&](const NodePtr& c, bool needs_paren) {
    if (needs_paren) os << '(';
    print(c, os);
    if (needs_paren) os << ')';
  };
  switch (n->kind) {
    case Kind::Number: {
      std::ostringstream tmp;
      tmp.precision(17);
      tmp << n->number;
      std::string s = tmp.str();
      if (n->number < 0) {
        os << '(' << s << ')';
      } else {
        os << s;
      }
      return;
    }
    case Kind::Var:
      switch (n->slot) {
        case Slot::X: os << "x[" << n->index << "]"; return;
        case Slot::U: os << "u[" << n->index << "]"; return;
        case Slot::P: os << "p[" << n->index << "]"; return;
        case Slot::X0: os << "x0[" << n->index << "]"; return;
        case Slot::XF: os << "xf[" << n->index << "]"; return;
        case Slot::T: os << "t"; return;
        case Slot::T0: os << "t0"; return;
        case Slot::TF: os << "tf"; return;
        case Slot::Constant: os << n->name; return;
      }
      return;
    case Kind::Neg:
      os << '-';
      child(n->args[0], precedence(*n->args[0]) < 3);
      return;
    case Kind::Add:
      child(n->args[0], precedence(*n->args[0]) < 1);
      os << " + ";
      child(n->args[1], precedence(*n->args[1]) < 1);
      return;
    case Kind::Sub:
      child(n->args[0], precedence(*n->args[0]) < 1);
      os << " - ";
      child(n->args[1], precedence(*n->args[1]) <= 1);
      return;
    case Kind::Mul:
      child(n->args[0], precedence(*n->args[0]) < 2);
      os << "*";
      child(n->args[1], precedence(*n->args[1]) < 2);
      return;
    case Kind::Div:
      child(n->args[0], precedence(*n->args[0]) < 2);
      os << "/";
      child(n->args[1], precedence(*n->args[1]) <= 2);
      return;
    case Kind::Pow:
      child(n->args[0], precedence(*n->args[0]) <= 4);
      os << "^";
      child(n->args[1], precedence(*n->args[1]) < 3);
      return;
    case Kind::Call: {
      os << n->name << '(';
      for (size_t i = 0; i < n->args.size(); ++i) {
        if (i) os << ", ";
        print(n->args[i], os);
      }
      os << ')';
      return;
    }
  }
}

}  // namespace

std::string to_string(const NodePtr& n) {
  std::ostringstream os;
  print(n, os);
  return os.str();
}

bool equal(const NodePtr& a, const NodePtr& b) {
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case Kind::Number: return a->number == b->number;
    case Kind::Var:
      return a->slot == b->slot && a->index == b->index && a->name == b->name;
    case Kind::Call:
      if (a->name != b->name) return false;
      [[fallthrough]];
    default:
      if (a->args.size() != b->args.size()) return false;
      for (size_t i = 0; i < a->args.size(); ++i)
        if (!equal(a->args[i], b->args[i])) return false;
      return true;
  }
}

bool depends_on(const NodePtr& n, Slot slot) {
  if (n->kind == Kind::Var) return n->slot == slot;
  for (const auto& a : n->args)
    if (depends_on(a, slot)) return true;
  return false;
}

void collect_constants(const NodePtr& n, std::vector<std::string>& out) {
  if (n->kind == Kind::Var && n->slot == Slot::Constant) out.push_back(n->name);
  for (const auto& a : n->args) collect_constants(a, out);
}

}  // namespace psopt::expr
