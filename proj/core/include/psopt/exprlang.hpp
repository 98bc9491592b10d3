#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "psopt/types.hpp"

// Small expression language for defining problem functions in text form.
//
// Variables:  x[i], u[i], p[i]          path quantities
//             x0[i], xf[i], t0, tf      endpoint quantities
//             t                         running time
//             any other identifier      named constant, resolved at eval time
// Functions:  sin cos tan exp log sqrt abs atan2
// Operators:  + - * / ^ and unary minus.  ^ is right-associative and binds
//             tighter than unary minus, which binds tighter than * and /.

namespace psopt::expr {

enum class Slot { X, U, P, X0, XF, T, T0, TF, Constant };

enum class Kind { Number, Var, Neg, Add, Sub, Mul, Div, Pow, Call };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Kind kind = Kind::Number;
  double number = 0.0;                 // Kind::Number
  Slot slot = Slot::T;                 // Kind::Var
  int index = 0;                       // Kind::Var (indexed slots)
  std::string name;                    // Kind::Var (Slot::Constant), Kind::Call
  std::vector<NodePtr> args;           // operands
};

struct SyntaxError : std::runtime_error {
  int line = 0;
  int column = 0;
  SyntaxError(const std::string& msg, int line, int column);
};

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Env {
  const double* x = nullptr;
  int nx = 0;
  const double* u = nullptr;
  int nu = 0;
  const double* p = nullptr;
  int np = 0;
  const double* x0 = nullptr;
  const double* xf = nullptr;
  double t = 0.0, t0 = 0.0, tf = 0.0;
  const std::map<std::string, double>* constants = nullptr;
};

NodePtr parse(const std::string& text);
NodePtr number(double v);

// Evaluates the tree. Domain violations (log of a nonpositive value, sqrt of
// a negative value) yield NaN and, when `warnings` is given, a Diagnostic;
// they never throw. Unknown constants and out-of-range indices throw
// EvalError.
double eval(const NodePtr& n, const Env& env,
            std::vector<Diagnostic>* warnings = nullptr);

// Symbolic derivative with respect to slot[index]; constant subtrees fold.
NodePtr diff(const NodePtr& n, Slot slot, int index);

std::string to_string(const NodePtr& n);
bool equal(const NodePtr& a, const NodePtr& b);
bool depends_on(const NodePtr& n, Slot slot);

// Names of constants referenced anywhere in the tree (for load-time checks).
void collect_constants(const NodePtr& n, std::vector<std::string>& out);

}  // namespace psopt::expr
