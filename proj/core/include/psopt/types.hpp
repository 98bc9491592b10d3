#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace psopt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Exit classification of a solve. Mapped to process exit codes by the CLI
// (Converged=0, FeasibleOnly=2, Infeasible=3; usage/config errors are 1).
enum class SolveStatus {
  Converged,
  FeasibleOnly,
  Infeasible,
  SingularSystem,
  NonFinite,
};

const char* to_string(SolveStatus s);

enum class Severity { Info, Warning, Error };

// A structured finding from doctor checks, scaling reports or V&V.
struct Diagnostic {
  Severity severity = Severity::Info;
  std::string code;     // stable machine-readable tag, e.g. "degenerate_horizon"
  std::string message;  // human-readable detail
};

bool has_errors(const std::vector<Diagnostic>& diags);
std::string format_diagnostics(const std::vector<Diagnostic>& diags);

}  // namespace psopt
