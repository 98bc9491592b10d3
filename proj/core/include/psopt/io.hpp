#pragma once

#include <string>

#include "psopt/ocp.hpp"
#include "psopt/scale.hpp"
#include "psopt/solver.hpp"
#include "psopt/vnv.hpp"

// Run artifact writers. All CSV output is comma separated with one header
// row, 17 significant digits and LF line endings. Write failures throw
// std::runtime_error naming the path.

namespace psopt {

// Columns: t, x_0.., u_0.., lambda_0.., H, mu_0..
void write_solution_csv(const std::string& path, const OcpDefinition& ocp,
                        const SolutionBundle& s);

// Columns: k, value, lower, upper, nu (one row per event).
void write_events_csv(const std::string& path, const OcpDefinition& ocp,
                      const SolutionBundle& s);

void write_vnv_text(const std::string& path, const VnvReport& report);

// Plot trace: t, H, lambda_0.., mu_0.. and a 0/1 flag per control channel
// set on the node nearest each detected switch.
void write_vnv_trace_csv(const std::string& path, const OcpDefinition& ocp,
                         const SolutionBundle& s, const VnvReport& report);

// Full run report: problem echo, solver config, scaling map, diagnostics,
// iteration summary, result block and verification verdicts.
std::string make_run_json(const OcpDefinition& ocp, const SolverConfig& cfg,
                          const ScalingMap& map, const SolutionBundle& s,
                          const VnvReport* report);
void write_text_file(const std::string& path, const std::string& content);

// Structural check of a report produced by make_run_json: required fields
// present with the right types. Returns false and fills `why` on failure.
bool validate_run_json(const std::string& text, std::string* why);

// PSOPT_LOG environment override for the log level; falls back when unset or
// malformed.
int log_level_from_env(int fallback);

}  // namespace psopt
