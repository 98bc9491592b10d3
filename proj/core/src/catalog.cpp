#include <map>
#include <stdexcept>

#include "psopt/problem_file.hpp"

namespace psopt {
namespace {

const char kLq[] = R"(# Linear-quadratic test problem. Analytic optimum: u(t) = 1, x(t) = t,
# lambda(t) = -1, H = -1/2, cost 1/2.
name = lq

[dimensions]
states = 1
controls = 1

[cost]
running = 0.5 * u[0]^2

[dynamics]
f[0] = u[0]

[events]
e[0] = x0[0] in [0, 0]
e[1] = xf[0] in [1, 1]

[time]
t0 = 0
tf = 1

[search]
x[0] in [-2, 2]
u[0] in [-4, 4]
)";

const char kRobot[] = R"(# Minimum-time motion planning for a differential-drive robot between two
# tangent circular obstacles. The circles touch at (5, 0), so the corridor
# on the straight line from start to target pinches to a single point.
name = robot

[dimensions]
states = 3      # x, y, heading
controls = 2    # right and left wheel rates

[constants]
c = 1.0         # drive gain
ox = 5.0        # obstacle centers (ox, +-oy), radius r
oy = 1.1
r = 1.1

[cost]
endpoint = tf - t0

[dynamics]
f[0] = 0.5 * (u[0] + u[1]) * cos(x[2])
f[1] = 0.5 * (u[0] + u[1]) * sin(x[2])
f[2] = c * (u[0] - u[1])

[events]
e[0] = x0[0] in [0, 0]
e[1] = x0[1] in [0, 0]
e[2] = x0[2] in [0, 0]
e[3] = xf[0] in [10, 10]
e[4] = xf[1] in [0, 0]
e[5] = xf[2] in [0, 0]

[path]
h[0] = (x[0] - ox)^2 + (x[1] - oy)^2 - r^2 in [0, inf]
h[1] = (x[0] - ox)^2 + (x[1] + oy)^2 - r^2 in [0, inf]
h[2] = u[0] in [-1, 1]
h[3] = u[1] in [-1, 1]

[time]
t0 = 0
tf in [5, 25]

[search]
x[0] in [-2, 12]
x[1] in [-4, 4]
x[2] in [-3.2, 3.2]
u[0] in [-2, 2]
u[1] in [-2, 2]
)";

const std::map<std::string, std::string>& entries() {
  static const std::map<std::string, std::string> m = {{"lq", kLq}, {"robot", kRobot}};
  return m;
}

}  // namespace

std::vector<std::string> catalog_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : entries()) names.push_back(k);
  return names;
}

const std::string* catalog_text(const std::string& name) {
  auto it = entries().find(name);
  return it == entries().end() ? nullptr : &it->second;
}

LoadedProblem catalog_problem(const std::string& name) {
  const std::string* text = catalog_text(name);
  if (!text) throw std::runtime_error("unknown catalog entry '" + name + "'");
  return parse_problem_text(*text, "catalog:" + name);
}

}  // namespace psopt
