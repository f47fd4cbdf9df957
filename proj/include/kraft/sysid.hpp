// Offline identification of the model parameters from a logged plan and
// asynchronous pose observations, posed as nonlinear least squares over a
// chain-structured factor graph and solved with Levenberg-Marquardt.
//
// Unknowns: one State per control boundary X_0..X_N, the applied controls
// U_0..U_{N-1} and the parameter vector. Factors:
//   control prior    U_i - u_i                          (whitened by sigma_u)
//   dynamics         X_{i+1} - propagate(X_i, U_i, dt)   (whitened by sigma_dyn)
//   estimation       Z - x(t_i + eps * dt)               (whitened by obs sigma)
//   parameter prior  w * (rho - rho_0)
// Angular residual components are shortest-arc.

#ifndef KRAFT_SYSID_HPP_
#define KRAFT_SYSID_HPP_

#include <array>
#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kraft/model.hpp"

namespace kraft::sysid {

struct ObservationRecord {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  std::array<double, 3> sigma{0.01, 0.01, 0.01};
};

// How an estimation factor predicts the state at fraction eps of a segment.
enum class Interpolation {
  // Linear blend of X_i and X_{i+1}.
  kLinear,
  // (1 - eps) * forward(X_i, eps dt) + eps * backward(X_{i+1}), where the
  // backward estimate shifts X_{i+1} by forward(X_i, eps dt) - forward(X_i, dt).
  // Still an interpolation of the two bracketing nodes, but exact whenever
  // the nodes satisfy the dynamics.
  kDynamics,
};

struct GraphOptions {
  double prior_weight = 1e-4;
  double dynamics_sigma = 1e-3;
  double control_sigma = 1e-3;
  Interpolation interpolation = Interpolation::kDynamics;
  ControlLimits limits;
};

struct EstimationFactor {
  std::size_t observation = 0;  // index into FactorGraph::observations
  std::size_t node = 0;         // X_node, and X_{node+1} when eps > 0
  double eps = 0.0;             // in [0, 1)
};

struct FactorGraph {
  Plan plan;
  double t0 = 0.0;
  std::vector<double> node_times;  // N + 1 boundaries
  std::vector<ObservationRecord> observations;
  std::vector<EstimationFactor> estimation_factors;
  ModelParams prior_mean;
  GraphOptions options;

  [[nodiscard]] std::size_t state_node_count() const { return node_times.size(); }
  [[nodiscard]] std::size_t dynamics_factor_count() const { return plan.size(); }
  [[nodiscard]] std::size_t control_prior_count() const { return plan.size(); }
  [[nodiscard]] std::size_t factor_count() const {
    return dynamics_factor_count() + control_prior_count() +
           estimation_factors.size() + 1;
  }
  [[nodiscard]] std::size_t residual_dimension() const;
  [[nodiscard]] std::size_t variable_dimension() const;
};

struct Assignment {
  std::vector<State> states;
  std::vector<Control> controls;
  ModelParams params;
};

class SysIdError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ObservationOutOfHorizon : public SysIdError {
 public:
  ObservationOutOfHorizon(std::size_t index, double t);
  std::size_t index;
};

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;
  double lambda = 0.0;
  bool accepted = false;
};

class SolverDiverged : public SysIdError {
 public:
  SolverDiverged(const std::string& what, std::vector<IterationRecord> trace);
  std::vector<IterationRecord> trace;
};

// Throws ObservationOutOfHorizon (naming the offending observation index)
// when an observation falls outside [t0, t0 + plan.duration()].
FactorGraph build_graph(const Plan& plan,
                        const std::vector<ObservationRecord>& observations,
                        const ModelParams& initial_params, double t0 = 0.0,
                        GraphOptions options = {});

// Block order: control priors, dynamics, estimation, parameter prior.
Eigen::VectorXd residuals(const FactorGraph& g, const Assignment& a);

// Forward rollout of the plan from the first observation's pose at rho_0.
Assignment initial_guess(const ObservationRecord& first, const Plan& plan,
                         const ModelParams& initial_params,
                         double initial_speed = 0.0,
                         const ControlLimits& limits = {});
Assignment initial_guess(const FactorGraph& g, double initial_speed = 0.0);

struct SolverOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-8;
  double relative_cost_tolerance = 1e-10;
  double initial_lambda = 1e-3;
  double finite_difference_step = 1e-6;
  // Continuation: before the final solve, run short solves with the dynamics
  // and control-prior sigmas multiplied by each factor in turn. Loose
  // dynamics let the states follow the observations first, which keeps a
  // distant parameter guess out of poor local minima.
  std::vector<double> relaxation{100.0, 10.0};
  int relaxed_iterations = 25;
};

enum class Termination { kGradient, kRelativeCost, kMaxIterations, kStalled };

struct SolveResult {
  ModelParams params;
  Assignment assignment;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  Termination termination = Termination::kMaxIterations;
  // Diagonal of J^T J for (wheelbase, phi_diff, v_delta). A near-zero entry
  // flags a weakly identified direction.
  std::array<double, 3> param_information{};
  std::vector<IterationRecord> trace;
};

// Minimises 0.5 * |residuals|^2 with central finite-difference Jacobians.
// `iterations` and `trace` cover every continuation stage.
// Throws SolverDiverged when the cost becomes non-finite.
SolveResult solve(const FactorGraph& g, const Assignment& init,
                  const SolverOptions& options = {});

double cost(const FactorGraph& g, const Assignment& a);

// JSONL training log, one record per line:
//   {"t": 0.0, "kind": "control", "nu": 1.0, "phi": 0.1, "dt": 0.5}
//   {"t": 0.1, "kind": "obs", "x": 0.0, "y": 0.0, "theta": 0.0,
//    "sigma": [0.01, 0.01, 0.01]}
// Control records must be contiguous in time; the first one defines t0.
struct TrainingLog {
  double t0 = 0.0;
  Plan plan;
  std::vector<ObservationRecord> observations;
};

// Throws SysIdError naming the offending line.
TrainingLog read_log(std::istream& in);
void write_log(std::ostream& out, const TrainingLog& log);

}  // namespace kraft::sysid

#endif  // KRAFT_SYSID_HPP_
