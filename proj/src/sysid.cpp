#include "kraft/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace kraft::sysid {
namespace {

constexpr std::size_t kStateDim = 4;
constexpr std::size_t kControlDim = 2;
constexpr std::size_t kParamDim = 3;
constexpr double kBoundaryEps = 1e-9;

using Eigen::VectorXd;

State state_from(const double* v) { return {v[0], v[1], v[2], v[3]}; }

void state_to(const State& s, double* v) {
  v[0] = s.x;
  v[1] = s.y;
  v[2] = s.theta;
  v[3] = s.v;
}

ModelParams params_from(const double* v) { return {v[0], v[1], v[2]}; }

bool params_valid(const ModelParams& p) {
  return p.wheelbase > 1e-6 && p.v_delta > 1e-6 && std::isfinite(p.phi_diff);
}

// Variable layout inside the packed vector.
struct Layout {
  std::size_t nodes = 0;
  std::size_t segments = 0;

  [[nodiscard]] std::size_t state(std::size_t i) const { return i * kStateDim; }
  [[nodiscard]] std::size_t control(std::size_t i) const {
    return nodes * kStateDim + i * kControlDim;
  }
  [[nodiscard]] std::size_t params() const {
    return nodes * kStateDim + segments * kControlDim;
  }
  [[nodiscard]] std::size_t size() const { return params() + kParamDim; }
};

Layout layout_of(const FactorGraph& g) {
  return {g.state_node_count(), g.plan.size()};
}

VectorXd pack(const FactorGraph& g, const Assignment& a) {
  const Layout lay = layout_of(g);
  if (a.states.size() != lay.nodes || a.controls.size() != lay.segments) {
    throw SysIdError("assignment does not cover every graph node");
  }
  VectorXd x(lay.size());
  for (std::size_t i = 0; i < lay.nodes; ++i) {
    state_to(a.states[i], x.data() + lay.state(i));
  }
  for (std::size_t i = 0; i < lay.segments; ++i) {
    x[lay.control(i)] = a.controls[i].nu;
    x[lay.control(i) + 1] = a.controls[i].phi;
  }
  x[lay.params()] = a.params.wheelbase;
  x[lay.params() + 1] = a.params.phi_diff;
  x[lay.params() + 2] = a.params.v_delta;
  return x;
}

Assignment unpack(const FactorGraph& g, const VectorXd& x) {
  const Layout lay = layout_of(g);
  Assignment a;
  a.states.reserve(lay.nodes);
  for (std::size_t i = 0; i < lay.nodes; ++i) {
    a.states.push_back(state_from(x.data() + lay.state(i)));
  }
  for (std::size_t i = 0; i < lay.segments; ++i) {
    a.controls.push_back(Control{x[lay.control(i)], x[lay.control(i) + 1],
                                 g.plan[i].control.brake});
  }
  a.params = params_from(x.data() + lay.params());
  return a;
}

State predict_at(const FactorGraph& g, const State& a, const State& b,
                 const Control& u, double dt, double eps, const ModelParams& p) {
  if (eps == 0.0) return a;
  if (g.options.interpolation == Interpolation::kLinear) {
    return interpolate(a, b, eps);
  }
  // The backward estimate from b reuses the forward flow: b shifted by the
  // displacement between the intermediate and full-segment predictions.
  // When the nodes satisfy the dynamics it coincides with fwd bit for bit.
  const State fwd = propagate(a, u, eps * dt, p, g.options.limits);
  const State full = propagate(a, u, dt, p, g.options.limits);
  const State bwd{b.x + (fwd.x - full.x), b.y + (fwd.y - full.y),
                  wrap_angle(b.theta + angle_diff(fwd.theta, full.theta)),
                  b.v + (fwd.v - full.v)};
  return interpolate(fwd, bwd, eps);
}

// One residual block plus the packed-vector indices it depends on.
struct Block {
  std::vector<std::size_t> vars;
  std::function<VectorXd(const VectorXd& local)> eval;
  std::size_t row = 0;
  std::size_t dim = 0;
};

std::vector<Block> make_blocks(const FactorGraph& g) {
  const Layout lay = layout_of(g);
  std::vector<Block> blocks;
  std::size_t row = 0;
  auto add = [&](std::vector<std::size_t> vars, std::size_t dim,
                 std::function<VectorXd(const VectorXd&)> eval) {
    blocks.push_back({std::move(vars), std::move(eval), row, dim});
    row += dim;
  };
  auto range = [](std::size_t start, std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = start + i;
    return v;
  };
  auto concat = [](std::vector<std::size_t> a, const std::vector<std::size_t>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  const double su = g.options.control_sigma;
  for (std::size_t i = 0; i < lay.segments; ++i) {
    const Control applied = g.plan[i].control;
    add(range(lay.control(i), kControlDim), kControlDim,
        [applied, su](const VectorXd& l) {
          VectorXd r(2);
          r << (l[0] - applied.nu) / su, (l[1] - applied.phi) / su;
          return r;
        });
  }

  const double sd = g.options.dynamics_sigma;
  for (std::size_t i = 0; i < lay.segments; ++i) {
    const double dt = g.plan[i].dt;
    const bool brake = g.plan[i].control.brake;
    const ControlLimits limits = g.options.limits;
    auto vars = concat(concat(concat(range(lay.state(i), kStateDim),
                                     range(lay.state(i + 1), kStateDim)),
                              range(lay.control(i), kControlDim)),
                       range(lay.params(), kParamDim));
    add(std::move(vars), kStateDim, [dt, brake, limits, sd](const VectorXd& l) {
      const State from = state_from(l.data());
      const State to = state_from(l.data() + 4);
      const Control u{l[8], l[9], brake};
      const ModelParams p = params_from(l.data() + 10);
      const State pred = propagate(from, u, dt, p, limits);
      VectorXd r(4);
      r << (to.x - pred.x) / sd, (to.y - pred.y) / sd,
          angle_diff(to.theta, pred.theta) / sd, (to.v - pred.v) / sd;
      return r;
    });
  }

  for (const auto& f : g.estimation_factors) {
    const ObservationRecord z = g.observations[f.observation];
    if (f.eps == 0.0) {
      add(range(lay.state(f.node), kStateDim), 3, [z](const VectorXd& l) {
        VectorXd r(3);
        r << (z.x - l[0]) / z.sigma[0], (z.y - l[1]) / z.sigma[1],
            angle_diff(z.theta, l[2]) / z.sigma[2];
        return r;
      });
      continue;
    }
    const std::size_t i = f.node;
    const double dt = g.plan[i].dt;
    const double eps = f.eps;
    const bool brake = g.plan[i].control.brake;
    auto vars = concat(concat(concat(range(lay.state(i), kStateDim),
                                     range(lay.state(i + 1), kStateDim)),
                              range(lay.control(i), kControlDim)),
                       range(lay.params(), kParamDim));
    add(std::move(vars), 3, [&g, z, dt, eps, brake](const VectorXd& l) {
      const State a = state_from(l.data());
      const State b = state_from(l.data() + 4);
      const Control u{l[8], l[9], brake};
      const ModelParams p = params_from(l.data() + 10);
      const State pred = predict_at(g, a, b, u, dt, eps, p);
      VectorXd r(3);
      r << (z.x - pred.x) / z.sigma[0], (z.y - pred.y) / z.sigma[1],
          angle_diff(z.theta, pred.theta) / z.sigma[2];
      return r;
    });
  }

  const double w = g.options.prior_weight;
  const ModelParams mean = g.prior_mean;
  add(range(lay.params(), kParamDim), kParamDim, [w, mean](const VectorXd& l) {
    VectorXd r(3);
    r << w * (l[0] - mean.wheelbase), w * (l[1] - mean.phi_diff),
        w * (l[2] - mean.v_delta);
    return r;
  });
  return blocks;
}

VectorXd gather(const Block& b, const VectorXd& x) {
  VectorXd local(static_cast<Eigen::Index>(b.vars.size()));
  for (std::size_t k = 0; k < b.vars.size(); ++k) {
    local[static_cast<Eigen::Index>(k)] = x[static_cast<Eigen::Index>(b.vars[k])];
  }
  return local;
}

VectorXd evaluate(const std::vector<Block>& blocks, std::size_t dim,
                  const VectorXd& x) {
  VectorXd r(static_cast<Eigen::Index>(dim));
  for (const auto& b : blocks) {
    r.segment(static_cast<Eigen::Index>(b.row), static_cast<Eigen::Index>(b.dim)) =
        b.eval(gather(b, x));
  }
  return r;
}

Eigen::SparseMatrix<double> jacobian(const std::vector<Block>& blocks,
                                     std::size_t rows, std::size_t cols,
                                     const VectorXd& x, double step) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (const auto& b : blocks) {
    VectorXd local = gather(b, x);
    for (std::size_t k = 0; k < b.vars.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double orig = local[kk];
      local[kk] = orig + step;
      const VectorXd plus = b.eval(local);
      local[kk] = orig - step;
      const VectorXd minus = b.eval(local);
      local[kk] = orig;
      const VectorXd col = (plus - minus) / (2.0 * step);
      for (Eigen::Index r = 0; r < col.size(); ++r) {
        if (col[r] != 0.0) {
          triplets.emplace_back(static_cast<int>(b.row) + static_cast<int>(r),
                                static_cast<int>(b.vars[k]), col[r]);
        }
      }
    }
  }
  Eigen::SparseMatrix<double> j(static_cast<Eigen::Index>(rows),
                                static_cast<Eigen::Index>(cols));
  j.setFromTriplets(triplets.begin(), triplets.end());
  return j;
}

}  // namespace

ObservationOutOfHorizon::ObservationOutOfHorizon(std::size_t idx, double t)
    : SysIdError("observation " + std::to_string(idx) + " at t=" +
                 std::to_string(t) + " lies outside the plan horizon"),
      index(idx) {}

SolverDiverged::SolverDiverged(const std::string& what,
                               std::vector<IterationRecord> iterations)
    : SysIdError(what), trace(std::move(iterations)) {}

std::size_t FactorGraph::residual_dimension() const {
  return plan.size() * (kControlDim + kStateDim) + estimation_factors.size() * 3 +
         kParamDim;
}

std::size_t FactorGraph::variable_dimension() const {
  return layout_of(*this).size();
}

FactorGraph build_graph(const Plan& plan,
                        const std::vector<ObservationRecord>& observations,
                        const ModelParams& initial_params, double t0,
                        GraphOptions options) {
  if (observations.empty()) {
    throw SysIdError("factor graph needs at least one observation");
  }
  FactorGraph g;
  g.plan = plan;
  g.t0 = t0;
  g.prior_mean = initial_params;
  g.options = options;
  g.observations = observations;

  g.node_times.push_back(t0);
  for (const auto& seg : plan.segments()) {
    g.node_times.push_back(g.node_times.back() + seg.dt);
  }
  const double t_end = g.node_times.back();

  for (std::size_t k = 0; k < observations.size(); ++k) {
    const ObservationRecord& z = observations[k];
    if (!(z.t >= t0 - kBoundaryEps && z.t <= t_end + kBoundaryEps)) {
      throw ObservationOutOfHorizon(k, z.t);
    }
    for (double s : z.sigma) {
      if (!(s > 0.0)) throw SysIdError("observation sigma must be positive");
    }
    EstimationFactor f;
    f.observation = k;
    if (z.t >= t_end - kBoundaryEps) {
      f.node = plan.size();
    } else {
      const auto it =
          std::upper_bound(g.node_times.begin(), g.node_times.end(), z.t);
      const std::size_t i =
          it == g.node_times.begin()
              ? 0
              : static_cast<std::size_t>(it - g.node_times.begin()) - 1;
      const double eps = (z.t - g.node_times[i]) / plan[i].dt;
      if (eps <= kBoundaryEps) {
        f.node = i;
      } else if (eps >= 1.0 - kBoundaryEps) {
        f.node = i + 1;
      } else {
        f.node = i;
        f.eps = eps;
      }
    }
    g.estimation_factors.push_back(f);
  }
  return g;
}

Eigen::VectorXd residuals(const FactorGraph& g, const Assignment& a) {
  return evaluate(make_blocks(g), g.residual_dimension(), pack(g, a));
}

double cost(const FactorGraph& g, const Assignment& a) {
  return 0.5 * residuals(g, a).squaredNorm();
}

Assignment initial_guess(const ObservationRecord& first, const Plan& plan,
                         const ModelParams& initial_params,
                         double initial_speed, const ControlLimits& limits) {
  Assignment a;
  a.params = initial_params;
  State s{first.x, first.y, first.theta, initial_speed};
  a.states.push_back(s);
  for (const auto& seg : plan.segments()) {
    s = propagate(s, seg.control, seg.dt, initial_params, limits);
    a.states.push_back(s);
    a.controls.push_back(seg.control);
  }
  return a;
}

Assignment initial_guess(const FactorGraph& g, double initial_speed) {
  const auto first = std::min_element(
      g.observations.begin(), g.observations.end(),
      [](const auto& a, const auto& b) { return a.t < b.t; });
  return initial_guess(*first, g.plan, g.prior_mean, initial_speed,
                       g.options.limits);
}

namespace {

SolveResult solve_stage(const FactorGraph& g, const Assignment& init,
                        const SolverOptions& options) {
  const auto blocks = make_blocks(g);
  const std::size_t rows = g.residual_dimension();
  const Layout lay = layout_of(g);
  const std::size_t cols = lay.size();

  SolveResult result;
  VectorXd x = pack(g, init);
  VectorXd r = evaluate(blocks, rows, x);
  double c = 0.5 * r.squaredNorm();
  result.initial_cost = c;
  if (!std::isfinite(c)) {
    result.trace.push_back({0, c, options.initial_lambda, false});
    throw SolverDiverged("initial cost is not finite", result.trace);
  }

  double lambda = options.initial_lambda;
  result.termination = Termination::kMaxIterations;
  int iteration = 0;
  for (; iteration < options.max_iterations; ++iteration) {
    const Eigen::SparseMatrix<double> j =
        jacobian(blocks, rows, cols, x, options.finite_difference_step);
    const VectorXd grad = j.transpose() * r;
    if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance || c == 0.0) {
      result.termination = Termination::kGradient;
      break;
    }
    Eigen::SparseMatrix<double> h = j.transpose() * j;
    const VectorXd diag = h.diagonal();

    bool accepted = false;
    bool stop = false;
    while (!accepted) {
      Eigen::SparseMatrix<double> damped = h;
      for (Eigen::Index k = 0; k < damped.rows(); ++k) {
        damped.coeffRef(k, k) += lambda * std::max(diag[k], 1e-12);
      }
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(damped);
      bool ok = ldlt.info() == Eigen::Success;
      VectorXd x_new;
      double c_new = std::numeric_limits<double>::infinity();
      VectorXd r_new;
      if (ok) {
        const VectorXd delta = ldlt.solve(-grad);
        x_new = x + delta;
        if (params_valid(params_from(x_new.data() + lay.params()))) {
          r_new = evaluate(blocks, rows, x_new);
          c_new = 0.5 * r_new.squaredNorm();
          if (std::isnan(c_new)) {
            result.trace.push_back({iteration + 1, c_new, lambda, false});
            throw SolverDiverged("cost became NaN at iteration " +
                                     std::to_string(iteration + 1),
                                 result.trace);
          }
        }
      }
      if (ok && c_new < c) {
        const double rel = (c - c_new) / c;
        x = std::move(x_new);
        r = std::move(r_new);
        c = c_new;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        result.trace.push_back({iteration + 1, c, lambda, true});
        if (rel < options.relative_cost_tolerance) {
          result.termination = Termination::kRelativeCost;
          stop = true;
        }
      } else {
        lambda *= 10.0;
        result.trace.push_back({iteration + 1, c_new, lambda, false});
        if (lambda > 1e16) {
          result.termination = Termination::kStalled;
          stop = true;
          break;
        }
      }
    }
    if (stop) {
      ++iteration;
      break;
    }
  }

  result.iterations = iteration;
  result.final_cost = c;
  result.assignment = unpack(g, x);
  result.params = result.assignment.params;
  const Eigen::SparseMatrix<double> j =
      jacobian(blocks, rows, cols, x, options.finite_difference_step);
  const Eigen::SparseMatrix<double> h = j.transpose() * j;
  for (std::size_t k = 0; k < kParamDim; ++k) {
    const auto idx = static_cast<Eigen::Index>(lay.params() + k);
    result.param_information[k] = h.coeff(idx, idx);
  }
  return result;
}

}  // namespace

SolveResult solve(const FactorGraph& g, const Assignment& init,
                  const SolverOptions& options) {
  Assignment start = init;
  std::vector<IterationRecord> trace;
  int iterations = 0;
  for (double scale : options.relaxation) {
    FactorGraph relaxed = g;
    relaxed.options.dynamics_sigma *= scale;
    relaxed.options.control_sigma *= scale;
    SolverOptions stage = options;
    stage.max_iterations = options.relaxed_iterations;
    const SolveResult r = solve_stage(relaxed, start, stage);
    start = r.assignment;
    iterations += r.iterations;
    trace.insert(trace.end(), r.trace.begin(), r.trace.end());
  }
  SolveResult result = solve_stage(g, start, options);
  if (!options.relaxation.empty()) {
    result.initial_cost = cost(g, init);
    result.iterations += iterations;
    trace.insert(trace.end(), result.trace.begin(), result.trace.end());
    result.trace = std::move(trace);
  }
  return result;
}

}  // namespace kraft::sysid
