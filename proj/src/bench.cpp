#include "kraft/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace kraft {
namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw EnvironmentError(field + ": " + what);
}

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(where + key, "missing");
  return j.at(key);
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) fail(field, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(field, "must be finite");
  return v;
}

double number_or(const json& j, const char* key, double fallback,
                 const std::string& where) {
  if (!j.contains(key)) return fallback;
  return number(j.at(key), where + key);
}

Vec2 point(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2) fail(field, "expected [x, y]");
  return {number(j[0], field + "[0]"), number(j[1], field + "[1]")};
}

Polygon polygon(const json& j, const std::string& field) {
  if (!j.is_array()) fail(field, "expected a vertex list");
  std::vector<Vec2> vertices;
  for (std::size_t i = 0; i < j.size(); ++i) {
    vertices.push_back(point(j[i], field + "[" + std::to_string(i) + "]"));
  }
  try {
    return Polygon(std::move(vertices));
  } catch (const std::invalid_argument& e) {
    fail(field, e.what());
  }
}

json point_json(const Vec2& p) { return json::array({p.x, p.y}); }

json polygon_json(const Polygon& poly) {
  json out = json::array();
  for (const auto& v : poly.vertices()) out.push_back(point_json(v));
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

ModelParams parse_params(const json& j, const std::string& where) {
  ModelParams p;
  p.wheelbase = number(require(j, "L", where), where + "L");
  p.phi_diff = number(require(j, "phi_diff", where), where + "phi_diff");
  p.v_delta = number(require(j, "v_delta", where), where + "v_delta");
  if (!(p.wheelbase > 0.0)) fail(where + "L", "must be positive");
  if (!(p.v_delta > 0.0)) fail(where + "v_delta", "must be positive");
  return p;
}

json params_to_json(const ModelParams& p) {
  return {{"L", p.wheelbase}, {"phi_diff", p.phi_diff}, {"v_delta", p.v_delta}};
}

Environment parse_environment(const json& j) {
  if (!j.is_object()) fail("<root>", "expected an object");
  if (!j.contains("schema")) fail("schema", "missing");
  if (!j.at("schema").is_number_integer() || j.at("schema").get<int>() != 1) {
    fail("schema", "unsupported version");
  }
  Environment env;
  env.name = j.value("name", std::string{});

  const json& b = require(j, "bounds", "");
  if (!b.is_array() || b.size() != 2) fail("bounds", "expected [[xmin, ymin], [xmax, ymax]]");
  env.bounds = {point(b[0], "bounds[0]"), point(b[1], "bounds[1]")};
  if (!(env.bounds.max.x > env.bounds.min.x) || !(env.bounds.max.y > env.bounds.min.y)) {
    fail("bounds", "empty rectangle");
  }

  if (j.contains("obstacles")) {
    const json& obs = j.at("obstacles");
    if (!obs.is_array()) fail("obstacles", "expected a list");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      env.obstacles.push_back(polygon(obs[i], "obstacles[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("movable")) {
    const json& mv = j.at("movable");
    if (!mv.is_array()) fail("movable", "expected a list");
    for (std::size_t i = 0; i < mv.size(); ++i) {
      const std::string where = "movable[" + std::to_string(i) + "].";
      MovableBox box;
      box.shape = polygon(require(mv[i], "polygon", where), where + "polygon");
      box.drag = number_or(mv[i], "drag", box.drag, where);
      if (box.drag < 0.0 || box.drag >= 1.0) fail(where + "drag", "must lie in [0, 1)");
      env.movable.push_back(std::move(box));
    }
  }
  if (j.contains("features")) {
    const json& fs = j.at("features");
    if (!fs.is_array()) fail("features", "expected a list");
    for (std::size_t i = 0; i < fs.size(); ++i) {
      const std::string where = "features[" + std::to_string(i) + "].";
      const json& f = fs[i];
      const json& kind = require(f, "kind", where);
      if (!kind.is_string()) fail(where + "kind", "expected a string");
      FeatureRegion region;
      region.region = polygon(require(f, "region", where), where + "region");
      const std::string k = kind.get<std::string>();
      if (k == "slip") {
        SlipEffect e;
        e.friction_scale = number_or(f, "friction_scale", e.friction_scale, where);
        if (!(e.friction_scale > 0.0) || e.friction_scale > 1.0) {
          fail(where + "friction_scale", "must lie in (0, 1]");
        }
        region.effect = e;
      } else if (k == "slope") {
        SlopeEffect e;
        e.angle = number_or(f, "angle", e.angle, where);
        if (f.contains("direction")) e.direction = point(f.at("direction"), where + "direction");
        const double n = e.direction.norm();
        if (!(n > 0.0)) fail(where + "direction", "must be nonzero");
        e.direction = e.direction * (1.0 / n);
        e.anchor = f.contains("anchor") ? point(f.at("anchor"), where + "anchor")
                                        : region.region.centroid();
        region.effect = e;
      } else if (k == "bump") {
        BumpEffect e;
        e.height = number_or(f, "height", e.height, where);
        e.speed_threshold = number_or(f, "speed_threshold", e.speed_threshold, where);
        if (e.height < 0.0) fail(where + "height", "must be >= 0");
        region.effect = e;
      } else {
        fail(where + "kind", "unknown feature kind '" + k + "'");
      }
      env.features.push_back(std::move(region));
    }
  }

  const json& s = require(j, "start", "");
  env.start.x = number(require(s, "x", "start."), "start.x");
  env.start.y = number(require(s, "y", "start."), "start.y");
  env.start.theta = wrap_angle(number_or(s, "theta", 0.0, "start."));
  env.start.v = number_or(s, "v", 0.0, "start.");

  const json& g = require(j, "goal", "");
  const Vec2 c = point(require(g, "center", "goal."), "goal.center");
  env.goal.x = c.x;
  env.goal.y = c.y;
  env.goal.epsilon = number(require(g, "epsilon", "goal."), "goal.epsilon");
  if (!(env.goal.epsilon > 0.0)) fail("goal.epsilon", "must be positive");
  if (g.contains("theta")) {
    env.goal.use_theta = true;
    env.goal.theta = number(g.at("theta"), "goal.theta");
  }
  env.goal.theta_weight = number_or(g, "theta_weight", env.goal.theta_weight, "goal.");

  if (j.contains("noise")) {
    const json& n = j.at("noise");
    env.noise.sigma_xy = number_or(n, "sigma_xy", 0.0, "noise.");
    env.noise.sigma_theta = number_or(n, "sigma_theta", 0.0, "noise.");
    if (env.noise.sigma_xy < 0.0) fail("noise.sigma_xy", "must be >= 0");
    if (env.noise.sigma_theta < 0.0) fail("noise.sigma_theta", "must be >= 0");
  }
  env.true_params = parse_params(require(j, "true_params", ""), "true_params.");

  if (j.contains("limits")) {
    const json& l = j.at("limits");
    ControlLimits& lim = env.limits;
    lim.v_min = number_or(l, "v_min", lim.v_min, "limits.");
    lim.v_max = number_or(l, "v_max", lim.v_max, "limits.");
    lim.nu_min = number_or(l, "nu_min", lim.nu_min, "limits.");
    lim.nu_max = number_or(l, "nu_max", lim.nu_max, "limits.");
    lim.phi_max = number_or(l, "phi_max", lim.phi_max, "limits.");
    lim.a_brake = number_or(l, "a_brake", lim.a_brake, "limits.");
    lim.k_acc = number_or(l, "k_acc", lim.k_acc, "limits.");
    if (!(lim.v_max > lim.v_min)) fail("limits.v_max", "must exceed v_min");
    if (!(lim.nu_max > lim.nu_min)) fail("limits.nu_max", "must exceed nu_min");
    if (!(lim.phi_max > 0.0)) fail("limits.phi_max", "must be positive");
    if (!(lim.a_brake > 0.0)) fail("limits.a_brake", "must be positive");
    if (!(lim.k_acc > 0.0)) fail("limits.k_acc", "must be positive");
  }
  env.robot_radius = number_or(j, "robot_radius", env.robot_radius, "");
  if (env.robot_radius < 0.0) fail("robot_radius", "must be >= 0");

  if (j.contains("disturbances")) {
    const json& d = j.at("disturbances");
    Disturbances& dist = env.disturbances;
    dist.steer_noise = number_or(d, "steer_noise", 0.0, "disturbances.");
    dist.throttle_noise = number_or(d, "throttle_noise", 0.0, "disturbances.");
    dist.noise_time_constant =
        number_or(d, "noise_time_constant", dist.noise_time_constant, "disturbances.");
    dist.adversarial_deviation =
        number_or(d, "adversarial_deviation", 0.0, "disturbances.");
    dist.adversarial_rate =
        number_or(d, "adversarial_rate", dist.adversarial_rate, "disturbances.");
    dist.command_latency = number_or(d, "command_latency", 0.0, "disturbances.");
    if (!(dist.noise_time_constant > 0.0)) {
      fail("disturbances.noise_time_constant", "must be positive");
    }
    if (dist.command_latency < 0.0) fail("disturbances.command_latency", "must be >= 0");
  }

  if (!env.bounds.contains(Vec2{env.start.x, env.start.y})) fail("start", "outside bounds");
  if (distance_to_closest_obstacle(env.start, env) < 0.0) fail("start", "in collision");
  return env;
}

json environment_to_json(const Environment& env) {
  json j;
  j["schema"] = 1;
  j["name"] = env.name;
  j["bounds"] = json::array({point_json(env.bounds.min), point_json(env.bounds.max)});
  j["obstacles"] = json::array();
  for (const auto& o : env.obstacles) j["obstacles"].push_back(polygon_json(o));
  j["movable"] = json::array();
  for (const auto& m : env.movable) {
    j["movable"].push_back({{"polygon", polygon_json(m.shape)}, {"drag", m.drag}});
  }
  j["features"] = json::array();
  for (const auto& f : env.features) {
    json fj{{"region", polygon_json(f.region)}};
    if (const auto* slip = std::get_if<SlipEffect>(&f.effect)) {
      fj["kind"] = "slip";
      fj["friction_scale"] = slip->friction_scale;
    } else if (const auto* slope = std::get_if<SlopeEffect>(&f.effect)) {
      fj["kind"] = "slope";
      fj["angle"] = slope->angle;
      fj["direction"] = point_json(slope->direction);
      fj["anchor"] = point_json(slope->anchor);
    } else if (const auto* bump = std::get_if<BumpEffect>(&f.effect)) {
      fj["kind"] = "bump";
      fj["height"] = bump->height;
      fj["speed_threshold"] = bump->speed_threshold;
    }
    j["features"].push_back(fj);
  }
  j["start"] = {{"x", env.start.x}, {"y", env.start.y}, {"theta", env.start.theta},
                {"v", env.start.v}};
  j["goal"] = {{"center", json::array({env.goal.x, env.goal.y})},
               {"epsilon", env.goal.epsilon},
               {"theta_weight", env.goal.theta_weight}};
  if (env.goal.use_theta) j["goal"]["theta"] = env.goal.theta;
  j["noise"] = {{"sigma_xy", env.noise.sigma_xy}, {"sigma_theta", env.noise.sigma_theta}};
  j["true_params"] = params_to_json(env.true_params);
  const ControlLimits& l = env.limits;
  j["limits"] = {{"v_min", l.v_min},   {"v_max", l.v_max},     {"nu_min", l.nu_min},
                 {"nu_max", l.nu_max}, {"phi_max", l.phi_max}, {"a_brake", l.a_brake},
                 {"k_acc", l.k_acc}};
  j["robot_radius"] = env.robot_radius;
  const Disturbances& d = env.disturbances;
  j["disturbances"] = {{"steer_noise", d.steer_noise},
                       {"throttle_noise", d.throttle_noise},
                       {"noise_time_constant", d.noise_time_constant},
                       {"adversarial_deviation", d.adversarial_deviation},
                       {"adversarial_rate", d.adversarial_rate},
                       {"command_latency", d.command_latency}};
  return j;
}

Environment load_environment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EnvironmentError(path.string() + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw EnvironmentError(path.string() + ": " + e.what());
  }
  try {
    Environment env = parse_environment(j);
    if (env.name.empty()) env.name = path.stem().string();
    return env;
  } catch (const EnvironmentError& e) {
    throw EnvironmentError(path.string() + ": " + e.what());
  }
}

void save_environment(const std::filesystem::path& path, const Environment& env) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot write");
  out << environment_to_json(env).dump(2) << '\n';
}

Suite parse_suite(const json& j, const std::filesystem::path& base_dir) {
  Suite s;
  s.name = j.value("name", std::string{"suite"});
  for (const auto& e : j.at("environments")) {
    std::filesystem::path p = e.get<std::string>();
    s.environments.push_back(p.is_absolute() ? p : base_dir / p);
  }
  s.frameworks = j.value("frameworks", all_frameworks());
  for (const auto& f : s.frameworks) parse_framework(f);
  s.trials = j.value("trials", s.trials);
  if (s.trials < 1) throw std::invalid_argument("trials must be >= 1");
  s.seed_base = j.value("seed_base", s.seed_base);

  ExecutiveConfig& ex = s.executive;
  ex.timeout = j.value("timeout", ex.timeout);
  if (j.contains("executive")) {
    const json& e = j.at("executive");
    ex.cycle = e.value("cycle", ex.cycle);
    ex.control_period = e.value("control_period", ex.control_period);
    ex.oneshot_budget = e.value("oneshot_budget", ex.oneshot_budget);
    PlannerConfig& pc = ex.planner;
    pc.budget = e.value("budget", pc.budget);
    pc.blossom = e.value("blossom", pc.blossom);
    pc.goal_bias = e.value("goal_bias", pc.goal_bias);
    pc.delta = e.value("delta", pc.delta);
    pc.collision_margin = e.value("collision_margin", pc.collision_margin);
    pc.dt_min = e.value("dt_min", pc.dt_min);
    pc.dt_max = e.value("dt_max", pc.dt_max);
    pc.selection_radius = e.value("selection_radius", pc.selection_radius);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    if (m.is_string()) {
      if (m.get<std::string>() != "identify") {
        throw std::invalid_argument("model must be \"identify\" or a parameter object");
      }
    } else {
      s.model = parse_params(m, "model.");
    }
  }
  if (j.contains("identification_guess")) {
    s.identification_guess = parse_params(j.at("identification_guess"), "identification_guess.");
  }
  return s;
}

Suite load_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  return parse_suite(json::parse(in), path.parent_path());
}

MetricsRow aggregate(const std::string& env, const std::string& framework,
                     const std::vector<EpisodeResult>& episodes) {
  MetricsRow row{env, framework};
  double total = 0.0;
  for (const auto& e : episodes) {
    switch (e.outcome) {
      case Outcome::kSucc:
        ++row.succ;
        total += e.t_ex;
        break;
      case Outcome::kColl: ++row.coll; break;
      case Outcome::kTimeout: ++row.timeout; break;
    }
  }
  if (row.succ > 0) row.t_ex_mean = total / row.succ;
  return row;
}

int default_thread_count() {
  if (const char* v = std::getenv("KRAFT_THREADS")) {
    const int n = std::atoi(v);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<MetricsRow> run_suite(const Suite& suite, int threads) {
  if (threads <= 0) threads = default_thread_count();
  std::vector<Environment> envs;
  std::vector<ModelParams> models;
  for (const auto& path : suite.environments) {
    envs.push_back(load_environment(path));
    if (suite.model) {
      models.push_back(*suite.model);
    } else {
      models.push_back(
          identify_model(envs.back(), suite.identification_guess, suite.seed_base).params);
    }
  }
  const int nf = static_cast<int>(suite.frameworks.size());
  const int jobs = static_cast<int>(envs.size()) * nf * suite.trials;
  std::vector<EpisodeResult> results(static_cast<std::size_t>(jobs));
  parallel_for(jobs, threads, [&](int job) {
    const int trial = job % suite.trials;
    const int f = (job / suite.trials) % nf;
    const int e = job / (suite.trials * nf);
    ExecutiveConfig cfg = parse_framework(suite.frameworks[f], suite.executive);
    cfg.model = models[e];
    cfg.record_trace = false;
    results[job] = run_episode(envs[e], cfg, suite.seed_base + trial);
  });

  std::vector<MetricsRow> rows;
  for (std::size_t e = 0; e < envs.size(); ++e) {
    for (int f = 0; f < nf; ++f) {
      const auto begin = results.begin() + (static_cast<int>(e) * nf + f) * suite.trials;
      const std::vector<EpisodeResult> slice(begin, begin + suite.trials);
      rows.push_back(aggregate(envs[e].name,
                               framework_name(parse_framework(suite.frameworks[f])),
                               slice));
    }
  }
  return rows;
}

Plan excitation_plan(int segments, double segment_dt) {
  Plan plan;
  const double steer[] = {0.35, -0.2, 0.0, -0.35, 0.25, 0.1, -0.1, 0.3};
  const double throttle[] = {0.8, 1.2, 1.0, 0.6, 1.4, 0.9, 1.1, 0.7};
  for (int i = 0; i < segments; ++i) {
    plan.append(Control{throttle[i % 8], steer[(i * 3) % 8], false}, segment_dt);
  }
  return plan;
}

sysid::TrainingLog record_training_log(const Environment& env, const Plan& plan,
                                       std::uint64_t seed, double obs_period) {
  Environment open = env;
  open.obstacles.clear();
  open.movable.clear();
  open.features.clear();
  open.disturbances = Disturbances{};
  open.bounds = {{-1e6, -1e6}, {1e6, 1e6}};
  WorldState w = make_world(open, seed);

  sysid::TrainingLog log;
  log.t0 = 0.0;
  log.plan = plan;
  const double sx = std::max(env.noise.sigma_xy, 1e-3);
  const double st = std::max(env.noise.sigma_theta, 1e-3);
  log.observations.push_back({0.0, env.start.x, env.start.y, env.start.theta, {sx, sx, st}});

  const double end = plan.duration();
  const int steps = static_cast<int>(std::floor(end / obs_period + 1e-9));
  for (int k = 1; k <= steps; ++k) {
    const double t = w.clock;
    const std::size_t seg = plan.segment_at(t + 1e-12);
    const Control u = seg < plan.size() ? plan[seg].control : Control{};
    // Never step across a segment boundary.
    double boundary = 0.0;
    for (std::size_t i = 0; i <= seg && i < plan.size(); ++i) boundary += plan[i].dt;
    const double dt = std::min(obs_period, boundary - t);
    if (dt <= 1e-12) continue;
    step(w, u, dt, open);
    const Observation o = observe(w, env.noise, open);
    if (o.t_obs > end) break;
    log.observations.push_back({o.t_obs, o.x, o.y, o.theta, {sx, sx, st}});
  }
  return log;
}

sysid::SolveResult identify_model(const Environment& env, const ModelParams& guess,
                                  std::uint64_t seed) {
  const Plan plan = excitation_plan();
  const sysid::TrainingLog log = record_training_log(env, plan, derive_seed(seed, 7));
  sysid::GraphOptions options;
  options.limits = env.limits;
  const sysid::FactorGraph g =
      sysid::build_graph(log.plan, log.observations, guess, log.t0, options);
  return sysid::solve(g, sysid::initial_guess(g, env.start.v));
}

void write_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.env << ',' << r.framework << ',' << r.succ << ',' << r.coll << ','
        << r.timeout << ',' << fmt(r.t_ex_mean) << '\n';
  }
}

std::vector<MetricsRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::runtime_error("unexpected CSV header");
  }
  std::vector<MetricsRow> rows;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) {
      throw std::runtime_error("line " + std::to_string(number) + ": expected 6 columns");
    }
    MetricsRow r;
    r.env = cells[0];
    r.framework = cells[1];
    r.succ = std::stoi(cells[2]);
    r.coll = std::stoi(cells[3]);
    r.timeout = std::stoi(cells[4]);
    r.t_ex_mean = cells[5] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                    : std::stod(cells[5]);
    rows.push_back(r);
  }
  return rows;
}

std::string format_table(const std::vector<MetricsRow>& rows) {
  std::size_t env_w = 3, fw_w = 9;
  for (const auto& r : rows) {
    env_w = std::max(env_w, r.env.size());
    fw_w = std::max(fw_w, r.framework.size());
  }
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(env_w) + 2) << "Env"
     << std::setw(static_cast<int>(fw_w) + 2) << "Framework" << std::right
     << std::setw(6) << "Succ" << std::setw(6) << "Coll" << std::setw(9) << "Timeout"
     << std::setw(10) << "T_ex" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(env_w) + 2) << r.env
       << std::setw(static_cast<int>(fw_w) + 2) << r.framework << std::right
       << std::setw(6) << r.succ << std::setw(6) << r.coll << std::setw(9) << r.timeout
       << std::setw(10);
    if (std::isnan(r.t_ex_mean)) {
      os << "-";
    } else {
      os << std::fixed << std::setprecision(2) << r.t_ex_mean << std::defaultfloat;
    }
    os << '\n';
  }
  return os.str();
}

void write_trace(const std::filesystem::path& path, const EpisodeResult& episode) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot write");
  for (const auto& line : episode.trace) out << line << '\n';
}

}  // namespace kraft
