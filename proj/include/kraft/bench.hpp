// Benchmark plumbing: environment files, suites, the parallel suite runner,
// metrics aggregation and CSV/table output.
//
// Environment file (JSON, "schema": 1):
//   bounds        [[xmin, ymin], [xmax, ymax]]
//   obstacles     list of convex vertex lists [[x, y], ...]
//   movable       list of {"polygon": [...], "drag": d}
//   features      list of {"kind": "slip"|"slope"|"bump", "region": [...], ...}
//                   slip:  friction_scale
//                   slope: angle, direction [dx, dy], anchor [x, y]
//                   bump:  height, speed_threshold
//   start         {"x", "y", "theta", "v"}
//   goal          {"center": [x, y], "epsilon", optional "theta",
//                  "theta_weight"}
//   noise         {"sigma_xy", "sigma_theta"}
//   true_params   {"L", "phi_diff", "v_delta"}
//   optional: "name", "limits", "robot_radius", "disturbances"

#ifndef KRAFT_BENCH_HPP_
#define KRAFT_BENCH_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kraft/replan.hpp"
#include "kraft/sysid.hpp"
#include "kraft/world.hpp"

namespace kraft {

// Parse or validation failure; the message names the offending field.
class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// {"L", "phi_diff", "v_delta"}; `where` prefixes field names in errors.
ModelParams parse_params(const nlohmann::json& j, const std::string& where = "");
nlohmann::json params_to_json(const ModelParams& p);

Environment parse_environment(const nlohmann::json& j);
nlohmann::json environment_to_json(const Environment& env);
Environment load_environment(const std::filesystem::path& path);
void save_environment(const std::filesystem::path& path, const Environment& env);

struct Suite {
  std::string name;
  std::vector<std::filesystem::path> environments;
  std::vector<std::string> frameworks;
  int trials = 30;
  std::uint64_t seed_base = 0;
  ExecutiveConfig executive;  // shared settings; frameworks override modes
  // Parameters the executive uses. Unset means identify them per
  // environment from a synthetic training log.
  std::optional<ModelParams> model;
  ModelParams identification_guess;
};

Suite parse_suite(const nlohmann::json& j,
                  const std::filesystem::path& base_dir = {});
Suite load_suite(const std::filesystem::path& path);

struct MetricsRow {
  std::string env;
  std::string framework;
  int succ = 0;
  int coll = 0;
  int timeout = 0;
  double t_ex_mean = std::numeric_limits<double>::quiet_NaN();  // Succ only

  [[nodiscard]] int trials() const { return succ + coll + timeout; }
};

MetricsRow aggregate(const std::string& env, const std::string& framework,
                     const std::vector<EpisodeResult>& episodes);

// Worker count from KRAFT_THREADS, else the hardware concurrency.
int default_thread_count();

// Runs fn(i) for i in [0, n) on `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

// Seeds are seed_base + trial index. Rows are ordered by environment, then
// framework, in suite order.
std::vector<MetricsRow> run_suite(const Suite& suite, int threads = 0);

// Excitation plan for identification: alternating steering and throttle.
Plan excitation_plan(int segments = 16, double segment_dt = 0.75);

// Executes `plan` open loop in a feature-free, obstacle-free copy of the
// environment and records noisy pose observations every obs_period seconds.
sysid::TrainingLog record_training_log(const Environment& env, const Plan& plan,
                                       std::uint64_t seed,
                                       double obs_period = 0.05);

sysid::SolveResult identify_model(const Environment& env,
                                  const ModelParams& guess, std::uint64_t seed);

constexpr const char* kCsvHeader = "env,framework,succ,coll,timeout,t_ex_mean";

void write_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_csv(std::istream& in);
std::string format_table(const std::vector<MetricsRow>& rows);

void write_trace(const std::filesystem::path& path, const EpisodeResult& episode);

}  // namespace kraft

#endif  // KRAFT_BENCH_HPP_
