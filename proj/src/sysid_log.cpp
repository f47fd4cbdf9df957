#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"
#include "kraft/sysid.hpp"

namespace kraft::sysid {

using nlohmann::json;

TrainingLog read_log(std::istream& in) {
  TrainingLog log;
  std::string line;
  int line_no = 0;
  bool have_control = false;
  double next_control_t = 0.0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    json rec;
    try {
      rec = json::parse(line);
      const double t = rec.at("t").get<double>();
      const auto kind = rec.at("kind").get<std::string>();
      if (kind == "control") {
        const double dt = rec.at("dt").get<double>();
        if (!have_control) {
          log.t0 = t;
          next_control_t = t;
          have_control = true;
        }
        if (std::abs(t - next_control_t) > 1e-6) {
          throw SysIdError(where + "control records are not contiguous");
        }
        Control u{rec.at("nu").get<double>(), rec.at("phi").get<double>(),
                  rec.value("brake", false)};
        log.plan.append(u, dt);
        next_control_t = t + dt;
      } else if (kind == "obs") {
        ObservationRecord z;
        z.t = t;
        z.x = rec.at("x").get<double>();
        z.y = rec.at("y").get<double>();
        z.theta = rec.at("theta").get<double>();
        if (rec.contains("sigma")) {
          z.sigma = rec.at("sigma").get<std::array<double, 3>>();
        }
        log.observations.push_back(z);
      } else {
        throw SysIdError(where + "unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw SysIdError(where + e.what());
    } catch (const std::invalid_argument& e) {
      throw SysIdError(where + e.what());
    }
  }
  if (!have_control) throw SysIdError("log contains no control records");
  return log;
}

void write_log(std::ostream& out, const TrainingLog& log) {
  double t = log.t0;
  for (const auto& seg : log.plan.segments()) {
    json rec = {{"t", t},           {"kind", "control"},
                {"nu", seg.control.nu}, {"phi", seg.control.phi},
                {"dt", seg.dt}};
    if (seg.control.brake) rec["brake"] = true;
    out << rec.dump() << '\n';
    t += seg.dt;
  }
  for (const auto& z : log.observations) {
    out << json{{"t", z.t},         {"kind", "obs"},   {"x", z.x},
                {"y", z.y},         {"theta", z.theta}, {"sigma", z.sigma}}
               .dump()
        << '\n';
  }
}

}  // namespace kraft::sysid
