#include "qcap/io.hpp"

#include <unistd.h>

#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "qcap/solver.hpp"

namespace qcap::io {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
void get(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != N) throw ConfigError(where + ": expected " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!j[static_cast<size_t>(i)].is_number()) throw ConfigError(where + ": expected numbers");
    v(i) = j[static_cast<size_t>(i)].get<double>();
  }
  return v;
}

template <class V>
json arr(const V& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json footsteps_json(const lip::Footsteps& w) {
  json a = json::array();
  for (int i = 0; i < lip::kNumLegs; ++i) a.push_back({w(0, i), w(1, i)});
  return a;
}

lip::Footsteps footsteps_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != lip::kNumLegs) throw ConfigError(where + ": expected 4 [x, y] pairs");
  lip::Footsteps w;
  for (int i = 0; i < lip::kNumLegs; ++i) w.col(i) = vec<2>(j[static_cast<size_t>(i)], where);
  return w;
}

/// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string grid_text(const sim::Grid& g) {
  return num(g.x0) + ':' + num(g.x1) + ':' + num(g.dx) + ',' + num(g.y0) + ':' + num(g.y1) + ':' + num(g.dy);
}

MatrixXd matrix_from(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of rows");
  const size_t rows = j.size();
  const size_t cols = rows ? j[0].size() : 0;
  MatrixXd M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(where + ": ragged matrix");
    for (size_t c = 0; c < cols; ++c) M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return M;
}

json matrix_json(const MatrixXd& M) {
  json a = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) a.push_back(arr(M.row(r)));
  return a;
}

std::string header_line(const char* schema, const RunConfig& c, json extra = json::object()) {
  json h = std::move(extra);
  h["schema"] = schema;
  h["seed"] = c.analysis.seed;
  h["config"] = config_to_json(c);
  return "# " + h.dump() + "\n";
}

}  // namespace

RunConfig config_from_json(const json& j) {
  const std::string w = "config";
  check_keys(j, {"schema", "gait", "phase_offset", "height", "gravity", "dt", "period_steps", "footsteps",
                 "target_region", "constraint_inflation", "balance_max_iter", "capture_horizon", "volume_samples",
                 "seed", "surrogate", "planner", "sim"},
             w);
  if (j.contains("schema") && j["schema"] != kConfigSchema)
    throw ConfigError("config: unsupported schema " + j["schema"].dump());
  RunConfig c;
  AnalysisConfig& a = c.analysis;
  get(j, "gait", a.gait, w);
  get(j, "phase_offset", a.phase_offset, w);
  get(j, "height", a.params.height, w);
  get(j, "gravity", a.params.gravity, w);
  get(j, "dt", a.params.dt, w);
  get(j, "period_steps", a.params.period_steps, w);
  if (j.contains("footsteps")) a.footsteps = footsteps_from(j["footsteps"], w + ".footsteps");
  if (j.contains("target_region")) {
    const json& t = j["target_region"];
    check_keys(t, {"lo", "hi"}, w + ".target_region");
    if (t.contains("lo")) a.target_lo = vec<4>(t["lo"], w + ".target_region.lo");
    if (t.contains("hi")) a.target_hi = vec<4>(t["hi"], w + ".target_region.hi");
  }
  if (j.contains("constraint_inflation")) {
    const json& t = j["constraint_inflation"];
    check_keys(t, {"position", "velocity"}, w + ".constraint_inflation");
    get(t, "position", a.position_inflation, w + ".constraint_inflation");
    get(t, "velocity", a.velocity_inflation, w + ".constraint_inflation");
  }
  get(j, "balance_max_iter", a.balance_max_iter, w);
  get(j, "capture_horizon", a.capture_horizon, w);
  get(j, "volume_samples", a.volume_samples, w);
  get(j, "seed", a.seed, w);
  if (j.contains("surrogate")) {
    const json& s = j["surrogate"];
    const std::string ws = w + ".surrogate";
    check_keys(s, {"q", "r", "qf", "samples", "holdout", "seed"}, ws);
    get(s, "q", a.surrogate.q, ws);
    get(s, "r", a.surrogate.r, ws);
    get(s, "qf", a.surrogate.qf, ws);
    get(s, "samples", a.surrogate.samples, ws);
    get(s, "holdout", a.surrogate.holdout, ws);
    get(s, "seed", a.surrogate.seed, ws);
    if (a.surrogate.samples < 1 || a.surrogate.holdout < 1) throw ConfigError(ws + ": sample counts must be >= 1");
  }
  if (j.contains("planner")) {
    const json& p = j["planner"];
    const std::string wp = w + ".planner";
    check_keys(p, {"horizon", "step_count", "max_iter", "q", "r", "qf", "q_fh", "kinematic_box", "rel_tol", "x_desired"},
               wp);
    plan::PlanConfig& pc = c.planner;
    get(p, "horizon", pc.horizon, wp);
    if (p.contains("step_count")) {
      const Eigen::Vector2d n = vec<2>(p["step_count"], wp + ".step_count");
      pc.step_count_min = static_cast<int>(n(0));
      pc.step_count_max = static_cast<int>(n(1));
    }
    get(p, "max_iter", pc.max_iter, wp);
    get(p, "q", pc.q, wp);
    get(p, "r", pc.r, wp);
    get(p, "qf", pc.qf, wp);
    get(p, "q_fh", pc.q_fh, wp);
    get(p, "rel_tol", pc.rel_tol, wp);
    if (p.contains("kinematic_box")) {
      const json& b = p["kinematic_box"];
      check_keys(b, {"lo", "hi"}, wp + ".kinematic_box");
      if (b.contains("lo")) pc.kin_lo = vec<2>(b["lo"], wp + ".kinematic_box.lo");
      if (b.contains("hi")) pc.kin_hi = vec<2>(b["hi"], wp + ".kinematic_box.hi");
    }
    if (p.contains("x_desired") && !p["x_desired"].is_null()) pc.x_desired = vec<4>(p["x_desired"], wp + ".x_desired");
  }
  if (j.contains("sim")) {
    const json& s = j["sim"];
    const std::string wsim = w + ".sim";
    check_keys(s, {"horizon_s", "grid", "timing", "jobs"}, wsim);
    get(s, "horizon_s", c.sim.horizon_s, wsim);
    get(s, "timing", c.sim.timing, wsim);
    get(s, "jobs", c.sim.jobs, wsim);
    if (s.contains("grid")) {
      try {
        c.sim.grid = sim::Grid::parse(s["grid"].get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError(wsim + ".grid: " + e.what());
      }
    }
    if (!(c.sim.horizon_s > 0.0)) throw ConfigError(wsim + ".horizon_s must be positive");
    if (c.sim.timing < 1 || c.sim.timing > 4) throw ConfigError(wsim + ".timing must be in 1..4");
    if (c.sim.jobs < 1) throw ConfigError(wsim + ".jobs must be >= 1");
  }
  try {
    a.validate();
    c.planner.validate(a.params.period_steps);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

json config_to_json(const RunConfig& c) {
  const AnalysisConfig& a = c.analysis;
  const plan::PlanConfig& p = c.planner;
  json j;
  j["schema"] = kConfigSchema;
  j["gait"] = a.gait;
  j["phase_offset"] = a.phase_offset;
  j["height"] = a.params.height;
  j["gravity"] = a.params.gravity;
  j["dt"] = a.params.dt;
  j["period_steps"] = a.params.period_steps;
  j["footsteps"] = footsteps_json(a.footsteps);
  j["target_region"] = {{"lo", arr(a.target_lo)}, {"hi", arr(a.target_hi)}};
  j["constraint_inflation"] = {{"position", a.position_inflation}, {"velocity", a.velocity_inflation}};
  j["balance_max_iter"] = a.balance_max_iter;
  j["capture_horizon"] = a.capture_horizon;
  j["volume_samples"] = a.volume_samples;
  j["seed"] = a.seed;
  j["surrogate"] = {{"q", a.surrogate.q},           {"r", a.surrogate.r},
                    {"qf", a.surrogate.qf},         {"samples", a.surrogate.samples},
                    {"holdout", a.surrogate.holdout}, {"seed", a.surrogate.seed}};
  j["planner"] = {{"horizon", p.horizon},
                  {"step_count", {p.step_count_min, p.step_count_max}},
                  {"max_iter", p.max_iter},
                  {"q", p.q},
                  {"r", p.r},
                  {"qf", p.qf},
                  {"q_fh", p.q_fh},
                  {"kinematic_box", {{"lo", arr(p.kin_lo)}, {"hi", arr(p.kin_hi)}}},
                  {"rel_tol", p.rel_tol},
                  {"x_desired", p.x_desired ? arr(*p.x_desired) : json(nullptr)}};
  j["sim"] = {{"horizon_s", c.sim.horizon_s},
              {"grid", grid_text(c.sim.grid)},
              {"timing", c.sim.timing},
              {"jobs", c.sim.jobs}};
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

json polytope_to_json(const Polytope& P) {
  return {{"dim", P.dim()}, {"H", matrix_json(P.normals())}, {"h", arr(P.offsets())}};
}

Polytope polytope_from_json(const json& j) {
  check_keys(j, {"dim", "H", "h"}, "polytope");
  const int dim = j.at("dim").get<int>();
  MatrixXd H = matrix_from(j.at("H"), "polytope.H");
  if (H.rows() == 0) H.resize(0, dim);
  if (H.cols() != dim) throw ConfigError("polytope: column count differs from dim");
  const json& hj = j.at("h");
  if (!hj.is_array() || static_cast<Eigen::Index>(hj.size()) != H.rows())
    throw ConfigError("polytope: offset count differs from row count");
  VectorXd h(H.rows());
  for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = hj[static_cast<size_t>(i)].get<double>();
  return Polytope(H, h);
}

json archive_to_json(const Analysis& a, const RunConfig& c) {
  json j;
  j["schema"] = kArchiveSchema;
  j["seed"] = a.config.seed;
  RunConfig stored = c;
  stored.analysis = a.config;
  j["config"] = config_to_json(stored);
  json bal;
  bal["iterations"] = a.balance_iterations;
  bal["iterate_volumes"] = a.balance_iterate_volumes;
  bal["volumes"] = a.balance.volumes;
  bal["slices"] = json::array();
  for (const auto& s : a.balance.slices) bal["slices"].push_back(polytope_to_json(s));
  j["balance"] = bal;
  j["capturable"] = json::array();
  for (const auto& t : a.capturable) {
    json tj;
    tj["terminal_phase"] = t.terminal_phase;
    tj["volumes"] = t.volumes;
    tj["slices"] = json::array();
    for (const auto& s : t.slices) tj["slices"].push_back(polytope_to_json(s));
    j["capturable"].push_back(tj);
  }
  j["surrogates"] = json::array();
  for (size_t t = 0; t < a.surrogates.size(); ++t)
    j["surrogates"].push_back({{"terminal_phase", t},
                               {"P", matrix_json(a.surrogates[t].P)},
                               {"holdout_violations", a.surrogate_holdout_violations[t]}});
  return j;
}

std::pair<Analysis, RunConfig> archive_from_json(const json& j) {
  if (!j.is_object() || !j.contains("schema") || j["schema"] != kArchiveSchema)
    throw ConfigError("archive: missing or unsupported schema");
  try {
    RunConfig c = config_from_json(j.at("config"));
    Analysis a;
    a.config = c.analysis;
    const json& bal = j.at("balance");
    a.balance_iterations = bal.at("iterations").get<int>();
    a.balance_iterate_volumes = bal.at("iterate_volumes").get<std::vector<double>>();
    a.balance.volumes = bal.at("volumes").get<std::vector<double>>();
    for (const auto& s : bal.at("slices")) a.balance.slices.push_back(polytope_from_json(s));
    a.balance.gait = a.config.gait;
    a.balance.footsteps = a.config.footsteps;
    const int T = a.config.params.period_steps;
    if (static_cast<int>(a.balance.slices.size()) != T + 1) throw ConfigError("archive: balance slice count");
    for (const auto& tj : j.at("capturable")) {
      cap::Tube t;
      t.gait = a.config.gait;
      t.footsteps = a.config.footsteps;
      t.terminal_phase = tj.at("terminal_phase").get<int>();
      t.volumes = tj.at("volumes").get<std::vector<double>>();
      for (const auto& s : tj.at("slices")) t.slices.push_back(polytope_from_json(s));
      if (static_cast<int>(t.slices.size()) != a.config.capture_horizon + 1)
        throw ConfigError("archive: capturable slice count");
      a.capturable.push_back(std::move(t));
    }
    for (const auto& sj : j.at("surrogates")) {
      cap::QuadraticSurrogate s;
      s.P = matrix_from(sj.at("P"), "archive.surrogates.P");
      if (s.P.rows() != lip::kStateDim + 1 || s.P.cols() != lip::kStateDim + 1)
        throw ConfigError("archive: surrogate must be 5x5");
      a.surrogates.push_back(std::move(s));
      a.surrogate_holdout_violations.push_back(sj.at("holdout_violations").get<int>());
    }
    if (static_cast<int>(a.capturable.size()) != T || static_cast<int>(a.surrogates.size()) != T)
      throw ConfigError("archive: one capturable tube and surrogate per phase expected");
    return {std::move(a), std::move(c)};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("archive: ") + e.what());
  }
}

std::pair<Analysis, RunConfig> load_archive(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return archive_from_json(j);
}

json plan_to_json(const plan::PlanResult& p, const Analysis& a, const RunConfig& c) {
  const double dt = a.config.params.dt;
  const lip::GaitSchedule sched = a.system().schedule();
  json j;
  j["schema"] = kPlanSchema;
  j["seed"] = a.config.seed;
  j["config"] = config_to_json(c);
  j["phase"] = p.phase;
  j["noop"] = p.noop;
  j["delta_w"] = arr(p.delta_w_star);
  j["target_footsteps"] = footsteps_json(p.target_footsteps);
  j["x_desired"] = arr(p.x_desired);
  j["steps"] = json::array();
  for (size_t k = 0; k < p.footstep_sequence.size(); ++k) {
    const int ph = p.phase + static_cast<int>(k);
    j["steps"].push_back({{"k", k},
                          {"phase", ((ph % sched.period()) + sched.period()) % sched.period()},
                          {"w", footsteps_json(p.footstep_sequence[k])},
                          {"stance_legs", sched.stance_legs(ph)},
                          {"touchdown_legs", k > 0 ? sched.touchdown_legs(ph) : std::vector<int>{}},
                          {"switch_time", static_cast<double>(k) * dt}});
  }
  j["com"] = json::array();
  for (size_t k = 0; k < p.com_trajectory.size(); ++k) {
    const auto& x = p.com_trajectory[k];
    j["com"].push_back({static_cast<double>(k) * dt, x(0), x(1), x(2), x(3)});
  }
  j["lambda"] = json::array();
  for (const auto& l : p.cop_weights) j["lambda"].push_back(arr(l));
  j["landings"] = json::array();
  for (const auto& l : p.landings)
    j["landings"].push_back({{"leg", l.leg}, {"step", l.step}, {"pinned", l.pinned}, {"pos", arr(l.pos)}});
  bool terminal_ok = true;
  if (!p.noop && !p.com_trajectory.empty()) {
    const Polytope term = translate(a.capturable_slice(p.phase + static_cast<int>(p.cop_weights.size())),
                                    lip::planar_shift(p.delta_w_star));
    terminal_ok = contains_point(term, p.com_trajectory.back(), 1e-6);
  }
  j["diagnostics"] = {{"iterations", p.iterations_used},
                      {"costs", p.costs},
                      {"chosen_step_count", p.chosen_step_count},
                      {"iter_limit", p.iter_limit},
                      {"terminal_in_capturable_slice", terminal_ok}};
  return j;
}

std::string sweep_csv(const sim::SweepResult& r, const RunConfig& c) {
  std::ostringstream s;
  s << header_line(kSweepSchema, c, {{"gait", r.gait}, {"timing", r.timing}, {"phase", r.phase}});
  s << "dv_x,dv_y,success,reason\n";
  const int nx = r.grid.nx();
  for (int j = 0; j < r.grid.ny(); ++j)
    for (int i = 0; i < nx; ++i)
      s << num(r.grid.x(i)) << ',' << num(r.grid.y(j)) << ',' << (r.at(i, j) ? 1 : 0) << ','
        << r.reason[static_cast<size_t>(j * nx + i)] << '\n';
  return s.str();
}

json sweep_summary(const sim::SweepResult& r, const RunConfig& c) {
  json j;
  j["schema"] = kSweepSchema;
  j["seed"] = c.analysis.seed;
  j["config"] = config_to_json(c);
  j["gait"] = r.gait;
  j["timing"] = r.timing;
  j["phase"] = r.phase;
  j["grid"] = grid_text(r.grid);
  j["cells"] = r.success.size();
  j["successes"] = r.successes();
  j["isolated_successes"] = sim::isolated_successes(r);
  std::map<std::string, int> reasons;
  for (const auto& s : r.reason) ++reasons[s];
  j["reasons"] = reasons;
  return j;
}

std::string trajectory_csv(const sim::RolloutResult& r, const Analysis& a, const RunConfig& c) {
  std::ostringstream s;
  s << header_line(kTrajectorySchema, c, {{"success", r.success}, {"reason", r.reason}});
  s << "k,t,phase,c_x,cdot_x,c_y,cdot_y,balanced,fr_x,fr_y,fl_x,fl_y,rl_x,rl_y,rr_x,rr_y\n";
  for (size_t k = 0; k < r.states.size(); ++k) {
    const auto& x = r.states[k];
    s << k << ',' << num(static_cast<double>(k) * a.config.params.dt) << ',' << r.phases[k] << ',' << num(x(0))
      << ',' << num(x(1)) << ',' << num(x(2)) << ',' << num(x(3)) << ',' << (r.balanced[k] ? 1 : 0);
    for (int leg = 0; leg < lip::kNumLegs; ++leg) s << ',' << num(r.feet[k](0, leg)) << ',' << num(r.feet[k](1, leg));
    s << '\n';
  }
  return s.str();
}

std::string slice_polygons_csv(const std::vector<Polytope>& slices, int i, int j, const RunConfig& c,
                               int directions) {
  std::ostringstream s;
  s << header_line(kPolygonSchema, c, {{"axes", {i, j}}, {"directions", directions}});
  s << "slice,direction,angle,a,b\n";
  for (size_t k = 0; k < slices.size(); ++k) {
    const Polytope& P = slices[k];
    for (int d = 0; d < directions; ++d) {
      const double th = 2.0 * M_PI * d / directions;
      VectorXd dir = VectorXd::Zero(P.dim());
      dir(i) += std::cos(th);
      dir(j) += std::sin(th);
      const solver::QpSolution sol = solver::solve_lp(-dir, P.normals(), P.offsets());
      if (!sol.optimal()) continue;  // empty or unbounded along this direction
      s << k << ',' << d << ',' << num(th) << ',' << num(sol.x_opt(i)) << ',' << num(sol.x_opt(j)) << '\n';
    }
  }
  return s.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  static std::atomic<unsigned> counter{0};
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace qcap::io
