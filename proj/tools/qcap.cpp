// Command-line front end: analyze, plan, simulate, sweep, show.
// Exit codes: 0 ok, 1 unexpected error, 2 analysis failure, 3 not capturable, 4 bad config.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "qcap/analysis.hpp"
#include "qcap/io.hpp"
#include "qcap/planner.hpp"
#include "qcap/sim.hpp"

namespace fs = std::filesystem;
using namespace qcap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitAnalysis = 2;
constexpr int kExitNotCapturable = 3;
constexpr int kExitBadConfig = 4;

struct Options {
  std::string config;
  std::string archive;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> gait;
  std::optional<int> timing;
  std::optional<std::string> grid;
  std::string state = "0,0,0,0";
  int phase = 0;
  std::string push = "0,0";
};

std::vector<double> parse_list(const std::string& text, size_t n, const char* what) {
  std::vector<double> v;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    try {
      size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw io::ConfigError(std::string(what) + ": '" + item + "' is not a number");
    }
  }
  if (v.size() != n) throw io::ConfigError(std::string(what) + ": expected " + std::to_string(n) + " comma-separated numbers");
  return v;
}

/// Command-line overrides on top of a loaded config.
void apply_overrides(io::RunConfig& c, const Options& o) {
  if (o.seed) c.analysis.seed = *o.seed;
  if (o.gait) c.analysis.gait = *o.gait;
  if (o.jobs) c.sim.jobs = *o.jobs;
  if (o.timing) c.sim.timing = *o.timing;
  if (o.grid) {
    try {
      c.sim.grid = sim::Grid::parse(*o.grid);
    } catch (const std::invalid_argument& e) {
      throw io::ConfigError(e.what());
    }
  }
  // Re-run validation on the merged result.
  c = io::config_from_json(io::config_to_json(c));
}

io::RunConfig load_run_config(const Options& o) {
  io::RunConfig c = o.config.empty() ? io::RunConfig{} : io::load_config(o.config);
  apply_overrides(c, o);
  return c;
}

/// Archive from --archive, or <out>/tubes.json. Planner and sim settings come from --config when
/// given, else from the archive.
std::pair<Analysis, io::RunConfig> load_for_run(const Options& o) {
  const fs::path path = o.archive.empty() ? fs::path(o.out) / "tubes.json" : fs::path(o.archive);
  if (!fs::exists(path)) throw io::ConfigError("archive " + path.string() + " does not exist; run analyze first");
  auto [a, c] = io::load_archive(path);
  if (o.gait && *o.gait != a.config.gait)
    throw io::ConfigError("--gait " + *o.gait + " does not match the archive gait " + a.config.gait);
  if (!o.config.empty()) {
    const io::RunConfig given = io::load_config(o.config);
    c.planner = given.planner;
    c.sim = given.sim;
  }
  Options no_analysis = o;
  no_analysis.seed.reset();
  no_analysis.gait.reset();
  apply_overrides(c, no_analysis);
  c.analysis = a.config;
  return {std::move(a), std::move(c)};
}

std::string summary_text(const Analysis& a) {
  std::ostringstream s;
  s.precision(6);
  s << "gait " << a.config.gait << ", period " << a.period() << " steps of " << a.config.params.dt << " s, seed "
    << a.config.seed << "\n";
  s << "balance tube: " << a.balance_iterations << " iterations\n";
  s << "  iterate volumes:";
  for (double v : a.balance_iterate_volumes) s << ' ' << v;
  s << "\n  slice  rows  volume\n";
  for (size_t k = 0; k < a.balance.slices.size(); ++k)
    s << "  " << k << "      " << a.balance.slices[k].num_rows() << "    " << a.balance.volumes[k] << "\n";
  s << "capturable tubes (horizon " << a.horizon() << "), volume of C(j) for j = 0.." << a.horizon() << ":\n";
  for (const auto& t : a.capturable) {
    s << "  terminal phase " << t.terminal_phase << ":";
    for (double v : t.volumes) s << ' ' << v;
    s << "\n";
  }
  s << "surrogate held-out violations per terminal phase:";
  for (int v : a.surrogate_holdout_violations) s << ' ' << v;
  s << "\n";
  return s.str();
}

void write_polygons(const fs::path& dir, const std::string& stem, const std::vector<Polytope>& slices,
                    const io::RunConfig& c) {
  io::write_atomic(dir / (stem + "_x.csv"), io::slice_polygons_csv(slices, lip::kCx, lip::kVx, c));
  io::write_atomic(dir / (stem + "_y.csv"), io::slice_polygons_csv(slices, lip::kCy, lip::kVy, c));
}

int cmd_analyze(const Options& o) {
  const io::RunConfig c = load_run_config(o);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  const Analysis a = analyze(c.analysis);
  io::write_atomic(dir / "tubes.json", io::archive_to_json(a, c).dump(1) + "\n");
  const std::string summary = summary_text(a);
  io::write_atomic(dir / "summary.txt", summary);
  write_polygons(dir, "balance_polygons", a.balance.slices, c);
  write_polygons(dir, "capturable_polygons", a.capturable.front().slices, c);
  std::cout << summary << "wrote " << (dir / "tubes.json").string() << "\n";
  return kExitOk;
}

int cmd_plan(const Options& o) {
  const auto [a, c] = load_for_run(o);
  const std::vector<double> s = parse_list(o.state, 4, "--state");
  const lip::Vector4d x(s[0], s[1], s[2], s[3]);
  if (o.phase < 0 || o.phase >= a.period()) throw io::ConfigError("--phase must be in 0..period-1");
  const plan::PlanResult p = plan::plan_recovery(x, o.phase, a.config.footsteps, a, c.planner);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  const io::json j = io::plan_to_json(p, a, c);
  io::write_atomic(dir / "plan.json", j.dump(1) + "\n");
  std::cout << (p.noop ? "no-op plan (state balanced)" : "recovery plan") << ", delta_w = (" << p.delta_w_star(0)
            << ", " << p.delta_w_star(1) << "), step count " << p.chosen_step_count << ", terminal membership "
            << (j["diagnostics"]["terminal_in_capturable_slice"].get<bool>() ? "true" : "false") << "\n";
  std::cout << "wrote " << (dir / "plan.json").string() << "\n";
  return kExitOk;
}

int cmd_simulate(const Options& o) {
  const auto [a, c] = load_for_run(o);
  const std::vector<double> dv = parse_list(o.push, 2, "--push");
  sim::PushEvent push;
  push.phase_index = sim::timing_phase(a.system().schedule(), c.sim.timing);
  push.dv = lip::Vector2d(dv[0], dv[1]);
  sim::RolloutOptions ro;
  ro.horizon_s = c.sim.horizon_s;
  const sim::RolloutResult r = sim::rollout(a, c.planner, push, ro);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  io::write_atomic(dir / "trajectory.csv", io::trajectory_csv(r, a, c));
  write_polygons(dir, "balance_polygons", a.balance.slices, c);
  std::cout << "push (" << dv[0] << ", " << dv[1] << ") at phase " << push.phase_index << ": " << r.reason << ", "
            << r.plans << " plans, " << r.states.size() - 1 << " steps\n";
  std::cout << "wrote " << (dir / "trajectory.csv").string() << "\n";
  return r.reason == "not_capturable" ? kExitNotCapturable : kExitOk;
}

int cmd_sweep(const Options& o) {
  const auto [a, c] = load_for_run(o);
  sim::SweepOptions so;
  so.jobs = c.sim.jobs;
  so.rollout.horizon_s = c.sim.horizon_s;
  const sim::SweepResult r = sim::sweep(a, c.planner, c.sim.timing, c.sim.grid, so);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  const std::string stem = "sweep_" + a.config.gait + "_T" + std::to_string(c.sim.timing);
  io::write_atomic(dir / (stem + ".csv"), io::sweep_csv(r, c));
  const io::json summary = io::sweep_summary(r, c);
  io::write_atomic(dir / (stem + ".json"), summary.dump(1) + "\n");
  std::cout << a.config.gait << " timing T" << c.sim.timing << " (phase " << r.phase << "): " << r.successes() << " / "
            << r.success.size() << " cells succeed, " << sim::isolated_successes(r) << " isolated\n";
  std::cout << "wrote " << (dir / (stem + ".csv")).string() << "\n";
  return kExitOk;
}

int cmd_show(const Options& o) {
  const auto [a, c] = load_for_run(o);
  std::cout << summary_text(a);
  std::cout << "config:\n" << io::config_to_json(c).dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capturability tubes, push-recovery planning and LIP simulation for quadrupeds"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run config JSON")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "sampling seed");
    sub->add_option("--jobs", o.jobs, "sweep worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--gait", o.gait, "gait")->check(CLI::IsMember({"trot", "bound", "pace"}));
    sub->add_option("--timing", o.timing, "push timing 1..4")->check(CLI::Range(1, 4));
    sub->add_option("--grid", o.grid, "push grid x0:x1:dx,y0:y1:dy");
  };
  auto add_archive = [&](CLI::App* sub) {
    sub->add_option("--archive", o.archive, "tube archive (default <out>/tubes.json)");
  };
  CLI::App* analyze_cmd = app.add_subcommand("analyze", "compute the tube archive");
  CLI::App* plan_cmd = app.add_subcommand("plan", "plan a recovery from one state");
  CLI::App* sim_cmd = app.add_subcommand("simulate", "closed-loop rollout after one push");
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "rollouts over a grid of pushes");
  CLI::App* show_cmd = app.add_subcommand("show", "print an archive summary");
  for (CLI::App* sub : {analyze_cmd, plan_cmd, sim_cmd, sweep_cmd, show_cmd}) add_common(sub);
  for (CLI::App* sub : {plan_cmd, sim_cmd, sweep_cmd, show_cmd}) add_archive(sub);
  plan_cmd->add_option("--state", o.state, "CoM state c_x,cdot_x,c_y,cdot_y relative to the nominal frame");
  plan_cmd->add_option("--phase", o.phase, "gait phase of the state");
  sim_cmd->add_option("--push", o.push, "velocity change dv_x,dv_y");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadConfig;
  }

  try {
    if (*analyze_cmd) return cmd_analyze(o);
    if (*plan_cmd) return cmd_plan(o);
    if (*sim_cmd) return cmd_simulate(o);
    if (*sweep_cmd) return cmd_sweep(o);
    if (*show_cmd) return cmd_show(o);
  } catch (const io::ConfigError& e) {
    std::cerr << "bad config: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const cap::EmptyResult& e) {
    std::cerr << "analysis failed: empty result: " << e.what() << "\n";
    return kExitAnalysis;
  } catch (const cap::NonConvergence& e) {
    std::cerr << "analysis failed: no convergence: " << e.what() << "\n";
    return kExitAnalysis;
  } catch (const cap::FitFailure& e) {
    std::cerr << "analysis failed: surrogate fit: " << e.what() << "\n";
    return kExitAnalysis;
  } catch (const plan::NotCapturable& e) {
    std::cerr << "not capturable: " << e.what() << " (distance " << e.distance << ")\n";
    return kExitNotCapturable;
  } catch (const plan::PlanInfeasible& e) {
    std::cerr << "not capturable: no feasible plan: " << e.what() << "\n";
    return kExitNotCapturable;
  } catch (const std::invalid_argument& e) {
    std::cerr << "bad config: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
