#include "chainctl_cli/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "chainctl/controllability.hpp"
#include "chainctl/errors.hpp"
#include "chainctl/lie_engine.hpp"
#include "chainctl/linearization.hpp"
#include "chainctl/time_optimal.hpp"
#include "chainctl_cli/io.hpp"

namespace chainctl::cli {

namespace {

using io::Json;

// JSON config files: top-level keys are options of the main command or of
// the selected subcommand; an object under a subcommand name targets that
// subcommand explicitly.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    Json j;
    try {
      j = Json::parse(input);
    } catch (const Json::parse_error& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<std::string> active;
    for (const CLI::App* sub : root_->get_subcommands()) active.push_back(sub->get_name());
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      const CLI::App* sub = nullptr;
      try {
        sub = root_->get_subcommand(key);
      } catch (const CLI::OptionNotFound&) {
      }
      if (sub && value.is_object()) {
        for (const auto& [k2, v2] : value.items()) items.push_back(item({key}, k2, v2));
        continue;
      }
      if (root_->get_option_no_throw("--" + key) != nullptr || active.empty()) {
        items.push_back(item({}, key, value));
      } else {
        items.push_back(item({active.front()}, key, value));
      }
    }
    return items;
  }

 private:
  static CLI::ConfigItem item(std::vector<std::string> parents, const std::string& name,
                              const Json& v) {
    CLI::ConfigItem it;
    it.parents = std::move(parents);
    it.name = name;
    auto text = [](const Json& e) { return e.is_string() ? e.get<std::string>() : e.dump(); };
    if (v.is_array()) {
      for (const auto& e : v) it.inputs.push_back(text(e));
    } else {
      it.inputs.push_back(text(v));
    }
    return it;
  }

  const CLI::App* root_;
};

struct Globals {
  int n = 2;
  std::string potential = "toda";
  std::uint64_t seed = 1;
  std::string out;
  std::optional<double> tol;
};

struct Result {
  Json report;
  std::optional<Trajectory> trajectory;
  int code = ok;
};

Json profile_table(const std::vector<int>& ranks) {
  Json t = Json::object();
  for (std::size_t m = 0; m < ranks.size(); ++m) t[std::to_string(m + 1)] = ranks[m];
  return t;
}

Json rank_profile_json(const RankProfile& p) {
  Json j;
  j["lambda"] = profile_table(p.lambda);
  j["xi"] = profile_table(p.xi);
  j["delta"] = profile_table(p.delta);
  return j;
}

ChainState gaussian_state(std::mt19937_64& rng, int n, double sd) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> q(n), p(n);
  for (auto& v : q) v = g(rng);
  for (auto& v : p) v = g(rng);
  return {q, p};
}

ChainState rest_line(int n, double shift) {
  std::vector<double> q(n);
  for (int k = 0; k < n; ++k) q[k] = k + shift;
  return ChainState::at_rest(q);
}

Json header(const std::string& command, const Globals& g) {
  Json j;
  j["command"] = command;
  j["n"] = g.n;
  j["potential"] = g.potential;
  j["seed"] = g.seed;
  return j;
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  double T = 0.0;
  double step = 1e-3;
  std::optional<long> steps;
  std::string from;
  double u = 0.0, v = 0.0;
  std::string integrator = "rk4";
  double sd = 0.5;
};

Result cmd_simulate(const Globals& g, const SimulateArgs& a) {
  const PotentialModel pot = PotentialModel::by_name(g.potential);
  std::mt19937_64 rng(g.seed);
  const ChainState x0 = a.from.empty() ? gaussian_state(rng, g.n, a.sd) : io::load_state(a.from);
  if (x0.n() != g.n) throw ValidationError("--from state has a different particle count than --n");
  if (!(a.T > 0.0)) throw ValidationError("--T must be > 0");
  SimulationOptions so;
  so.step = a.step;
  if (a.steps) {
    if (*a.steps <= 0) throw ValidationError("--steps must be positive");
    so.step = a.T / static_cast<double>(*a.steps);
  }
  if (a.integrator == "rk4") so.integrator = Integrator::rk4;
  else if (a.integrator == "leapfrog") so.integrator = Integrator::leapfrog;
  else if (a.integrator == "yoshida4") so.integrator = Integrator::yoshida4;
  else throw ValidationError("--integrator must be rk4, leapfrog or yoshida4");
  const bool free = a.u == 0.0 && a.v == 0.0;
  const ControlSignal sig = free ? ControlSignal() : ControlSignal::constant(a.u, a.v);
  const ControlAffineField field(g.n, pot);
  const Trajectory tr = simulate(field, x0, sig, a.T, so);

  Result r;
  Json& j = r.report = header("simulate", g);
  j["T"] = a.T;
  j["step"] = so.step;
  j["integrator"] = a.integrator;
  j["controls"] = {{"u", a.u}, {"v", a.v}};
  j["initial_state"] = io::state_to_json(x0);
  j["final_state"] = io::state_to_json(tr.final_state());
  j["samples"] = tr.size();
  j["truncated"] = tr.truncated;
  j["diagnostic"] = tr.diagnostic;
  const double H0 = total_energy(x0, pot);
  double drift = 0.0;
  for (const auto& x : tr.x) drift = std::max(drift, std::abs(total_energy(ChainState::from_vector(x), pot) - H0));
  j["energy_initial"] = H0;
  j["energy_final"] = total_energy(ChainState::from_vector(tr.final_state()), pot);
  if (free) {
    j["energy_drift"] = drift;
    const double tol = g.tol.value_or(1e-6);
    j["tolerance"] = tol;
    j["pass"] = !tr.truncated && drift <= tol;
  } else {
    j["energy_drift"] = nullptr;
    j["pass"] = !tr.truncated;
  }
  r.trajectory = tr;
  r.code = tr.truncated ? numerical : ok;
  return r;
}

// --- rank -------------------------------------------------------------------

struct RankArgs {
  int samples = 100;
  double sd = 1.0;
};

Result cmd_rank(const Globals& g, const RankArgs& a) {
  if (a.samples < 1) throw ValidationError("--samples must be >= 1");
  const PotentialModel pot = PotentialModel::by_name(g.potential);
  const double tol = g.tol.value_or(1e-8);
  const RankProfile predicted = predicted_rank_profile(g.n);
  std::mt19937_64 rng(g.seed);
  int mismatches = 0;
  Json first_mismatch = nullptr;
  std::optional<RankProfile> first;
  for (int s = 0; s < a.samples; ++s) {
    const ChainState x = gaussian_state(rng, g.n, a.sd);
    const RankProfile prof = delta_rank_profile(x, pot, tol);
    if (!first) first = prof;
    if (!(prof == predicted)) {
      if (mismatches == 0) first_mismatch = {{"state", io::state_to_json(x)}, {"profile", rank_profile_json(prof)}};
      ++mismatches;
    }
  }
  Result r;
  Json& j = r.report = header("rank", g);
  j["samples"] = a.samples;
  j["tolerance"] = tol;
  j["predicted"] = rank_profile_json(predicted);
  j["profile"] = rank_profile_json(*first);
  j["mismatches"] = mismatches;
  j["first_mismatch"] = first_mismatch;
  j["pass"] = mismatches == 0;
  r.code = mismatches == 0 ? ok : certification;
  return r;
}

// --- linearize --------------------------------------------------------------

struct LinearizeArgs {
  std::string at;
  double sd = 0.5;
  double T = 1.0;
  double u = 0.0, v = 0.0;
};

Result cmd_linearize(const Globals& g, const LinearizeArgs& a) {
  const PotentialModel pot = PotentialModel::by_name(g.potential);
  std::mt19937_64 rng(g.seed);
  const ChainState x = a.at.empty() ? gaussian_state(rng, g.n, a.sd) : io::load_state(a.at);
  if (x.n() != g.n) throw ValidationError("--at state has a different particle count than --n");
  const double tol = g.tol.value_or(1e-4);

  Result r;
  Json& j = r.report = header("linearize", g);
  j["state"] = io::state_to_json(x);
  if (g.n >= 2) {
    const KroneckerIndices k = kronecker_indices(g.n);
    j["kronecker_indices"] = {k.k1, k.k2};
  } else {
    j["kronecker_indices"] = nullptr;
  }
  const auto [ys, zs] = flat_seeds(g.n);
  j["flat_seeds"] = {{"y", ys}, {"z", zs}};
  const FlatCoordinates fc = flat_coordinates(x, pot);
  j["flat"] = {{"y", fc.y}, {"z", fc.z}};
  const FlatChart chart = chart_jacobian(x, pot);
  j["chart"] = {{"condition_number", chart.condition_number}, {"nonsingular", chart.nonsingular}};
  const FeedbackTerms ft = feedback_terms(x, pot);
  j["feedback"] = {{"Y", ft.Y}, {"Z", ft.Z}, {"a", ft.a}, {"b", ft.b}, {"c", ft.c}, {"product", ft.product()}};

  bool pass = chart.nonsingular && std::abs(ft.product()) > 1e-12;
  if (a.T > 0.0) {
    const ControlAffineField field(g.n, pot);
    SimulationOptions so;
    so.step = 1e-3;
    const Trajectory tr = simulate(field, x, ControlSignal::constant(a.u, a.v), a.T, so);
    const NormalFormReport nf = verify_normal_form(tr, pot);
    j["normal_form"] = {{"T", a.T},
                        {"max_chain_residual", nf.max_chain_residual},
                        {"max_top_residual", nf.max_top_residual},
                        {"min_abs_product", nf.min_abs_product},
                        {"samples", nf.samples_used}};
    pass = pass && !tr.truncated && nf.max_chain_residual <= tol && nf.max_top_residual <= tol &&
           nf.min_abs_product > 1e-12;
    r.trajectory = tr;
  }
  j["tolerance"] = tol;
  j["pass"] = pass;
  r.code = pass ? ok : certification;
  return r;
}

// --- steer ------------------------------------------------------------------

struct SteerArgs {
  std::string from, to;
  double T = 5.0;
  double step = 1e-2;
  int doublings = 1;
};

Result cmd_steer(const Globals& g, const SteerArgs& a) {
  const PotentialModel pot = PotentialModel::by_name(g.potential);
  std::mt19937_64 rng(g.seed);
  ChainState x0 = a.from.empty() ? gaussian_state(rng, g.n, 0.3) : io::load_state(a.from);
  ChainState x1;
  if (a.to.empty()) {
    Eigen::VectorXd d = gaussian_state(rng, g.n, 1.0).to_vector();
    std::uniform_real_distribution<double> radius(0.0, 1.0);
    x1 = ChainState::from_vector(x0.to_vector() + radius(rng) * d / d.norm());
  } else {
    x1 = io::load_state(a.to);
  }
  if (x0.n() != g.n || x1.n() != g.n) throw ValidationError("state sizes differ from --n");
  SteerOptions so;
  so.step = a.step;
  so.max_doublings = a.doublings;
  const double tol = g.tol.value_or(1e-6);
  so.tolerance = tol;
  const SteerResult s = steer_flat(x0, x1, a.T, pot, so);

  Result r;
  Json& j = r.report = header("steer", g);
  j["from"] = io::state_to_json(x0);
  j["to"] = io::state_to_json(x1);
  j["T"] = s.T;
  j["doublings"] = s.doublings;
  j["endpoint_error"] = s.endpoint_error;
  j["max_control_magnitude"] = std::max({s.max_abs_u, std::abs(s.min_v), std::abs(s.max_v)});
  j["max_abs_u"] = s.max_abs_u;
  j["min_v"] = s.min_v;
  j["max_v"] = s.max_v;
  j["tolerance"] = tol;
  j["pass"] = s.endpoint_error <= tol;
  r.trajectory = s.trajectory;
  r.code = s.endpoint_error <= tol ? ok : certification;
  return r;
}

// --- controllability --------------------------------------------------------

struct ControllabilityArgs {
  std::string from, to;
  double omega = 1.0;
  double budget = 200.0;
};

Result cmd_controllability(const Globals& g, const ControllabilityArgs& a) {
  const PotentialModel pot = PotentialModel::by_name(g.potential);
  const ChainState x0 = a.from.empty() ? rest_line(g.n, 0.0) : io::load_state(a.from);
  const ChainState x1 = a.to.empty() ? rest_line(g.n, 1.0) : io::load_state(a.to);
  if (x0.n() != g.n || x1.n() != g.n) throw ValidationError("state sizes differ from --n");
  ControllabilityOptions opt;
  opt.budget = a.budget;
  opt.tolerance = g.tol.value_or(opt.tolerance);
  const ControllabilityResult res = demonstrate_controllability(x0, x1, a.omega, pot, opt);
  const ConfiningFeedback fb = make_confining_feedback(a.omega);
  const double c = std::max(modified_hamiltonian(x0, pot, fb), modified_hamiltonian(x1, pot, fb));
  const EnergyBox box = energy_box(c, g.n, pot, fb);

  Result r;
  Json& j = r.report = header("controllability", g);
  j["from"] = io::state_to_json(x0);
  j["to"] = io::state_to_json(x1);
  j["omega"] = a.omega;
  j["success"] = res.success;
  j["message"] = res.message;
  j["T_total"] = res.T_total;
  j["endpoint_error"] = res.endpoint_error;
  j["max_u"] = res.max_abs_u;
  j["min_v"] = res.min_v;
  j["max_v"] = res.max_v;
  j["constraints_respected"] = res.constraints_respected;
  Json segs = Json::array();
  for (const Segment& s : res.segments) segs.push_back({{"T", s.T}, {"endpoint_error", s.endpoint_error}});
  j["segments"] = segs;
  j["box"] = {{"c", c}, {"lower", box.lower}, {"upper", box.upper},
              {"momentum_bound", box.momentum_bound}, {"empty", box.empty}};
  if (res.success) r.trajectory = res.trajectory;
  r.code = !res.success ? numerical : (res.constraints_respected ? ok : certification);
  return r;
}

// --- mintime / audit ---------------------------------------------------------

struct MinTimeArgs {
  std::string from, to;
  std::optional<double> d;
  double omega = 1.0;
  int cap = -1;
  int starts = 4;
  double step = 1e-3;
};

Json schedule_json(const MinTimeResult& m) {
  Json j;
  j["T"] = m.schedule.T;
  j["schedule"] = {{"u", m.schedule.u_switches},
                   {"v", m.schedule.v_switches},
                   {"initial_values", {{"u", m.schedule.u0}, {"v", m.schedule.v0}}}};
  const ExtremalCertificate& c = m.certificate;
  j["certificate"] = {{"residual", c.residual},
                      {"transversality", c.transversality},
                      {"hamiltonian_spread", c.hamiltonian_spread},
                      {"counts", {{"u", c.switches_u}, {"v", c.switches_v}}},
                      {"sign_violations", c.sign_violations},
                      {"sign_consistency", c.sign_consistency},
                      {"singular_flag", c.singular_flag},
                      {"pass", c.pass},
                      {"note", c.note}};
  j["T_hi"] = std::isfinite(m.T_hi) ? Json(m.T_hi) : Json(nullptr);
  j["endpoint_error"] = m.endpoint_error;
  j["psi0"] = io::state_to_json(ChainState(m.psi0.psi_q, m.psi0.psi_p));
  return j;
}

Result cmd_mintime(const Globals& g, const MinTimeArgs& a) {
  const PotentialModel pot = PotentialModel::by_name(g.potential);
  ChainState x0, x1;
  if (!a.from.empty() || !a.to.empty()) {
    if (a.from.empty() || a.to.empty()) throw ValidationError("--from and --to go together");
    x0 = io::load_state(a.from);
    x1 = io::load_state(a.to);
  } else {
    const double d = a.d.value_or(1.0);
    x0 = rest_line(g.n, 0.0);
    x1 = rest_line(g.n, d);
  }
  if (x0.n() != g.n || x1.n() != g.n) throw ValidationError("state sizes differ from --n");
  MinTimeOptions opt;
  opt.seed = g.seed;
  opt.switch_cap = a.cap;
  opt.starts = a.starts;
  opt.step = a.step;
  if (g.tol) opt.certificate_tol = *g.tol;
  const MinTimeResult m = solve_min_time(x0, x1, a.omega, pot, opt);

  Result r;
  Json& j = r.report = header("mintime", g);
  j["from"] = io::state_to_json(x0);
  j["to"] = io::state_to_json(x1);
  j["omega"] = a.omega;
  const Json sj = schedule_json(m);
  for (const auto& [k, v] : sj.items()) j[k] = v;
  if (m.schedule.T > 0.0) {
    SimulationOptions so;
    so.step = a.step;
    r.trajectory = simulate(ControlAffineField(g.n, pot), x0, m.schedule.signal(), m.schedule.T, so);
  }
  r.code = m.certificate.pass ? ok : certification;
  return r;
}

struct AuditArgs {
  int samples = 5;
  double omega = 1.0;
  double window = 0.5;
  double radius = 0.25;
  int alarm = -1;
};

Result cmd_audit(const Globals& g, const AuditArgs& a) {
  if (a.samples < 1) throw ValidationError("--samples must be >= 1");
  const PotentialModel pot = PotentialModel::by_name(g.potential);
  const int n = g.n;
  std::mt19937_64 rng(g.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0), shift(-a.radius, a.radius);
  MinTimeOptions opt;
  opt.seed = g.seed;
  if (g.tol) opt.certificate_tol = *g.tol;
  SwitchingAuditOptions ao;
  ao.window = a.window;
  const int alarm = a.alarm < 0 ? 4 * n : a.alarm;

  Json instances = Json::array();
  std::vector<SwitchingSchedule> solved;
  bool pass = true;
  for (int s = 0; s < a.samples; ++s) {
    ChainState x0, x1;
    if (n == 1) {
      x0 = ChainState::at_rest({0.0});
      x1 = ChainState::at_rest({0.1 + 1.9 * unit(rng)});
    } else {
      std::vector<double> q(n), p(n), q1(n), p1(n);
      for (int k = 0; k < n; ++k) {
        q[k] = unit(rng);
        p[k] = unit(rng) - 0.5;
      }
      for (int k = 0; k < n; ++k) {
        q1[k] = q[k] + shift(rng);
        p1[k] = p[k] + shift(rng);
      }
      x0 = ChainState(q, p);
      x1 = ChainState(q1, p1);
    }
    Json inst;
    inst["from"] = io::state_to_json(x0);
    inst["to"] = io::state_to_json(x1);
    try {
      const MinTimeResult m = solve_min_time(x0, x1, a.omega, pot, opt);
      solved.push_back(m.schedule);
      inst["T"] = m.schedule.T;
      inst["certified"] = m.certificate.pass;
      inst["counts"] = {{"u", m.schedule.u_switches.size()}, {"v", m.schedule.v_switches.size()}};
      const ExtremalTrajectory ex = extremal_flow(x0, m.psi0, m.schedule, pot, opt.step);
      Json audits = Json::object();
      bool ok_inst = m.certificate.pass;
      for (Channel c : {Channel::u, Channel::v}) {
        if (n == 1 && c == Channel::v) continue;
        const SwitchingAudit au = switching_system_audit(ex, c, pot, m.schedule.all_switches(), ao);
        audits[c == Channel::u ? "u" : "v"] = {{"row_residual", au.row_residual},
                                               {"max_window_zeros", au.max_window_zeros},
                                               {"total_zeros", au.total_zeros},
                                               {"singular_flag", au.singular_flag}};
        ok_inst = ok_inst && au.row_residual.front() <= 1e-5 && au.max_window_zeros <= 2 * n - 1 &&
                  !au.singular_flag;
      }
      inst["audit"] = audits;
      inst["pass"] = ok_inst;
      pass = pass && ok_inst;
    } catch (const NumericalError& e) {
      inst["error"] = e.what();
      inst["pass"] = false;
      pass = false;
    }
    instances.push_back(inst);
  }
  const SwitchingCountAudit counts = switching_count_audit(solved, alarm);

  Result r;
  Json& j = r.report = header("audit", g);
  j["omega"] = a.omega;
  j["window"] = a.window;
  j["alarm_threshold"] = alarm;
  j["max_switches"] = {{"u", counts.max_u}, {"v", counts.max_v}};
  j["alarms"] = counts.alarms;
  j["instances"] = instances;
  j["pass"] = pass && counts.alarms.empty();
  r.code = (pass && counts.alarms.empty()) ? ok : certification;
  return r;
}

void emit(const Result& r, const Globals& g, std::ostream& out) {
  const std::string text = r.report.dump(2);
  out << text << '\n';
  if (g.out.empty()) return;
  std::filesystem::create_directories(g.out);
  std::ofstream(std::filesystem::path(g.out) / "report.json") << text << '\n';
  if (r.trajectory) {
    std::ofstream csv(std::filesystem::path(g.out) / "trajectory.csv");
    io::write_trajectory_csv(csv, *r.trajectory);
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"chainctl: controlled particle chains (simulation, Lie structure, flat steering, "
               "controllability, minimum-time control)",
               "chainctl"};
  app.fallthrough();
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON config file; flags given on the command line override it");

  Globals g;
  std::optional<double> tol;
  app.add_option("--n", g.n, "particle count")->check(CLI::PositiveNumber);
  app.add_option("--potential", g.potential, "toda, softplus or deadzone");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--out", g.out, "directory for report.json and trajectory.csv");
  app.add_option("--tol", tol, "command tolerance");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "integrate the chain, write a trajectory");
  sim->add_option("--T", sa.T, "horizon")->required();
  sim->add_option("--step", sa.step, "step size");
  sim->add_option("--steps", sa.steps, "number of steps (overrides --step)");
  sim->add_option("--from", sa.from, "initial state (file or JSON literal)");
  sim->add_option("--u", sa.u, "constant control u");
  sim->add_option("--v", sa.v, "constant control v");
  sim->add_option("--integrator", sa.integrator, "rk4, leapfrog or yoshida4");
  sim->add_option("--sd", sa.sd, "spread of the random initial state");

  RankArgs ra;
  auto* rank = app.add_subcommand("rank", "distribution rank profiles at random states");
  rank->add_option("--samples", ra.samples, "number of random states");
  rank->add_option("--sd", ra.sd, "spread of the random states");

  LinearizeArgs la;
  auto* lin = app.add_subcommand("linearize", "flat coordinates, chart and normal form check");
  lin->add_option("--at", la.at, "state (file or JSON literal)");
  lin->add_option("--sd", la.sd, "spread of the random state");
  lin->add_option("--T", la.T, "normal-form check horizon (0 skips)");
  lin->add_option("--u", la.u, "constant control u along the check");
  lin->add_option("--v", la.v, "constant control v along the check");

  SteerArgs st;
  auto* steer = app.add_subcommand("steer", "two-point steering through flat outputs");
  steer->add_option("--from", st.from, "initial state");
  steer->add_option("--to", st.to, "target state");
  steer->add_option("--T", st.T, "horizon");
  steer->add_option("--step", st.step, "control sampling step");
  steer->add_option("--doublings", st.doublings, "permitted T doublings");

  ControllabilityArgs ca;
  auto* ctrl = app.add_subcommand("controllability", "bounded-control transfer with confining feedback");
  ctrl->add_option("--from", ca.from, "initial state");
  ctrl->add_option("--to", ca.to, "target state");
  ctrl->add_option("--omega", ca.omega, "control bound");
  ctrl->add_option("--budget", ca.budget, "total time budget");

  MinTimeArgs ma;
  auto* mt = app.add_subcommand("mintime", "minimum-time bang-bang transfer");
  mt->add_option("--from", ma.from, "initial state");
  mt->add_option("--to", ma.to, "target state");
  mt->add_option("--d", ma.d, "rest-to-rest translation distance (default 1)");
  mt->add_option("--omega", ma.omega, "control bound");
  mt->add_option("--cap", ma.cap, "switches per channel (default 4n)");
  mt->add_option("--starts", ma.starts, "multi-start count");
  mt->add_option("--step", ma.step, "integration step");

  AuditArgs aa;
  auto* audit = app.add_subcommand("audit", "switching audits over random nearby transfers");
  audit->add_option("--samples", aa.samples, "number of instances");
  audit->add_option("--omega", aa.omega, "control bound");
  audit->add_option("--window", aa.window, "zero-count window length");
  audit->add_option("--radius", aa.radius, "target offset per coordinate");
  audit->add_option("--alarm", aa.alarm, "switch-count alarm threshold (default 4n)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }
  g.tol = tol;

  try {
    Result r;
    if (*sim) r = cmd_simulate(g, sa);
    else if (*rank) r = cmd_rank(g, ra);
    else if (*lin) r = cmd_linearize(g, la);
    else if (*steer) r = cmd_steer(g, st);
    else if (*ctrl) r = cmd_controllability(g, ca);
    else if (*mt) r = cmd_mintime(g, ma);
    else r = cmd_audit(g, aa);
    emit(r, g, out);
    return r.code;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return numerical;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return usage;
  } catch (const std::domain_error& e) {
    err << "invalid input: " << e.what() << '\n';
    return usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return numerical;
  }
}

}  // namespace chainctl::cli
