#pragma once

#include "bq/brackets.hpp"
#include "bq/checkpoint.hpp"
#include "bq/config.hpp"
#include "bq/control.hpp"
#include "bq/lagrangian.hpp"
#include "bq/linearization.hpp"
#include "bq/malliavin.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace bq {

// Random real field on |k|_inf <= band with coefficients ~ amp / (1 + |k|^2).
SpectralState random_truncated_state(int n, int band, SetupRng& rng, double amp = 1.0);

// ---- bracket algebra
struct BracketOptions {
  int n = 64;
  PhysicalParams params;
  int jmax = 4;
  int states = 10;
  int band = 4;
  double amp = 1.0;
  std::uint64_t seed = 1;
  std::vector<double> eps{4e-4, 2e-4, 1e-4};  // last entry is the reporting step
  // error at the coarsest step below which a row counts as exact (roundoff only)
  double y_floor = 1e-10;
  double z_floor = 1e-7;
};

struct BracketRow {
  int j1, j2, m;
  std::vector<double> y_err, z_err;  // max relative error over states, per eps
  double y_order, z_order;           // min observed order over consecutive eps and states; inf if exact
};

struct BracketReport {
  std::vector<BracketRow> rows;
  double y_max_rel = 0.0;  // at the last eps
  double z_max_rel = 0.0;
  double y_min_order = 0.0;  // over rows with a measurable truncation error; inf if none
  double z_min_order = 0.0;
  int y_exact_rows = 0;
  int z_exact_rows = 0;
  double y_floor = 0.0;        // largest Y error seen at any eps
  double zsigma_max_err = 0.0; // closed form vs exact difference quotient
  double zsigma_spread = 0.0;  // variation of the difference quotient across states
  int zsigma_pairs = 0;
};

BracketReport bracket_check(const BracketOptions& o);
nlohmann::json to_json(const BracketReport& r);

// ---- linearization
struct LinearizationOptions {
  int n = 64;
  PhysicalParams params;
  double dt = 2.5e-3;
  double t = 0.5;
  int directions = 10;
  std::uint64_t seed = 1;
  std::vector<double> eps{1e-4, 5e-5, 2.5e-5};
};

struct LinearizationReport {
  std::vector<std::vector<double>> errors;  // per direction, per eps
  double min_order = 0.0;
  double max_final_error = 0.0;
  double cocycle_error = 0.0;
};

LinearizationReport linearization_check(const LinearizationOptions& o);
nlohmann::json to_json(const LinearizationReport& r);

// ---- Lyapunov
nlohmann::json to_json(const LyapunovSummary& s);

struct SweepRow {
  double g, alpha_scale, dt;
  LyapunovSummary summary;
};
// Runs each regime; a regime whose seeds violate the CFL bound is rerun with dt halved (up to 3 times).
std::vector<SweepRow> lyapunov_sweep(const LyapunovConfig& base, const std::vector<double>& gs,
                                     const std::vector<double>& scales, int threads = 1);

// ---- Malliavin
struct MalliavinOptions {
  MalliavinConfig base;
  int seeds = 20;
  int doubled_seeds = 2;      // seeds also assembled at half the seed spacing
  int control_seeds = 2;      // seeds used for the regularized control
  int probe_directions = 10;  // per control seed
  std::vector<double> betas{1e-1, 1e-2, 1e-3, 1e-4};
};

struct MalliavinSeedRow {
  std::uint64_t seed;
  double min_eig, max_entry, cone_probe, asym;
  double doubled_change = -1.0;  // relative, -1 when not computed
};

struct MalliavinControlRow {
  std::uint64_t seed;
  int direction;
  std::vector<double> rho_norm, identity_error, control_norm;
  bool monotone;
};

struct MalliavinReport {
  std::vector<MalliavinSeedRow> seeds;
  std::vector<MalliavinControlRow> controls;
  double min_eig = 0.0;
  double max_asym = 0.0;
  double max_doubled_change = 0.0;
  double cone_positive_fraction = 0.0;
  double max_identity_error = 0.0;
  double monotone_fraction = 0.0;
};

MalliavinReport malliavin_probe(const MalliavinOptions& o);
nlohmann::json to_json(const MalliavinReport& r);

// ---- span
struct SpanOptions {
  int n = 64;
  PhysicalParams params;
  double dt = 2.5e-3;
  double burn_in = 10.0;
  int seeds = 20;
  double N = 4.0;
  double tangent_N = 2.0;
  std::uint64_t master_seed = 1;
};

struct SpanRow {
  std::uint64_t seed;
  double two_point, tangent, jacobian;
  double separation, tau_norm;
};

struct SpanReport {
  std::vector<SpanRow> rows;
  double min[3] = {0, 0, 0}, median[3] = {0, 0, 0};
};

SpanReport span_study(const SpanOptions& o);
nlohmann::json to_json(const SpanReport& r);

// ---- energy
struct EnergyAuditOptions {
  int n = 64;
  PhysicalParams params;
  double dt = 2.5e-3;
  int decay_runs = 4;
  double decay_horizon = 5.0;
  int ou_seeds = 64;
  double ou_horizon = 2.0;
  std::uint64_t master_seed = 1;
};

struct EnergyAuditReport {
  double max_decay_ratio = 0.0;  // max over runs and steps of ||U_t||^2 e^{kappa t} / ||U_0||^2
  bool monotone = true;
  std::array<double, 4> ou_mean{}, ou_oracle{}, ou_stderr{}, ou_z{};
  double max_abs_z = 0.0;
};

EnergyAuditReport energy_audit(const EnergyAuditOptions& o);
nlohmann::json to_json(const EnergyAuditReport& r);

// ---- control
struct ControlDemoOptions {
  PhysicalParams params;
  SteeringOptions steering;
  int plans = 20;
  double matrix_log = 10.0;
  std::uint64_t seed = 1;
};

struct ControlDemoReport {
  std::vector<ControlPlan> plans;
  std::vector<SteeringReport> reports;
  ControlPlan matrix_plan;
  SteeringReport matrix;
  SteeringReport worst;  // entrywise max over the random plans
};

ControlDemoReport control_demo(const ControlDemoOptions& o);
nlohmann::json to_json(const ControlDemoReport& r);

// ---- single trajectory with checkpointing
struct SimulationRow {
  std::uint64_t step;
  double t, energy, enstrophy, umax;
  ExtendedState e;
};

struct SimulationResult {
  std::vector<SimulationRow> rows;
  Checkpoint final_state;
};

// Runs [start.step, total_steps) of seed `stream`; writes a checkpoint once the
// step counter reaches checkpoint_step (if nonzero and path given).
SimulationResult simulate_trajectory(const ExperimentConfig& c, const Checkpoint& start, std::uint64_t total_steps,
                                     int sample_every, std::uint64_t checkpoint_step = 0,
                                     const std::string& checkpoint_path = "");
Checkpoint initial_checkpoint(const ExperimentConfig& c, std::uint64_t stream);
std::string simulation_csv(const std::vector<SimulationRow>& rows);

// ---- orchestration
struct RunRecord {
  std::string config_hash;
  std::string revision;
  std::string kind;
  std::string status = "ok";
  double wall_seconds = 0.0;
  int failed_seeds = 0;
  std::vector<std::string> files;
  nlohmann::json summary;
};

// Executes the configured experiment, writing CSV series and summary.json into out_dir.
RunRecord run(const ExperimentConfig& c, const std::string& out_dir, int threads = 1);
std::string source_revision();

// helpers shared with the command-line tools
LyapunovConfig lyapunov_config(const ExperimentConfig& c);
std::string lyapunov_csv(const LyapunovSummary& s);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace bq
