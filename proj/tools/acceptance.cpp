#include "bq/errors.hpp"
#include "bq/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>

using namespace bq;

namespace tol {
constexpr double y_order = 1.8;
constexpr double z_order = 0.9;
constexpr double fd_rel = 1e-4;        // at eps = 1e-4
constexpr double roundoff_floor = 1e-10;  // Y quotient exact for the quadratic drift
constexpr double zsigma = 1e-12;
constexpr double lin_order = 0.9;
constexpr double cocycle = 1e-8;
constexpr double det = 1e-6;
constexpr double lyap_sum = 1e-3;
constexpr double steer_pos = 1e-6;
constexpr double steer_angle = 1e-6;
constexpr double steer_residual = 1e-8;
constexpr double steer_return = 1e-8;
constexpr double steer_identity = 1e-8;
constexpr double matrix_ratio = 0.99;
constexpr double matrix_det = 1e-8;
constexpr double shear_b = 1e-12;
constexpr double cell_drift = 1e-10;
constexpr double gram_min_eig = -1e-10;
constexpr double gram_doubled = 1e-3;
constexpr double cone_fraction = 0.95;
constexpr double rho_identity = 1e-8;
constexpr double rho_monotone = 0.9;
constexpr double span_median = 1e-3;
constexpr double energy_slack = 1e-6;
constexpr double ou_sigmas = 3.0;
}  // namespace tol

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  nlohmann::json data;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int threads = 1;
std::filesystem::path out_dir;

Outcome brackets() {
  const BracketReport r = bracket_check(BracketOptions{});
  const bool y_ok = r.y_min_order >= tol::y_order ||
                    (r.y_exact_rows == static_cast<int>(r.rows.size()) && r.y_floor < tol::roundoff_floor);
  const bool z_ok = r.z_min_order >= tol::z_order;
  const bool pass = y_ok && z_ok && r.y_max_rel < tol::fd_rel && r.z_max_rel < tol::fd_rel &&
                    r.zsigma_max_err < tol::zsigma && r.zsigma_spread < tol::zsigma;
  return {pass,
          fmt("Y max rel %.2e (exact rows %d/%zu), Z order %.3f max rel %.2e (exact rows %d), [Z,sigma] err %.1e "
              "spread %.1e over %d pairs",
              r.y_max_rel, r.y_exact_rows, r.rows.size(), r.z_min_order, r.z_max_rel, r.z_exact_rows,
              r.zsigma_max_err, r.zsigma_spread, r.zsigma_pairs),
          to_json(r)};
}

Outcome linearization() {
  const LinearizationReport r = linearization_check(LinearizationOptions{});
  return {r.min_order >= tol::lin_order && r.cocycle_error < tol::cocycle,
          fmt("FD order %.3f (final error %.2e), cocycle %.1e", r.min_order, r.max_final_error, r.cocycle_error),
          to_json(r)};
}

LyapunovSummary main_lyapunov;
bool main_lyapunov_done = false;
double main_dt = 0.0;

const LyapunovSummary& lyapunov_main() {
  if (!main_lyapunov_done) {
    LyapunovConfig c;  // n = 64, 16 seeds, horizon 400, burn-in 50
    auto rows = lyapunov_sweep(c, {c.params.g}, {1.0}, threads);
    main_lyapunov = std::move(rows.front().summary);
    main_dt = rows.front().dt;
    write_text((out_dir / "lyapunov.csv").string(), lyapunov_csv(main_lyapunov));
    main_lyapunov_done = true;
  }
  return main_lyapunov;
}

Outcome determinant() {
  const LyapunovSummary& s = lyapunov_main();
  int failed = 0;
  for (const auto& r : s.seeds) failed += !r.ok;
  return {failed == 0 && s.max_det_drift < tol::det && s.max_abs_sum < tol::lyap_sum,
          fmt("max |det A - 1| to t=100 %.2e, max |l1+l2| %.2e, failed seeds %d", s.max_det_drift, s.max_abs_sum,
              failed),
          {{"max_det_drift", s.max_det_drift}, {"max_abs_sum", s.max_abs_sum}}};
}

Outcome lyapunov() {
  const LyapunovSummary& s = lyapunov_main();
  LyapunovConfig sweep;
  sweep.grid = GridSpec::make(32);
  sweep.seeds = 8;
  sweep.burn_in = 30.0;
  sweep.horizon = 150.0;
  const auto rows = lyapunov_sweep(sweep, {1, 2, 4}, {1, 2, 4}, threads);
  std::string csv = "g,alpha_scale,dt,lambda_qr,ci_qr,lambda_proj,ci_proj,ci_positive\n";
  int positive = 0;
  nlohmann::json reg = nlohmann::json::array();
  for (const auto& r : rows) {
    positive += r.summary.ci_positive;
    csv += fmt("%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.g, r.alpha_scale, r.dt, r.summary.qr.lambda_top,
               r.summary.qr.ci_halfwidth, r.summary.proj.lambda_top, r.summary.proj.ci_halfwidth,
               int(r.summary.ci_positive));
    reg.push_back({{"g", r.g}, {"alpha_scale", r.alpha_scale}, {"dt", r.dt}, {"summary", to_json(r.summary)}});
  }
  write_text((out_dir / "lyapunov_sweep.csv").string(), csv);
  nlohmann::json data = to_json(s);
  data["dt"] = main_dt;
  data["sweep"] = reg;
  return {s.estimators_agree && positive > 0,
          fmt("dt %.2e: lambda %.4f +- %.4f (qr) vs %.4f +- %.4f (proj), agree %s, CI excludes 0: %s; sweep positive regimes "
              "%d/%zu",
              main_dt, s.qr.lambda_top, s.qr.ci_halfwidth, s.proj.lambda_top, s.proj.ci_halfwidth,
              s.estimators_agree ? "yes" : "no", s.ci_excludes_zero ? "yes" : "no", positive, rows.size()),
          data};
}

ControlDemoReport control_report;
bool control_done = false;

const ControlDemoReport& control() {
  if (!control_done) {
    control_report = control_demo(ControlDemoOptions{});
    control_done = true;
  }
  return control_report;
}

Outcome steering() {
  const ControlDemoReport& r = control();
  const SteeringReport& w = r.worst;
  const double target = r.matrix_plan.matrix_target;
  const bool pass = w.position_error < tol::steer_pos && w.angle_error < tol::steer_angle &&
                    w.pde_residual < tol::steer_residual && w.state_return < tol::steer_return &&
                    w.identity_error < tol::steer_identity && r.matrix.matrix_norm >= tol::matrix_ratio * target &&
                    r.matrix.matrix_det_error < tol::matrix_det;
  return {pass,
          fmt("%zu plans: pos %.1e angle %.1e residual %.1e |U(1)| %.1e |A-I| %.1e; matrix |A|/M %.6f det err %.1e",
              r.plans.size(), w.position_error, w.angle_error, w.pde_residual, w.state_return, w.identity_error,
              r.matrix.matrix_norm / target, r.matrix.matrix_det_error),
          to_json(r)};
}

Outcome shear_cellular() {
  const ControlDemoReport& r = control();
  return {r.worst.shear_b_omega < tol::shear_b && r.worst.cell_center_drift < tol::cell_drift,
          fmt("shear omega-part of B %.1e, cell-center drift %.1e", r.worst.shear_b_omega, r.worst.cell_center_drift),
          {{"shear_b_omega", r.worst.shear_b_omega}, {"cell_center_drift", r.worst.cell_center_drift}}};
}

Outcome malliavin() {
  MalliavinOptions o;  // n = 64, T = 1, 20 seeds
  o.base.threads = threads;
  const MalliavinReport r = malliavin_probe(o);
  const bool pass = r.min_eig >= tol::gram_min_eig && r.max_asym == 0.0 &&
                    r.max_doubled_change < tol::gram_doubled && r.cone_positive_fraction >= tol::cone_fraction &&
                    r.max_identity_error < tol::rho_identity && r.monotone_fraction >= tol::rho_monotone;
  return {pass,
          fmt("min eig %.2e, asym %.0e, doubled %.1e, cone positive %.2f, rho identity %.1e, monotone %.2f",
              r.min_eig, r.max_asym, r.max_doubled_change, r.cone_positive_fraction, r.max_identity_error,
              r.monotone_fraction),
          to_json(r)};
}

Outcome span() {
  const SpanReport r = span_study(SpanOptions{});
  bool pass = !r.rows.empty();
  for (int k = 0; k < 3; ++k) pass = pass && r.min[k] > 0.0 && r.median[k] > tol::span_median;
  return {pass,
          fmt("two-point min %.2e med %.2e; tangent min %.2e med %.2e; jacobian min %.2e med %.2e", r.min[0],
              r.median[0], r.min[1], r.median[1], r.min[2], r.median[2]),
          to_json(r)};
}

Outcome energy() {
  const EnergyAuditReport r = energy_audit(EnergyAuditOptions{});
  return {r.max_decay_ratio <= 1.0 + tol::energy_slack && r.max_abs_z <= tol::ou_sigmas,
          fmt("max decay ratio %.6f, OU max |z| %.2f", r.max_decay_ratio, r.max_abs_z), to_json(r)};
}

Outcome reproducibility() {
  const auto base = out_dir / "repro";
  std::filesystem::remove_all(base);
  ExperimentConfig c = parse_config(R"(
kind = "lyapunov"
[grid]
n = 32
[run]
burn_in = 2
horizon = 10
ensemble = 3
seed = 11
[options]
sample_every = 200
)");
  run(c, (base / "a").string(), threads);
  run(c, (base / "b").string(), threads);
  const bool csv_same =
      read_text((base / "a" / "lyapunov.csv").string()) == read_text((base / "b" / "lyapunov.csv").string());

  ExperimentConfig s = parse_config(R"(
kind = "simulate"
[grid]
n = 32
[run]
horizon = 2
seed = 11
[options]
init_amp = 1.0
sample_every = 40
)");
  const auto total = static_cast<std::uint64_t>(std::llround(s.horizon / s.dt));
  const std::string ck = (base / "mid.bqck").string();
  const auto full = simulate_trajectory(s, initial_checkpoint(s, 0), total, 40, total / 2, ck);
  const auto tail = simulate_trajectory(s, load_checkpoint(ck, s.n), total, 40);
  const std::vector<SimulationRow> expect(full.rows.end() - static_cast<long>(tail.rows.size()), full.rows.end());
  const bool restart_same = simulation_csv(tail.rows) == simulation_csv(expect) &&
                            encode_checkpoint(tail.final_state) == encode_checkpoint(full.final_state);
  return {csv_same && restart_same,
          fmt("CSV byte-identical: %s, checkpoint restart bit-exact: %s", csv_same ? "yes" : "no",
              restart_same ? "yes" : "no"),
          {{"csv_identical", csv_same}, {"restart_identical", restart_same}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  bool fail_exit = false;
  std::vector<int> only;
  std::string out = "acceptance_out";
  app.add_flag("--fail-exit", fail_exit, "exit 1 when any criterion fails");
  app.add_option("--only", only, "criterion numbers to run")->check(CLI::Range(1, 10));
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "directory for CSV and JSON details");
  CLI11_PARSE(app, argc, argv);
  out_dir = out;
  std::filesystem::create_directories(out_dir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"brackets", brackets},         {"linearization", linearization},   {"determinant-and-sum", determinant},
      {"lyapunov-positivity", lyapunov}, {"steering", steering},          {"shear-cellular", shear_cellular},
      {"malliavin", malliavin},       {"span", span},                     {"energy", energy},
      {"reproducibility", reproducibility}};
  const std::set<int> chosen(only.begin(), only.end());
  nlohmann::json report;
  report["revision"] = source_revision();
  bool all = true;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!chosen.empty() && !chosen.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what(), nullptr};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && o.pass;
    std::cout << "[" << id << "] " << checks[i].first << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << fmt("  (%.0fs)", secs) << std::endl;
    report[checks[i].first] = {{"pass", o.pass}, {"detail", o.detail}, {"seconds", secs}, {"data", o.data}};
    write_text((out_dir / "acceptance.json").string(), report.dump(2) + "\n");
  }
  return fail_exit && !all ? 1 : 0;
}
