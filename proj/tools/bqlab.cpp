#include "bq/errors.hpp"
#include "bq/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

using namespace bq;

namespace {

struct Common {
  std::string config;
  std::int64_t seed = -1;
  std::string out;
  int threads = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config (TOML subset)");
  sub->add_option("--seed", c.seed, "override run.seed")->check(CLI::NonNegativeNumber);
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
}

ExperimentConfig load(const Common& cm, ExperimentKind kind) {
  ExperimentConfig c = cm.config.empty() ? parse_config("") : load_config(cm.config);
  c.kind = kind;
  if (cm.seed >= 0) c.master_seed = static_cast<std::uint64_t>(cm.seed);
  validate(c);
  for (const auto& w : c.warnings) std::cerr << "warning: " << w << "\n";
  return c;
}

int report(const RunRecord& r, const std::string& out) {
  std::cout << r.kind << " " << r.status << " config " << r.config_hash << " rev " << r.revision << " wall "
            << r.wall_seconds << "s -> " << out << "\n";
  return r.status == "ok" ? 0 : 3;
}

int replay(const Common& cm, const std::string& checkpoint, const std::string& plan_path) {
  const std::string out = cm.out.empty() ? "out/replay" : cm.out;
  std::filesystem::create_directories(out);
  RunRecord rec;
  rec.kind = "replay";
  rec.revision = source_revision();
  const auto t0 = std::chrono::steady_clock::now();
  nlohmann::json results;
  if (!plan_path.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text(plan_path));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("plan file: ") + e.what());
    }
    const ExperimentConfig c = load(cm, ExperimentKind::control_demo);
    rec.config_hash = config_hash(c);
    SteeringOptions opt;
    opt.n = static_cast<int>(c.opt_int("steer_n", opt.n));
    opt.dt = c.opt("steer_dt", opt.dt);
    const ControlPlan plan = plan_from_json(j.is_array() ? j.at(0) : j);
    const SteeringReport s = verify_steering(plan, c.params, opt);
    results["plan"] = to_json(plan);
    results["report"] = to_json(s);
  } else {
    ExperimentConfig c = load(cm, ExperimentKind::simulate);
    const Checkpoint k = load_checkpoint(checkpoint, c.n);
    c.master_seed = k.master_seed;
    c.params = k.params;
    c.dt = k.dt;
    rec.config_hash = config_hash(c);
    const auto total = static_cast<std::uint64_t>(std::llround((c.burn_in + c.horizon) / c.dt));
    if (total < k.step) throw ConfigError("checkpoint lies beyond the configured horizon");
    const auto res = simulate_trajectory(c, k, total, static_cast<int>(c.opt_int("sample_every", 100)));
    write_text(out + "/trajectory.csv", simulation_csv(res.rows));
    save_checkpoint(res.final_state, out + "/final.bqck");
    rec.files = {"trajectory.csv", "final.bqck"};
    results["start_step"] = k.step;
    results["end_step"] = total;
    results["stream"] = k.stream;
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.summary = {{"config_hash", rec.config_hash}, {"revision", rec.revision}, {"kind", rec.kind},
                 {"status", rec.status},           {"wall_seconds", rec.wall_seconds}, {"files", rec.files},
                 {"results", results}};
  write_text(out + "/summary.json", rec.summary.dump(2) + "\n");
  return report(rec, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pseudo-spectral lab for the stochastic Boussinesq system"};
  app.require_subcommand(1);
  Common cm;
  const std::vector<std::pair<std::string, ExperimentKind>> kinds = {
      {"simulate", ExperimentKind::simulate},
      {"lyapunov", ExperimentKind::lyapunov},
      {"control-demo", ExperimentKind::control_demo},
      {"bracket-check", ExperimentKind::bracket_check},
      {"malliavin-probe", ExperimentKind::malliavin_probe},
      {"span-check", ExperimentKind::span_check},
      {"energy-audit", ExperimentKind::energy_audit}};
  std::vector<std::pair<CLI::App*, ExperimentKind>> subs;
  for (const auto& [name, kind] : kinds) {
    CLI::App* s = app.add_subcommand(name, "run a " + name + " experiment");
    add_common(s, cm);
    subs.push_back({s, kind});
  }
  std::string checkpoint, plan;
  CLI::App* rp = app.add_subcommand("replay", "continue from a checkpoint or re-run a saved control plan");
  add_common(rp, cm);
  auto* ck = rp->add_option("--checkpoint", checkpoint, "BQCK1 checkpoint file");
  auto* pl = rp->add_option("--plan", plan, "control plan JSON");
  ck->excludes(pl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rp->parsed()) {
      if (checkpoint.empty() && plan.empty()) throw ConfigError("replay needs --checkpoint or --plan");
      return replay(cm, checkpoint, plan);
    }
    for (const auto& [s, kind] : subs) {
      if (!s->parsed()) continue;
      const ExperimentConfig c = load(cm, kind);
      const std::string out = cm.out.empty() ? "out/" + to_string(kind) : cm.out;
      return report(run(c, out, cm.threads), out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << " (seed " << e.seed() << ", step " << e.step() << ")\n";
    return 3;
  } catch (const StepSizeError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
