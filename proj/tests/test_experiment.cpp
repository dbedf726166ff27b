#include "bq/errors.hpp"
#include "bq/experiment.hpp"

#include <doctest.h>

#include <filesystem>

using namespace bq;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("bqlab_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

ExperimentConfig small_config() {
  return parse_config(R"(
kind = "simulate"
[grid]
n = 16
[run]
dt = 0.01
horizon = 0.4
seed = 7
[options]
init_amp = 1.0
sample_every = 5
)");
}

}  // namespace

TEST_CASE("config parsing, defaults and errors") {
  const ExperimentConfig c = parse_config(R"(
# comment
kind = "lyapunov"   # trailing
[grid]
n = 32
[params]
nu1 = 0.2
alpha = [0.5, 0.5, 0.25, 0.25]
[run]
ensemble = 3
[options]
sweep = true
)");
  CHECK(c.kind == ExperimentKind::lyapunov);
  CHECK(c.n == 32);
  CHECK(c.params.nu1 == 0.2);
  CHECK(c.params.nu2 == 0.1);
  CHECK(c.params.alpha[0] == 0.5);
  CHECK(c.ensemble == 3);
  CHECK(c.opt_bool("sweep", false));
  CHECK_FALSE(c.warnings.empty());

  CHECK_THROWS_AS(parse_config("colour = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("kind = \"dance\"\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[params]\nalpha = [1, 2]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[grid]\nn = 15\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[params]\nnu1 = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run]\ndt = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run]\ndt = 0.1\ndt = 0.2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run\n"), ConfigError);
}

TEST_CASE("config hash ignores layout and tracks values") {
  const auto a = parse_config("[run]\nseed = 3\ndt = 0.01\n[grid]\nn = 16\n");
  const auto b = parse_config("# x\n[grid]\n  n=16\n[run]\ndt=1e-2\nseed = 3\n");
  const auto c = parse_config("[run]\nseed = 4\ndt = 0.01\n[grid]\nn = 16\n");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("checkpoint round trip and corruption") {
  const ExperimentConfig c = small_config();
  Checkpoint k = initial_checkpoint(c, 2);
  k.step = 17;
  k.e.A << 1.5, 0.25, -0.5, 0.75;
  const std::string bytes = encode_checkpoint(k);
  CHECK(bytes.substr(0, 5) == "BQCK1");
  const Checkpoint back = decode_checkpoint(bytes, 16);
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(back.step == 17);
  CHECK(back.stream == 2);
  CHECK(back.e.A(1, 0) == -0.5);

  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 40)), CheckpointError);
  std::string flipped = bytes;
  flipped[200] ^= 0x10;
  CHECK_THROWS_AS(decode_checkpoint(flipped), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(bytes, 32), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint("BQCK2" + bytes.substr(5)), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/file.bqck"), CheckpointError);
}

TEST_CASE("restart from a checkpoint is bit exact") {
  const ExperimentConfig c = small_config();
  const auto dir = scratch("restart");
  const std::string path = (dir / "mid.bqck").string();
  const auto full = simulate_trajectory(c, initial_checkpoint(c, 0), 40, 5, 20, path);
  const Checkpoint mid = load_checkpoint(path, 16);
  CHECK(mid.step == 20);
  const auto tail = simulate_trajectory(c, mid, 40, 5);
  REQUIRE(tail.rows.size() == 5);
  std::vector<SimulationRow> expect(full.rows.end() - 5, full.rows.end());
  CHECK(simulation_csv(tail.rows) == simulation_csv(expect));
  CHECK(encode_checkpoint(tail.final_state) == encode_checkpoint(full.final_state));
  CHECK_THROWS_AS(simulate_trajectory(parse_config("[grid]\nn = 32\n"), mid, 40, 5), CheckpointError);
}

TEST_CASE("runs are reproducible and record failures") {
  ExperimentConfig c = parse_config(R"(
kind = "lyapunov"
[grid]
n = 16
[run]
dt = 0.01
burn_in = 0.5
horizon = 2.5
ensemble = 2
seed = 5
[options]
sample_every = 50
)");
  const auto d1 = scratch("run1"), d2 = scratch("run2");
  const RunRecord r1 = run(c, d1.string());
  const RunRecord r2 = run(c, d2.string(), 2);
  CHECK(r1.status == "ok");
  CHECK(read_text((d1 / "lyapunov.csv").string()) == read_text((d2 / "lyapunov.csv").string()));
  CHECK(read_text((d1 / "lyapunov.csv").string()).rfind("seed,t,log_norm_growth,projective_average\n", 0) == 0);
  const auto summary = nlohmann::json::parse(read_text((d1 / "summary.json").string()));
  CHECK(summary["config_hash"] == config_hash(c));
  CHECK(summary["status"] == "ok");

  // a step far beyond the CFL bound fails every member without aborting the run
  c.kind = ExperimentKind::simulate;
  c.dt = 5.0;
  c.horizon = 50.0;
  c.options.set("init_amp", "20.0");
  const RunRecord bad = run(c, scratch("run3").string());
  CHECK(bad.failed_seeds == 2);
  CHECK(bad.status == "diverged");
}

TEST_CASE("random truncated states are real and band limited") {
  SetupRng rng(1, 0);
  const SpectralState U = random_truncated_state(32, 3, rng);
  CHECK(U.omega.support_radius() == 3);
  CHECK(U.theta.coeff(-2, 1) == std::conj(U.theta.coeff(2, -1)));
  CHECK(U.theta.coeff(2, -1) != cplx(0.0, 0.0));
}
