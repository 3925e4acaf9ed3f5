#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "support/checkpoints.hpp"
#include "twinflow/commands.hpp"
#include "twinflow/svg.hpp"

using namespace twinflow;
using namespace twinflow::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const char* env = std::getenv("TWINFLOW_TEST_TMP");
  const fs::path root = env != nullptr ? fs::path(env) : fs::temp_directory_path() / "twinflow_test_cli";
  const fs::path dir = root / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

std::string small_config(const fs::path& out, long steps = 10, const std::string& extra = {}) {
  return "[data]\ndataset = ring8\n"
         "[model]\nhidden = 16\ndepth = 2\ntime_frequencies = 4\n"
         "[train]\nbatch_size = 32\nlr = 0.001\neval_every = 5\nseed = 3\nsteps = " +
         std::to_string(steps) + "\n" + extra +
         "[eval]\nnfe_list = 1,2\nn_samples = 64\nn_proj = 8\n"
         "[output]\noutput_dir = " + out.string() + "\n";
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.cfg";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("config defaults") {
  const ExperimentConfig c = parse_config("");
  CHECK(c.train.mix.lambda == doctest::Approx(1.0 / 3.0));
  CHECK(c.train.adam.lr == 1e-4);
  CHECK(c.train.adam.beta1 == 0.9);
  CHECK(c.train.adam.beta2 == 0.95);
  CHECK(c.train.batch_size == 256);
  CHECK(c.train.ema_decay == 0.99);
  CHECK(c.train.model.hidden == 256);
  CHECK(c.train.model.depth == 4);
  CHECK(c.nfe_list == std::vector<int>{1, 2, 4, 8});
  CHECK(c.train.dataset.id == data::DatasetId::ring8);
}

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_config(
      "# comment\n[data]\ndataset = gauss_unit\ndim = 3\n[train]\nlambda = 0.5  # trailing\n"
      "rectify_weighting = kl_weight\ngrad_clip = none\n[eval]\nnfe_list = 1, 4\nplot = yes\n");
  CHECK(c.train.dataset.id == data::DatasetId::gauss_unit);
  CHECK(c.train.dataset.dim == 3);
  CHECK(c.train.mix.lambda == 0.5);
  CHECK(c.train.mix.rectify_weighting == losses::RectifyWeighting::kl_weight);
  CHECK_FALSE(c.train.grad_clip.has_value());
  CHECK(c.nfe_list == std::vector<int>{1, 4});
  CHECK(c.plot);

  const std::string text = render_config(c);
  const ExperimentConfig back = parse_config(text);
  CHECK(render_config(back) == text);
  CHECK(back.train.mix.lambda == c.train.mix.lambda);
  CHECK(parse_config(render_config(parse_config(""))).train.mix.lambda == parse_config("").train.mix.lambda);

  CHECK_THROWS_AS(parse_config("[train]\nlearning_rate = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nope]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("lambda = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nlambda = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nlambda = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[eval]\nnfe_list = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[data]\ndataset = spiral\n"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[train]\n\nsteps = x\n"), doctest::Contains("line 3"), ConfigError);
}

TEST_CASE("format_double round trips") {
  for (double v : {1.0 / 3.0, 1e-300, -2.5, 0.1}) CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("seed override from the environment") {
  ExperimentConfig c = parse_config("[train]\nseed = 5\n");
  ::unsetenv(kSeedEnv);
  apply_seed_override(c);
  CHECK(c.train.seed == 5);
  ::setenv(kSeedEnv, "77", 1);
  apply_seed_override(c);
  CHECK(c.train.seed == 77);
  ::setenv(kSeedEnv, "7x", 1);
  CHECK_THROWS_AS(apply_seed_override(c), ConfigError);
  ::unsetenv(kSeedEnv);
}

TEST_CASE("train writes deterministic artifacts") {
  const fs::path a = scratch("train_a"), b = scratch("train_b");
  run_train(parse_config(small_config(a)));
  run_train(parse_config(small_config(b)));
  CHECK(count_lines(a / "loss.csv") == 11);
  CHECK(slurp(a / "loss.csv").starts_with("step,base,adv,rectify,total,grad_norm\n"));
  // Evaluations at steps 5 and 10, two NFEs each.
  CHECK(count_lines(a / "metrics.csv") == 5);
  CHECK(fs::exists(a / "step_000005.ckpt"));
  CHECK(fs::exists(a / "step_000010.ckpt"));
  CHECK(fs::exists(a / "config.resolved"));
  for (const char* f : {"loss.csv", "metrics.csv"}) CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  CHECK(testing::same_training_state(a / "final.ckpt", b / "final.ckpt"));
  // config.resolved differs only by output_dir.
  CHECK(parse_config(slurp(a / "config.resolved")).train.seed == 3);
}

TEST_CASE("resume reproduces an uninterrupted run") {
  const fs::path full = scratch("resume_full"), again = scratch("resume_again"), cut = scratch("resume_cut");
  run_train(parse_config(small_config(full)));

  // Rerun in place from the middle checkpoint.
  run_train(parse_config(small_config(again)));
  run_train(parse_config(small_config(again)), again / "step_000005.ckpt");
  for (const char* f : {"loss.csv", "metrics.csv"}) CHECK_MESSAGE(slurp(full / f) == slurp(again / f), f);
  CHECK(testing::same_training_state(full / "final.ckpt", again / "final.ckpt"));

  // Interrupted after 5 steps, then continued to 10.
  run_train(parse_config(small_config(cut, 5)));
  CHECK(count_lines(cut / "loss.csv") == 6);
  const auto s = run_train(parse_config(small_config(cut)), cut / "step_000005.ckpt");
  CHECK(s.steps == 10);
  for (const char* f : {"loss.csv", "metrics.csv"}) CHECK_MESSAGE(slurp(full / f) == slurp(cut / f), f);
  CHECK(testing::same_training_state(full / "final.ckpt", cut / "final.ckpt"));

  ExperimentConfig wider = parse_config(small_config(cut));
  wider.train.model.hidden = 8;
  CHECK_THROWS_AS(run_train(wider, full / "final.ckpt"), ConfigError);
  CHECK_THROWS_AS(run_train(parse_config(small_config(cut, 3)), full / "final.ckpt"), ConfigError);
}

TEST_CASE("sample and eval") {
  const fs::path dir = scratch("sample");
  run_train(parse_config(small_config(dir, 5)));
  const fs::path ckpt = dir / "final.ckpt";

  SampleOptions opts;
  opts.ckpt = ckpt;
  opts.nfe = 2;
  opts.n = 100;
  opts.out = dir / "samples";
  opts.svg = true;
  opts.trajectory = true;
  const Matrix x = run_sample(opts);
  CHECK(x.rows() == 100);
  CHECK(count_lines(opts.out / "samples.csv") == 101);
  CHECK(slurp(opts.out / "samples.csv").starts_with("sample_id,dim_0,dim_1\n"));
  CHECK(count_lines(opts.out / "trajectory.csv") == 1 + 100 * 3);
  CHECK(count_of(slurp(opts.out / "samples.svg"), "<circle") == 100);
  CHECK(run_sample(opts) == x);
  opts.branch = sampler::Branch::fake;
  CHECK_FALSE(run_sample(opts) == x);

  EvalCommand cmd;
  cmd.ckpt = ckpt;
  cmd.nfe_list = {1, 8};
  cmd.out = dir / "eval";
  cmd.n = 50;
  const auto reports = run_eval(cmd);
  REQUIRE(reports.size() == 2);
  CHECK(reports[1].nfe == 8);
  CHECK(count_lines(cmd.out / "eval.csv") == 3);
  CHECK(slurp(cmd.out / "eval.csv").starts_with("nfe,sliced_w2,energy_dist,modes,diversity\n"));
}

TEST_CASE("conditional checkpoints sample with cycled labels") {
  const fs::path dir = scratch("conditional");
  run_train(parse_config(small_config(dir, 2, "") + "[data]\nconditional = true\n"));
  SampleOptions opts;
  opts.ckpt = dir / "final.ckpt";
  opts.n = 10;
  opts.out = dir / "s";
  run_sample(opts);
  const std::string text = slurp(opts.out / "samples.csv");
  CHECK(text.starts_with("sample_id,dim_0,dim_1,label\n"));
  CHECK(text.find(",7\n") != std::string::npos);
}

TEST_CASE("lambda sweep") {
  const fs::path dir = scratch("sweep");
  const std::vector<double> lambdas{0.0, 1.0 / 6, 1.0 / 3, 0.5, 2.0 / 3};
  const auto rows = run_sweep_lambda(parse_config(small_config(dir, 3)), lambdas);
  CHECK(rows.size() == 10);
  CHECK(count_lines(dir / "sweep.csv") == 11);
  CHECK(fs::exists(dir / "lambda_0.3333" / "final.ckpt"));
  CHECK(rows[2].lambda == 1.0 / 6);
  const std::vector<double> bad{0.5, 1.5};
  CHECK_THROWS_AS(run_sweep_lambda(parse_config(small_config(dir, 3)), bad), ConfigError);
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("exit");
  CHECK(cmd_train(dir / "missing.cfg") == kExitUsage);
  CHECK(cmd_train(write_config(dir, "[train]\nbogus = 1\n")) == kExitUsage);
  CHECK(cmd_train(write_config(dir, small_config(dir / "ok", 2))) == kExitOk);
  CHECK(cmd_train(write_config(dir, small_config(dir / "div", 10, "lr = 1e300\n"))) == kExitDivergence);
  SampleOptions opts;
  opts.ckpt = dir / "none.ckpt";
  opts.out = dir / "s";
  CHECK(cmd_sample(opts) == kExitRuntime);
  CHECK(cmd_gradcheck(0, 30) == kExitOk);
}

TEST_CASE("svg scatter") {
  Matrix pts(3, 2);
  pts << 0, 0, 1, 1, std::nan(""), 0;
  const std::string s = svg::scatter(pts, {}, "t");
  CHECK(s.starts_with("<svg"));
  CHECK(count_of(s, "<circle") == 2);
}
