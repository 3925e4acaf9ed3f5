// twinflow: train, sample, evaluate and sweep TwinFlow models on toy data.

#include <CLI11.hpp>
#include <fmt/format.h>

#include "twinflow/commands.hpp"
#include "twinflow/config.hpp"
#include "twinflow/error.hpp"

namespace cli = twinflow::cli;

int main(int argc, char** argv) {
  twinflow::cli::tune_allocator();
  CLI::App app{"TwinFlow on toy 2-D data"};
  app.require_subcommand(1);

  std::string config_path;
  std::string resume_path;
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--resume", resume_path, "Continue from this checkpoint")->check(CLI::ExistingFile);

  cli::SampleOptions sample_opts;
  std::string branch = "real";
  std::string sample_ckpt, sample_out = "samples";
  auto* sample = app.add_subcommand("sample", "Draw samples from a checkpoint");
  sample->add_option("--ckpt", sample_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  sample->add_option("--nfe", sample_opts.nfe, "Network evaluations per sample")->check(CLI::PositiveNumber);
  sample->add_option("--n", sample_opts.n, "Number of samples")->check(CLI::PositiveNumber);
  sample->add_option("--branch", branch, "real or fake")->check(CLI::IsMember({"real", "fake"}));
  sample->add_option("--out", sample_out, "Output directory");
  sample->add_option("--seed", sample_opts.seed, "Noise seed");
  sample->add_flag("--svg", sample_opts.svg, "Also write a scatter plot");
  sample->add_flag("--trajectory", sample_opts.trajectory, "Also write every intermediate state");

  std::string eval_ckpt, eval_out = "eval", eval_nfe = "1,2,4,8";
  std::size_t eval_n = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against its dataset");
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--nfe", eval_nfe, "Comma-separated NFE list");
  eval->add_option("--out", eval_out, "Output directory");
  eval->add_option("--n", eval_n, "Samples per evaluation (default: from the checkpoint config)");

  std::string sweep_config, lambdas = "0,0.16666666666666666,0.33333333333333331,0.5,0.66666666666666663";
  auto* sweep = app.add_subcommand("sweep-lambda", "Train one model per lambda and tabulate metrics");
  sweep->add_option("--config", sweep_config, "Config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--lambdas", lambdas, "Comma-separated lambda values");

  std::uint64_t gc_seed = 0;
  int gc_cases = 100;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every autodiff primitive");
  gradcheck->add_option("--seed", gc_seed, "Case seed");
  gradcheck->add_option("--cases", gc_cases, "Number of random cases")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  if (*train) {
    std::optional<std::filesystem::path> resume;
    if (!resume_path.empty()) resume = resume_path;
    return cli::cmd_train(config_path, resume);
  }
  if (*sample) {
    sample_opts.ckpt = sample_ckpt;
    sample_opts.out = sample_out;
    sample_opts.branch = branch == "fake" ? twinflow::sampler::Branch::fake : twinflow::sampler::Branch::real;
    return cli::cmd_sample(sample_opts);
  }
  if (*eval) {
    cli::EvalCommand cmd;
    cmd.ckpt = eval_ckpt;
    cmd.out = eval_out;
    if (eval_n > 0) cmd.n = eval_n;
    try {
      cmd.nfe_list = twinflow::parse_int_list(eval_nfe);
    } catch (const twinflow::Error& e) {
      fmt::print(stderr, "--nfe: {}\n", e.what());
      return cli::kExitUsage;
    }
    return cli::cmd_eval(cmd);
  }
  if (*sweep) {
    std::vector<double> values;
    try {
      values = twinflow::parse_double_list(lambdas);
    } catch (const twinflow::Error& e) {
      fmt::print(stderr, "--lambdas: {}\n", e.what());
      return cli::kExitUsage;
    }
    return cli::cmd_sweep_lambda(sweep_config, values);
  }
  if (*gradcheck) return cli::cmd_gradcheck(gc_seed, gc_cases);
  return cli::kExitUsage;
}
