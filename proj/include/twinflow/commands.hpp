#pragma once

// Operator commands behind the `twinflow` binary. The run_* functions do the
// work and throw; the cmd_* wrappers print errors and return exit codes.
//
// Training writes into output_dir:
//   config.resolved   every key with its effective value
//   loss.csv          step,base,adv,rectify,total,grad_norm (one row per step)
//   metrics.csv       step,nfe,sliced_w2,energy_dist,modes,diversity
//   step_NNNNNN.ckpt  every eval_every steps
//   final.ckpt        after the last step

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "twinflow/checkpoint.hpp"
#include "twinflow/config.hpp"
#include "twinflow/metrics.hpp"
#include "twinflow/sampler.hpp"

namespace twinflow::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitRuntime = 2, kExitDivergence = 3 };

inline constexpr const char* kSeedEnv = "TWINFLOW_SEED";

// Keeps large tape buffers on the heap instead of a fresh mmap per
// allocation (glibc), which otherwise dominates step time. Call once at
// process start.
void tune_allocator();

// Replaces cfg.train.seed with $TWINFLOW_SEED when it is set.
void apply_seed_override(ExperimentConfig& cfg);

// Samples `n` reference points and `n` noise rows from fixed seeds, then runs
// every NFE from the same noise. Conditional nets get the reference labels.
std::vector<metrics::MetricsReport> evaluate_net(const VelocityNet& net, const data::DatasetSpec& spec,
                                                 std::span<const int> nfe_list, std::size_t n, std::size_t n_proj,
                                                 std::uint64_t seed);

// EMA weights when the checkpoint carries them, else the live weights.
VelocityNet checkpoint_net(const checkpoint::Checkpoint& ckpt);

struct TrainSummary {
  long steps = 0;
  std::vector<metrics::MetricsReport> final_metrics;
};

// With `resume`, training continues from that checkpoint; existing rows past
// the resumed step are dropped from loss.csv and metrics.csv, so an
// interrupted run resumed in place ends with the same files as an
// uninterrupted one.
TrainSummary run_train(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& resume = {});

struct SampleOptions {
  std::filesystem::path ckpt;
  int nfe = 1;
  std::size_t n = 1000;
  sampler::Branch branch = sampler::Branch::real;
  std::filesystem::path out = "samples";
  bool svg = false;
  bool trajectory = false;
  std::uint64_t seed = 0;
};

// samples.csv: sample_id,dim_0,...[,label]; trajectory.csv when requested.
Matrix run_sample(const SampleOptions& opts);

struct EvalCommand {
  std::filesystem::path ckpt;
  std::vector<int> nfe_list{1, 2, 4, 8};
  std::filesystem::path out = "eval";
  std::optional<std::size_t> n;  // defaults to the checkpoint's eval.n_samples
};

// eval.csv: nfe,sliced_w2,energy_dist,modes,diversity. The dataset comes from
// the configuration stored in the checkpoint.
std::vector<metrics::MetricsReport> run_eval(const EvalCommand& cmd);

struct SweepRow {
  double lambda = 0.0;
  metrics::MetricsReport report;
};

// One training run per lambda under output_dir/lambda_<value>, then
// output_dir/sweep.csv with lambda,nfe,sliced_w2,energy_dist,modes,diversity
// in the given lambda order.
std::vector<SweepRow> run_sweep_lambda(const ExperimentConfig& cfg, std::span<const double> lambdas);

int cmd_train(const std::filesystem::path& config, const std::optional<std::filesystem::path>& resume = {});
int cmd_sample(const SampleOptions& opts);
int cmd_eval(const EvalCommand& cmd);
int cmd_sweep_lambda(const std::filesystem::path& config, std::span<const double> lambdas);
int cmd_gradcheck(std::uint64_t seed = 0, int n_cases = 100);

}  // namespace twinflow::cli
