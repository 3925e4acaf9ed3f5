#include "twinflow/commands.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "twinflow/gradcheck.hpp"
#include "twinflow/svg.hpp"
#include "twinflow/trainer.hpp"

namespace twinflow::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kLossHeader = "step,base,adv,rectify,total,grad_norm";
constexpr std::string_view kMetricsHeader = "step,nfe,sliced_w2,energy_dist,modes,diversity";
constexpr std::uint64_t kEvalSalt = 0x6576616c5f736565ULL;

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Opens a step-keyed CSV for appending. Rows whose step exceeds `keep_through`
// are dropped first; a negative value starts a fresh file.
std::ofstream open_step_csv(const fs::path& path, std::string_view header, long keep_through) {
  std::string kept = std::string(header) + "\n";
  if (keep_through >= 0 && fs::exists(path)) {
    std::istringstream in(read_text(path));
    std::string line;
    std::getline(in, line);
    if (line != header) throw IoError(fmt::format("{} has an unexpected header", path.string()));
    while (std::getline(in, line)) {
      long step = 0;
      const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), step);
      if (ec != std::errc{} || ptr == line.data() + line.size() || *ptr != ',') {
        throw IoError(fmt::format("{}: malformed row '{}'", path.string(), line));
      }
      if (step <= keep_through) kept += line + "\n";
    }
  }
  write_text(path, kept);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError(fmt::format("cannot append to {}", path.string()));
  return out;
}

std::string loss_row(const StepRecord& r) {
  const auto& l = r.loss;
  return fmt::format("{},{},{},{},{},{}\n", r.step, format_double(l.base), format_double(l.adv),
                     format_double(l.rectify), format_double(l.total), format_double(r.grad_norm));
}

std::string metrics_fields(const metrics::MetricsReport& m) {
  return fmt::format("{},{},{},{},{}", m.nfe, format_double(m.sliced_w2), format_double(m.energy_dist),
                     m.modes_recovered, format_double(m.diversity));
}

struct EvalSet {
  data::Samples reference;
  Matrix noise;
  std::uint64_t metric_seed = 0;
};

EvalSet eval_set(const data::DatasetSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("evaluation needs at least two samples");
  Rng rng(seed ^ kEvalSalt);
  EvalSet set;
  set.reference = data::sample_data(spec, n, rng);
  set.noise = rng.normal_matrix(n, spec.data_dim());
  set.metric_seed = rng.next_u64();
  return set;
}

std::span<const int> eval_labels(const VelocityNet& net, const EvalSet& set) {
  if (net.config().n_classes == 0) return {};
  return set.reference.labels;
}

std::vector<int> cycle_labels(std::size_t n, std::size_t n_classes) {
  std::vector<int> labels;
  if (n_classes == 0) return labels;
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(i % n_classes));
  return labels;
}

void require_same_architecture(const ModelConfig& a, const ModelConfig& b) {
  if (a.data_dim != b.data_dim || a.hidden != b.hidden || a.depth != b.depth || a.n_classes != b.n_classes ||
      a.time_frequencies != b.time_frequencies) {
    throw ConfigError("checkpoint architecture does not match the configuration");
  }
}

void write_plots(const VelocityNet& net, const ExperimentConfig& cfg) {
  const EvalSet set = eval_set(cfg.train.dataset, cfg.eval_samples, cfg.train.seed);
  const auto labels = eval_labels(net, set);
  svg::write_scatter(cfg.output_dir / "data.svg", set.reference.x, set.reference.labels, "data");
  for (int k : cfg.nfe_list) {
    const auto run = sampler::sample_from(net, set.noise, k, labels);
    svg::write_scatter(cfg.output_dir / fmt::format("samples_nfe{}.svg", k), run.samples, labels,
                       fmt::format("NFE = {}", k));
  }
}

template <typename F>
int guarded(F&& body) {
  try {
    body();
    return kExitOk;
  } catch (const DivergenceError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitDivergence;
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitRuntime;
  }
}

}  // namespace

void tune_allocator() {
#if defined(__GLIBC__)
  constexpr int kThreshold = 256 << 20;
  mallopt(M_MMAP_THRESHOLD, kThreshold);
  mallopt(M_TRIM_THRESHOLD, kThreshold);
#endif
}

void apply_seed_override(ExperimentConfig& cfg) {
  const char* env = std::getenv(kSeedEnv);
  if (env == nullptr) return;
  const std::string_view v(env);
  std::uint64_t seed = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), seed);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{}='{}' is not an unsigned integer", kSeedEnv, v));
  }
  cfg.train.seed = seed;
}

std::vector<metrics::MetricsReport> evaluate_net(const VelocityNet& net, const data::DatasetSpec& spec,
                                                 std::span<const int> nfe_list, std::size_t n, std::size_t n_proj,
                                                 std::uint64_t seed) {
  const EvalSet set = eval_set(spec, n, seed);
  const auto labels = eval_labels(net, set);
  std::vector<metrics::MetricsReport> out;
  out.reserve(nfe_list.size());
  for (int k : nfe_list) {
    const auto run = sampler::sample_from(net, set.noise, k, labels);
    out.push_back(metrics::evaluate(run.samples, set.reference.x, spec, k,
                                    metrics::EvalOptions{n_proj, 20000, set.metric_seed}));
  }
  return out;
}

VelocityNet checkpoint_net(const checkpoint::Checkpoint& ckpt) {
  if (const auto* ema = ckpt.find("EMA_")) return VelocityNet(ckpt.config, checkpoint::decode_params(ema->payload));
  return VelocityNet(ckpt.config, ckpt.params);
}

TrainSummary run_train(const ExperimentConfig& cfg, const std::optional<fs::path>& resume) {
  cfg.train.validate();
  fs::create_directories(cfg.output_dir);
  const std::string conf = render_config(cfg);
  write_text(cfg.output_dir / "config.resolved", conf);

  std::optional<Trainer> trainer;
  if (resume) {
    const auto ckpt = checkpoint::load(*resume);
    require_same_architecture(ckpt.config, cfg.train.resolved_model());
    trainer.emplace(cfg.train, Trainer::restore(cfg.train, ckpt));
  } else {
    trainer.emplace(cfg.train);
  }
  const long start = trainer->state().step;
  if (start > cfg.train.steps) {
    throw ConfigError(fmt::format("checkpoint is at step {}, past the configured {} steps", start, cfg.train.steps));
  }
  const long keep = resume ? start : -1;
  auto loss_csv = open_step_csv(cfg.output_dir / "loss.csv", kLossHeader, keep);
  auto metrics_csv = open_step_csv(cfg.output_dir / "metrics.csv", kMetricsHeader, keep);

  TrainSummary summary;
  auto evaluate_now = [&](long step) {
    summary.final_metrics = evaluate_net(trainer->sampling_net(), cfg.train.dataset, cfg.nfe_list,
                                         cfg.eval_samples, cfg.n_proj, cfg.train.seed);
    for (const auto& m : summary.final_metrics) metrics_csv << step << ',' << metrics_fields(m) << '\n';
    metrics_csv.flush();
  };

  for (long s = start; s < cfg.train.steps; ++s) {
    const StepRecord rec = trainer->step();
    loss_csv << loss_row(rec);
    const bool periodic = rec.step % cfg.train.eval_every == 0;
    if (periodic || rec.step == cfg.train.steps) {
      loss_csv.flush();
      evaluate_now(rec.step);
      if (periodic) checkpoint::save(cfg.output_dir / fmt::format("step_{:06}.ckpt", rec.step), trainer->to_checkpoint(conf));
      const auto& first = summary.final_metrics.front();
      fmt::print("step {:>7}  loss {:.6f} (base {:.6f} adv {:.6f} rect {:.6f})  sw2@{} {:.5f}\n", rec.step,
                 rec.loss.total, rec.loss.base, rec.loss.adv, rec.loss.rectify, first.nfe, first.sliced_w2);
      std::fflush(stdout);
    }
  }
  if (summary.final_metrics.empty()) evaluate_now(start);
  checkpoint::save(cfg.output_dir / "final.ckpt", trainer->to_checkpoint(conf));
  if (cfg.plot) write_plots(trainer->sampling_net(), cfg);
  summary.steps = trainer->state().step;
  return summary;
}

Matrix run_sample(const SampleOptions& opts) {
  if (opts.n == 0) throw InvalidArgument("sample: n must be positive");
  const auto ckpt = checkpoint::load(opts.ckpt);
  const VelocityNet net = checkpoint_net(ckpt);
  const auto labels = cycle_labels(opts.n, net.config().n_classes);
  Rng rng(opts.seed);
  const auto run = sampler::sample(net, opts.n, opts.nfe, rng, labels, opts.branch, opts.trajectory);

  fs::create_directories(opts.out);
  const auto dim = run.samples.cols();
  std::string header = "sample_id";
  for (Eigen::Index d = 0; d < dim; ++d) header += fmt::format(",dim_{}", d);
  std::string text = header + (labels.empty() ? "\n" : ",label\n");
  for (Eigen::Index i = 0; i < run.samples.rows(); ++i) {
    text += std::to_string(i);
    for (Eigen::Index d = 0; d < dim; ++d) text += "," + format_double(run.samples(i, d));
    if (!labels.empty()) text += fmt::format(",{}", labels[static_cast<std::size_t>(i)]);
    text += '\n';
  }
  write_text(opts.out / "samples.csv", text);

  if (opts.trajectory) {
    std::string traj = "sample_id,step,time";
    for (Eigen::Index d = 0; d < dim; ++d) traj += fmt::format(",dim_{}", d);
    traj += '\n';
    for (Eigen::Index i = 0; i < run.samples.rows(); ++i) {
      for (std::size_t k = 0; k < run.trajectory.size(); ++k) {
        traj += fmt::format("{},{},{}", i, k, format_double(run.times[k]));
        for (Eigen::Index d = 0; d < dim; ++d) traj += "," + format_double(run.trajectory[k](i, d));
        traj += '\n';
      }
    }
    write_text(opts.out / "trajectory.csv", traj);
  }
  if (opts.svg) {
    svg::write_scatter(opts.out / "samples.svg", run.samples, labels,
                       fmt::format("NFE = {}{}", opts.nfe, opts.branch == sampler::Branch::fake ? " (fake)" : ""));
  }
  return run.samples;
}

std::vector<metrics::MetricsReport> run_eval(const EvalCommand& cmd) {
  const auto ckpt = checkpoint::load(cmd.ckpt);
  const auto* conf = ckpt.find("CONF");
  if (conf == nullptr) throw IoError("checkpoint carries no configuration; cannot tell which dataset to compare with");
  const ExperimentConfig cfg = parse_config(conf->payload);
  if (cmd.nfe_list.empty()) throw InvalidArgument("eval: empty nfe list");
  const VelocityNet net = checkpoint_net(ckpt);
  const auto reports = evaluate_net(net, cfg.train.dataset, cmd.nfe_list, cmd.n.value_or(cfg.eval_samples),
                                    cfg.n_proj, cfg.train.seed);

  fs::create_directories(cmd.out);
  std::string text = "nfe,sliced_w2,energy_dist,modes,diversity\n";
  for (const auto& m : reports) {
    text += metrics_fields(m) + "\n";
    fmt::print("nfe {:>3}  sliced_w2 {:.6f}  energy {:.6f}  modes {}  diversity {:.4f}\n", m.nfe, m.sliced_w2,
               m.energy_dist, m.modes_recovered, m.diversity);
  }
  write_text(cmd.out / "eval.csv", text);
  return reports;
}

std::vector<SweepRow> run_sweep_lambda(const ExperimentConfig& cfg, std::span<const double> lambdas) {
  if (lambdas.empty()) throw InvalidArgument("sweep-lambda: no lambda values given");
  for (double l : lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError(fmt::format("lambda {} outside [0, 1]", l));
  }
  std::vector<SweepRow> rows;
  for (double l : lambdas) {
    ExperimentConfig run = cfg;
    run.train.mix.lambda = l;
    run.output_dir = cfg.output_dir / fmt::format("lambda_{:.4f}", l);
    fmt::print("== lambda {}\n", format_double(l));
    const auto summary = run_train(run);
    for (const auto& m : summary.final_metrics) rows.push_back(SweepRow{l, m});
  }
  std::string text = "lambda,nfe,sliced_w2,energy_dist,modes,diversity\n";
  for (const auto& r : rows) text += format_double(r.lambda) + "," + metrics_fields(r.report) + "\n";
  write_text(cfg.output_dir / "sweep.csv", text);
  return rows;
}

int cmd_train(const fs::path& config, const std::optional<fs::path>& resume) {
  return guarded([&] {
    ExperimentConfig cfg = load_config(config);
    apply_seed_override(cfg);
    run_train(cfg, resume);
  });
}

int cmd_sample(const SampleOptions& opts) {
  return guarded([&] { run_sample(opts); });
}

int cmd_eval(const EvalCommand& cmd) {
  return guarded([&] { run_eval(cmd); });
}

int cmd_sweep_lambda(const fs::path& config, std::span<const double> lambdas) {
  return guarded([&] {
    ExperimentConfig cfg = load_config(config);
    apply_seed_override(cfg);
    run_sweep_lambda(cfg, lambdas);
  });
}

int cmd_gradcheck(std::uint64_t seed, int n_cases) {
  int code = kExitOk;
  const int guard = guarded([&] {
    const auto report = ad::run_gradcheck_suite(seed, n_cases);
    fmt::print("gradcheck: {} cases, max relative error {:.3e} ({})\n", report.cases.size(), report.max_rel_error,
               report.worst_case);
    if (!(report.max_rel_error < 1e-4)) {
      fmt::print(stderr, "gradcheck failed: tolerance is 1e-4\n");
      code = kExitRuntime;
    }
  });
  return guard != kExitOk ? guard : code;
}

}  // namespace twinflow::cli
