#pragma once

// Experiment configuration files: flat `key = value` lines grouped under
// `[section]` headers, `#` starts a comment. Unknown sections or keys are
// rejected; anything omitted keeps its default.
//
//   [data]    dataset dim radius sigma center conditional
//   [model]   hidden depth time_frequencies
//   [train]   lambda lr beta1 beta2 weight_decay ema_decay batch_size steps
//             seed eval_every grad_clip rectify_weighting fake_target time_floor
//   [eval]    nfe_list n_samples n_proj plot
//   [output]  output_dir

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "twinflow/trainer.hpp"

namespace twinflow {

struct ExperimentConfig {
  TrainConfig train;
  std::filesystem::path output_dir = "run";
  std::vector<int> nfe_list{1, 2, 4, 8};
  std::size_t eval_samples = 2000;
  std::size_t n_proj = 256;
  bool plot = false;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Every key with its resolved value; parse_config(render_config(c)) == c.
std::string render_config(const ExperimentConfig& cfg);

std::vector<int> parse_int_list(std::string_view text);
std::vector<double> parse_double_list(std::string_view text);

// 17 significant digits; round-trips exactly.
std::string format_double(double v);

}  // namespace twinflow
