#include "twinflow/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace twinflow {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, v));
  }
  return out;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{}: '{}' is not an integer", key, v));
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, v));
}

template <typename T, typename F>
std::vector<T> split_list(std::string_view text, F convert) {
  std::vector<T> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    if (item.empty()) throw ConfigError(fmt::format("empty entry in list '{}'", text));
    out.push_back(convert(item));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"data.dataset", [](auto& c, auto, auto v) { c.train.dataset.id = data::parse_dataset(v); }},
      {"data.dim", [](auto& c, auto k, auto v) { c.train.dataset.dim = to_int<std::size_t>(k, v); }},
      {"data.radius", [](auto& c, auto k, auto v) { c.train.dataset.radius = to_double(k, v); }},
      {"data.sigma", [](auto& c, auto k, auto v) { c.train.dataset.sigma = to_double(k, v); }},
      {"data.center",
       [](auto& c, auto, auto v) { c.train.dataset.center = v.empty() ? std::vector<double>{} : parse_double_list(v); }},
      {"data.conditional", [](auto& c, auto k, auto v) { c.train.dataset.conditional = to_bool(k, v); }},
      {"model.hidden", [](auto& c, auto k, auto v) { c.train.model.hidden = to_int<std::size_t>(k, v); }},
      {"model.depth", [](auto& c, auto k, auto v) { c.train.model.depth = to_int<std::size_t>(k, v); }},
      {"model.time_frequencies",
       [](auto& c, auto k, auto v) { c.train.model.time_frequencies = to_int<std::size_t>(k, v); }},
      {"train.lambda", [](auto& c, auto k, auto v) { c.train.mix.lambda = to_double(k, v); }},
      {"train.lr", [](auto& c, auto k, auto v) { c.train.adam.lr = to_double(k, v); }},
      {"train.beta1", [](auto& c, auto k, auto v) { c.train.adam.beta1 = to_double(k, v); }},
      {"train.beta2", [](auto& c, auto k, auto v) { c.train.adam.beta2 = to_double(k, v); }},
      {"train.weight_decay", [](auto& c, auto k, auto v) { c.train.adam.weight_decay = to_double(k, v); }},
      {"train.ema_decay", [](auto& c, auto k, auto v) { c.train.ema_decay = to_double(k, v); }},
      {"train.batch_size", [](auto& c, auto k, auto v) { c.train.batch_size = to_int<std::size_t>(k, v); }},
      {"train.steps", [](auto& c, auto k, auto v) { c.train.steps = to_int<long>(k, v); }},
      {"train.seed", [](auto& c, auto k, auto v) { c.train.seed = to_int<std::uint64_t>(k, v); }},
      {"train.eval_every", [](auto& c, auto k, auto v) { c.train.eval_every = to_int<long>(k, v); }},
      {"train.grad_clip",
       [](auto& c, auto k, auto v) {
         if (v == "none") {
           c.train.grad_clip.reset();
         } else {
           c.train.grad_clip = to_double(k, v);
         }
       }},
      {"train.rectify_weighting",
       [](auto& c, auto k, auto v) {
         if (v == "none") {
           c.train.mix.rectify_weighting = losses::RectifyWeighting::none;
         } else if (v == "kl_weight") {
           c.train.mix.rectify_weighting = losses::RectifyWeighting::kl_weight;
         } else {
           throw ConfigError(fmt::format("{}: expected none or kl_weight, got '{}'", k, v));
         }
       }},
      {"train.fake_target",
       [](auto& c, auto k, auto v) {
         if (v == "current_time") {
           c.train.mix.fake_target = losses::FakeTarget::current_time;
         } else if (v == "zero") {
           c.train.mix.fake_target = losses::FakeTarget::zero;
         } else {
           throw ConfigError(fmt::format("{}: expected current_time or zero, got '{}'", k, v));
         }
       }},
      {"train.time_floor", [](auto& c, auto k, auto v) { c.train.mix.time_floor = to_double(k, v); }},
      {"eval.nfe_list", [](auto& c, auto, auto v) { c.nfe_list = parse_int_list(v); }},
      {"eval.n_samples", [](auto& c, auto k, auto v) { c.eval_samples = to_int<std::size_t>(k, v); }},
      {"eval.n_proj", [](auto& c, auto k, auto v) { c.n_proj = to_int<std::size_t>(k, v); }},
      {"eval.plot", [](auto& c, auto k, auto v) { c.plot = to_bool(k, v); }},
      {"output.output_dir", [](auto& c, auto, auto v) { c.output_dir = std::string(v); }},
  };
  return table;
}

}  // namespace

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

std::vector<int> parse_int_list(std::string_view text) {
  return split_list<int>(text, [](std::string_view s) { return to_int<int>("list", s); });
}

std::vector<double> parse_double_list(std::string_view text) {
  return split_list<double>(text, [](std::string_view s) { return to_double("list", s); });
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(fmt::format("line {}: malformed section header", line_no));
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("line {}: expected key = value", line_no));
    if (section.empty()) throw ConfigError(fmt::format("line {}: key outside of a section", line_no));
    const std::string key = section + "." + std::string(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, key));
    try {
      it->second(cfg, key, value);
    } catch (const Error& e) {
      throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  cfg.train.validate();
  if (cfg.nfe_list.empty()) throw ConfigError("eval.nfe_list must not be empty");
  for (int k : cfg.nfe_list) {
    if (k < 1) throw ConfigError(fmt::format("eval.nfe_list entry {} must be positive", k));
  }
  if (cfg.eval_samples < 2) throw ConfigError("eval.n_samples must be at least 2");
  if (cfg.n_proj < 1) throw ConfigError("eval.n_proj must be positive");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string render_config(const ExperimentConfig& c) {
  const auto& t = c.train;
  std::string nfe;
  for (std::size_t i = 0; i < c.nfe_list.size(); ++i) nfe += (i ? "," : "") + std::to_string(c.nfe_list[i]);
  std::string out;
  auto line = [&out](std::string_view key, const std::string& value) { out += fmt::format("{} = {}\n", key, value); };
  out += "[data]\n";
  line("dataset", std::string(data::dataset_name(t.dataset.id)));
  line("dim", std::to_string(t.dataset.dim));
  line("radius", format_double(t.dataset.radius));
  line("sigma", format_double(t.dataset.sigma));
  line("center", join_doubles(t.dataset.center));
  line("conditional", t.dataset.conditional ? "true" : "false");
  out += "\n[model]\n";
  line("hidden", std::to_string(t.model.hidden));
  line("depth", std::to_string(t.model.depth));
  line("time_frequencies", std::to_string(t.model.time_frequencies));
  out += "\n[train]\n";
  line("lambda", format_double(t.mix.lambda));
  line("lr", format_double(t.adam.lr));
  line("beta1", format_double(t.adam.beta1));
  line("beta2", format_double(t.adam.beta2));
  line("weight_decay", format_double(t.adam.weight_decay));
  line("ema_decay", format_double(t.ema_decay));
  line("batch_size", std::to_string(t.batch_size));
  line("steps", std::to_string(t.steps));
  line("seed", std::to_string(t.seed));
  line("eval_every", std::to_string(t.eval_every));
  line("grad_clip", t.grad_clip ? format_double(*t.grad_clip) : "none");
  line("rectify_weighting", t.mix.rectify_weighting == losses::RectifyWeighting::none ? "none" : "kl_weight");
  line("fake_target", t.mix.fake_target == losses::FakeTarget::current_time ? "current_time" : "zero");
  line("time_floor", format_double(t.mix.time_floor));
  out += "\n[eval]\n";
  line("nfe_list", nfe);
  line("n_samples", std::to_string(c.eval_samples));
  line("n_proj", std::to_string(c.n_proj));
  line("plot", c.plot ? "true" : "false");
  out += "\n[output]\n";
  line("output_dir", c.output_dir.string());
  return out;
}

}  // namespace twinflow
