#include "evhier/harness/config.hpp"

#include "evhier/util/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace evhier::harness {

using nlohmann::json;

namespace {

json content_json(const ExperimentConfig& c) {
  json j = c;
  j.erase("output_dir");
  return j;
}

template <typename T>
void read_into(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("config: at least one seed");
  if (data.n_episodes < 2) throw ConfigError("config: data.n_episodes must be at least 2");
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) throw ConfigError("config: data.train_fraction must lie in (0, 1)");
  if (fim.lambdas.empty() && !fim.include_gru) throw ConfigError("config: no forward-inverse runs configured");
  for (double l : fim.lambdas) {
    if (l < 0.0) throw ConfigError("config: lambda must be non-negative");
  }
  if (fim.beta < 0.0 || fim.beta > 1.0) throw ConfigError("config: beta must lie in [0, 1]");
  if (fim.lr <= 0.0 || skip.lr <= 0.0) throw ConfigError("config: learning rates must be positive");
  if (fim.batch_size < 1 || skip.batch_size < 1) throw ConfigError("config: batch sizes must be positive");
  if (fim.max_epochs < 0 || skip.epochs < 0 || gaze.fim_epochs < 0 || gaze.skip_epochs < 0) {
    throw ConfigError("config: epoch budgets must be non-negative");
  }
  bool found = false;
  for (double l : fim.lambdas) found = found || l == skip.lambda;
  if (!found) throw ConfigError("config: skip.lambda must be one of fim.lambdas");
  if (skip.segmentation_tolerance < 0) throw ConfigError("config: negative segmentation tolerance");
  if (gaze.enabled) {
    if (gaze.n_episodes < 2) throw ConfigError("config: gaze.n_episodes must be at least 2");
    if (gaze.checkpoint_every < 1) throw ConfigError("config: gaze.checkpoint_every must be positive");
    if (gaze.eval_epochs.size() < 2) throw ConfigError("config: gaze needs at least two evaluation checkpoints");
    for (int e : gaze.eval_epochs) {
      if (e < 0 || e > gaze.fim_epochs || e % gaze.checkpoint_every != 0) {
        throw ConfigError("config: gaze.eval_epochs must be checkpoint epochs within the budget");
      }
    }
    if (gaze.eval_episodes < 1) throw ConfigError("config: gaze.eval_episodes must be positive");
    if (gaze.relevant_dims.empty()) throw ConfigError("config: gaze.relevant_dims must not be empty");
  }
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(content_json(*this).dump()); }

std::string fim_run_name(bool gru, double lambda) {
  return gru ? "gru" : "lambda_" + util::format_number(lambda);
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{
      {"seeds", c.seeds},
      {"data", {{"n_episodes", c.data.n_episodes}, {"train_fraction", c.data.train_fraction}, {"mix", c.data.mix}}},
      {"fim",
       {{"lambdas", c.fim.lambdas},
        {"include_gru", c.fim.include_gru},
        {"beta", c.fim.beta},
        {"lr", c.fim.lr},
        {"batch_size", c.fim.batch_size},
        {"max_epochs", c.fim.max_epochs},
        {"patience", c.fim.patience},
        {"checkpoint_every", c.fim.checkpoint_every}}},
      {"skip",
       {{"lambda", c.skip.lambda},
        {"lr", c.skip.lr},
        {"batch_size", c.skip.batch_size},
        {"epochs", c.skip.epochs},
        {"probe_every", c.skip.probe_every},
        {"segmentation_tolerance", c.skip.segmentation_tolerance}}},
      {"gaze",
       {{"enabled", c.gaze.enabled},
        {"lambda", c.gaze.lambda},
        {"n_episodes", c.gaze.n_episodes},
        {"fim_epochs", c.gaze.fim_epochs},
        {"checkpoint_every", c.gaze.checkpoint_every},
        {"eval_epochs", c.gaze.eval_epochs},
        {"skip_epochs", c.gaze.skip_epochs},
        {"eval_episodes", c.gaze.eval_episodes},
        {"relevant_dims", c.gaze.relevant_dims},
        {"mask_sigma", c.gaze.mask_sigma}}},
      {"output_dir", c.output_dir.string()},
  };
}

// Missing keys keep their defaults so configs can be partial.
void from_json(const json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  read_into(j, "seeds", c.seeds);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    read_into(d, "n_episodes", c.data.n_episodes);
    read_into(d, "train_fraction", c.data.train_fraction);
    read_into(d, "mix", c.data.mix);
  }
  if (j.contains("fim")) {
    const auto& f = j.at("fim");
    read_into(f, "lambdas", c.fim.lambdas);
    read_into(f, "include_gru", c.fim.include_gru);
    read_into(f, "beta", c.fim.beta);
    read_into(f, "lr", c.fim.lr);
    read_into(f, "batch_size", c.fim.batch_size);
    read_into(f, "max_epochs", c.fim.max_epochs);
    read_into(f, "patience", c.fim.patience);
    read_into(f, "checkpoint_every", c.fim.checkpoint_every);
  }
  if (j.contains("skip")) {
    const auto& s = j.at("skip");
    read_into(s, "lambda", c.skip.lambda);
    read_into(s, "lr", c.skip.lr);
    read_into(s, "batch_size", c.skip.batch_size);
    read_into(s, "epochs", c.skip.epochs);
    read_into(s, "probe_every", c.skip.probe_every);
    read_into(s, "segmentation_tolerance", c.skip.segmentation_tolerance);
  }
  if (j.contains("gaze")) {
    const auto& g = j.at("gaze");
    read_into(g, "enabled", c.gaze.enabled);
    read_into(g, "lambda", c.gaze.lambda);
    read_into(g, "n_episodes", c.gaze.n_episodes);
    read_into(g, "fim_epochs", c.gaze.fim_epochs);
    read_into(g, "checkpoint_every", c.gaze.checkpoint_every);
    read_into(g, "eval_epochs", c.gaze.eval_epochs);
    read_into(g, "skip_epochs", c.gaze.skip_epochs);
    read_into(g, "eval_episodes", c.gaze.eval_episodes);
    read_into(g, "relevant_dims", c.gaze.relevant_dims);
    read_into(g, "mask_sigma", c.gaze.mask_sigma);
  }
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("config: cannot read " + path.string());
  ExperimentConfig c;
  try {
    c = json::parse(in).get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("config: cannot write " + path.string());
  out << json(c).dump(2) << '\n';
}

}  // namespace evhier::harness
