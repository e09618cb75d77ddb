#include "evhier/harness/pipeline.hpp"

#include "evhier/env/episode_io.hpp"
#include "evhier/skip/boundaries.hpp"
#include "evhier/util/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

namespace evhier::harness {

using nlohmann::json;

namespace {

std::string epoch_name(const char* prefix, int epoch) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s_epoch_%04d.bin", prefix, epoch);
  return buf;
}

std::string to_string(StageStatus s) {
  switch (s) {
    case StageStatus::pending: return "pending";
    case StageStatus::done: return "done";
    case StageStatus::failed: return "failed";
  }
  return "pending";
}

StageStatus status_from_string(const std::string& s) {
  if (s == "done") return StageStatus::done;
  if (s == "failed") return StageStatus::failed;
  if (s == "pending") return StageStatus::pending;
  throw InputError("manifest: unknown stage status '" + s + "'");
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<env::Episode> of_type(std::span<const env::Episode> eps, env::EpisodeType type) {
  std::vector<env::Episode> out;
  for (const auto& e : eps) {
    if (e.type() == type) out.push_back(e);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- manifest

const StageRecord* RunManifest::find(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

StageRecord& RunManifest::upsert(const std::string& name) {
  for (auto& s : stages) {
    if (s.name == name) return s;
  }
  stages.push_back(StageRecord{name, StageStatus::pending, {}, {}});
  return stages.back();
}

void to_json(json& j, const RunManifest& m) {
  json stages = json::array();
  for (const auto& s : m.stages) {
    json r{{"name", s.name}, {"status", to_string(s.status)}, {"artifacts", s.artifacts}};
    if (!s.error.empty()) r["error"] = s.error;
    stages.push_back(std::move(r));
  }
  j = json{{"config_hash", m.config_hash}, {"seed", m.seed}, {"stages", std::move(stages)}};
}

void from_json(const json& j, RunManifest& m) {
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.stages.clear();
  for (const auto& r : j.at("stages")) {
    StageRecord s;
    s.name = r.at("name").get<std::string>();
    s.status = status_from_string(r.at("status").get<std::string>());
    s.artifacts = r.at("artifacts").get<std::vector<std::string>>();
    if (r.contains("error")) s.error = r.at("error").get<std::string>();
    m.stages.push_back(std::move(s));
  }
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("manifest: cannot write " + tmp.string());
    out << json(m).dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("manifest: cannot read " + path.string());
  try {
    return json::parse(in).get<RunManifest>();
  } catch (const json::exception& e) {
    throw InputError("manifest " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- stages

Split generate_split(int n, std::array<double, 3> mix, double train_fraction, bool gaze_mode, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("split: train fraction must lie in (0, 1)");
  env::DatasetSpec spec;
  spec.n = n;
  spec.mix = mix;
  spec.gaze_mode = gaze_mode;
  spec.seed = seed;
  auto all = env::generate_dataset(spec);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
  if (n_train == 0 || n_train >= all.size()) throw ConfigError("split: both parts must be non-empty");
  Split s;
  s.train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(all.begin() + n_train));
  s.test.assign(std::make_move_iterator(all.begin() + n_train), std::make_move_iterator(all.end()));
  return s;
}

model::TrainResult train_fim_run(const FimRun& run, std::span<const env::Episode> train,
                                 std::span<const env::Episode> test, const model::TrainConfig& train_config,
                                 std::uint64_t init_seed, const fs::path& dir) {
  fs::create_directories(dir);
  const auto type = run.gru ? cell::CellType::gru : cell::CellType::gatel0rd;
  model::SensorimotorModel fim(model::ModelConfig::for_cell(type, run.gaze_mode));
  Rng rng(init_seed);
  fim.initialize(rng);
  model::TrainConfig tc = train_config;
  tc.weights.lambda = run.gru ? 0.0 : run.lambda;
  const std::optional<fs::path> ckpt =
      tc.checkpoint_every > 0 ? std::optional<fs::path>(dir / "checkpoints") : std::nullopt;
  model::TrainResult result = model::train_fim(fim, train, test, tc, ckpt);
  model::write_learning_curve(dir / "curve.csv", result.curve);
  model::save_model(dir / "final.bin", fim);
  return result;
}

void write_skip_probe(const fs::path& path, const skip::SkipProbe& probe) {
  util::CsvWriter w(path, {"probe", "episode_type", "d_hand", "d_object", "d_goal", "count"});
  for (int type = 0; type < 3; ++type) {
    const auto& d = probe.hand_at_t2[static_cast<std::size_t>(type)];
    w.row(std::string("hand_at_t2"), std::string(env::to_string(static_cast<env::EpisodeType>(type))), d.hand,
          d.object, d.goal, d.count);
  }
  const auto& g = probe.object_at_grasp;
  w.row(std::string("object_at_grasp"), std::string(env::to_string(env::EpisodeType::reach_grasp_transport)), g.hand,
        g.object, g.goal, g.count);
}

skip::SkipNetwork train_skip_run(const model::SensorimotorModel& fim, std::span<const env::Episode> train,
                                 std::span<const env::Episode> test, const skip::SkipTrainConfig& train_config,
                                 std::uint64_t init_seed, std::uint64_t mask_seed, double mask_sigma,
                                 const fs::path& net_path, const fs::path& curve_path, const fs::path& probe_path) {
  const bool gaze = fim.config().gaze_mode;
  const auto train_tr = skip::trace_episodes(fim, train, mask_seed, mask_sigma);
  const auto test_tr = skip::trace_episodes(fim, test, derive_seed(mask_seed, "test"), mask_sigma);
  const skip::SkipDataset train_data = skip::build_skip_dataset(train, train_tr, gaze);
  const skip::SkipDataset test_data = skip::build_skip_dataset(test, test_tr, gaze);

  skip::SkipConfig sc;
  sc.latent_width = fim.config().latent_width;
  sc.gaze_mode = gaze;
  skip::SkipNetwork net(sc);
  Rng rng(init_seed);
  net.initialize(rng);
  const auto curve = skip::train_skip(net, train_data, test_data, test, test_tr, train_config);
  for (const auto* p : {&net_path, &curve_path, &probe_path}) {
    if (p->has_parent_path()) fs::create_directories(p->parent_path());
  }
  skip::save_skip(net_path, net);
  skip::write_skip_curve(curve_path, curve);
  write_skip_probe(probe_path, curve.back().probe);
  return net;
}

void write_boundaries(const fs::path& path, std::span<const env::Episode> episodes,
                      std::span<const skip::EpisodeTrace> traces) {
  if (episodes.size() != traces.size()) throw InputError("boundaries: one trace per episode required");
  util::CsvWriter w(path, {"episode", "episode_type", "switches", "boundaries"});
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    w.row(episodes[e].id, std::string(env::to_string(episodes[e].type())),
          join(switch_steps(episodes[e].phase_labels)), join(traces[e].boundaries));
  }
}

std::vector<int> checkpoint_epochs(const fs::path& dir, const std::string& prefix) {
  if (!fs::is_directory(dir)) throw InputError("no checkpoint directory " + dir.string());
  std::vector<int> out;
  const std::string head = prefix + "_epoch_";
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() != head.size() + 8 || name.rfind(head, 0) != 0 || entry.path().extension() != ".bin") continue;
    const std::string digits = name.substr(head.size(), 4);
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    out.push_back(std::stoi(digits));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<GazeSummaryRow> eval_gaze_checkpoints(const fs::path& checkpoint_dir, std::span<const int> epochs,
                                                  std::span<const gaze::UncertaintyMode> modes,
                                                  std::span<const env::Episode> episodes,
                                                  const gaze::UncertaintyConfig& base, std::uint64_t noise_seed) {
  if (episodes.empty()) throw InputError("eval-gaze: no episodes");
  std::vector<GazeSummaryRow> rows;
  for (int epoch : epochs) {
    const fs::path fim_path = checkpoint_dir / epoch_name("fim", epoch);
    const fs::path skip_path = checkpoint_dir / epoch_name("skip", epoch);
    const model::SensorimotorModel fim = model::load_model(fim_path);
    std::optional<skip::SkipNetwork> skip_net;
    for (auto mode : modes) {
      if (mode != gaze::UncertaintyMode::intra_only && !skip_net) {
        if (!fs::exists(skip_path)) throw InputError("eval-gaze: missing " + skip_path.string());
        skip_net.emplace(skip::load_skip(skip_path));
      }
      gaze::UncertaintyConfig cfg = base;
      cfg.mode = mode;
      for (int type = 0; type < 3; ++type) {
        const auto subset = of_type(episodes, static_cast<env::EpisodeType>(type));
        if (subset.empty()) continue;
        const auto traces = gaze::run_gaze(subset, fim, skip_net ? &*skip_net : nullptr, cfg, noise_seed);
        rows.push_back(GazeSummaryRow{epoch, mode, static_cast<env::EpisodeType>(type), gaze::summarize(traces)});
      }
    }
  }
  return rows;
}

void write_gaze_summary(const fs::path& path, std::span<const GazeSummaryRow> rows) {
  util::CsvWriter w(path, {"checkpoint", "mode", "episode_type", "entity", "mean_rel_attend_time", "stderr",
                           "mean_first_attend", "count"});
  for (const auto& r : rows) {
    for (std::size_t e = 0; e < 3; ++e) {
      w.row(r.checkpoint, std::string(gaze::to_string(r.mode)), std::string(env::to_string(r.type)),
            std::string(env::to_string(static_cast<env::Entity>(e))), r.times.mean[e], r.times.stderr_[e],
            r.times.mean_first_attend[e], r.times.count);
    }
  }
}

// ---------------------------------------------------------------- orchestration

fs::path seed_dir(const ExperimentConfig& config, std::uint64_t seed) {
  return config.output_dir / ("seed_" + std::to_string(seed));
}

namespace {

class SeedRunner {
 public:
  SeedRunner(const ExperimentConfig& config, std::uint64_t seed, const Logger& log)
      : config_(config), seed_(seed), dir_(seed_dir(config, seed)), log_(log) {
    fs::create_directories(dir_);
    const fs::path mpath = dir_ / "manifest.json";
    const std::string hash = config.hash();
    if (fs::exists(mpath)) {
      manifest_ = read_manifest(mpath);
      if (manifest_.config_hash != hash || manifest_.seed != seed) manifest_ = RunManifest{};
    }
    manifest_.config_hash = hash;
    manifest_.seed = seed;
  }

  const RunManifest& manifest() const { return manifest_; }

  /// Runs `body` unless the stage is recorded done with all artifacts
  /// present. `body` returns the artifact paths relative to the seed dir.
  void stage(const std::string& name, const std::function<std::vector<std::string>()>& body) {
    if (const StageRecord* r = manifest_.find(name); r && r->status == StageStatus::done) {
      const bool present = std::all_of(r->artifacts.begin(), r->artifacts.end(),
                                       [&](const std::string& a) { return fs::exists(dir_ / a); });
      if (present) {
        say("skip " + name + " (done)");
        return;
      }
    }
    say("run  " + name);
    StageRecord& rec = manifest_.upsert(name);
    rec.status = StageStatus::pending;
    rec.artifacts.clear();
    rec.error.clear();
    try {
      std::vector<std::string> artifacts = body();
      for (const auto& a : artifacts) {
        if (!fs::exists(dir_ / a)) throw InputError("stage " + name + " did not produce " + a);
      }
      StageRecord& done = manifest_.upsert(name);
      done.status = StageStatus::done;
      done.artifacts = std::move(artifacts);
      save();
    } catch (const std::exception& e) {
      StageRecord& failed = manifest_.upsert(name);
      failed.status = StageStatus::failed;
      failed.error = e.what();
      save();
      throw;
    }
  }

  void run();

 private:
  void say(const std::string& msg) const {
    if (log_) log_("[seed " + std::to_string(seed_) + "] " + msg);
  }
  void save() const { write_manifest(dir_ / "manifest.json", manifest_); }

  std::string rel(const fs::path& p) const { return fs::relative(p, dir_).generic_string(); }

  model::TrainConfig fim_train_config() const {
    model::TrainConfig tc;
    tc.weights.beta = config_.fim.beta;
    tc.adam.lr = config_.fim.lr;
    tc.batch_size = config_.fim.batch_size;
    tc.max_epochs = config_.fim.max_epochs;
    tc.patience = config_.fim.patience;
    tc.checkpoint_every = config_.fim.checkpoint_every;
    tc.seed = derive_seed(seed_, "fim.train");
    tc.mask_sigma = config_.gaze.mask_sigma;
    return tc;
  }

  skip::SkipTrainConfig skip_train_config(int epochs, const std::string& tag) const {
    skip::SkipTrainConfig sc;
    sc.adam.lr = config_.skip.lr;
    sc.batch_size = config_.skip.batch_size;
    sc.epochs = epochs;
    sc.beta = config_.fim.beta;
    sc.seed = derive_seed(seed_, tag);
    sc.probe_every = config_.skip.probe_every;
    return sc;
  }

  const Split& data() {
    if (!data_) {
      data_ = Split{env::read_episodes(dir_ / "data/train.jsonl"), env::read_episodes(dir_ / "data/test.jsonl")};
    }
    return *data_;
  }

  const ExperimentConfig& config_;
  std::uint64_t seed_;
  fs::path dir_;
  Logger log_;
  RunManifest manifest_;
  std::optional<Split> data_;
};

void SeedRunner::run() {
  const auto& c = config_;

  stage("data", [&] {
    fs::create_directories(dir_ / "data");
    Split s = generate_split(c.data.n_episodes, c.data.mix, c.data.train_fraction, false, derive_seed(seed_, "data"));
    env::write_episodes(dir_ / "data/train.jsonl", s.train);
    env::write_episodes(dir_ / "data/test.jsonl", s.test);
    data_ = std::move(s);
    return std::vector<std::string>{"data/train.jsonl", "data/test.jsonl"};
  });

  std::vector<FimRun> runs;
  for (double l : c.fim.lambdas) runs.push_back(FimRun{false, l, false});
  if (c.fim.include_gru) runs.push_back(FimRun{true, 0.0, false});
  for (const auto& run : runs) {
    const std::string name = fim_run_name(run.gru, run.lambda);
    stage("fim/" + name, [&] {
      const fs::path dir = dir_ / "fim" / name;
      if (fs::exists(dir)) fs::remove_all(dir);
      const std::uint64_t init = derive_seed(seed_, run.gru ? "fim.init.gru" : "fim.init");
      const auto result = train_fim_run(run, data().train, data().test, fim_train_config(), init, dir);
      std::vector<std::string> out{rel(dir / "curve.csv"), rel(dir / "final.bin")};
      for (const auto& p : result.checkpoints) out.push_back(rel(p));
      return out;
    });
  }

  const fs::path fim_final = dir_ / "fim" / fim_run_name(false, c.skip.lambda) / "final.bin";

  stage("segmentation", [&] {
    fs::create_directories(dir_ / "segmentation");
    const model::SensorimotorModel fim = model::load_model(fim_final);
    const auto traces = skip::trace_episodes(fim, data().test, derive_seed(seed_, "segmentation.mask"));
    write_segmentation(dir_ / "segmentation/segmentation.csv",
                       eval_segmentation(data().test, traces, c.skip.segmentation_tolerance));
    write_boundaries(dir_ / "segmentation/boundaries.csv", data().test, traces);
    return std::vector<std::string>{"segmentation/segmentation.csv", "segmentation/boundaries.csv"};
  });

  stage("skip", [&] {
    const fs::path dir = dir_ / "skip";
    fs::create_directories(dir);
    const model::SensorimotorModel fim = model::load_model(fim_final);
    const std::uint64_t mask = derive_seed(seed_, "skip.mask");
    const auto train_tr = skip::trace_episodes(fim, data().train, mask);
    const auto test_tr = skip::trace_episodes(fim, data().test, derive_seed(mask, "test"));
    skip::write_skip_dataset(dir / "train.jsonl", skip::build_skip_dataset(data().train, train_tr, false));
    skip::write_skip_dataset(dir / "test.jsonl", skip::build_skip_dataset(data().test, test_tr, false));
    const skip::SkipNetwork net =
        train_skip_run(fim, data().train, data().test, skip_train_config(c.skip.epochs, "skip.train"),
                       derive_seed(seed_, "skip.init"), mask, c.gaze.mask_sigma, dir / "final.bin",
                       dir / "curve.csv", dir / "probe.csv");
    skip::write_skip_predictions(dir / "predictions.csv", net, data().test, test_tr);
    return std::vector<std::string>{"skip/train.jsonl", "skip/test.jsonl", "skip/final.bin",
                                    "skip/curve.csv",   "skip/probe.csv",  "skip/predictions.csv"};
  });

  if (!c.gaze.enabled) return;

  const fs::path gdir = dir_ / "gaze";
  const fs::path ckpt_dir = gdir / "fim" / "checkpoints";
  std::optional<Split> gaze_data;
  auto gdata = [&]() -> const Split& {
    if (!gaze_data) {
      gaze_data = Split{env::read_episodes(gdir / "data/train.jsonl"), env::read_episodes(gdir / "data/test.jsonl")};
    }
    return *gaze_data;
  };

  stage("gaze/data", [&] {
    fs::create_directories(gdir / "data");
    Split s = generate_split(c.gaze.n_episodes, c.data.mix, c.data.train_fraction, true,
                             derive_seed(seed_, "gaze.data"));
    env::write_episodes(gdir / "data/train.jsonl", s.train);
    env::write_episodes(gdir / "data/test.jsonl", s.test);
    gaze_data = std::move(s);
    std::vector<env::Episode> eval;
    for (auto [type, tag] : {std::pair{0, "gaze.eval.reach"}, std::pair{1, "gaze.eval.pointing"}}) {
      std::array<double, 3> mix{0.0, 0.0, 0.0};
      mix[static_cast<std::size_t>(type)] = 1.0;
      env::DatasetSpec spec;
      spec.n = c.gaze.eval_episodes;
      spec.mix = mix;
      spec.gaze_mode = true;
      spec.seed = derive_seed(seed_, tag);
      for (auto& e : env::generate_dataset(spec)) eval.push_back(std::move(e));
    }
    env::write_episodes(gdir / "data/eval.jsonl", eval);
    return std::vector<std::string>{"gaze/data/train.jsonl", "gaze/data/test.jsonl", "gaze/data/eval.jsonl"};
  });

  stage("gaze/fim", [&] {
    const fs::path dir = gdir / "fim";
    if (fs::exists(dir)) fs::remove_all(dir);
    model::TrainConfig tc = fim_train_config();
    tc.max_epochs = c.gaze.fim_epochs;
    tc.patience = 0;
    tc.checkpoint_every = c.gaze.checkpoint_every;
    tc.seed = derive_seed(seed_, "gaze.fim.train");
    const auto result = train_fim_run(FimRun{false, c.gaze.lambda, true}, gdata().train, gdata().test, tc,
                                      derive_seed(seed_, "gaze.fim.init"), dir);
    std::vector<std::string> out{rel(dir / "curve.csv"), rel(dir / "final.bin")};
    for (const auto& p : result.checkpoints) out.push_back(rel(p));
    return out;
  });

  for (int epoch : c.gaze.eval_epochs) {
    char tag[32];
    std::snprintf(tag, sizeof tag, "%04d", epoch);
    stage(std::string("gaze/skip/") + tag, [&] {
      const model::SensorimotorModel fim = model::load_model(ckpt_dir / epoch_name("fim", epoch));
      const fs::path net = ckpt_dir / epoch_name("skip", epoch);
      const fs::path curve = gdir / "skip" / (std::string("curve_epoch_") + tag + ".csv");
      const fs::path probe = gdir / "skip" / (std::string("probe_epoch_") + tag + ".csv");
      train_skip_run(fim, gdata().train, gdata().test,
                     skip_train_config(c.gaze.skip_epochs, std::string("gaze.skip.train.") + tag),
                     derive_seed(seed_, "gaze.skip.init", static_cast<std::uint64_t>(epoch)),
                     derive_seed(seed_, "gaze.skip.mask", static_cast<std::uint64_t>(epoch)), c.gaze.mask_sigma, net,
                     curve, probe);
      return std::vector<std::string>{rel(net), rel(curve), rel(probe)};
    });
  }

  stage("gaze/eval", [&] {
    const auto eval = env::read_episodes(gdir / "data/eval.jsonl");
    gaze::UncertaintyConfig base;
    base.relevant_dims = c.gaze.relevant_dims;
    base.mask_sigma = c.gaze.mask_sigma;
    const std::vector<gaze::UncertaintyMode> modes{gaze::UncertaintyMode::intra_only,
                                                   gaze::UncertaintyMode::inter_only,
                                                   gaze::UncertaintyMode::combined};
    const auto rows = eval_gaze_checkpoints(ckpt_dir, c.gaze.eval_epochs, modes, eval, base,
                                            derive_seed(seed_, "gaze.eval.noise"));
    write_gaze_summary(gdir / "summary.csv", rows);
    return std::vector<std::string>{"gaze/summary.csv"};
  });
}

}  // namespace

RunManifest run_seed(const ExperimentConfig& config, std::uint64_t seed, const Logger& log) {
  config.validate();
  SeedRunner runner(config, seed, log);
  runner.run();
  return runner.manifest();
}

std::vector<RunManifest> run_pipeline(const ExperimentConfig& config, int jobs, const Logger& log) {
  config.validate();
  if (jobs < 1) throw ConfigError("run-all: jobs must be positive");
  fs::create_directories(config.output_dir);
  save_config(config.output_dir / "config.json", config);

  std::mutex log_mutex;
  Logger safe_log;
  if (log) {
    safe_log = [&](const std::string& s) {
      std::lock_guard lock(log_mutex);
      log(s);
    };
  }
  std::vector<RunManifest> out(config.seeds.size());
  for (std::size_t start = 0; start < config.seeds.size(); start += static_cast<std::size_t>(jobs)) {
    const std::size_t end = std::min(config.seeds.size(), start + static_cast<std::size_t>(jobs));
    std::vector<std::future<RunManifest>> futures;
    for (std::size_t i = start; i < end; ++i) {
      futures.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async,
                                   [&, i] { return run_seed(config, config.seeds[i], safe_log); }));
    }
    for (std::size_t i = start; i < end; ++i) out[i] = futures[i - start].get();
  }
  return out;
}

// ---------------------------------------------------------------- export

namespace {

struct TableSpec {
  std::string name;
  std::vector<std::string> sources;  // per-seed relative paths; "{run}" expands over FIM runs
  std::vector<std::string> keys;     // grouping columns for the summary
  bool last_row_only = false;
};

bool is_number(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

std::vector<fs::path> seed_dirs(const fs::path& run_dir) {
  std::vector<std::pair<std::uint64_t, fs::path>> found;
  if (fs::is_directory(run_dir)) {
    for (const auto& e : fs::directory_iterator(run_dir)) {
      const std::string name = e.path().filename().string();
      if (!e.is_directory() || name.rfind("seed_", 0) != 0) continue;
      const std::string digits = name.substr(5);
      if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
        continue;
      }
      found.emplace_back(std::stoull(digits), e.path());
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(f.second);
  return out;
}

std::vector<std::string> fim_runs(const fs::path& seed) {
  std::vector<std::string> out;
  if (!fs::is_directory(seed / "fim")) return out;
  for (const auto& e : fs::directory_iterator(seed / "fim")) {
    if (e.is_directory()) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_line(std::ofstream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}

}  // namespace

ExportReport export_metrics(const fs::path& run_dir, const fs::path& out_dir) {
  const auto seeds = seed_dirs(run_dir);
  if (seeds.empty()) throw InputError("export-metrics: no seed_* directories in " + run_dir.string());

  const std::vector<TableSpec> specs{
      {"fim_curves", {"fim/{run}/curve.csv"}, {"run", "epoch"}, false},
      {"fim_final", {"fim/{run}/curve.csv"}, {"run"}, true},
      {"segmentation", {"segmentation/segmentation.csv"}, {"episode_type"}, false},
      {"skip_curve", {"skip/curve.csv"}, {"epoch", "episode_type"}, false},
      {"skip_probe", {"skip/probe.csv"}, {"probe", "episode_type"}, false},
      {"gaze_fim_curve", {"gaze/fim/curve.csv"}, {"epoch"}, false},
      {"gaze", {"gaze/summary.csv"}, {"checkpoint", "mode", "episode_type", "entity"}, false},
  };

  ExportReport report;
  fs::create_directories(out_dir);
  for (const auto& spec : specs) {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    for (const auto& seed : seeds) {
      const std::string seed_name = seed.filename().string();
      const std::string seed_value = seed_name.substr(5);
      for (const auto& src : spec.sources) {
        std::vector<std::pair<std::string, std::string>> files;  // (run, path)
        if (src.find("{run}") != std::string::npos) {
          const auto runs = fim_runs(seed);
          if (runs.empty()) report.missing.push_back(seed_name + "/fim");
          for (const auto& r : runs) {
            std::string p = src;
            p.replace(p.find("{run}"), 5, r);
            files.emplace_back(r, p);
          }
        } else {
          files.emplace_back("", src);
        }
        for (const auto& [run, rel] : files) {
          const fs::path path = seed / rel;
          if (!fs::exists(path)) {
            report.missing.push_back(seed_name + "/" + rel);
            continue;
          }
          const util::CsvTable t = util::read_csv(path);
          std::vector<std::string> h{"seed"};
          if (!run.empty()) h.push_back("run");
          h.insert(h.end(), t.header.begin(), t.header.end());
          if (header.empty()) header = h;
          if (h != header) throw InputError("export-metrics: header mismatch in " + path.string());
          std::size_t first = spec.last_row_only && !t.rows.empty() ? t.rows.size() - 1 : 0;
          for (std::size_t r = first; r < t.rows.size(); ++r) {
            std::vector<std::string> row{seed_value};
            if (!run.empty()) row.push_back(run);
            row.insert(row.end(), t.rows[r].begin(), t.rows[r].end());
            rows.push_back(std::move(row));
          }
        }
      }
    }
    if (header.empty()) continue;

    {
      std::ofstream out(out_dir / (spec.name + ".csv"), std::ios::binary | std::ios::trunc);
      if (!out) throw InputError("export-metrics: cannot write into " + out_dir.string());
      write_line(out, header);
      for (const auto& r : rows) write_line(out, r);
    }
    report.tables.push_back(spec.name + ".csv");

    // Summary: group by key columns, mean and sample std of every other numeric column.
    std::vector<std::size_t> key_idx, value_idx;
    for (std::size_t i = 1; i < header.size(); ++i) {
      if (std::find(spec.keys.begin(), spec.keys.end(), header[i]) != spec.keys.end()) {
        key_idx.push_back(i);
      } else {
        value_idx.push_back(i);
      }
    }
    std::vector<std::size_t> numeric;
    for (std::size_t i : value_idx) {
      if (std::all_of(rows.begin(), rows.end(), [&](const auto& r) { return is_number(r[i]); })) numeric.push_back(i);
    }
    std::vector<std::vector<std::string>> group_keys;
    std::map<std::vector<std::string>, std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::vector<std::string> k;
      for (std::size_t i : key_idx) k.push_back(rows[r][i]);
      auto [it, inserted] = groups.try_emplace(k);
      if (inserted) group_keys.push_back(k);
      it->second.push_back(r);
    }
    std::ofstream out(out_dir / (spec.name + "_summary.csv"), std::ios::binary | std::ios::trunc);
    std::vector<std::string> sh;
    for (std::size_t i : key_idx) sh.push_back(header[i]);
    sh.push_back("n_seeds");
    for (std::size_t i : numeric) {
      sh.push_back(header[i] + "_mean");
      sh.push_back(header[i] + "_std");
    }
    write_line(out, sh);
    for (const auto& k : group_keys) {
      const auto& members = groups.at(k);
      std::vector<std::string> line = k;
      line.push_back(std::to_string(members.size()));
      for (std::size_t i : numeric) {
        double sum = 0.0;
        for (std::size_t r : members) sum += std::stod(rows[r][i]);
        const double mean = sum / static_cast<double>(members.size());
        double ss = 0.0;
        for (std::size_t r : members) ss += (std::stod(rows[r][i]) - mean) * (std::stod(rows[r][i]) - mean);
        const double sd = members.size() > 1 ? std::sqrt(ss / static_cast<double>(members.size() - 1)) : 0.0;
        line.push_back(util::format_number(mean));
        line.push_back(util::format_number(sd));
      }
      write_line(out, line);
    }
    report.tables.push_back(spec.name + "_summary.csv");
  }
  if (report.tables.empty()) throw InputError("export-metrics: no metric files found under " + run_dir.string());
  return report;
}

// ---------------------------------------------------------------- presets

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "desk") {
    c.output_dir = "runs/desk";
    return c;
  }
  if (name == "smoke") {
    c.seeds = {1};
    c.data.n_episodes = 60;
    c.fim.lambdas = {0.0, 1.0};
    c.fim.max_epochs = 2;
    c.fim.checkpoint_every = 1;
    c.skip.epochs = 2;
    c.skip.probe_every = 1;
    c.gaze.n_episodes = 60;
    c.gaze.fim_epochs = 2;
    c.gaze.checkpoint_every = 1;
    c.gaze.eval_epochs = {0, 2};
    c.gaze.skip_epochs = 1;
    c.gaze.eval_episodes = 4;
    c.output_dir = "runs/smoke";
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (desk, smoke)");
}

}  // namespace evhier::harness
