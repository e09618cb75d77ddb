// Command line front end for the experiment pipeline.

#include "evhier/env/episode_io.hpp"
#include "evhier/harness/pipeline.hpp"

#include "CLI11.hpp"

#include <iostream>

using namespace evhier;
namespace fs = std::filesystem;

namespace {

void log_line(const std::string& s) { std::cerr << s << std::endl; }

std::vector<gaze::UncertaintyMode> parse_modes(const std::string& s) {
  if (s == "all") {
    return {gaze::UncertaintyMode::intra_only, gaze::UncertaintyMode::inter_only, gaze::UncertaintyMode::combined};
  }
  return {gaze::uncertainty_mode_from_string(s)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-predictive sensorimotor model: data, training and evaluation"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "Generate scripted episodes and a train/test split");
  int gen_n = 2000;
  std::vector<double> gen_mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  double gen_frac = 0.9;
  bool gen_gaze = false;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--n", gen_n, "Number of episodes");
  gen->add_option("--mix", gen_mix, "Fractions of reach-grasp-transport, pointing, stretching")->expected(3);
  gen->add_option("--train-fraction", gen_frac, "Share of episodes in train.jsonl");
  gen->add_flag("--gaze", gen_gaze, "Attach random attention sequences");
  gen->add_option("--seed", gen_seed, "Root seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train-fim
  auto* tf = app.add_subcommand("train-fim", "Train a forward-inverse model");
  std::string tf_train, tf_test, tf_out, tf_cell = "gatel0rd";
  model::TrainConfig tf_cfg;
  bool tf_gaze = false;
  tf->add_option("--train", tf_train, "Training episodes (.jsonl)")->required();
  tf->add_option("--test", tf_test, "Held-out episodes (.jsonl)")->required();
  tf->add_option("--cell", tf_cell, "gatel0rd or gru")->check(CLI::IsMember({"gatel0rd", "gru"}));
  tf->add_option("--lambda", tf_cfg.weights.lambda, "Gate regularization strength");
  tf->add_option("--beta", tf_cfg.weights.beta, "beta-NLL exponent");
  tf->add_option("--lr", tf_cfg.adam.lr, "Adam learning rate");
  tf->add_option("--batch", tf_cfg.batch_size, "Batch size");
  tf->add_option("--epochs", tf_cfg.max_epochs, "Epoch budget");
  tf->add_option("--patience", tf_cfg.patience, "Early-stopping patience (0 disables)");
  tf->add_option("--checkpoint-every", tf_cfg.checkpoint_every, "Checkpoint interval (0 disables)");
  tf->add_flag("--gaze", tf_gaze, "Attention-masked inputs");
  std::uint64_t tf_seed = 1;
  tf->add_option("--seed", tf_seed, "Root seed");
  tf->add_option("--out", tf_out, "Output directory")->required();

  // build-skip-data
  auto* bs = app.add_subcommand("build-skip-data", "Trace episodes through a model and write skip targets");
  std::string bs_model, bs_eps, bs_out;
  std::uint64_t bs_seed = 1;
  double bs_sigma = 0.05;
  bs->add_option("--model", bs_model, "Forward-inverse checkpoint")->required();
  bs->add_option("--episodes", bs_eps, "Episodes (.jsonl)")->required();
  bs->add_option("--mask-seed", bs_seed, "Seed of the attention-mask noise");
  bs->add_option("--mask-sigma", bs_sigma, "Mask noise standard deviation");
  bs->add_option("--out", bs_out, "Output .jsonl")->required();

  // train-skip
  auto* ts = app.add_subcommand("train-skip", "Train a skip network on traces of a frozen model");
  std::string ts_model, ts_train, ts_test, ts_out;
  skip::SkipTrainConfig ts_cfg;
  std::uint64_t ts_seed = 1;
  double ts_sigma = 0.05;
  ts->add_option("--model", ts_model, "Forward-inverse checkpoint")->required();
  ts->add_option("--train", ts_train, "Training episodes (.jsonl)")->required();
  ts->add_option("--test", ts_test, "Held-out episodes (.jsonl)")->required();
  ts->add_option("--epochs", ts_cfg.epochs, "Epochs");
  ts->add_option("--lr", ts_cfg.adam.lr, "Adam learning rate");
  ts->add_option("--batch", ts_cfg.batch_size, "Batch size");
  ts->add_option("--probe-every", ts_cfg.probe_every, "Probe interval");
  ts->add_option("--seed", ts_seed, "Root seed");
  ts->add_option("--mask-sigma", ts_sigma, "Mask noise standard deviation");
  ts->add_option("--out", ts_out, "Output directory")->required();

  // eval-segmentation
  auto* es = app.add_subcommand("eval-segmentation", "Align model boundaries with phase switches");
  std::string es_model, es_eps, es_out, es_bounds;
  int es_tol = 2;
  es->add_option("--model", es_model, "Forward-inverse checkpoint")->required();
  es->add_option("--episodes", es_eps, "Labeled episodes (.jsonl)")->required();
  es->add_option("--tolerance", es_tol, "Hit tolerance in steps");
  es->add_option("--out", es_out, "Report .csv")->required();
  es->add_option("--boundaries", es_bounds, "Optional per-episode boundary .csv");

  // eval-skip
  auto* ek = app.add_subcommand("eval-skip", "Probe a skip network on held-out episodes");
  std::string ek_model, ek_skip, ek_eps, ek_out;
  int ek_step = 2;
  ek->add_option("--model", ek_model, "Forward-inverse checkpoint")->required();
  ek->add_option("--skip", ek_skip, "Skip network checkpoint")->required();
  ek->add_option("--episodes", ek_eps, "Episodes (.jsonl)")->required();
  ek->add_option("--query-step", ek_step, "Step of the hand probe");
  ek->add_option("--out", ek_out, "Output directory")->required();

  // eval-gaze
  auto* eg = app.add_subcommand("eval-gaze", "Closed-loop attention over checkpoint pairs");
  std::string eg_mode = "all", eg_dir, eg_eps, eg_out;
  std::vector<int> eg_epochs;
  gaze::UncertaintyConfig eg_cfg;
  std::uint64_t eg_seed = 1;
  eg->add_option("--mode", eg_mode, "intra, inter, combined or all")
      ->check(CLI::IsMember({"intra", "inter", "combined", "all"}));
  eg->add_option("--checkpoint-dir", eg_dir, "Directory with fim_epoch_NNNN.bin / skip_epoch_NNNN.bin")->required();
  eg->add_option("--episodes", eg_eps, "Evaluation episodes (.jsonl)")->required();
  eg->add_option("--epochs", eg_epochs, "Checkpoint epochs (default: every skip checkpoint)");
  eg->add_option("--dims", eg_cfg.relevant_dims, "Observation dims of the uncertainty");
  eg->add_option("--mask-sigma", eg_cfg.mask_sigma, "Mask noise standard deviation");
  eg->add_option("--seed", eg_seed, "Noise seed");
  eg->add_option("--out", eg_out, "Summary .csv")->required();

  // export-metrics
  auto* ex = app.add_subcommand("export-metrics", "Merge per-seed CSVs and add mean/std summaries");
  std::string ex_run, ex_out;
  ex->add_option("--run-dir", ex_run, "Directory holding seed_* subdirectories")->required();
  ex->add_option("--out", ex_out, "Output directory (default <run-dir>/metrics)");

  // run-all
  auto* ra = app.add_subcommand("run-all", "Every stage for every seed, then export");
  std::string ra_config, ra_preset = "desk", ra_outdir;
  std::vector<std::uint64_t> ra_seeds;
  int ra_jobs = 1;
  ra->add_option("--config", ra_config, "Experiment config (.json); overrides --preset");
  ra->add_option("--preset", ra_preset, "desk or smoke")->check(CLI::IsMember({"desk", "smoke"}));
  ra->add_option("--output-dir", ra_outdir, "Override the output directory");
  ra->add_option("--seeds", ra_seeds, "Override the seed list");
  ra->add_option("--jobs", ra_jobs, "Seeds run in parallel");

  try {
    app.parse(argc, argv);

    if (*gen) {
      if (gen_mix.size() != 3) throw ConfigError("--mix takes three values");
      const auto split = harness::generate_split(gen_n, {gen_mix[0], gen_mix[1], gen_mix[2]}, gen_frac, gen_gaze,
                                                 derive_seed(gen_seed, "data"));
      fs::create_directories(gen_out);
      env::write_episodes(fs::path(gen_out) / "train.jsonl", split.train);
      env::write_episodes(fs::path(gen_out) / "test.jsonl", split.test);
      std::cout << split.train.size() << " train, " << split.test.size() << " test episodes\n";
    } else if (*tf) {
      const auto train = env::read_episodes(tf_train);
      const auto test = env::read_episodes(tf_test);
      tf_cfg.seed = derive_seed(tf_seed, "fim.train");
      const bool gru = tf_cell == "gru";
      const auto result = harness::train_fim_run(harness::FimRun{gru, tf_cfg.weights.lambda, tf_gaze}, train, test,
                                                 tf_cfg, derive_seed(tf_seed, gru ? "fim.init.gru" : "fim.init"),
                                                 tf_out);
      const auto& last = result.curve.back();
      std::cout << "epochs " << result.epochs_run << " obs_mse " << last.obs_mse << " act_mse " << last.act_mse
                << " gate_open_rate " << last.gate_open_rate << "\n";
    } else if (*bs) {
      const auto fim = model::load_model(bs_model);
      const auto eps = env::read_episodes(bs_eps);
      const auto traces = skip::trace_episodes(fim, eps, bs_seed, bs_sigma);
      const auto data = skip::build_skip_dataset(eps, traces, fim.config().gaze_mode);
      skip::write_skip_dataset(bs_out, data);
      std::cout << data.size() << " samples\n";
    } else if (*ts) {
      const auto fim = model::load_model(ts_model);
      const auto train = env::read_episodes(ts_train);
      const auto test = env::read_episodes(ts_test);
      ts_cfg.seed = derive_seed(ts_seed, "skip.train");
      const fs::path out(ts_out);
      harness::train_skip_run(fim, train, test, ts_cfg, derive_seed(ts_seed, "skip.init"),
                              derive_seed(ts_seed, "skip.mask"), ts_sigma, out / "final.bin", out / "curve.csv",
                              out / "probe.csv");
    } else if (*es) {
      const auto fim = model::load_model(es_model);
      const auto eps = env::read_episodes(es_eps);
      const auto traces = skip::trace_episodes(fim, eps, derive_seed(1, "segmentation.mask"));
      const auto report = harness::eval_segmentation(eps, traces, es_tol);
      harness::write_segmentation(es_out, report);
      if (!es_bounds.empty()) harness::write_boundaries(es_bounds, eps, traces);
      for (int t = 0; t < 3; ++t) {
        const auto& s = report.by_type[static_cast<std::size_t>(t)];
        if (s.episodes == 0) continue;
        std::cout << env::to_string(static_cast<env::EpisodeType>(t)) << ": recall " << s.recall() << " precision "
                  << s.precision() << " interior boundaries " << s.mean_interior_boundaries() << "\n";
      }
    } else if (*ek) {
      const auto fim = model::load_model(ek_model);
      const auto net = skip::load_skip(ek_skip);
      const auto eps = env::read_episodes(ek_eps);
      const auto traces = skip::trace_episodes(fim, eps, derive_seed(1, "skip.mask"));
      fs::create_directories(ek_out);
      harness::write_skip_probe(fs::path(ek_out) / "probe.csv", skip::probe_skip(net, eps, traces, ek_step));
      skip::write_skip_predictions(fs::path(ek_out) / "predictions.csv", net, eps, traces);
    } else if (*eg) {
      const auto eps = env::read_episodes(eg_eps);
      std::vector<int> epochs = eg_epochs.empty() ? harness::checkpoint_epochs(eg_dir, "skip") : eg_epochs;
      if (epochs.empty()) throw InputError("eval-gaze: no skip_epoch_NNNN.bin in " + eg_dir);
      eg_cfg.validate();
      const auto rows =
          harness::eval_gaze_checkpoints(eg_dir, epochs, parse_modes(eg_mode), eps, eg_cfg, eg_seed);
      harness::write_gaze_summary(eg_out, rows);
    } else if (*ex) {
      const fs::path out = ex_out.empty() ? fs::path(ex_run) / "metrics" : fs::path(ex_out);
      const auto report = harness::export_metrics(ex_run, out);
      for (const auto& m : report.missing) std::cerr << "warning: missing " << m << "\n";
      std::cout << report.tables.size() << " files written to " << out.string() << "\n";
    } else if (*ra) {
      harness::ExperimentConfig cfg = ra_config.empty() ? harness::preset(ra_preset) : harness::load_config(ra_config);
      if (!ra_outdir.empty()) cfg.output_dir = ra_outdir;
      if (!ra_seeds.empty()) cfg.seeds = ra_seeds;
      harness::run_pipeline(cfg, ra_jobs, log_line);
      const auto report = harness::export_metrics(cfg.output_dir, cfg.output_dir / "metrics");
      for (const auto& m : report.missing) std::cerr << "warning: missing " << m << "\n";
      std::cout << "metrics in " << (cfg.output_dir / "metrics").string() << "\n";
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
