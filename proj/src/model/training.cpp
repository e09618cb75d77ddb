#include "evhier/model/training.hpp"

#include "evhier/util/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace evhier::model {

namespace {

constexpr std::size_t kEvalChunk = 512;

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch) {
  char name[32];
  std::snprintf(name, sizeof name, "fim_epoch_%04d.bin", epoch);
  return dir / name;
}

}  // namespace

EpochMetrics evaluate(const SensorimotorModel& model, std::span<const env::Episode> episodes,
                      std::span<const std::size_t> indices, const LossWeights& weights, std::uint64_t mask_seed,
                      double mask_sigma) {
  if (indices.empty()) throw InputError("evaluate: no episodes");
  Rng mask_rng(mask_seed);
  const bool gaze = model.config().gaze_mode;
  double obs_sq = 0, act_sq = 0, open = 0, entries = 0, nll_o = 0, nll_a = 0, steps = 0, loss = 0;
  for (std::size_t start = 0; start < indices.size(); start += kEvalChunk) {
    const auto chunk = indices.subspan(start, std::min(kEvalChunk, indices.size() - start));
    const Batch batch = make_batch(episodes, chunk, gaze, &mask_rng, mask_sigma);
    const ModelRollout r = model.rollout(batch, weights);
    obs_sq += r.obs_sq_err;
    act_sq += r.act_sq_err;
    open += r.open_gates;
    entries += r.gate_entries;
    nll_o += r.obs_nll;
    nll_a += r.act_nll;
    steps += r.pred_steps;
    loss += r.obs_nll + r.act_nll;
  }
  EpochMetrics m;
  m.obs_mse = obs_sq / (steps * static_cast<double>(env::kObsDim));
  m.act_mse = act_sq / (steps * static_cast<double>(env::kActDim));
  m.gate_open_rate = open / entries;
  m.nll_obs = nll_o / steps;
  m.nll_act = nll_a / steps;
  m.test_loss = loss / static_cast<double>(indices.size());
  return m;
}

TrainResult train_fim(SensorimotorModel& model, std::span<const env::Episode> train,
                      std::span<const env::Episode> test, const TrainConfig& config,
                      const std::optional<std::filesystem::path>& checkpoint_dir,
                      const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (train.empty()) throw InputError("train_fim: empty training set");
  if (test.empty()) throw InputError("train_fim: empty test set");
  if (config.batch_size < 1) throw ConfigError("train_fim: batch size must be positive");
  if (config.max_epochs < 0) throw ConfigError("train_fim: negative epoch budget");

  Rng order_rng(derive_seed(config.seed, "fim.order"));
  Rng noise_rng(derive_seed(config.seed, "fim.gate_noise"));
  Rng mask_rng(derive_seed(config.seed, "fim.train_mask"));
  const std::uint64_t eval_mask_seed = derive_seed(config.seed, "fim.eval_mask");
  numcore::Adam opt(config.adam);
  const bool gaze = model.config().gaze_mode;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> test_idx(test.size());
  std::iota(test_idx.begin(), test_idx.end(), std::size_t{0});

  if (checkpoint_dir) std::filesystem::create_directories(*checkpoint_dir);

  TrainResult result;
  auto record = [&](int epoch) {
    EpochMetrics m = evaluate(model, test, test_idx, config.weights, eval_mask_seed, config.mask_sigma);
    m.epoch = epoch;
    result.curve.push_back(m);
    if (on_epoch) on_epoch(m);
    if (checkpoint_dir && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      const auto path = checkpoint_path(*checkpoint_dir, epoch);
      save_model(path, model, epoch > 0 ? &opt : nullptr);
      result.checkpoints.push_back(path);
    }
    return m;
  };

  double best = record(0).test_loss;
  int since_best = 0;
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
      const Batch batch = make_batch(train, idx, gaze, &mask_rng, config.mask_sigma);
      model.accumulate_gradients(batch, config.weights, &noise_rng);
      opt.step(model.parameters());
    }
    const EpochMetrics m = record(epoch);
    result.epochs_run = epoch;
    if (!std::isfinite(m.test_loss)) throw NumericError("train_fim: non-finite held-out loss");
    if (m.test_loss < best) {
      best = m.test_loss;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

void write_learning_curve(const std::filesystem::path& path, std::span<const EpochMetrics> curve) {
  util::CsvWriter w(path, {"epoch", "obs_mse", "act_mse", "gate_open_rate", "nll_obs", "nll_act"});
  for (const auto& m : curve) w.row(m.epoch, m.obs_mse, m.act_mse, m.gate_open_rate, m.nll_obs, m.nll_act);
}

std::vector<EpochMetrics> read_learning_curve(const std::filesystem::path& path) {
  const util::CsvTable t = util::read_csv(path);
  std::vector<EpochMetrics> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    EpochMetrics m;
    m.epoch = static_cast<int>(t.number(r, "epoch"));
    m.obs_mse = t.number(r, "obs_mse");
    m.act_mse = t.number(r, "act_mse");
    m.gate_open_rate = t.number(r, "gate_open_rate");
    m.nll_obs = t.number(r, "nll_obs");
    m.nll_act = t.number(r, "nll_act");
    out.push_back(m);
  }
  return out;
}

}  // namespace evhier::model
