#include "evhier/skip/skip_network.hpp"

#include "evhier/env/episode_io.hpp"
#include "evhier/numcore/checkpoint.hpp"
#include "evhier/numcore/losses.hpp"
#include "evhier/skip/boundaries.hpp"
#include "evhier/util/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace evhier::skip {

using nlohmann::json;
using numcore::Activation;
using numcore::GaussianBatch;

namespace {

constexpr std::size_t kChunk = 512;

Matrix gather(const Matrix& m, std::span<const std::size_t> cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = m.col(static_cast<Index>(cols[j]));
  return out;
}

Matrix dataset_inputs(const SkipNetwork& net, const SkipDataset& d, std::span<const std::size_t> cols) {
  const Matrix focus = d.has_focus() ? gather(d.focus, cols) : Matrix();
  return net.input(gather(d.obs, cols), gather(d.latent, cols), d.has_focus() ? &focus : nullptr);
}

double distance(const Matrix& a, Index col_a, Index off_a, const Matrix& b, Index col_b, Index off_b) {
  return (a.block(off_a, col_a, 3, 1) - b.block(off_b, col_b, 3, 1)).norm();
}

void add_distances(EntityDistances& d, const Matrix& pred, Index pred_col, Index pred_off, const Matrix& obs,
                   Index obs_col) {
  d.hand += distance(pred, pred_col, pred_off, obs, obs_col, env::kHandOffset);
  d.object += distance(pred, pred_col, pred_off, obs, obs_col, env::kObjectOffset);
  d.goal += distance(pred, pred_col, pred_off, obs, obs_col, env::kGoalOffset);
  ++d.count;
}

void finish(EntityDistances& d) {
  if (d.count == 0) return;
  d.hand /= d.count;
  d.object /= d.count;
  d.goal /= d.count;
}

}  // namespace

std::vector<EpisodeTrace> trace_episodes(const model::SensorimotorModel& model, std::span<const env::Episode> episodes,
                                         std::uint64_t mask_seed, double mask_sigma) {
  const bool gaze = model.config().gaze_mode;
  std::vector<EpisodeTrace> out(episodes.size());
  model::LossWeights weights;
  weights.lambda = 0.0;
  for (std::size_t start = 0; start < episodes.size(); start += kChunk) {
    std::vector<std::size_t> idx(std::min(kChunk, episodes.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    model::Batch batch = model::make_batch(episodes, idx, gaze, nullptr);
    if (gaze) {
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const auto& ep = episodes[idx[j]];
        Rng rng(derive_seed(mask_seed, "skip.mask", ep.id));
        for (int t = 0; t < batch.steps(); ++t) {
          const Index c = static_cast<Index>(j);
          batch.obs_in[t].col(c) = env::apply_attention_mask(Vector(batch.obs_true[t].col(c)),
                                                             env::focus_entity(batch.focus[t].col(c)), rng, mask_sigma);
        }
      }
    }
    const model::ModelRollout r = model.rollout(batch, weights);
    const int T = batch.steps();
    const Index H = model.config().latent_width;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      EpisodeTrace& tr = out[idx[j]];
      const Index c = static_cast<Index>(j);
      tr.obs_in.resize(env::kObsDim, T);
      tr.latents.resize(H, T);
      tr.gates.resize(H, T);
      for (int t = 0; t < T; ++t) {
        tr.obs_in.col(t) = batch.obs_in[t].col(c);
        tr.latents.col(t) = r.latents[t].col(c);
        tr.gates.col(t) = r.gates[t].col(c);
      }
      tr.boundaries = extract_boundaries(tr.gates);
    }
  }
  return out;
}

SkipDataset build_skip_dataset(std::span<const env::Episode> episodes, std::span<const EpisodeTrace> traces,
                               bool gaze) {
  if (episodes.size() != traces.size()) throw InputError("skip dataset: one trace per episode required");
  std::size_t n = 0;
  for (const auto& ep : episodes) n += static_cast<std::size_t>(std::max(ep.length() - 1, 0));
  const Index H = traces.empty() ? 0 : traces.front().latents.rows();
  SkipDataset d;
  d.obs.resize(env::kObsDim, static_cast<Index>(n));
  d.latent.resize(H, static_cast<Index>(n));
  d.focus.resize(gaze ? env::kFocusDim : 0, static_cast<Index>(n));
  d.target.resize(env::kObsDim, static_cast<Index>(n));
  d.episode.reserve(n);
  d.step.reserve(n);
  d.target_step.reserve(n);
  Index k = 0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    const auto& tr = traces[e];
    if (tr.latents.cols() != ep.length() || tr.boundaries.empty() || tr.boundaries.back() != ep.length()) {
      throw InputError("skip dataset: trace does not match its episode");
    }
    const std::vector<int> targets = skip_targets(tr.boundaries);
    for (int t = 1; t < ep.length(); ++t, ++k) {
      const int target = targets[static_cast<std::size_t>(t - 1)];
      d.obs.col(k) = tr.obs_in.col(t - 1);
      d.latent.col(k) = tr.latents.col(t - 1);
      if (gaze) {
        if (!ep.attention) throw InputError("skip dataset: gaze mode requires attention sequences");
        d.focus.col(k) = ep.attention->col(t - 1);
      }
      d.target.col(k) = ep.observations.col(target - 1);
      d.episode.push_back(ep.id);
      d.step.push_back(t);
      d.target_step.push_back(target);
    }
  }
  return d;
}

void write_skip_dataset(const std::filesystem::path& path, const SkipDataset& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("skip dataset: cannot write " + path.string());
  auto col = [](const Matrix& m, Index k) { return std::vector<double>(m.col(k).data(), m.col(k).data() + m.rows()); };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Index k = static_cast<Index>(i);
    json j = {{"episode", data.episode[i]},
              {"step", data.step[i]},
              {"target_step", data.target_step[i]},
              {"obs", col(data.obs, k)},
              {"h", col(data.latent, k)},
              {"target", col(data.target, k)}};
    if (data.has_focus()) j["focus"] = col(data.focus, k);
    out << j.dump() << '\n';
  }
}

SkipDataset read_skip_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("skip dataset: cannot read " + path.string());
  std::vector<json> rows;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (!line.empty()) rows.push_back(json::parse(line));
    }
  } catch (const json::exception& e) {
    throw InputError("skip dataset: " + std::string(e.what()));
  }
  SkipDataset d;
  if (rows.empty()) return d;
  const Index n = static_cast<Index>(rows.size());
  const Index H = static_cast<Index>(rows.front().at("h").size());
  const bool gaze = rows.front().contains("focus");
  d.obs.resize(env::kObsDim, n);
  d.latent.resize(H, n);
  d.focus.resize(gaze ? env::kFocusDim : 0, n);
  d.target.resize(env::kObsDim, n);
  auto fill = [](Matrix& m, Index k, const json& v) {
    if (static_cast<Index>(v.size()) != m.rows()) throw InputError("skip dataset: vector width mismatch");
    for (Index i = 0; i < m.rows(); ++i) m(i, k) = v[static_cast<std::size_t>(i)].get<double>();
  };
  try {
    for (Index k = 0; k < n; ++k) {
      const json& j = rows[static_cast<std::size_t>(k)];
      d.episode.push_back(j.at("episode").get<std::uint64_t>());
      d.step.push_back(j.at("step").get<int>());
      d.target_step.push_back(j.at("target_step").get<int>());
      fill(d.obs, k, j.at("obs"));
      fill(d.latent, k, j.at("h"));
      fill(d.target, k, j.at("target"));
      if (gaze) fill(d.focus, k, j.at("focus"));
    }
  } catch (const json::exception& e) {
    throw InputError("skip dataset: " + std::string(e.what()));
  }
  return d;
}

void SkipConfig::validate() const {
  if (latent_width <= 0) throw ConfigError("skip: latent width must be positive");
  if (widths.empty()) throw ConfigError("skip: at least one hidden layer");
  if (min_variance < 0.0) throw ConfigError("skip: variance floor must be non-negative");
}

void to_json(json& j, const SkipConfig& c) {
  j = json{{"latent_width", c.latent_width},
           {"gaze_mode", c.gaze_mode},
           {"widths", c.widths},
           {"min_variance", c.min_variance},
           {"detach_variance", c.detach_variance},
           {"variance_bias_init", c.variance_bias_init}};
}

void from_json(const json& j, SkipConfig& c) {
  c.latent_width = j.at("latent_width").get<Index>();
  c.gaze_mode = j.at("gaze_mode").get<bool>();
  c.widths = j.at("widths").get<std::vector<Index>>();
  c.min_variance = j.at("min_variance").get<double>();
  c.detach_variance = j.at("detach_variance").get<bool>();
  c.variance_bias_init = j.at("variance_bias_init").get<double>();
}

SkipNetwork::SkipNetwork(SkipConfig config)
    : config_((config.validate(), std::move(config))),
      body_("skip", numcore::MlpConfig{config_.input_width(), config_.widths, Activation::tanh, Activation::tanh}),
      head_("skip.head", config_.widths.back(), env::kObsDim) {
  head_.set_min_variance(config_.min_variance);
  head_.set_detach_variance(config_.detach_variance);
  head_.set_variance_bias_init(config_.variance_bias_init);
}

void SkipNetwork::initialize(Rng& rng) {
  body_.initialize(rng);
  head_.initialize(rng);
}

numcore::ParamRefs SkipNetwork::parameters() {
  numcore::ParamRefs out;
  body_.collect(out);
  head_.collect(out);
  return out;
}

Matrix SkipNetwork::input(const Matrix& obs, const Matrix& latent, const Matrix* focus) const {
  if (obs.rows() != env::kObsDim || latent.rows() != config_.latent_width || latent.cols() != obs.cols()) {
    throw ConfigError("skip: input widths do not match the network");
  }
  if (config_.gaze_mode != (focus != nullptr)) throw ConfigError("skip: attention focus must be supplied exactly in gaze mode");
  Matrix x(config_.input_width(), obs.cols());
  x.topRows(env::kObsDim) = obs;
  x.middleRows(env::kObsDim, config_.latent_width) = latent;
  if (focus) x.bottomRows(env::kFocusDim) = *focus;
  return x;
}

GaussianBatch SkipNetwork::forward(const Matrix& input) const { return head_.forward(body_.forward(input)); }

double SkipNetwork::accumulate_gradients(const Matrix& input, const Matrix& target, double beta) {
  numcore::zero_grads(parameters());
  numcore::Mlp::Cache mc;
  numcore::GaussianHead::Cache hc;
  const GaussianBatch g = head_.forward(body_.forward(input, &mc), &hc);
  const double inv_b = 1.0 / static_cast<double>(input.cols());
  const auto l = numcore::beta_nll(g.mean, g.var, target, beta);
  body_.backward(head_.backward(l.d_mean * inv_b, l.d_var * inv_b, hc), mc);
  return l.loss * inv_b;
}

json SkipNetwork::metadata() const { return json{{"kind", "skip_network"}, {"config", config_}}; }

void save_skip(const std::filesystem::path& path, SkipNetwork& net) {
  numcore::write_checkpoint(path, numcore::make_checkpoint(net.metadata().dump(), net.parameters(), nullptr));
}

SkipNetwork load_skip(const std::filesystem::path& path) {
  const auto ckpt = numcore::read_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.metadata);
    if (meta.at("kind").get<std::string>() != "skip_network") throw InputError("not a skip network");
  } catch (const json::exception& e) {
    throw InputError("checkpoint metadata: " + std::string(e.what()));
  }
  SkipNetwork net(meta.at("config").get<SkipConfig>());
  numcore::load_parameters(ckpt, net.parameters());
  return net;
}

double EntityDistances::of(env::Entity e) const {
  switch (e) {
    case env::Entity::hand: return hand;
    case env::Entity::object: return object;
    case env::Entity::goal: return goal;
  }
  return hand;
}

env::Entity EntityDistances::nearest() const {
  env::Entity best = env::Entity::hand;
  for (env::Entity e : {env::Entity::object, env::Entity::goal}) {
    if (of(e) < of(best)) best = e;
  }
  return best;
}

SkipProbe probe_skip(const SkipNetwork& net, std::span<const env::Episode> episodes,
                     std::span<const EpisodeTrace> traces, int query_step) {
  if (episodes.size() != traces.size()) throw InputError("probe: one trace per episode required");
  SkipProbe p;
  const bool gaze = net.config().gaze_mode;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    const auto& tr = traces[e];
    if (query_step < 1 || query_step >= ep.length()) throw InputError("probe: query step outside the episode");
    auto predict = [&](int t) {
      const Matrix focus = gaze ? Matrix(ep.attention->col(t - 1)) : Matrix();
      return net.forward(net.input(tr.obs_in.col(t - 1), tr.latents.col(t - 1), gaze ? &focus : nullptr)).mean;
    };
    const Matrix pred = predict(query_step);
    add_distances(p.hand_at_t2[static_cast<std::size_t>(ep.type())], pred, 0, env::kHandOffset, ep.observations,
                  query_step - 1);
    if (ep.type() == env::EpisodeType::reach_grasp_transport) {
      const auto it = std::find(ep.phase_labels.begin(), ep.phase_labels.end(), env::phase::transport);
      if (it == ep.phase_labels.end()) continue;
      const int t = static_cast<int>(it - ep.phase_labels.begin()) + 1;
      if (t >= ep.length()) continue;
      add_distances(p.object_at_grasp, predict(t), 0, env::kObjectOffset, ep.observations, t - 1);
    }
  }
  for (auto& d : p.hand_at_t2) finish(d);
  finish(p.object_at_grasp);
  return p;
}

double skip_nll(const SkipNetwork& net, const SkipDataset& data) {
  if (data.size() == 0) throw InputError("skip loss: empty dataset");
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    std::vector<std::size_t> cols(std::min(kChunk, data.size() - start));
    std::iota(cols.begin(), cols.end(), start);
    const GaussianBatch g = net.forward(dataset_inputs(net, data, cols));
    total += numcore::gaussian_nll(g.mean, g.var, gather(data.target, cols));
  }
  return total / static_cast<double>(data.size());
}

std::vector<SkipEpoch> train_skip(SkipNetwork& net, const SkipDataset& train, const SkipDataset& test,
                                  std::span<const env::Episode> probe_episodes,
                                  std::span<const EpisodeTrace> probe_traces, const SkipTrainConfig& config,
                                  const std::function<void(const SkipEpoch&)>& on_probe) {
  if (train.size() == 0) throw InputError("train_skip: empty skip dataset");
  if (config.batch_size < 1) throw ConfigError("train_skip: batch size must be positive");
  if (train.has_focus() != net.config().gaze_mode) throw ConfigError("train_skip: dataset and network disagree on gaze mode");
  Rng order_rng(derive_seed(config.seed, "skip.order"));
  numcore::Adam opt(config.adam);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<SkipEpoch> curve;
  auto record = [&](int epoch) {
    SkipEpoch s;
    s.epoch = epoch;
    s.test_nll = test.size() ? skip_nll(net, test) : 0.0;
    s.probe = probe_skip(net, probe_episodes, probe_traces);
    curve.push_back(s);
    if (on_probe) on_probe(s);
  };
  record(0);
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::span<const std::size_t> cols(order.data() + start, std::min(bs, order.size() - start));
      net.accumulate_gradients(dataset_inputs(net, train, cols), gather(train.target, cols), config.beta);
      opt.step(net.parameters());
    }
    if (epoch == config.epochs || (config.probe_every > 0 && epoch % config.probe_every == 0)) record(epoch);
  }
  return curve;
}

void write_skip_curve(const std::filesystem::path& path, std::span<const SkipEpoch> curve) {
  util::CsvWriter w(path, {"epoch", "episode_type", "d_hand", "d_object", "d_goal"});
  for (const auto& s : curve) {
    for (int type = 0; type < 3; ++type) {
      const auto& d = s.probe.hand_at_t2[static_cast<std::size_t>(type)];
      w.row(s.epoch, std::string(env::to_string(static_cast<env::EpisodeType>(type))), d.hand, d.object, d.goal);
    }
  }
}

void write_skip_predictions(const std::filesystem::path& path, const SkipNetwork& net,
                            std::span<const env::Episode> episodes, std::span<const EpisodeTrace> traces) {
  util::CsvWriter w(path, {"episode", "episode_type", "step", "target_step", "pred_hand_x", "pred_hand_y",
                           "pred_hand_z", "pred_object_x", "pred_object_y", "pred_object_z", "hand_x", "hand_y",
                           "hand_z", "object_x", "object_y", "object_z", "goal_x", "goal_y", "goal_z"});
  const bool gaze = net.config().gaze_mode;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    const auto& tr = traces[e];
    const Index T = ep.length();
    const Matrix obs = tr.obs_in.leftCols(T - 1);
    const Matrix lat = tr.latents.leftCols(T - 1);
    const Matrix focus = gaze ? Matrix(ep.attention->leftCols(T - 1)) : Matrix();
    const Matrix pred = net.forward(net.input(obs, lat, gaze ? &focus : nullptr)).mean;
    const std::vector<int> targets = skip_targets(tr.boundaries);
    const std::string type(env::to_string(ep.type()));
    for (Index t = 0; t + 1 < T; ++t) {
      const auto& o = ep.observations;
      const Index ph = env::kHandOffset, po = env::kObjectOffset, pg = env::kGoalOffset;
      w.row(ep.id, type, static_cast<int>(t + 1), targets[static_cast<std::size_t>(t)], pred(ph, t), pred(ph + 1, t),
            pred(ph + 2, t), pred(po, t), pred(po + 1, t), pred(po + 2, t), o(ph, t), o(ph + 1, t), o(ph + 2, t),
            o(po, t), o(po + 1, t), o(po + 2, t), o(pg, t), o(pg + 1, t), o(pg + 2, t));
    }
  }
}

}  // namespace evhier::skip
