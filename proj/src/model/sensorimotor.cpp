#include "evhier/model/sensorimotor.hpp"

#include "evhier/cell/gatel0rd.hpp"
#include "evhier/cell/gru.hpp"
#include "evhier/numcore/checkpoint.hpp"
#include "evhier/numcore/losses.hpp"

#include <cmath>

namespace evhier::model {

using nlohmann::json;
using numcore::Activation;
using numcore::GaussianHead;
using numcore::Mlp;
using numcore::MlpConfig;
using numcore::MultiplicativeLayer;

ModelConfig ModelConfig::for_cell(cell::CellType type, bool gaze_mode) {
  ModelConfig c;
  c.cell_type = type;
  c.latent_width = type == cell::CellType::gru ? 32 : 16;
  c.gaze_mode = gaze_mode;
  return c;
}

void ModelConfig::validate() const {
  if (latent_width <= 0 || cell_output_width <= 0 || multiplicative_width <= 0) {
    throw ConfigError("model: widths must be positive");
  }
  if (feature_widths.empty()) throw ConfigError("model: feature MLPs need at least one layer");
  if (gate_noise < 0.0) throw ConfigError("model: gate noise must be non-negative");
  if (min_variance < 0.0) throw ConfigError("model: variance floor must be non-negative");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"cell_type", std::string(cell::to_string(c.cell_type))},
           {"latent_width", c.latent_width},
           {"gaze_mode", c.gaze_mode},
           {"feature_widths", c.feature_widths},
           {"cell_hidden_widths", c.cell_hidden_widths},
           {"cell_output_width", c.cell_output_width},
           {"multiplicative_width", c.multiplicative_width},
           {"gate_noise", c.gate_noise},
           {"min_variance", c.min_variance},
           {"detach_variance", c.detach_variance},
           {"variance_bias_init", c.variance_bias_init}};
}

void from_json(const json& j, ModelConfig& c) {
  c.cell_type = cell::cell_type_from_string(j.at("cell_type").get<std::string>());
  c.latent_width = j.at("latent_width").get<Index>();
  c.gaze_mode = j.at("gaze_mode").get<bool>();
  c.feature_widths = j.at("feature_widths").get<std::vector<Index>>();
  c.cell_hidden_widths = j.at("cell_hidden_widths").get<std::vector<Index>>();
  c.cell_output_width = j.at("cell_output_width").get<Index>();
  c.multiplicative_width = j.at("multiplicative_width").get<Index>();
  c.gate_noise = j.at("gate_noise").get<double>();
  c.min_variance = j.at("min_variance").get<double>();
  c.detach_variance = j.at("detach_variance").get<bool>();
  c.variance_bias_init = j.at("variance_bias_init").get<double>();
}

Batch make_batch(std::span<const env::Episode> episodes, std::span<const std::size_t> indices, bool gaze_mode,
                 Rng* mask_rng, double mask_sigma) {
  if (indices.empty()) throw InputError("batch: no episodes selected");
  const int T = episodes[indices.front()].length();
  const Index B = static_cast<Index>(indices.size());
  Batch b;
  b.obs_true.assign(T, Matrix(env::kObsDim, B));
  b.act.assign(T, Matrix(env::kActDim, B));
  if (gaze_mode) b.focus.assign(T, Matrix(env::kFocusDim, B));
  for (Index j = 0; j < B; ++j) {
    const auto& ep = episodes[indices[static_cast<std::size_t>(j)]];
    if (ep.length() != T) throw InputError("batch: episodes differ in length");
    if (gaze_mode && !ep.attention) throw InputError("batch: gaze mode requires attention sequences");
    for (int t = 0; t < T; ++t) {
      b.obs_true[t].col(j) = ep.observations.col(t);
      b.act[t].col(j) = ep.actions.col(t);
      if (gaze_mode) b.focus[t].col(j) = ep.attention->col(t);
    }
  }
  if (gaze_mode) {
    Rng fallback(0);
    Rng& rng = mask_rng ? *mask_rng : fallback;
    b.obs_in.reserve(T);
    for (int t = 0; t < T; ++t) b.obs_in.push_back(env::apply_attention_mask(b.obs_true[t], b.focus[t], rng, mask_sigma));
  } else {
    b.obs_in = b.obs_true;
  }
  return b;
}

namespace {

std::unique_ptr<cell::RecurrentCell> make_cell(const ModelConfig& c) {
  if (c.cell_type == cell::CellType::gru) {
    return std::make_unique<cell::GruCell>(cell::GruConfig{c.input_width(), c.latent_width, c.cell_output_width});
  }
  cell::GateL0rdConfig g;
  g.input_width = c.input_width();
  g.latent_width = c.latent_width;
  g.hidden_widths = c.cell_hidden_widths;
  g.output_width = c.cell_output_width;
  return std::make_unique<cell::GateL0rdCell>(g);
}

MlpConfig feature_mlp(Index in, const std::vector<Index>& widths) {
  return MlpConfig{in, widths, Activation::tanh, Activation::tanh};
}

MlpConfig init_mlp(const ModelConfig& c) {
  auto widths = c.feature_widths;
  widths.back() = c.latent_width;
  return MlpConfig{c.input_width(), widths, Activation::tanh, Activation::tanh};
}

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

}  // namespace

struct SensorimotorModel::Tape {
  std::vector<Matrix> inputs;
  Mlp::Cache init;
  std::vector<std::unique_ptr<cell::CellTrace>> cell;
  std::vector<Mlp::Cache> fm_body;
  std::vector<GaussianHead::Cache> fm_head;
  std::vector<MultiplicativeLayer::Cache> im_mult;
  std::vector<Mlp::Cache> im_body;
  std::vector<GaussianHead::Cache> im_head;
  std::vector<Matrix> d_obs_mean, d_obs_var, d_act_mean, d_act_var;
};

SensorimotorModel::SensorimotorModel(ModelConfig config)
    : config_(std::move(config)),
      init_net_("init", init_mlp(config_)),
      cell_(make_cell(config_)),
      fm_body_("fm", feature_mlp(config_.cell_output_width, config_.feature_widths)),
      fm_head_("fm.head", config_.feature_widths.back(), config_.obs_width()),
      im_mult_("im.mult", config_.obs_width() + config_.focus_width(), config_.latent_width,
               config_.multiplicative_width, Activation::tanh, Activation::sigmoid),
      im_body_("im", feature_mlp(config_.multiplicative_width, config_.feature_widths)),
      im_head_("im.head", config_.feature_widths.back(), config_.act_width()) {
  config_.validate();
  fm_head_.set_min_variance(config_.min_variance);
  im_head_.set_min_variance(config_.min_variance);
  for (auto* head : {&fm_head_, &im_head_}) {
    head->set_detach_variance(config_.detach_variance);
    head->set_variance_bias_init(config_.variance_bias_init);
  }
}

SensorimotorModel::SensorimotorModel(const SensorimotorModel& other)
    : config_(other.config_),
      init_net_(other.init_net_),
      cell_(other.cell_->clone()),
      fm_body_(other.fm_body_),
      fm_head_(other.fm_head_),
      im_mult_(other.im_mult_),
      im_body_(other.im_body_),
      im_head_(other.im_head_) {}

SensorimotorModel& SensorimotorModel::operator=(const SensorimotorModel& other) {
  if (this != &other) *this = SensorimotorModel(other);
  return *this;
}

void SensorimotorModel::initialize(Rng& rng) {
  init_net_.initialize(rng);
  cell_->initialize(rng);
  fm_body_.initialize(rng);
  fm_head_.initialize(rng);
  im_mult_.initialize(rng);
  im_body_.initialize(rng);
  im_head_.initialize(rng);
}

numcore::ParamRefs SensorimotorModel::parameters() {
  numcore::ParamRefs out;
  init_net_.collect(out);
  cell_->collect(out);
  fm_body_.collect(out);
  fm_head_.collect(out);
  im_mult_.collect(out);
  im_body_.collect(out);
  im_head_.collect(out);
  return out;
}

Matrix SensorimotorModel::cell_input(const Matrix& obs, const Matrix& act, const Matrix* focus) const {
  if (obs.rows() != config_.obs_width() || act.rows() != config_.act_width()) {
    throw ConfigError("model: observation/action width mismatch");
  }
  if (config_.gaze_mode != (focus != nullptr)) {
    throw ConfigError("model: attention focus must be supplied exactly in gaze mode");
  }
  Matrix x(config_.input_width(), obs.cols());
  x.topRows(obs.rows()) = obs;
  x.middleRows(obs.rows(), act.rows()) = act;
  if (focus) x.bottomRows(focus->rows()) = *focus;
  return x;
}

Matrix SensorimotorModel::init_latent(const Matrix& first_input) const { return init_net_.forward(first_input); }

cell::StepOutput SensorimotorModel::step(const Matrix& x, const Matrix& h_prev) const {
  return cell_->forward(x, h_prev, nullptr, nullptr);
}

GaussianBatch SensorimotorModel::predict_observation(const Matrix& cell_output, const Matrix& obs) const {
  GaussianBatch g = fm_head_.forward(fm_body_.forward(cell_output));
  g.mean += obs;
  return g;
}

GaussianBatch SensorimotorModel::predict_action(const Matrix& next_obs, const Matrix* next_focus,
                                                const Matrix& latent) const {
  const Matrix a = next_focus ? stack(next_obs, *next_focus) : next_obs;
  return im_head_.forward(im_body_.forward(im_mult_.forward(a, latent)));
}

ModelRollout SensorimotorModel::forward(const Batch& batch, const LossWeights& weights, Rng* gate_noise_rng,
                                        Tape* tape) const {
  const int T = batch.steps();
  if (T < 2) throw InputError("rollout: episodes need at least 2 steps");
  if (batch.has_focus() != config_.gaze_mode) throw ConfigError("rollout: batch and model disagree on gaze mode");
  const Index B = batch.size();
  const double inv_b = 1.0 / static_cast<double>(B);

  ModelRollout r;
  r.latents.reserve(T);
  r.gates.reserve(T);
  r.outputs.reserve(T);
  if (tape) {
    tape->inputs.resize(T);
    tape->cell.resize(T);
    tape->fm_body.resize(T - 1);
    tape->fm_head.resize(T - 1);
    tape->im_mult.resize(T - 1);
    tape->im_body.resize(T - 1);
    tape->im_head.resize(T - 1);
    tape->d_obs_mean.resize(T - 1);
    tape->d_obs_var.resize(T - 1);
    tape->d_act_mean.resize(T - 1);
    tape->d_act_var.resize(T - 1);
  }

  std::vector<Matrix> inputs(T);
  for (int t = 0; t < T; ++t) {
    inputs[t] = cell_input(batch.obs_in[t], batch.act[t], batch.has_focus() ? &batch.focus[t] : nullptr);
  }
  r.h0 = init_net_.forward(inputs[0], tape ? &tape->init : nullptr);

  const bool noisy = gate_noise_rng != nullptr && config_.gate_noise > 0.0 && cell_->type() == cell::CellType::gatel0rd;
  std::normal_distribution<double> noise(0.0, config_.gate_noise > 0.0 ? config_.gate_noise : 1.0);
  Matrix gate_noise;

  const Matrix* h_prev = &r.h0;
  for (int t = 0; t < T; ++t) {
    if (noisy) gate_noise = Matrix::NullaryExpr(config_.latent_width, B, [&] { return noise(*gate_noise_rng); });
    cell::StepOutput out = cell_->forward(inputs[t], *h_prev, noisy ? &gate_noise : nullptr,
                                          tape ? &tape->cell[t] : nullptr);
    const double open = static_cast<double>((out.gate.array() > 0.0).count());
    r.open_gates += open;
    r.gate_entries += static_cast<double>(out.gate.size());
    // Penalty is the open fraction over latent dimensions, summed over steps.
    if (cell_->type() == cell::CellType::gatel0rd) r.reg_loss += weights.lambda * kGatePenaltyUnit * open * inv_b;
    r.latents.push_back(std::move(out.h));
    r.gates.push_back(std::move(out.gate));
    r.outputs.push_back(std::move(out.y));
    h_prev = &r.latents.back();

    if (t + 1 >= T) continue;
    // Forward model: next observation as a residual on the current one.
    Matrix feat = fm_body_.forward(r.outputs.back(), tape ? &tape->fm_body[t] : nullptr);
    GaussianBatch obs_pred = fm_head_.forward(feat, tape ? &tape->fm_head[t] : nullptr);
    obs_pred.mean += batch.obs_in[t];
    // Inverse model: next action from the next observation and the current latent.
    const Matrix a_in = batch.has_focus() ? stack(batch.obs_in[t + 1], batch.focus[t + 1]) : batch.obs_in[t + 1];
    Matrix m = im_mult_.forward(a_in, r.latents.back(), tape ? &tape->im_mult[t] : nullptr);
    Matrix afeat = im_body_.forward(m, tape ? &tape->im_body[t] : nullptr);
    GaussianBatch act_pred = im_head_.forward(afeat, tape ? &tape->im_head[t] : nullptr);

    auto lo = numcore::beta_nll(obs_pred.mean, obs_pred.var, batch.obs_true[t + 1], weights.beta);
    auto la = numcore::beta_nll(act_pred.mean, act_pred.var, batch.act[t + 1], weights.beta);
    r.obs_loss += lo.loss * inv_b;
    r.act_loss += la.loss * inv_b;
    r.obs_sq_err += (obs_pred.mean - batch.obs_true[t + 1]).squaredNorm();
    r.act_sq_err += (act_pred.mean - batch.act[t + 1]).squaredNorm();
    r.obs_nll += numcore::gaussian_nll(obs_pred.mean, obs_pred.var, batch.obs_true[t + 1]);
    r.act_nll += numcore::gaussian_nll(act_pred.mean, act_pred.var, batch.act[t + 1]);
    r.pred_steps += static_cast<double>(B);
    if (tape) {
      tape->d_obs_mean[t] = lo.d_mean * inv_b;
      tape->d_obs_var[t] = lo.d_var * inv_b;
      tape->d_act_mean[t] = la.d_mean * inv_b;
      tape->d_act_var[t] = la.d_var * inv_b;
    }
    r.obs_pred.push_back(std::move(obs_pred));
    r.act_pred.push_back(std::move(act_pred));
  }
  if (!std::isfinite(r.total_loss())) throw NumericError("rollout: non-finite loss");
  return r;
}

void SensorimotorModel::backward(const Batch& batch, const LossWeights& weights, Tape& tape) {
  const int T = batch.steps();
  const Index B = batch.size();
  const double reg_weight = cell_->type() == cell::CellType::gatel0rd ? weights.lambda * kGatePenaltyUnit / static_cast<double>(B) : 0.0;
  Matrix dh = Matrix::Zero(config_.latent_width, B);
  for (int t = T - 1; t >= 0; --t) {
    Matrix dy = Matrix::Zero(config_.cell_output_width, B);
    if (t + 1 < T) {
      const Matrix dfeat = fm_head_.backward(tape.d_obs_mean[t], tape.d_obs_var[t], tape.fm_head[t]);
      dy = fm_body_.backward(dfeat, tape.fm_body[t]);
      const Matrix dafeat = im_head_.backward(tape.d_act_mean[t], tape.d_act_var[t], tape.im_head[t]);
      const Matrix dm = im_body_.backward(dafeat, tape.im_body[t]);
      dh += im_mult_.backward(dm, tape.im_mult[t]).second;
    }
    cell::StepGrad g = cell_->backward(dh, dy, *tape.cell[t], reg_weight);
    dh = std::move(g.dh_prev);
  }
  init_net_.backward(dh, tape.init);
}

ModelRollout SensorimotorModel::rollout(const Batch& batch, const LossWeights& weights) const {
  return forward(batch, weights, nullptr, nullptr);
}

ModelRollout SensorimotorModel::accumulate_gradients(const Batch& batch, const LossWeights& weights,
                                                     Rng* gate_noise_rng) {
  numcore::zero_grads(parameters());
  Tape tape;
  ModelRollout r = forward(batch, weights, gate_noise_rng, &tape);
  backward(batch, weights, tape);
  return r;
}

json SensorimotorModel::metadata() const { return json{{"kind", "sensorimotor_model"}, {"config", config_}}; }

void save_model(const std::filesystem::path& path, SensorimotorModel& model, const numcore::Adam* optimizer) {
  numcore::write_checkpoint(path, numcore::make_checkpoint(model.metadata().dump(), model.parameters(), optimizer));
}

SensorimotorModel load_model(const std::filesystem::path& path) {
  const auto ckpt = numcore::read_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.metadata);
    if (meta.at("kind").get<std::string>() != "sensorimotor_model") throw InputError("not a sensorimotor model");
  } catch (const json::exception& e) {
    throw InputError("checkpoint metadata: " + std::string(e.what()));
  }
  SensorimotorModel model(meta.at("config").get<ModelConfig>());
  numcore::load_parameters(ckpt, model.parameters());
  return model;
}

}  // namespace evhier::model
