#include "evhier/gaze/gaze.hpp"

#include "evhier/skip/boundaries.hpp"
#include "evhier/util/csv.hpp"

#include <cmath>
#include <string>

namespace evhier::gaze {

namespace {

constexpr std::array<env::Entity, 3> kEntities = {env::Entity::hand, env::Entity::object, env::Entity::goal};

}  // namespace

std::string_view to_string(UncertaintyMode m) {
  switch (m) {
    case UncertaintyMode::intra_only: return "intra";
    case UncertaintyMode::inter_only: return "inter";
    case UncertaintyMode::combined: return "combined";
  }
  return "combined";
}

UncertaintyMode uncertainty_mode_from_string(std::string_view s) {
  if (s == "intra") return UncertaintyMode::intra_only;
  if (s == "inter") return UncertaintyMode::inter_only;
  if (s == "combined") return UncertaintyMode::combined;
  throw ConfigError("unknown uncertainty mode '" + std::string(s) + "'");
}

void UncertaintyConfig::validate() const {
  if (relevant_dims.empty()) throw ConfigError("uncertainty: relevant dims must not be empty");
  for (Index d : relevant_dims) {
    if (d < 0 || d >= env::kObsDim) throw ConfigError("uncertainty: dim " + std::to_string(d) + " out of range");
  }
  if (!(mask_sigma >= 0.0)) throw ConfigError("uncertainty: mask sigma must be non-negative");
}

double uncertainty(const Eigen::Ref<const Vector>& var, std::span<const Index> dims) {
  double u = 0.0;
  for (Index d : dims) {
    if (d < 0 || d >= var.size()) throw InputError("uncertainty: index " + std::to_string(d) + " out of range");
    u += var[d];
  }
  return u;
}

std::size_t argmin_first(std::span<const double> values) {
  if (values.empty()) throw InputError("argmin: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

AttentionStep select_attention(const model::SensorimotorModel& fim, const skip::SkipNetwork* skip_net,
                               const Vector& obs, const Vector* action, const Vector* h_prev,
                               const UncertaintyConfig& config, Rng& mask_rng) {
  config.validate();
  if (!fim.config().gaze_mode) throw ConfigError("gaze: the forward-inverse model must be trained in gaze mode");
  const bool need_skip = config.mode != UncertaintyMode::intra_only;
  if (need_skip && !skip_net) throw ConfigError("gaze: inter-event uncertainty needs a skip network");
  if (need_skip && !skip_net->config().gaze_mode) throw ConfigError("gaze: the skip network must be trained in gaze mode");
  if (!action && !h_prev) throw ConfigError("gaze: the first step needs an action");

  AttentionStep s;
  s.masked_obs.resize(env::kObsDim, 3);
  Matrix focus = Matrix::Zero(env::kFocusDim, 3);
  const Rng start = mask_rng;
  for (std::size_t c = 0; c < 3; ++c) {
    Rng paired = start;
    s.masked_obs.col(static_cast<Index>(c)) = env::apply_attention_mask(obs, kEntities[c], paired, config.mask_sigma);
    focus(static_cast<Index>(c), static_cast<Index>(c)) = 1.0;
    if (c == 2) mask_rng = paired;
  }

  Matrix h_before;
  if (h_prev) h_before = h_prev->replicate(1, 3);
  if (action) {
    s.actions = action->replicate(1, 3);
  } else {
    s.actions = fim.predict_action(s.masked_obs, &focus, h_before).mean;
  }
  const Matrix x = fim.cell_input(s.masked_obs, s.actions, &focus);
  if (!h_prev) h_before = fim.init_latent(x);
  const cell::StepOutput out = fim.step(x, h_before);
  s.latents = out.h;
  s.gates = out.gate;

  const auto dims = std::span<const Index>(config.relevant_dims);
  const numcore::GaussianBatch intra = fim.predict_observation(out.y, s.masked_obs);
  numcore::GaussianBatch inter;
  if (need_skip) inter = skip_net->forward(skip_net->input(s.masked_obs, s.latents, &focus));
  std::array<double, 3> scores{};
  for (std::size_t c = 0; c < 3; ++c) {
    auto& e = s.candidates[c];
    const Index col = static_cast<Index>(c);
    e.intra = uncertainty(intra.var.col(col), dims);
    e.inter = need_skip ? uncertainty(inter.var.col(col), dims) : 0.0;
    switch (config.mode) {
      case UncertaintyMode::intra_only: e.score = e.intra; break;
      case UncertaintyMode::inter_only: e.score = e.inter; break;
      case UncertaintyMode::combined: e.score = e.intra + e.inter; break;
    }
    scores[c] = e.score;
  }
  s.focus = kEntities[argmin_first(scores)];
  return s;
}

GazeTrace run_gaze_episode(const env::Episode& episode, const model::SensorimotorModel& fim,
                           const skip::SkipNetwork* skip_net, const UncertaintyConfig& config,
                           std::uint64_t noise_seed) {
  const int T = episode.length();
  if (T < 2) throw InputError("gaze: episode too short");
  Rng rng(derive_seed(noise_seed, "gaze.mask", episode.id));
  GazeTrace trace;
  trace.first_attend.fill(T);
  const int sw = env::first_phase_switch(episode.phase_labels);
  trace.t_eb = sw < 0 ? T : sw + 1;

  Matrix gates(fim.config().latent_width, T);
  Vector h;
  for (int t = 1; t <= T; ++t) {
    const Vector obs = episode.observations.col(t - 1);
    const Vector a1 = episode.actions.col(0);
    const AttentionStep s =
        select_attention(fim, skip_net, obs, t == 1 ? &a1 : nullptr, t == 1 ? nullptr : &h, config, rng);
    const auto c = static_cast<Index>(s.focus);
    h = s.latents.col(c);
    gates.col(t - 1) = s.gates.col(c);
    trace.focus.push_back(s.focus);
    int& first = trace.first_attend[static_cast<std::size_t>(s.focus)];
    if (first == T) first = t;
  }
  trace.model_boundary = skip::extract_boundaries(gates).front();
  return trace;
}

std::vector<GazeTrace> run_gaze(std::span<const env::Episode> episodes, const model::SensorimotorModel& fim,
                                const skip::SkipNetwork* skip_net, const UncertaintyConfig& config,
                                std::uint64_t noise_seed) {
  std::vector<GazeTrace> out;
  out.reserve(episodes.size());
  for (const auto& ep : episodes) out.push_back(run_gaze_episode(ep, fim, skip_net, config, noise_seed));
  return out;
}

RelativeTimes summarize(std::span<const GazeTrace> traces) {
  RelativeTimes r;
  r.count = static_cast<int>(traces.size());
  if (traces.empty()) return r;
  const double n = static_cast<double>(traces.size());
  for (std::size_t e = 0; e < 3; ++e) {
    double sum = 0.0, sq = 0.0, first = 0.0;
    for (const auto& tr : traces) {
      const double v = tr.relative(kEntities[e]);
      sum += v;
      sq += v * v;
      first += tr.first_attend[e];
    }
    const double mean = sum / n;
    const double var = traces.size() > 1 ? std::max(0.0, (sq - n * mean * mean) / (n - 1.0)) : 0.0;
    r.mean[e] = mean;
    r.stderr_[e] = std::sqrt(var / n);
    r.mean_first_attend[e] = first / n;
  }
  return r;
}

std::vector<GazeCurveRow> curve_rows(int checkpoint, std::span<const GazeTrace> traces) {
  const RelativeTimes r = summarize(traces);
  std::vector<GazeCurveRow> rows;
  for (std::size_t e = 0; e < 3; ++e) rows.push_back({checkpoint, kEntities[e], r.mean[e], r.stderr_[e]});
  return rows;
}

void write_gaze_curve(const std::filesystem::path& path, std::span<const GazeCurveRow> rows) {
  util::CsvWriter w(path, {"checkpoint", "entity", "mean_rel_attend_time", "stderr"});
  for (const auto& r : rows) w.row(r.checkpoint, std::string(env::to_string(r.entity)), r.mean_rel_attend_time, r.stderr_);
}

std::vector<GazeCurveRow> read_gaze_curve(const std::filesystem::path& path) {
  const util::CsvTable t = util::read_csv(path);
  std::vector<GazeCurveRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    GazeCurveRow r;
    r.checkpoint = static_cast<int>(t.number(i, "checkpoint"));
    const std::string& name = t.cell(i, "entity");
    bool found = false;
    for (env::Entity e : kEntities) {
      if (env::to_string(e) == name) {
        r.entity = e;
        found = true;
      }
    }
    if (!found) throw InputError("gaze curve: unknown entity '" + name + "'");
    r.mean_rel_attend_time = t.number(i, "mean_rel_attend_time");
    r.stderr_ = t.number(i, "stderr");
    out.push_back(r);
  }
  return out;
}

}  // namespace evhier::gaze
