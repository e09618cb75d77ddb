#include "evhier/env/scripted_env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace evhier::env {

std::string_view to_string(EpisodeType t) {
  switch (t) {
    case EpisodeType::reach_grasp_transport: return "reach_grasp_transport";
    case EpisodeType::pointing: return "pointing";
    case EpisodeType::stretching: return "stretching";
  }
  return "reach_grasp_transport";
}

EpisodeType episode_type_from_string(std::string_view s) {
  if (s == "reach_grasp_transport" || s == "reach") return EpisodeType::reach_grasp_transport;
  if (s == "pointing") return EpisodeType::pointing;
  if (s == "stretching") return EpisodeType::stretching;
  throw InputError("unknown episode type '" + std::string(s) + "'");
}

std::string_view to_string(Entity e) {
  switch (e) {
    case Entity::hand: return "hand";
    case Entity::object: return "object";
    case Entity::goal: return "goal";
  }
  return "hand";
}

std::vector<Index> entity_dims(Entity e) {
  switch (e) {
    case Entity::hand: return {0, 1, 2, 9, 10};
    case Entity::object: return {3, 4, 5};
    case Entity::goal: return {6, 7, 8};
  }
  return {};
}

Vec3 controller_command(const Vec3& hand, const Vec3& target, const EnvParams& params) {
  const Vec3 diff = target - hand;
  const double d = diff.norm();
  if (d == 0.0) return Vec3::Zero();
  const double cap = params.max_speed * std::min(1.0, d / params.decel_radius);
  Vec3 v = params.gain * diff;
  const double speed = v.norm();
  if (speed > cap) v *= cap / speed;
  return v;
}

namespace {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

struct Workspace {
  Vec3 lo, hi;
};

Workspace workspace_for(double table_height, const EnvParams& p) {
  return {Vec3(-p.half_extent_xy, -p.half_extent_xy, table_height),
          Vec3(p.half_extent_xy, p.half_extent_xy, table_height + p.height_z)};
}

Vec3 clamp_to(const Vec3& v, const Workspace& ws) { return v.cwiseMax(ws.lo).cwiseMin(ws.hi); }

}  // namespace

SceneConfig sample_scene(EpisodeType type, std::uint64_t seed, const EnvParams& p) {
  Rng rng(derive_seed(seed, "scene"));
  SceneConfig s;
  s.episode_type = type;
  s.seed = seed;
  s.table_height = uniform(rng, p.table_min, p.table_max);
  const double place = p.half_extent_xy - 0.05;
  const double surface = s.table_height + p.object_half_width;
  s.object_start = Vec3(uniform(rng, -place, place), uniform(rng, -place, place), surface);
  do {
    s.goal_pos = Vec3(uniform(rng, -place, place), uniform(rng, -place, place), surface + uniform(rng, 0.0, 0.25));
  } while ((s.goal_pos - s.object_start).norm() < p.min_separation);
  do {
    s.hand_start = Vec3(uniform(rng, -p.half_extent_xy, p.half_extent_xy),
                        uniform(rng, -p.half_extent_xy, p.half_extent_xy),
                        s.table_height + uniform(rng, 0.1, p.height_z));
  } while ((s.hand_start - s.object_start).norm() < p.min_separation ||
           (s.hand_start - s.goal_pos).norm() < p.min_separation);
  if (type == EpisodeType::stretching) {
    std::array<double, 4> c{};
    for (int i = 0; i < 3; ++i) c[i] = uniform(rng, -p.stretch_command_max, p.stretch_command_max);
    c[3] = uniform(rng, -1.0, 1.0);
    s.stretch_command = c;
  }
  return s;
}

Episode generate_episode(const SceneConfig& scene, const EnvParams& p) {
  const int T = kEpisodeLength;
  Rng noise_rng(derive_seed(scene.seed, "motor_noise"));
  std::normal_distribution<double> noise(0.0, 1.0);
  const Workspace ws = workspace_for(scene.table_height, p);

  Episode ep;
  ep.scene = scene;
  ep.observations.resize(kObsDim, T);
  ep.actions.resize(kActDim, T);
  ep.phase_labels.assign(T, 0);

  Vec3 hand = clamp_to(scene.hand_start, ws);
  Vec3 object = scene.object_start;
  const Vec3 goal = scene.goal_pos;
  double finger = p.finger_open;
  Vec3 grasp_offset = Vec3::Zero();
  int ph = 0;

  for (int t = 0; t < T; ++t) {
    // Phase transitions are decided on the current state.
    switch (scene.episode_type) {
      case EpisodeType::reach_grasp_transport:
        if (ph == phase::reach && (hand - object).norm() <= p.reach_tolerance) ph = phase::grasp;
        if (ph == phase::grasp && finger <= p.object_half_width) {
          ph = phase::transport;
          grasp_offset = object - hand;
        }
        if (ph == phase::transport && (object - goal).norm() <= p.reach_tolerance) ph = phase::hold;
        break;
      case EpisodeType::pointing:
        if (ph == phase::reach && (hand - goal).norm() <= p.reach_tolerance) ph = phase::point_hold;
        break;
      case EpisodeType::stretching:
        break;
    }
    ep.phase_labels[t] = ph;
    ep.observations.col(t) << hand, object, goal, finger, finger;

    Vec3 move;
    double grip = 1.0;
    switch (scene.episode_type) {
      case EpisodeType::reach_grasp_transport:
        if (ph == phase::reach || ph == phase::grasp) {
          move = controller_command(hand, object, p);
          grip = ph == phase::reach ? 1.0 : -1.0;
        } else {
          move = controller_command(hand, goal - grasp_offset, p);
          grip = -1.0;
        }
        break;
      case EpisodeType::pointing:
        move = controller_command(hand, goal, p);
        break;
      case EpisodeType::stretching: {
        const auto& c = *scene.stretch_command;
        move = Vec3(c[0], c[1], c[2]);
        grip = c[3];
        break;
      }
    }
    Eigen::Vector4d action;
    action << move, grip;
    for (int i = 0; i < 4; ++i) action[i] = std::clamp(action[i] + p.motor_noise * noise(noise_rng), -1.0, 1.0);
    ep.actions.col(t) = action;

    // Kinematics.
    const Vec3 new_hand = clamp_to(hand + p.step_scale * action.head<3>(), ws);
    const bool holding = scene.episode_type == EpisodeType::reach_grasp_transport && ph >= phase::transport;
    const bool enclosing = scene.episode_type == EpisodeType::reach_grasp_transport && ph >= phase::grasp;
    const double finger_min = enclosing ? p.object_half_width : 0.0;
    finger = std::clamp(finger + p.finger_rate * action[3], finger_min, p.finger_open);
    hand = new_hand;
    if (holding) object = clamp_to(hand + grasp_offset, ws);
  }

  switch (scene.episode_type) {
    case EpisodeType::reach_grasp_transport: ep.completed = ep.phase_labels.back() == phase::hold; break;
    case EpisodeType::pointing:
      ep.completed = ep.phase_labels.back() == phase::point_hold &&
                     (ep.observations.col(T - 1).segment<3>(kHandOffset) - goal).norm() <= p.reach_tolerance;
      break;
    case EpisodeType::stretching: ep.completed = true; break;
  }
  return ep;
}

Entity focus_entity(const Eigen::Ref<const Vector>& one_hot_vec) {
  Index idx = 0;
  one_hot_vec.maxCoeff(&idx);
  return static_cast<Entity>(idx);
}

Vector one_hot(Entity e) {
  Vector v = Vector::Zero(kFocusDim);
  v[static_cast<Index>(e)] = 1.0;
  return v;
}

Vector apply_attention_mask(const Vector& obs, Entity focus, Rng& rng, double sigma) {
  if (obs.size() != kObsDim) throw ConfigError("attention mask: observation must have 11 dims");
  std::normal_distribution<double> noise(0.0, sigma);
  Vector out = obs;
  for (Entity e : {Entity::hand, Entity::object, Entity::goal}) {
    for (Index d : entity_dims(e)) {
      // Draw for every dim so the stream is independent of the focus.
      const double n = noise(rng);
      if (e != focus) out[d] += n;
    }
  }
  return out;
}

Vector apply_attention_mask(const Vector& obs, Entity focus, std::uint64_t seed, double sigma) {
  Rng rng(seed);
  return apply_attention_mask(obs, focus, rng, sigma);
}

Matrix apply_attention_mask(const Matrix& obs, const Matrix& focus, Rng& rng, double sigma) {
  Matrix out(obs.rows(), obs.cols());
  for (Index j = 0; j < obs.cols(); ++j) {
    out.col(j) = apply_attention_mask(Vector(obs.col(j)), focus_entity(focus.col(j)), rng, sigma);
  }
  return out;
}

Matrix random_attention(int length, int shifts, Rng& rng) {
  Matrix att = Matrix::Zero(kFocusDim, length);
  std::uniform_int_distribution<int> pick(0, 2);
  std::uniform_int_distribution<int> other(1, 2);
  std::vector<int> steps(std::max(0, length - 1));
  std::iota(steps.begin(), steps.end(), 1);
  std::shuffle(steps.begin(), steps.end(), rng);
  const int n_shifts = std::min<int>(shifts, static_cast<int>(steps.size()));
  std::vector<int> shift_at(steps.begin(), steps.begin() + n_shifts);
  std::sort(shift_at.begin(), shift_at.end());
  int focus = pick(rng);
  std::size_t next = 0;
  for (int t = 0; t < length; ++t) {
    if (next < shift_at.size() && shift_at[next] == t) {
      focus = (focus + other(rng)) % 3;
      ++next;
    }
    att(focus, t) = 1.0;
  }
  return att;
}

void DatasetSpec::validate() const {
  if (n < 1) throw ConfigError("dataset: n must be at least 1");
  double sum = 0.0;
  for (double m : mix) {
    if (m < 0.0) throw ConfigError("dataset: mix proportions must be non-negative");
    sum += m;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ConfigError("dataset: mix proportions must sum to 1");
  if (attention_shifts < 0) throw ConfigError("dataset: attention shifts must be non-negative");
}

std::vector<Episode> generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  // Largest-remainder rounding of the type counts.
  std::array<int, 3> counts{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = spec.mix[k] * spec.n;
    counts[k] = static_cast<int>(std::floor(exact));
    rem[k] = exact - counts[k];
    assigned += counts[k];
  }
  while (assigned < spec.n) {
    const int k = static_cast<int>(std::max_element(rem.begin(), rem.end()) - rem.begin());
    ++counts[k];
    rem[k] = -1.0;
    ++assigned;
  }
  std::vector<EpisodeType> types;
  for (int k = 0; k < 3; ++k) types.insert(types.end(), counts[k], static_cast<EpisodeType>(k));
  Rng order_rng(derive_seed(spec.seed, "type_order"));
  std::shuffle(types.begin(), types.end(), order_rng);

  std::vector<Episode> out;
  out.reserve(types.size());
  for (int i = 0; i < spec.n; ++i) {
    const std::uint64_t base = derive_seed(spec.seed, "episode", static_cast<std::uint64_t>(i));
    Episode ep;
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt > 1000) throw NumericError("dataset: could not generate a completing episode");
      ep = generate_episode(sample_scene(types[i], derive_seed(base, "attempt", attempt), spec.env), spec.env);
      if (ep.completed) break;
    }
    ep.id = static_cast<std::uint64_t>(i);
    if (spec.gaze_mode) {
      Rng att_rng(derive_seed(base, "attention"));
      ep.attention = random_attention(kEpisodeLength, spec.attention_shifts, att_rng);
    }
    out.push_back(std::move(ep));
  }
  return out;
}

int first_phase_switch(const std::vector<int>& labels) {
  for (std::size_t t = 1; t < labels.size(); ++t) {
    if (labels[t] != labels[0]) return static_cast<int>(t);
  }
  return -1;
}

std::vector<int> phase_switches(const std::vector<int>& labels) {
  std::vector<int> out;
  for (std::size_t t = 1; t < labels.size(); ++t) {
    if (labels[t] != labels[t - 1]) out.push_back(static_cast<int>(t));
  }
  return out;
}

}  // namespace evhier::env
