#include "doctest.h"

#include "evhier/gaze/gaze.hpp"

#include <filesystem>

using namespace evhier;
using namespace evhier::gaze;
using env::Entity;

namespace {

model::ModelConfig tiny_model() {
  auto c = model::ModelConfig::for_cell(cell::CellType::gatel0rd, true);
  c.latent_width = 6;
  c.feature_widths = {8, 6};
  c.cell_hidden_widths = {8};
  c.cell_output_width = 5;
  c.multiplicative_width = 5;
  return c;
}

skip::SkipConfig tiny_skip() {
  skip::SkipConfig c;
  c.latent_width = 6;
  c.gaze_mode = true;
  c.widths = {10, 8};
  return c;
}

struct Models {
  model::SensorimotorModel fim{tiny_model()};
  skip::SkipNetwork skip{tiny_skip()};
  explicit Models(std::uint64_t seed) {
    Rng rng(seed);
    fim.initialize(rng);
    skip.initialize(rng);
  }
};

std::vector<env::Episode> reach_episodes(int n, std::uint64_t seed) {
  env::DatasetSpec spec;
  spec.n = n;
  spec.mix = {1.0, 0.0, 0.0};
  spec.gaze_mode = true;
  spec.seed = seed;
  return env::generate_dataset(spec);
}

GazeTrace trace_with(std::array<int, 3> first, int t_eb) {
  GazeTrace t;
  t.first_attend = first;
  t.t_eb = t_eb;
  return t;
}

}  // namespace

TEST_CASE("uncertainty sums selected variances") {
  Vector var = Vector::Zero(11);
  var.head(3) << 0.1, 0.2, 0.3;
  const std::vector<Index> two{0, 1}, one{2};
  CHECK(uncertainty(var, two) == doctest::Approx(0.3));
  CHECK(uncertainty(var, one) == 0.3);
  CHECK(uncertainty(Vector::Zero(11), two) == 0.0);
  const std::vector<Index> bad{11};
  CHECK_THROWS_AS(uncertainty(var, bad), InputError);
}

TEST_CASE("argmin_first") {
  CHECK(argmin_first(std::vector<double>{0.1, 0.5, 0.5}) == 0);
  CHECK(argmin_first(std::vector<double>{0.5, 0.5, 0.5}) == 0);
  CHECK(argmin_first(std::vector<double>{0.5, 0.2, 0.2}) == 1);
  CHECK(argmin_first(std::vector<double>{0.5, 0.4, 0.2}) == 2);
  CHECK_THROWS_AS(argmin_first(std::vector<double>{}), InputError);

  // Invariant under a common positive rescaling.
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> v{u(rng), u(rng), u(rng)};
    if (i % 7 == 0) v[2] = v[0];
    const double s = 1e-3 + 100.0 * u(rng);
    std::vector<double> w{v[0] * s, v[1] * s, v[2] * s};
    CHECK(argmin_first(v) == argmin_first(w));
  }
}

TEST_CASE("uncertainty config") {
  UncertaintyConfig c;
  CHECK_NOTHROW(c.validate());
  c.relevant_dims = {};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.relevant_dims = {3, 11};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(uncertainty_mode_from_string("inter") == UncertaintyMode::inter_only);
  CHECK(to_string(UncertaintyMode::intra_only) == "intra");
  CHECK_THROWS_AS(uncertainty_mode_from_string("both"), ConfigError);
}

TEST_CASE("select_attention") {
  Models m(4);
  const auto eps = reach_episodes(2, 5);
  const Vector obs = eps[0].observations.col(3);
  const Vector h = Vector::Random(6);
  UncertaintyConfig cfg;

  SUBCASE("paired masking") {
    Rng rng(9);
    const AttentionStep s = select_attention(m.fim, &m.skip, obs, nullptr, &h, cfg, rng);
    const Matrix& mo = s.masked_obs;
    // The attended entity is clean, the others share one noise draw.
    CHECK(mo.col(0).segment<3>(0) == obs.segment<3>(0));
    CHECK(mo.col(0).segment<2>(9) == obs.segment<2>(9));
    CHECK(mo.col(1).segment<3>(3) == obs.segment<3>(3));
    CHECK(mo.col(2).segment<3>(6) == obs.segment<3>(6));
    CHECK(mo.col(1).segment<3>(0) == mo.col(2).segment<3>(0));
    CHECK(mo.col(0).segment<3>(3) == mo.col(2).segment<3>(3));
    CHECK(mo.col(0).segment<3>(6) == mo.col(1).segment<3>(6));
    CHECK(mo.col(1).segment<3>(0) != obs.segment<3>(0));
  }

  SUBCASE("deterministic and consistent with the scores") {
    for (auto mode : {UncertaintyMode::intra_only, UncertaintyMode::inter_only, UncertaintyMode::combined}) {
      cfg.mode = mode;
      Rng a(11), b(11);
      const AttentionStep s = select_attention(m.fim, &m.skip, obs, nullptr, &h, cfg, a);
      const AttentionStep t = select_attention(m.fim, &m.skip, obs, nullptr, &h, cfg, b);
      CHECK(s.focus == t.focus);
      CHECK(s.latents == t.latents);
      std::vector<double> scores;
      for (const auto& c : s.candidates) {
        CHECK(c.intra > 0.0);
        if (mode == UncertaintyMode::intra_only) CHECK(c.score == c.intra);
        if (mode == UncertaintyMode::inter_only) CHECK(c.score == c.inter);
        if (mode == UncertaintyMode::combined) CHECK(c.score == doctest::Approx(c.intra + c.inter));
        scores.push_back(c.score);
      }
      CHECK(static_cast<std::size_t>(s.focus) == argmin_first(scores));
      CHECK(a() == b());
    }
  }

  SUBCASE("candidate actions come from the inverse model") {
    Rng rng(2);
    const AttentionStep s = select_attention(m.fim, &m.skip, obs, nullptr, &h, cfg, rng);
    for (Index c = 0; c < 3; ++c) {
      const Matrix focus = env::one_hot(static_cast<Entity>(c));
      const Matrix expected = m.fim.predict_action(s.masked_obs.col(c), &focus, h).mean;
      CHECK(s.actions.col(c).isApprox(expected.col(0), 1e-14));
    }
    const Vector a1 = Vector::Constant(4, 0.2);
    Rng rng2(2);
    const AttentionStep first = select_attention(m.fim, &m.skip, obs, &a1, nullptr, cfg, rng2);
    CHECK(first.actions.col(2) == a1);
  }

  SUBCASE("errors") {
    Rng rng(1);
    CHECK_THROWS_AS(select_attention(m.fim, nullptr, obs, nullptr, &h, cfg, rng), ConfigError);
    cfg.mode = UncertaintyMode::intra_only;
    CHECK_NOTHROW(select_attention(m.fim, nullptr, obs, nullptr, &h, cfg, rng));
    CHECK_THROWS_AS(select_attention(m.fim, nullptr, obs, nullptr, nullptr, cfg, rng), ConfigError);
    model::SensorimotorModel plain(model::ModelConfig::for_cell(cell::CellType::gatel0rd));
    CHECK_THROWS_AS(select_attention(plain, nullptr, obs, nullptr, &h, cfg, rng), ConfigError);
  }
}

TEST_CASE("run_gaze_episode") {
  Models m(6);
  const auto eps = reach_episodes(20, 8);
  UncertaintyConfig cfg;
  const auto traces = run_gaze(eps, m.fim, &m.skip, cfg, 3);
  const auto again = run_gaze(eps, m.fim, &m.skip, cfg, 3);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto& tr = traces[i];
    REQUIRE(tr.focus.size() == 25);
    CHECK(tr.t_eb == env::first_phase_switch(eps[i].phase_labels) + 1);
    CHECK(tr.model_boundary >= 1);
    CHECK(tr.model_boundary <= 25);
    for (std::size_t e = 0; e < 3; ++e) {
      const int t = tr.first_attend[e];
      CHECK(t >= 1);
      CHECK(t <= 25);
      const auto it = std::find(tr.focus.begin(), tr.focus.end(), static_cast<Entity>(e));
      CHECK(t == (it == tr.focus.end() ? 25 : static_cast<int>(it - tr.focus.begin()) + 1));
    }
    CHECK(tr.focus == again[i].focus);
  }
}

TEST_CASE("summaries") {
  const std::vector<GazeTrace> traces{trace_with({2, 6, 25}, 8), trace_with({1, 10, 25}, 8)};
  const RelativeTimes r = summarize(traces);
  CHECK(r.count == 2);
  CHECK(r.mean[0] == doctest::Approx(-6.5));
  CHECK(r.mean[1] == doctest::Approx(0.0));
  CHECK(r.mean[2] == doctest::Approx(17.0));
  CHECK(r.stderr_[1] == doctest::Approx(2.0));  // sd of {-2, 2} is sqrt(8), over sqrt(2)
  CHECK(r.stderr_[2] == 0.0);
  CHECK(r.mean_first_attend[0] == doctest::Approx(1.5));

  const auto rows = curve_rows(40, traces);
  const auto path = std::filesystem::temp_directory_path() / "evhier_gaze_curve.csv";
  write_gaze_curve(path, rows);
  const auto back = read_gaze_curve(path);
  REQUIRE(back.size() == 3);
  CHECK(back[1].checkpoint == 40);
  CHECK(back[1].entity == Entity::object);
  CHECK(back[0].mean_rel_attend_time == doctest::Approx(-6.5));
  CHECK(back[1].stderr_ == doctest::Approx(2.0));
  std::filesystem::remove(path);
}
