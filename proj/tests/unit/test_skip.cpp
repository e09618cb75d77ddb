#include "doctest.h"

#include "evhier/skip/boundaries.hpp"
#include "evhier/skip/skip_network.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace evhier;
using namespace evhier::skip;

namespace {

Matrix gates_with(Index latent, int steps, std::initializer_list<std::pair<int, Index>> open) {
  Matrix g = Matrix::Zero(latent, steps);
  for (auto [t, i] : open) g(i, t - 1) = 0.3;
  return g;
}

std::vector<env::Episode> episodes(int n, bool gaze, std::uint64_t seed) {
  env::DatasetSpec spec;
  spec.n = n;
  spec.gaze_mode = gaze;
  spec.seed = seed;
  return env::generate_dataset(spec);
}

model::ModelConfig tiny_model(bool gaze) {
  auto c = model::ModelConfig::for_cell(cell::CellType::gatel0rd, gaze);
  c.latent_width = 6;
  c.feature_widths = {8, 6};
  c.cell_hidden_widths = {8};
  c.cell_output_width = 5;
  c.multiplicative_width = 5;
  return c;
}

}  // namespace

TEST_CASE("extract_boundaries") {
  CHECK(extract_boundaries(Matrix::Zero(16, 25)) == std::vector<int>{25});
  CHECK(extract_boundaries(gates_with(4, 10, {{3, 0}, {7, 2}})) == std::vector<int>{3, 7, 10});
  // Several open dims at one step make one boundary.
  CHECK(extract_boundaries(gates_with(4, 10, {{3, 0}, {3, 1}})) == std::vector<int>{3, 10});
  // An opening at T adds nothing new.
  CHECK(extract_boundaries(gates_with(4, 10, {{10, 0}})) == std::vector<int>{10});

  Matrix g = Matrix::Zero(4, 10);
  g(1, 4) = 0.0;
  g(2, 5) = -0.0;
  CHECK(extract_boundaries(g) == std::vector<int>{10});
  g(2, 5) = std::numeric_limits<double>::denorm_min();
  CHECK(extract_boundaries(g) == std::vector<int>{6, 10});

  CHECK_THROWS_AS(extract_boundaries(Matrix(4, 0)), InputError);
}

TEST_CASE("boundary sets contain T and grow with openings") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix g = testing::random_gates(5, 25, 0.05, rng);
    const auto b = extract_boundaries(g);
    CHECK(b.back() == 25);
    CHECK(b.front() > 0);
    CHECK(std::is_sorted(b.begin(), b.end()));
    g(static_cast<Index>(trial % 5), trial % 25) = 0.5;
    const auto more = extract_boundaries(g);
    CHECK(std::includes(more.begin(), more.end(), b.begin(), b.end()));
  }
}

TEST_CASE("next_boundary") {
  const std::vector<int> b{3, 7, 10};
  CHECK(next_boundary(4, b) == 7);
  CHECK(next_boundary(3, b) == 7);
  CHECK(next_boundary(0, b) == 3);
  CHECK(next_boundary(9, b) == 10);
  CHECK(next_boundary(1, std::vector<int>{25}) == 25);
  CHECK_THROWS_AS(next_boundary(10, b), InputError);
  CHECK_THROWS_AS(next_boundary(-1, b), InputError);
  CHECK_THROWS_AS(next_boundary(1, std::vector<int>{}), InputError);

  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto bs = extract_boundaries(testing::random_gates(3, 25, 0.1, rng));
    for (int t = 0; t < 25; ++t) CHECK(next_boundary(t, bs) > t);
  }
}

TEST_CASE("skip targets match the brute-force scan") {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const double p = std::array{0.0, 0.01, 0.05, 0.2, 0.6}[trial % 5];
    const Matrix g = testing::random_gates(16, 25, p, rng);
    const auto b = extract_boundaries(g);
    REQUIRE(b == testing::naive_boundaries(g));
    REQUIRE(skip_targets(b) == testing::naive_skip_targets(g));
  }
  CHECK(interior_boundary_count(std::vector<int>{3, 7, 10}) == 2);
  CHECK(interior_boundary_count(std::vector<int>{25}) == 0);
}

TEST_CASE("build_skip_dataset") {
  const auto eps = episodes(6, false, 3);
  std::vector<EpisodeTrace> traces(eps.size());
  for (std::size_t e = 0; e < eps.size(); ++e) {
    traces[e].obs_in = eps[e].observations;
    traces[e].latents = Matrix::Random(4, 25);
    traces[e].gates = e == 0 ? Matrix::Zero(4, 25) : gates_with(4, 25, {{5, 1}, {12, 3}});
    traces[e].boundaries = extract_boundaries(traces[e].gates);
  }
  const SkipDataset d = build_skip_dataset(eps, traces, false);
  REQUIRE(d.size() == 6 * 24);
  CHECK_FALSE(d.has_focus());
  for (std::size_t k = 0; k < d.size(); ++k) {
    const std::size_t e = k / 24;
    const int t = d.step[k];
    CHECK(t == static_cast<int>(k % 24) + 1);
    CHECK(d.episode[k] == eps[e].id);
    CHECK(d.target_step[k] > t);
    if (e == 0) CHECK(d.target_step[k] == 25);
    if (e > 0) CHECK(d.target_step[k] == (t < 5 ? 5 : t < 12 ? 12 : 25));
    CHECK(d.target.col(static_cast<Index>(k)) == eps[e].observations.col(d.target_step[k] - 1));
    CHECK(d.latent.col(static_cast<Index>(k)) == traces[e].latents.col(t - 1));
  }

  auto broken = traces;
  broken[2].latents = Matrix::Zero(4, 20);
  CHECK_THROWS_AS(build_skip_dataset(eps, broken, false), InputError);
  CHECK_THROWS_AS(build_skip_dataset(eps, std::span(traces).first(3), false), InputError);
}

TEST_CASE("reach targets cluster at the object before contact") {
  // With a boundary at the first grasp step, every reach-phase target is
  // the hand at the object.
  env::DatasetSpec spec;
  spec.n = 50;
  spec.mix = {1.0, 0.0, 0.0};
  spec.seed = 9;
  const auto eps = env::generate_dataset(spec);
  std::vector<EpisodeTrace> traces(eps.size());
  for (std::size_t e = 0; e < eps.size(); ++e) {
    const int contact = env::first_phase_switch(eps[e].phase_labels) + 1;
    traces[e].obs_in = eps[e].observations;
    traces[e].latents = Matrix::Zero(2, 25);
    traces[e].gates = gates_with(2, 25, {{contact, 0}});
    traces[e].boundaries = extract_boundaries(traces[e].gates);
  }
  const SkipDataset d = build_skip_dataset(eps, traces, false);
  for (std::size_t k = 0; k < d.size(); ++k) {
    const auto& ep = eps[k / 24];
    if (ep.phase_labels[static_cast<std::size_t>(d.step[k])] != env::phase::reach) continue;
    const Index c = static_cast<Index>(k);
    const double to_object = (d.target.block<3, 1>(env::kHandOffset, c) - d.obs.block<3, 1>(env::kObjectOffset, c)).norm();
    CHECK(to_object < 0.03);
  }
}

TEST_CASE("trace_episodes runs the frozen model") {
  for (bool gaze : {false, true}) {
    CAPTURE(gaze);
    const auto eps = episodes(9, gaze, 4);
    model::SensorimotorModel m(tiny_model(gaze));
    Rng rng(1);
    m.initialize(rng);
    const auto traces = trace_episodes(m, eps, 77);
    REQUIRE(traces.size() == eps.size());
    for (std::size_t e = 0; e < eps.size(); ++e) {
      CHECK(traces[e].latents.cols() == 25);
      CHECK(traces[e].boundaries == extract_boundaries(traces[e].gates));
      if (!gaze) CHECK(traces[e].obs_in == eps[e].observations);
    }
    // Chunking and order do not matter: one episode alone gives the same trace.
    const auto single = trace_episodes(m, std::span(eps).subspan(4, 1), 77);
    CHECK(single[0].latents.isApprox(traces[4].latents, 1e-12));
    CHECK(single[0].obs_in == traces[4].obs_in);

    const SkipDataset d = build_skip_dataset(eps, traces, gaze);
    CHECK(d.size() == eps.size() * 24);
    CHECK(d.has_focus() == gaze);
  }
}

TEST_CASE("skip dataset file round trip") {
  const auto eps = episodes(3, true, 8);
  std::vector<EpisodeTrace> traces(eps.size());
  for (std::size_t e = 0; e < eps.size(); ++e) {
    traces[e].obs_in = eps[e].observations;
    traces[e].latents = Matrix::Random(3, 25);
    traces[e].gates = gates_with(3, 25, {{9, 2}});
    traces[e].boundaries = extract_boundaries(traces[e].gates);
  }
  const SkipDataset d = build_skip_dataset(eps, traces, true);
  const auto path = std::filesystem::temp_directory_path() / "evhier_skip_roundtrip.jsonl";
  write_skip_dataset(path, d);
  const SkipDataset r = read_skip_dataset(path);
  CHECK(r.size() == d.size());
  CHECK(r.episode == d.episode);
  CHECK(r.step == d.step);
  CHECK(r.target_step == d.target_step);
  CHECK(r.obs == d.obs);
  CHECK(r.latent == d.latent);
  CHECK(r.focus == d.focus);
  CHECK(r.target == d.target);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_skip_dataset(path), InputError);
}

TEST_CASE("skip network") {
  SkipConfig c;
  c.latent_width = 4;
  c.widths = {9, 7, 5};
  c.detach_variance = false;
  SkipNetwork net(c);
  Rng rng(12);
  net.initialize(rng);
  const Matrix obs = Matrix::Random(11, 6);
  const Matrix h = Matrix::Random(4, 6);
  const Matrix target = Matrix::Random(11, 6) * 0.2;
  const Matrix x = net.input(obs, h, nullptr);

  SUBCASE("deterministic with positive variance") {
    const auto a = net.forward(x);
    const auto b = net.forward(x);
    CHECK(a.mean == b.mean);
    CHECK(a.var == b.var);
    CHECK((a.var.array() > 0.0).all());
  }

  SUBCASE("gradients under beta-nll") {
    const auto g0 = net.forward(x);
    const Matrix scale = g0.var.array().sqrt().matrix();
    auto loss = [&] {
      const auto g = net.forward(x);
      double total = 0.0;
      for (Index i = 0; i < g.mean.size(); ++i) {
        const double e = target.data()[i] - g.mean.data()[i];
        const double v = g.var.data()[i];
        total += scale.data()[i] * (0.5 * std::log(2 * std::numbers::pi * v) + e * e / (2 * v));
      }
      return total / 6.0;
    };
    const double l = net.accumulate_gradients(x, target, 0.5);
    CHECK(l == doctest::Approx(loss()).epsilon(1e-12));
    const auto report = testing::check_gradients(net.parameters(), loss);
    INFO(report.worst_tensor);
    CHECK(report.worst_relative_error < 1e-4);
  }

  SUBCASE("input checks") {
    const Matrix focus = Matrix::Zero(3, 6);
    CHECK_THROWS_AS(net.input(obs, h, &focus), ConfigError);
    CHECK_THROWS_AS(net.input(obs, Matrix::Random(5, 6), nullptr), ConfigError);
    c.widths.clear();
    CHECK_THROWS_AS(SkipNetwork{c}, ConfigError);
  }

  SUBCASE("checkpoint round trip") {
    const auto path = std::filesystem::temp_directory_path() / "evhier_skip_net.bin";
    save_skip(path, net);
    const SkipNetwork back = load_skip(path);
    CHECK(back.forward(x).mean == net.forward(x).mean);
    CHECK(back.config().widths == c.widths);
    std::filesystem::remove(path);
  }
}

TEST_CASE("skip training reduces held-out nll and probes") {
  const auto eps = episodes(60, false, 10);
  std::vector<EpisodeTrace> traces(eps.size());
  for (std::size_t e = 0; e < eps.size(); ++e) {
    traces[e].obs_in = eps[e].observations;
    traces[e].latents = Matrix::Zero(2, 25);
    traces[e].gates = Matrix::Zero(2, 25);
    traces[e].boundaries = extract_boundaries(traces[e].gates);
  }
  const std::span<const env::Episode> train_eps(eps.data(), 48), test_eps(eps.data() + 48, 12);
  const std::span<const EpisodeTrace> train_tr(traces.data(), 48), test_tr(traces.data() + 48, 12);
  const SkipDataset train = build_skip_dataset(train_eps, train_tr, false);
  const SkipDataset test = build_skip_dataset(test_eps, test_tr, false);

  SkipConfig c;
  c.latent_width = 2;
  c.widths = {32, 16};
  SkipNetwork net(c);
  Rng rng(3);
  net.initialize(rng);
  SkipTrainConfig tc;
  tc.adam.lr = 1e-3;
  tc.epochs = 30;
  tc.probe_every = 10;
  tc.batch_size = 64;
  const auto curve = train_skip(net, train, test, test_eps, test_tr, tc);
  REQUIRE(curve.size() == 4);
  CHECK(curve.front().epoch == 0);
  CHECK(curve.back().epoch == 30);
  CHECK(curve.back().test_nll < curve.front().test_nll);
  int probed = 0;
  for (const auto& d : curve.back().probe.hand_at_t2) probed += d.count;
  CHECK(probed == 12);

  SkipNetwork again(c);
  Rng rng2(3);
  again.initialize(rng2);
  const auto curve2 = train_skip(again, train, test, test_eps, test_tr, tc);
  CHECK(curve2.back().test_nll == curve.back().test_nll);

  CHECK_THROWS_AS(train_skip(net, SkipDataset{}, test, test_eps, test_tr, tc), InputError);
}

TEST_CASE("entity distances") {
  EntityDistances d{0.3, 0.1, 0.2, 1};
  CHECK(d.nearest() == env::Entity::object);
  d.goal = 0.05;
  CHECK(d.nearest() == env::Entity::goal);
  CHECK(d.of(env::Entity::hand) == 0.3);
}
