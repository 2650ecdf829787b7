#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "audsim/fusion.hpp"
#include "audsim/metrics.hpp"

using namespace audsim;

namespace {

ExperimentConfig multi_cfg(int q, int f, int c, int tp = 8) {
  ExperimentConfig cfg;
  cfg.users_per_channel_base = q;
  cfg.num_channels = f;
  cfg.num_copies = c;
  cfg.pilot_length = tp;
  cfg.fusion = f == 1 ? FusionStrategy::kSingleChannel
                      : FusionStrategy::kIndependentUnion;
  return cfg;
}

ActivityRealization forced_activity(int population, const std::vector<int>& actives) {
  ActivityRealization a;
  a.population = population;
  a.active.assign(population, 0);
  for (int q : actives) a.active[q] = 1;
  a.active_set = actives;
  std::sort(a.active_set.begin(), a.active_set.end());
  return a;
}

bool is_subset(const std::vector<int>& small, const std::vector<int>& big) {
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

}  // namespace

TEST_CASE("all strategies coincide on a single channel") {
  auto cfg = multi_cfg(12, 1, 1, 8);
  auto book = make_pilot_book(cfg, 3);
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    auto act = sample_activity(book.total_users(), 0.15, rng);
    auto frame = synthesize_frame(book, act, cfg, rng);
    const auto rule = StoppingRule::residual(1.8);
    auto ind = detect_independent(book, frame, rule);
    auto strict = detect_strict(book, frame, rule);
    auto iter = detect_iterative(book, frame, rule);
    auto super = detect_superchannel(book, frame, rule);
    CHECK(ind.fused == strict.fused);
    CHECK(ind.fused == iter.fused);
    CHECK(ind.fused == super.fused);
  }
}

TEST_CASE("C = 1: strict, iterative and super-channel reduce to independent") {
  auto cfg = multi_cfg(6, 3, 1, 8);
  auto book = make_pilot_book(cfg, 5);
  Rng rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    auto act = sample_activity(book.total_users(), 0.2, rng);
    auto frame = synthesize_frame(book, act, cfg, rng);
    const auto rule = StoppingRule::residual(1.8);
    auto ind = detect_independent(book, frame, rule);
    CHECK(detect_strict(book, frame, rule).fused == ind.fused);
    CHECK(detect_iterative(book, frame, rule).fused == ind.fused);
    CHECK(detect_superchannel(book, frame, rule).fused == ind.fused);
  }
}

TEST_CASE("strict detections are contained in the independent union") {
  auto cfg = multi_cfg(8, 3, 2, 8);
  auto book = make_pilot_book(cfg, 7);
  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    auto act = sample_activity(book.total_users(), 0.1, rng);
    auto frame = synthesize_frame(book, act, cfg, rng);
    for (double eps : {1.2, 2.0, 4.0}) {
      const auto rule = StoppingRule::residual(eps);
      auto ind = detect_independent(book, frame, rule);
      auto strict = detect_strict(book, frame, rule);
      CHECK(is_subset(strict.fused, ind.fused));
      // both views agree per channel; strict only prunes the fusion
      CHECK(strict.per_channel_detected == ind.per_channel_detected);
    }
  }
}

TEST_CASE("independent union keeps a user detected on one of its channels") {
  auto cfg = multi_cfg(2, 2, 2, 16);  // 4 users, all on both channels
  cfg.snr_db = 30.0;
  auto book = make_pilot_book(cfg, 9);
  auto act = forced_activity(book.total_users(), {1});

  // channel 1 sees pure noise for the active user: fade it to zero there
  std::vector<Eigen::MatrixXcd> fading(2);
  Rng fade_rng(10);
  for (int f = 0; f < 2; ++f) {
    fading[f].resize(4, 1);
    for (int j = 0; j < 4; ++j) fading[f](j, 0) = fade_rng.complex_normal();
  }
  fading[1](book.global_to_local[1][1], 0) = 0.0;
  SynthOverrides ov;
  ov.fading = &fading;

  Rng rng(11);
  auto frame = synthesize_frame(book, act, cfg, rng, &ov);
  const auto rule = StoppingRule::residual(3.0);
  auto ind = detect_independent(book, frame, rule);
  auto strict = detect_strict(book, frame, rule);

  const auto& det0 = ind.per_channel_detected[0];
  const auto& det1 = ind.per_channel_detected[1];
  REQUIRE(std::binary_search(det0.begin(), det0.end(), 1));
  REQUIRE_FALSE(std::binary_search(det1.begin(), det1.end(), 1));
  // union keeps it, strict drops it
  CHECK(std::binary_search(ind.fused.begin(), ind.fused.end(), 1));
  CHECK_FALSE(std::binary_search(strict.fused.begin(), strict.fused.end(), 1));
}

TEST_CASE("strict fusion with empty channels is empty") {
  auto cfg = multi_cfg(4, 2, 2, 8);
  auto book = make_pilot_book(cfg, 12);
  auto act = forced_activity(book.total_users(), {});
  Rng rng(13);
  auto frame = synthesize_frame(book, act, cfg, rng);
  auto strict = detect_strict(book, frame, StoppingRule::residual(1e6));
  CHECK(strict.fused.empty());
}

TEST_CASE("iterative detection propagates across channels") {
  // noiseless single active user on both channels; after channel 0 detects
  // it, channel 1 has nothing left to find
  auto cfg = multi_cfg(4, 2, 2, 16);
  cfg.snr_db = 30.0;
  auto book = make_pilot_book(cfg, 14);
  const int target = 3;
  auto act = forced_activity(book.total_users(), {target});

  std::vector<Eigen::MatrixXcd> zero_noise(2, Eigen::MatrixXcd::Zero(16, 1));
  SynthOverrides ov;
  ov.noise = &zero_noise;
  Rng rng(15);
  auto frame = synthesize_frame(book, act, cfg, rng, &ov);

  auto out = detect_iterative(book, frame, StoppingRule::known(0));
  CHECK(out.fused == std::vector<int>{target});
  CHECK(out.per_channel_detected[0] == std::vector<int>{target});
  CHECK(out.per_channel_detected[1].empty());

  // projection oracle: removing the pilot direction kills the residual
  const auto col = book.per_channel_matrix[1].col(book.global_to_local[1][target]);
  const Eigen::MatrixXcd y1 = frame.received[1];
  const Eigen::MatrixXcd after =
      y1 - col * ((col.adjoint() * y1) / col.squaredNorm());
  CHECK(y1.norm() > 1.0);
  CHECK(after.norm() < 1e-10 * y1.norm());
}

TEST_CASE("iterative known-K searches only for the missing actives") {
  auto cfg = multi_cfg(4, 2, 2, 16);
  cfg.snr_db = 30.0;
  auto book = make_pilot_book(cfg, 16);
  auto act = forced_activity(book.total_users(), {2, 5});
  std::vector<Eigen::MatrixXcd> zero_noise(2, Eigen::MatrixXcd::Zero(16, 1));
  SynthOverrides ov;
  ov.noise = &zero_noise;
  Rng rng(17);
  auto frame = synthesize_frame(book, act, cfg, rng, &ov);
  auto out = detect_iterative(book, frame, StoppingRule::known(0));
  CHECK(out.fused == std::vector<int>({2, 5}));
}

TEST_CASE("iterative random order needs an rng and stays deterministic with one") {
  auto cfg = multi_cfg(4, 3, 2, 8);
  auto book = make_pilot_book(cfg, 18);
  Rng rng(19);
  auto act = sample_activity(book.total_users(), 0.2, rng);
  auto frame = synthesize_frame(book, act, cfg, rng);
  CHECK_THROWS_AS(
      detect_iterative(book, frame, StoppingRule::residual(2.0), IterativeOrder::kRandom),
      std::invalid_argument);
  Rng ra(7), rb(7);
  auto a = detect_iterative(book, frame, StoppingRule::residual(2.0),
                            IterativeOrder::kRandom, &ra);
  auto b = detect_iterative(book, frame, StoppingRule::residual(2.0),
                            IterativeOrder::kRandom, &rb);
  CHECK(a.fused == b.fused);
}

TEST_CASE("super-channel with C = F runs one stacked unit and matches a manual stack") {
  auto cfg = multi_cfg(4, 2, 2, 8);
  cfg.snr_db = 25.0;
  auto book = make_pilot_book(cfg, 20);
  Rng rng(21);
  auto act = sample_activity(book.total_users(), 0.2, rng);
  auto frame = synthesize_frame(book, act, cfg, rng);

  auto runs = run_detection_units(book, frame, FusionStrategy::kSuperChannel,
                                  StoppingRule::residual(2.0));
  REQUIRE(runs.units.size() == 1);  // C(2,2) = 1 subset holds every user
  CHECK(runs.units[0].global_ids.size() == static_cast<std::size_t>(book.total_users()));

  // oracle: stack manually with unit-norm extended pilots
  Eigen::MatrixXcd y(16, 1);
  y.topRows(8) = frame.received[0];
  y.bottomRows(8) = frame.received[1];
  Eigen::MatrixXcd phi(16, book.total_users());
  const double renorm = 1.0 / std::sqrt(2.0);
  for (int q = 0; q < book.total_users(); ++q) {
    phi.block(0, q, 8, 1) = book.pilots.col(q) * renorm;
    phi.block(8, q, 8, 1) = book.pilots.col(q) * renorm;
    CHECK(std::abs(phi.col(q).norm() - 1.0) < 1e-12);
  }
  auto oracle = run_omp(y, phi, StoppingRule::residual(2.0));
  CHECK(runs.units[0].omp.selected == oracle.selected);

  auto out = detect_superchannel(book, frame, StoppingRule::residual(2.0));
  // every detection is attributed to both constituent channels
  CHECK(out.per_channel_detected[0] == out.fused);
  CHECK(out.per_channel_detected[1] == out.fused);
}

TEST_CASE("super-channel skips subsets without users") {
  // C_q sets from the modular rule are cyclic windows; with F=4, C=2 only 4
  // of the 6 subsets are populated
  auto cfg = multi_cfg(2, 4, 2, 8);
  auto book = make_pilot_book(cfg, 22);
  Rng rng(23);
  auto act = sample_activity(book.total_users(), 0.3, rng);
  auto frame = synthesize_frame(book, act, cfg, rng);
  auto runs = run_detection_units(book, frame, FusionStrategy::kSuperChannel,
                                  StoppingRule::residual(2.0));
  CHECK(runs.units.size() == 4);
  std::size_t members = 0;
  for (const auto& u : runs.units) members += u.global_ids.size();
  CHECK(members == static_cast<std::size_t>(book.total_users()));
}

TEST_CASE("detection outcomes respect channel membership") {
  auto cfg = multi_cfg(6, 3, 2, 8);
  auto book = make_pilot_book(cfg, 24);
  Rng rng(25);
  for (auto strategy :
       {FusionStrategy::kIndependentUnion, FusionStrategy::kStrict,
        FusionStrategy::kIterative, FusionStrategy::kSuperChannel}) {
    auto act = sample_activity(book.total_users(), 0.15, rng);
    auto frame = synthesize_frame(book, act, cfg, rng);
    auto out = detect(book, frame, strategy, StoppingRule::residual(1.5));
    for (int f = 0; f < book.num_channels; ++f)
      for (int q : out.per_channel_detected[f]) {
        const auto& cs = book.channel_sets[q];
        CHECK(std::find(cs.begin(), cs.end(), f) != cs.end());
      }
    for (int q : out.fused) {
      CHECK(q >= 0);
      CHECK(q < book.total_users());
    }
  }
}

TEST_CASE("known-K dispatch stops each channel at its true count") {
  auto cfg = multi_cfg(8, 2, 1, 16);
  cfg.snr_db = 30.0;
  auto book = make_pilot_book(cfg, 26);
  Rng rng(27);
  auto act = sample_activity(book.total_users(), 0.2, rng);
  auto frame = synthesize_frame(book, act, cfg, rng);
  auto out = detect(book, frame, FusionStrategy::kIndependentUnion,
                    StoppingRule::known(0));
  for (int f = 0; f < 2; ++f)
    CHECK(out.per_channel_detected[f].size() ==
          static_cast<std::size_t>(active_count_in_channel(book, act, f)));
}
