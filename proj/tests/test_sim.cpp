#include "doctest.h"

#include "streid/error.hpp"
#include "streid/sim.hpp"

#include <map>
#include <set>

using namespace streid;

namespace {

SimConfig one_edge(int vehicles) {
  SimConfig c;
  c.n_cameras = 2;
  c.n_vehicles = vehicles;
  c.n_train_vehicles = vehicles;
  c.n_model_types = 10;
  c.min_visits = 2;
  c.max_visits = 2;
  c.road_edges = {{0, 1, 1500.0, 100.0, 1.0}};
  return c;
}

} // namespace

TEST_CASE("simulation is deterministic for a seed") {
  const auto c = ring_network_config(3);
  const auto a = simulate(c);
  const auto b = simulate(c);
  CHECK(a.observations == b.observations);
  CHECK(a.test_observations == b.test_observations);
  CHECK(a.similarity.values == b.similarity.values);
  auto c2 = c;
  c2.seed = 4;
  CHECK(simulate(c2).observations != a.observations);
}

TEST_CASE("disconnected road graphs are rejected") {
  SimConfig c = one_edge(10);
  c.n_cameras = 3;
  CHECK_THROWS_AS(simulate(c), ConfigError);
  c.road_edges.push_back({2, 1, 100.0, 10.0, 1.0});
  CHECK_NOTHROW(c.validate());
  c.road_edges.push_back({2, 5, 100.0, 10.0, 1.0});
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("a single road recovers its transit time") {
  const auto out = simulate(one_edge(100));
  const auto model = estimate_topology(out.observations, HistogramGeometry{}, 2);
  Eigen::Index mode;
  model.entry(0, 1).pdf.maxCoeff(&mode);
  CHECK(mode >= 14);
  CHECK(mode <= 16);
  CHECK(out.ground_truth.size() == 1);
  CHECK(out.ground_truth[0].transitions == 100);
}

TEST_CASE("appearance similarities follow the configured Beta means") {
  auto c = ring_network_config(5);
  c.n_train_vehicles = 10;
  const auto out = simulate(c);
  const auto r = ambiguity_report(out);
  REQUIRE(r.within_id_samples >= 400);
  REQUIRE(r.cross_cluster_samples >= 10000);
  REQUIRE(r.within_cluster_samples >= 1000);
  CHECK(*r.within_id_mean == doctest::Approx(0.8).epsilon(0.05 / 0.8));
  CHECK(*r.within_cluster_mean == doctest::Approx(6.0 / 9).epsilon(0.05 / (6.0 / 9)));
  CHECK(*r.cross_cluster_mean == doctest::Approx(0.2).epsilon(0.05 / 0.2));
  CHECK(!r.degenerate);
  CHECK(r.confusable_top_match_fraction > 0.0);
  CHECK(out.similarity.values.minCoeff() >= 0.0);
  CHECK(out.similarity.values.maxCoeff() <= 1.0);
}

TEST_CASE("degenerate cluster layouts are flagged") {
  auto single = one_edge(1);
  const auto r1 = ambiguity_report(simulate(single));
  CHECK(r1.degenerate);
  CHECK(!r1.cross_cluster_mean.has_value());

  auto unique = one_edge(20);
  unique.n_model_types = 20;
  const auto r2 = ambiguity_report(simulate(unique));
  CHECK(r2.degenerate);
  CHECK(!r2.within_cluster_mean.has_value());
  CHECK(r2.cross_cluster_mean.has_value());
}

TEST_CASE("every identity is seen at least twice inside the horizon") {
  const auto c = mixed_density_config(2);
  const auto out = simulate(c);
  std::map<std::string, int> seen;
  std::set<std::string> ids;
  for (const auto* split : {&out.observations, &out.test_observations})
    for (const auto& o : *split) {
      ++seen[o.vehicle_id];
      CHECK(o.frame >= 0);
      CHECK(o.frame <= c.frames_horizon);
      CHECK(o.camera_id >= 0);
      CHECK(o.camera_id < c.n_cameras);
      CHECK(ids.insert(o.image_id).second);
    }
  CHECK(seen.size() == std::size_t(c.n_vehicles + c.n_train_vehicles));
  for (const auto& [id, n] : seen) {
    CHECK(n >= 2);
    CHECK(n <= c.max_visits);
  }
  CHECK(out.similarity.query_ids.size() == std::size_t(c.n_vehicles));
  CHECK(out.cluster_of.size() == std::size_t(c.n_vehicles));
}
