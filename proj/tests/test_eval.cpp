#include "doctest.h"

#include "gen.hpp"
#include "streid/error.hpp"
#include "streid/eval.hpp"

#include <algorithm>
#include <numeric>
#include <set>

using namespace streid;
using streid::testing::Gen;

namespace {

struct Instance {
  std::vector<Observation> observations;
  SimilarityMatrix sim;
};

// Random query/gallery split with guaranteed matches for most queries.
Instance random_instance(Gen& gen, int n_queries, int n_gallery, int n_ids, bool coarse_scores) {
  Instance out;
  for (int q = 0; q < n_queries; ++q) {
    out.observations.push_back({"q" + std::to_string(q), "v" + std::to_string(q % n_ids),
                                gen.integer(0, 3), Frame(gen.integer(0, 9000))});
    out.sim.query_ids.push_back(out.observations.back().image_id);
  }
  for (int g = 0; g < n_gallery; ++g) {
    out.observations.push_back({"g" + std::to_string(g), "v" + std::to_string(gen.integer(0, n_ids - 1)),
                                gen.integer(0, 3), Frame(gen.integer(0, 9000))});
    out.sim.gallery_ids.push_back(out.observations.back().image_id);
  }
  out.sim.values.resize(n_queries, n_gallery);
  for (int q = 0; q < n_queries; ++q)
    for (int g = 0; g < n_gallery; ++g)
      out.sim.values(q, g) = coarse_scores ? gen.integer(0, 4) / 4.0 : gen.real(0.0, 1.0);
  return out;
}

struct Brute {
  double rank1 = 0, rank5 = 0, map = 0;
  std::size_t used = 0;
};

// Metrics from first principles: selection-sort ranking, explicit precision sums.
Brute brute_metrics(const EvalSet& data) {
  Brute b;
  for (std::size_t q = 0; q < data.queries.size(); ++q) {
    const auto& query = data.queries[q];
    std::vector<std::size_t> pool;
    for (std::size_t g = 0; g < data.gallery.size(); ++g)
      if (!(data.gallery[g].camera_id == query.camera_id && data.gallery[g].vehicle_id == query.vehicle_id))
        pool.push_back(g);
    std::vector<std::size_t> ranked;
    while (!pool.empty()) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < pool.size(); ++i) {
        const double si = data.appearance(q, pool[i]), sb = data.appearance(q, pool[best]);
        if (si > sb || (si == sb && data.gallery[pool[i]].image_id < data.gallery[pool[best]].image_id))
          best = i;
      }
      ranked.push_back(pool[best]);
      pool.erase(pool.begin() + std::ptrdiff_t(best));
    }
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < ranked.size(); ++i)
      if (data.gallery[ranked[i]].vehicle_id == query.vehicle_id)
        hits.push_back(i + 1);
    if (hits.empty())
      continue;
    ++b.used;
    b.rank1 += hits[0] <= 1;
    b.rank5 += hits[0] <= 5;
    double ap = 0;
    for (std::size_t j = 0; j < hits.size(); ++j)
      ap += double(j + 1) / double(hits[j]);
    b.map += ap / double(hits.size());
  }
  if (b.used) {
    b.rank1 /= double(b.used);
    b.rank5 /= double(b.used);
    b.map /= double(b.used);
  }
  return b;
}

Relevance first_at(std::size_t pos, std::size_t len) {
  Relevance r(len, false);
  r[pos - 1] = true;
  return r;
}

} // namespace

TEST_CASE("gallery ranking order, ties and same-camera filtering") {
  Observation query{"q", "A", 0, 0};
  std::vector<Observation> gallery{{"g2", "B", 1, 0}, {"g1", "A", 1, 0}, {"g0", "C", 2, 0},
                                   {"g3", "A", 0, 10}};
  std::vector<double> scores{0.5, 0.9, 0.5, 1.0};
  const auto order = rank_gallery(query, gallery, scores);
  REQUIRE(order.size() == 3);
  CHECK(order[0] == 1);
  CHECK(order[1] == 2); // g0 before g2 on the tie
  CHECK(order[2] == 0);
  std::vector<double> short_scores{0.1};
  CHECK_THROWS_AS(rank_gallery(query, gallery, short_scores), InputError);
}

TEST_CASE("cumulative match characteristic") {
  std::vector<Relevance> r{first_at(1, 10), first_at(2, 10), first_at(6, 10), first_at(1, 10)};
  CHECK(cmc(r, 1) == 0.5);
  CHECK(cmc(r, 5) == 0.75);
  CHECK(cmc(r, 6) == 1.0);
  std::vector<Relevance> none{Relevance(4, false)};
  CHECK_THROWS_AS(cmc(none, 1), InputError);
}

TEST_CASE("average precision") {
  CHECK(average_precision({false, true, false, true}) == 0.5);
  CHECK(average_precision({true, false, false}) == 1.0);
  CHECK(average_precision({false, false, true}) == doctest::Approx(1.0 / 3));
  CHECK_THROWS_AS(average_precision({false, false}), InputError);
  CHECK(mean_average_precision({{true}, {false, true}}) == 0.75);
}

TEST_CASE("folds are identity-disjoint and balanced") {
  std::vector<Observation> queries;
  for (int i = 0; i < 200; ++i)
    queries.push_back({"q" + std::to_string(i), "v" + std::to_string(i), 0, 0});
  queries.push_back({"extra", "v3", 1, 5});
  const auto folds = make_folds(queries, 5, 1);
  CHECK(folds.fold_sizes() == std::vector<std::size_t>{40, 40, 40, 40, 40});
  CHECK(folds.fold("v3") >= 0);
  CHECK(folds.fold("nobody") == -1);

  std::vector<Observation> seven(queries.begin(), queries.begin() + 7);
  auto sizes = make_folds(seven, 5, 3).fold_sizes();
  CHECK(sizes == std::vector<std::size_t>{2, 2, 1, 1, 1});

  CHECK(make_folds(queries, 5, 9).fold_of == make_folds(queries, 5, 9).fold_of);
  CHECK(make_folds(queries, 5, 9).fold_of != make_folds(queries, 5, 10).fold_of);
  CHECK_THROWS_AS(make_folds(seven, 8, 0), InputError);
  CHECK_THROWS_AS(make_folds(seven, 0, 0), ConfigError);
}

TEST_CASE("pooled metrics match a brute-force oracle") {
  Gen gen(555);
  for (int trial = 0; trial < 200; ++trial) {
    auto inst = random_instance(gen, gen.integer(1, 10), gen.integer(1, 50), gen.integer(1, 12), gen.coin());
    const auto data = make_eval_set(inst.observations, inst.sim);
    const auto want = brute_metrics(data);
    const auto folds = make_folds(data.queries, 1, 0);
    const auto got = evaluate_method({}, data, nullptr, {}, folds);
    CHECK(got.n_queries == want.used);
    CHECK(got.n_queries + got.n_skipped == data.queries.size());
    CHECK(got.rank_accuracy.at(1) == want.rank1);
    CHECK(got.rank_accuracy.at(5) == want.rank5);
    CHECK(got.map == want.map);
  }
}

TEST_CASE("metrics are invariant under positive affine rescaling of scores") {
  Gen gen(8);
  for (int trial = 0; trial < 30; ++trial) {
    auto inst = random_instance(gen, 8, 40, 6, false);
    const auto data = make_eval_set(inst.observations, inst.sim);
    const auto folds = make_folds(data.queries, 2, 1);
    const auto before = evaluate_method({}, data, nullptr, {}, folds);
    SimilarityMatrix scaled = inst.sim;
    scaled.values = scaled.values.array() * 3.5 + 2.0;
    const auto after = evaluate_method({}, make_eval_set(inst.observations, scaled), nullptr, {}, folds);
    CHECK(after.map == before.map);
    CHECK(after.rank_accuracy == before.rank_accuracy);
  }
}

TEST_CASE("product with a flat topology ranks like appearance") {
  Gen gen(12);
  auto inst = random_instance(gen, 10, 50, 8, false);
  std::vector<Observation> topo_obs{{"x", "z", 0, 0}};
  const auto flat = estimate_topology(topo_obs, HistogramGeometry{}, 4);
  const auto data = make_eval_set(inst.observations, inst.sim);
  const auto folds = make_folds(data.queries, 2, 0);
  const auto a = evaluate_method(Method::parse("appearance"), data, &flat, {}, folds);
  const auto p = evaluate_method(Method::parse("product"), data, &flat, {}, folds);
  CHECK(a.map == doctest::Approx(p.map).epsilon(1e-15));
  CHECK(a.rank_accuracy == p.rank_accuracy);
}

TEST_CASE("hand-built ranking instance") {
  // Three queries, eight gallery images.
  std::vector<Observation> obs{
      {"q0", "A", 0, 0}, {"q1", "B", 1, 0}, {"q2", "C", 2, 0},
      {"g0", "A", 1, 0}, {"g1", "A", 0, 0}, {"g2", "B", 2, 0}, {"g3", "B", 3, 0},
      {"g4", "C", 0, 0}, {"g5", "D", 1, 0}, {"g6", "D", 2, 0}, {"g7", "E", 3, 0}};
  SimilarityMatrix sim;
  sim.query_ids = {"q0", "q1", "q2"};
  sim.gallery_ids = {"g0", "g1", "g2", "g3", "g4", "g5", "g6", "g7"};
  sim.values.resize(3, 8);
  sim.values << 0.9, 1.0, 0.1, 0.1, 0.2, 0.3, 0.1, 0.1, // g1 filtered; A first
      0.2, 0.1, 0.6, 0.3, 0.1, 0.7, 0.1, 0.5,          // D, B, E, B -> hits at 2 and 4
      0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1;          // all tied; g4 at position 5
  const auto data = make_eval_set(obs, sim);
  const auto r = evaluate_method({}, data, nullptr, {}, make_folds(data.queries, 1, 0));
  CHECK(r.n_queries == 3);
  CHECK(r.rank_accuracy.at(1) == doctest::Approx(1.0 / 3));
  CHECK(r.rank_accuracy.at(5) == 1.0);
  const double ap0 = 1.0, ap1 = (0.5 + 2.0 / 4) / 2, ap2 = 1.0 / 5;
  CHECK(r.map == doctest::Approx((ap0 + ap1 + ap2) / 3).epsilon(1e-14));
}

TEST_CASE("queries without a relevant gallery item are skipped and counted") {
  std::vector<Observation> obs{{"q0", "A", 0, 0}, {"q1", "B", 0, 0}, {"g0", "A", 1, 0}, {"g1", "B", 0, 5}};
  SimilarityMatrix sim{{"q0", "q1"}, {"g0", "g1"}, Eigen::MatrixXd::Constant(2, 2, 0.5)};
  const auto data = make_eval_set(obs, sim);
  const auto r = evaluate_method({}, data, nullptr, {}, make_folds(data.queries, 1, 0));
  CHECK(r.n_queries == 1);
  CHECK(r.n_skipped == 1);
  CHECK(r.map == 1.0);
}

TEST_CASE("training pairs never touch the held-out identities") {
  Gen gen(90);
  auto inst = random_instance(gen, 10, 50, 10, false);
  const auto data = make_eval_set(inst.observations, inst.sim);
  std::vector<Observation> topo_obs{{"x", "z", 0, 0}, {"y", "z", 1, 900}};
  const auto topo = estimate_topology(topo_obs, HistogramGeometry{}, 4);
  const auto folds = make_folds(data.queries, 5, 2);
  for (int held = 0; held < 5; ++held) {
    const auto tp = make_training_pairs(data, topo, folds, held, 2, 3, 7);
    REQUIRE(tp.pairs.size() == tp.source.size());
    std::size_t pos = 0;
    for (std::size_t i = 0; i < tp.pairs.size(); ++i) {
      const auto [q, g] = tp.source[i];
      CHECK(folds.fold(data.queries[q].vehicle_id) != held);
      CHECK(folds.fold(data.gallery[g].vehicle_id) != held);
      const bool same = data.queries[q].vehicle_id == data.gallery[g].vehicle_id;
      CHECK(tp.pairs[i].label == int(same));
      CHECK(tp.pairs[i].input.appearance == data.appearance(q, g));
      CHECK(tp.pairs[i].input.st_window.size() == 5);
      pos += same;
    }
    CHECK(pos > 0);
    CHECK(tp.pairs.size() - pos <= 3 * pos);
  }
  const auto a = make_training_pairs(data, topo, folds, 0, 2, 3, 7);
  const auto b = make_training_pairs(data, topo, folds, 0, 2, 3, 7);
  CHECK(a.source == b.source);
}

TEST_CASE("unknown similarity ids are reported") {
  std::vector<Observation> obs{{"q0", "A", 0, 0}};
  SimilarityMatrix sim{{"q0"}, {"ghost"}, Eigen::MatrixXd::Constant(1, 1, 0.5)};
  CHECK_THROWS_WITH_AS(make_eval_set(obs, sim), doctest::Contains("ghost"), InputError);
  SimilarityMatrix bad{{"q0"}, {"q0", "q0"}, Eigen::MatrixXd::Constant(1, 1, 0.5)};
  CHECK_THROWS_AS(make_eval_set(obs, bad), InputError);
}

TEST_CASE("method names") {
  CHECK(Method::parse("fusion", 4).label() == "fusion(W=4)");
  CHECK(Method::parse("product").kind == MethodKind::product_baseline);
  CHECK_THROWS_AS(Method::parse("magic"), ConfigError);
}
