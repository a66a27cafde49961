#include "doctest.h"

#include "streid/dataio.hpp"
#include "streid/error.hpp"
#include "streid/pipeline.hpp"
#include "streid/sim.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <set>

using namespace streid;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STREID_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "streid_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SimConfig small_config() {
  SimConfig c = ring_network_config(21);
  c.n_vehicles = 60;
  c.n_train_vehicles = 300;
  c.n_model_types = 10;
  return c;
}

} // namespace

TEST_CASE("grid expansion") {
  PipelineConfig base;
  std::vector<std::string> sigma{"sigma-fixed=1,10,100,300,adaptive"};
  const auto s = expand_grid(sigma, base);
  REQUIRE(s.size() == 5);
  CHECK(s[0].fixed_sigma == 1.0);
  CHECK(s[3].fixed_sigma == 300.0);
  CHECK(!s[4].fixed_sigma.has_value());
  CHECK(s[4].sigma_label() == "adaptive");

  std::vector<std::string> two{"w=0,1,5,10,20", "alpha=10,20"};
  const auto g = expand_grid(two, base);
  CHECK(g.size() == 10);
  std::set<std::pair<int, double>> combos;
  for (const auto& c : g)
    combos.insert({c.window, c.alpha});
  CHECK(combos.size() == 10);

  std::vector<std::string> none;
  CHECK_THROWS_AS(expand_grid(none, base), ConfigError);
  std::vector<std::string> unknown{"gamma=1"};
  CHECK_THROWS_AS(expand_grid(unknown, base), ConfigError);
  std::vector<std::string> empty_axis{"alpha="};
  CHECK_THROWS_AS(expand_grid(empty_axis, base), ConfigError);
}

TEST_CASE("sweep csv columns") {
  SweepRow row;
  row.metrics = {0.5, 0.75, 0.4};
  std::vector<SweepRow> rows{row};
  const auto csv = sweep_csv(rows);
  CHECK(csv.rfind("alpha,beta,sigma,window,rank1,rank5,mAP\n", 0) == 0);
  CHECK(csv.find("adaptive") != std::string::npos);
}

TEST_CASE("pipeline reports every requested method") {
  const auto out = simulate(small_config());
  const auto data = make_eval_set(out.test_observations, out.similarity);
  PipelineConfig cfg;
  cfg.train.epochs = 5;
  std::vector<MethodKind> methods{MethodKind::appearance_only, MethodKind::product_baseline,
                                  MethodKind::fusion};
  const auto r = run_pipeline(out.observations, data, cfg, methods);
  REQUIRE(r.reports.size() == 3);
  CHECK(r.fold_models.size() == 5);
  for (const auto& rep : r.reports) {
    CHECK(rep.n_queries == 60);
    CHECK(rep.per_fold.size() == 5);
    CHECK(rep.map > 0.0);
    CHECK(rep.map <= 1.0);
  }
  std::vector<MethodKind> appearance{MethodKind::appearance_only};
  CHECK(run_pipeline(out.observations, data, cfg, appearance).fold_models.empty());
}

TEST_CASE("cli rejects bad arguments with distinct exit codes") {
  const auto dir = scratch_dir("errors");
  write_file(dir / "obs.csv", "image_id,vehicle_id,camera_id,frame\na,v,0,0\nb,v,1,500\n");
  write_file(dir / "bad.csv", "image_id,vehicle_id,camera_id,frame\na,v,zero,0\n");
  const std::string obs = (dir / "obs.csv").string();
  CHECK(run_cli("estimate-topology --observations " + obs + " --out " + (dir / "t.json").string() +
                " --cameras 2") == 0);
  CHECK(run_cli("estimate-topology --observations " + obs + " --out " + (dir / "t.json").string() +
                " --cameras 2 --alpha 0.5") == 2);
  CHECK(run_cli("estimate-topology --observations " + (dir / "bad.csv").string() + " --out " +
                (dir / "u.json").string() + " --cameras 2") == 3);
  CHECK(run_cli("estimate-topology --observations " + (dir / "missing.csv").string() + " --out " +
                (dir / "u.json").string()) != 0);
  CHECK(run_cli("no-such-command") != 0);
  CHECK(!fs::exists(dir / "u.json"));
}

TEST_CASE("cli runs are reproducible") {
  const auto dir = scratch_dir("repro");
  write_json(dir / "config.json", sim_config_to_json(small_config()));
  for (const std::string run : {"a", "b"}) {
    const auto out = dir / run;
    REQUIRE(run_cli("simulate --config " + (dir / "config.json").string() + " --out " + out.string()) == 0);
    REQUIRE(run_cli("estimate-topology --observations " + (out / "train.csv").string() + " --out " +
                    (out / "topology.json").string()) == 0);
    REQUIRE(run_cli("train --observations " + (out / "observations.csv").string() + " --similarity " +
                    (out / "similarity.stsm").string() + " --topology " + (out / "topology.json").string() +
                    " --epochs 5 --out " + (out / "models").string()) == 0);
    REQUIRE(run_cli("evaluate --observations " + (out / "observations.csv").string() + " --similarity " +
                    (out / "similarity.csv").string() + " --topology " + (out / "topology.json").string() +
                    " --models " + (out / "models").string() + " --out " + (out / "report.json").string()) == 0);
  }
  for (const char* file : {"train.csv", "observations.csv", "similarity.stsm", "similarity.csv", "topology.json",
                           "models/fold_0.json", "models/fold_4.json", "models/folds.json",
                           "models/fold_2_loss.csv", "report.json"})
    CHECK_MESSAGE(read_file(dir / "a" / file) == read_file(dir / "b" / file), file);
  for (const char* manifest : {"manifest.json", "topology.manifest.json", "models/manifest.json"}) {
    const auto j = read_json(dir / "a" / manifest);
    CHECK(j.contains("config"));
    CHECK(j.contains("outputs"));
    CHECK(j.contains("wall_clock_seconds"));
  }
}
