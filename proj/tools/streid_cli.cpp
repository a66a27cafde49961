// Command-line driver: topology estimation, fusion training, evaluation,
// simulation and parameter sweeps.

#include "streid/dataio.hpp"
#include "streid/error.hpp"
#include "streid/eval.hpp"
#include "streid/fusion.hpp"
#include "streid/manifest.hpp"
#include "streid/pipeline.hpp"
#include "streid/sim.hpp"
#include "streid/topology.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

using namespace streid;

namespace {

struct TopologyArgs {
  std::string observations;
  std::string out;
  int cameras = 20;
  double alpha = 20.0;
  double beta = 12.0;
  int bins = 300;
  int bin_width = 100;
  std::optional<double> sigma_fixed;
};

struct TrainArgs {
  std::string observations;
  std::string similarity;
  std::string topology;
  std::string out;
  int window = 10;
  int epochs = 100;
  int batch = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int folds = 5;
  int negative_ratio = 3;
};

struct EvaluateArgs {
  std::vector<std::string> methods{"appearance", "product", "fusion"};
  std::string observations;
  std::string similarity;
  std::string topology;
  std::string models;
  std::string out;
  int window = 10;
  int folds = 5;
  std::uint64_t seed = 0;
};

struct SimulateArgs {
  std::string config;
  std::string preset;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct SweepArgs {
  std::vector<std::string> grid;
  std::string train_observations;
  std::string observations;
  std::string similarity;
  std::string out;
  std::string method = "fusion";
  int cameras = 20;
  double alpha = 20.0;
  double beta = 12.0;
  int bins = 300;
  int bin_width = 100;
  int window = 10;
  int epochs = 100;
  int batch = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int folds = 5;
  int negative_ratio = 3;
};

fs::path beside(const fs::path& file, const std::string& suffix) {
  return file.parent_path() / (file.stem().string() + suffix);
}

int cmd_estimate_topology(const TopologyArgs& a) {
  RunManifest manifest("estimate-topology");
  const auto observations = load_observations(a.observations);
  manifest.add_input(a.observations);

  const HistogramGeometry geometry{a.bins, a.bin_width};
  const TopologyModel model =
      a.sigma_fixed ? estimate_topology_fixed_sigma(observations, geometry, a.cameras, *a.sigma_fixed)
                    : estimate_topology(observations, geometry, a.cameras, a.alpha, a.beta);

  const fs::path out = a.out;
  save_topology(out, model);
  std::string summary = "from,to,pair_count,sigma\n";
  std::int64_t total = 0;
  std::size_t populated = 0;
  for (const auto& e : model.entries) {
    char line[128];
    std::snprintf(line, sizeof line, "%d,%d,%lld,%.17g\n", e.from_camera, e.to_camera,
                  static_cast<long long>(e.pair_count), e.sigma);
    summary += line;
    total += e.pair_count;
    populated += e.pair_count > 0 ? 1 : 0;
  }
  const fs::path summary_path = beside(out, ".summary.csv");
  write_file(summary_path, summary);

  std::cout << "topology: " << model.entries.size() << " entries (" << populated
            << " with positive pairs, " << total << " pairs total), alpha=" << model.alpha
            << " beta=" << (a.sigma_fixed ? std::string("fixed") : std::to_string(model.beta)) << "\n";

  manifest.set_config({{"cameras", a.cameras},
                       {"alpha", a.alpha},
                       {"beta", a.beta},
                       {"bins", a.bins},
                       {"bin_width", a.bin_width},
                       {"sigma_fixed", a.sigma_fixed ? Json(*a.sigma_fixed) : Json(nullptr)}});
  manifest.add_output(out);
  manifest.add_output(summary_path);
  manifest.write(beside(out, ".manifest.json"));
  return 0;
}

int cmd_train(const TrainArgs& a) {
  RunManifest manifest("train");
  const auto observations = load_observations(a.observations);
  const auto similarity = load_similarity(a.similarity);
  const auto topology = load_topology(a.topology);
  for (const auto* p : {&a.observations, &a.similarity, &a.topology})
    manifest.add_input(*p);

  const EvalSet data = make_eval_set(observations, similarity);
  const FoldAssignment folds = make_folds(data.queries, a.folds, a.seed);

  TrainConfig config;
  config.epochs = a.epochs;
  config.batch_size = a.batch;
  config.learning_rate = a.lr;
  config.seed = a.seed;
  config.negative_ratio = a.negative_ratio;
  config.validate();

  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_json(dir / "folds.json", folds_to_json(folds));
  manifest.add_output(dir / "folds.json");

  const auto results = train_folds(data, topology, folds, a.window, config);
  for (std::size_t f = 0; f < results.size(); ++f) {
    const auto stem = "fold_" + std::to_string(f);
    save_fusion_model(dir / (stem + ".json"), results[f].model);
    save_loss_log(dir / (stem + "_loss.csv"), results[f].loss_trace);
    write_file(dir / (stem + "_w1.csv"), dump_weights(results[f].model));
    for (const auto* suffix : {".json", "_loss.csv", "_w1.csv"})
      manifest.add_output(dir / (stem + suffix));
    std::cout << "fold " << f << ": input_dim " << results[f].model.input_dim() << ", hidden_dim "
              << results[f].model.hidden_dim() << ", loss " << results[f].loss_trace.front() << " -> "
              << results[f].loss_trace.back() << "\n";
  }

  Json cfg = train_config_to_json(config);
  cfg["window"] = a.window;
  cfg["folds"] = a.folds;
  manifest.set_config(cfg);
  manifest.add_seed("seed", a.seed);
  manifest.write(dir / "manifest.json");
  return 0;
}

int cmd_evaluate(const EvaluateArgs& a) {
  RunManifest manifest("evaluate");
  const auto observations = load_observations(a.observations);
  const auto similarity = load_similarity(a.similarity);
  manifest.add_input(a.observations);
  manifest.add_input(a.similarity);
  const EvalSet data = make_eval_set(observations, similarity);

  std::optional<TopologyModel> topology;
  if (!a.topology.empty()) {
    topology = load_topology(a.topology);
    manifest.add_input(a.topology);
  }

  FoldAssignment folds;
  std::vector<FusionModel> models;
  if (!a.models.empty()) {
    const fs::path dir = a.models;
    folds = folds_from_json(read_json(dir / "folds.json"));
    manifest.add_input(dir / "folds.json");
  } else {
    folds = make_folds(data.queries, a.folds, a.seed);
  }

  std::vector<EvalReport> reports;
  for (const auto& name : a.methods) {
    Method method = Method::parse(name, a.window);
    if (method.kind != MethodKind::appearance_only && !topology)
      throw ConfigError("method " + name + " requires --topology");
    if (method.kind == MethodKind::fusion && models.empty()) {
      if (a.models.empty())
        throw ConfigError("method fusion requires --models DIR");
      for (int f = 0; f < folds.n_folds; ++f) {
        const fs::path p = fs::path(a.models) / ("fold_" + std::to_string(f) + ".json");
        models.push_back(load_fusion_model(p));
        manifest.add_input(p);
      }
      method.window = models.front().window;
    }
    reports.push_back(evaluate_method(method, data, topology ? &*topology : nullptr, models, folds));
  }

  std::cout << format_reports(reports);
  const fs::path out = a.out;
  save_reports(out, reports);
  manifest.set_config({{"methods", a.methods}, {"folds", folds.n_folds}});
  manifest.add_seed("seed", a.seed);
  manifest.add_output(out);
  manifest.write(beside(out, ".manifest.json"));
  return 0;
}

int cmd_simulate(const SimulateArgs& a) {
  RunManifest manifest("simulate");
  SimConfig config;
  if (!a.config.empty()) {
    config = load_sim_config(a.config);
    manifest.add_input(a.config);
  } else if (a.preset == "ring") {
    config = ring_network_config();
  } else if (a.preset == "mixed") {
    config = mixed_density_config();
  } else {
    throw ConfigError("simulate needs --config PATH or --preset {ring,mixed}");
  }
  if (a.seed)
    config.seed = *a.seed;

  const SimOutput sim = simulate(config);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_json(dir / "sim_config.json", sim_config_to_json(config));
  save_observations(dir / "train.csv", sim.observations);
  save_observations(dir / "observations.csv", sim.test_observations);
  save_similarity_csv(dir / "similarity.csv", sim.similarity);
  save_similarity_binary(dir / "similarity.stsm", sim.similarity);
  write_json(dir / "ground_truth.json", ground_truth_to_json(sim.ground_truth));
  const auto ambiguity = ambiguity_report(sim);
  write_json(dir / "ambiguity.json", ambiguity_to_json(ambiguity));

  std::cout << "simulated " << sim.observations.size() << " topology observations, "
            << sim.similarity.query_ids.size() << " queries x " << sim.similarity.gallery_ids.size()
            << " gallery\n";
  if (ambiguity.within_id_mean && ambiguity.cross_cluster_mean)
    std::cout << "appearance: within-id mean " << *ambiguity.within_id_mean << ", cross-cluster mean "
              << *ambiguity.cross_cluster_mean << ", confusable top-1 "
              << ambiguity.confusable_top_match_fraction << "\n";

  manifest.set_config(sim_config_to_json(config));
  manifest.add_seed("seed", config.seed);
  for (const auto* name : {"sim_config.json", "train.csv", "observations.csv", "similarity.csv",
                           "similarity.stsm", "ground_truth.json", "ambiguity.json"})
    manifest.add_output(dir / name);
  manifest.write(dir / "manifest.json");
  return 0;
}

int cmd_sweep(const SweepArgs& a) {
  RunManifest manifest("sweep");
  const auto train_obs = load_observations(a.train_observations);
  const auto observations = load_observations(a.observations);
  const auto similarity = load_similarity(a.similarity);
  for (const auto* p : {&a.train_observations, &a.observations, &a.similarity})
    manifest.add_input(*p);
  const EvalSet data = make_eval_set(observations, similarity);

  PipelineConfig base;
  base.n_cameras = a.cameras;
  base.geometry = {a.bins, a.bin_width};
  base.alpha = a.alpha;
  base.beta = a.beta;
  base.window = a.window;
  base.train.epochs = a.epochs;
  base.train.batch_size = a.batch;
  base.train.learning_rate = a.lr;
  base.train.seed = a.seed;
  base.train.negative_ratio = a.negative_ratio;
  base.n_folds = a.folds;
  base.fold_seed = a.seed;

  const auto points = expand_grid(a.grid, base);
  const MethodKind kind = Method::parse(a.method).kind;
  std::vector<SweepRow> rows;
  for (const auto& p : points) {
    const auto result = run_pipeline(train_obs, data, p, std::span<const MethodKind>(&kind, 1));
    const auto& r = result.reports.front();
    rows.push_back({p, {r.rank_accuracy.at(1), r.rank_accuracy.at(5), r.map}});
    std::printf("alpha=%g beta=%g sigma=%s W=%d  rank1=%.2f rank5=%.2f mAP=%.2f\n", p.alpha, p.beta,
                p.sigma_label().c_str(), p.window, 100 * rows.back().metrics.rank1,
                100 * rows.back().metrics.rank5, 100 * rows.back().metrics.map);
  }

  const fs::path out = a.out;
  write_file(out, sweep_csv(rows));
  manifest.set_config({{"grid", a.grid}, {"method", a.method}, {"cameras", a.cameras}});
  manifest.add_seed("seed", a.seed);
  manifest.add_output(out);
  manifest.write(beside(out, ".manifest.json"));
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal vehicle re-identification toolkit"};
  app.require_subcommand(1);

  TopologyArgs topo;
  auto* estimate = app.add_subcommand("estimate-topology", "Estimate camera-pair transition pdfs");
  estimate->add_option("--observations", topo.observations, "Observation CSV")->required();
  estimate->add_option("--out", topo.out, "Topology JSON path")->required();
  estimate->add_option("--cameras", topo.cameras, "Number of cameras")->capture_default_str();
  estimate->add_option("--alpha", topo.alpha, "Bandwidth scale factor")->capture_default_str();
  estimate->add_option("--beta", topo.beta, "Bandwidth smoothness factor")->capture_default_str();
  estimate->add_option("--bins", topo.bins, "Histogram bins")->capture_default_str();
  estimate->add_option("--bin-width", topo.bin_width, "Frames per bin")->capture_default_str();
  estimate->add_option("--sigma-fixed", topo.sigma_fixed, "Use one bandwidth for every pair");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train per-fold fusion networks");
  train_cmd->add_option("--observations", tr.observations, "Query+gallery observation CSV")->required();
  train_cmd->add_option("--similarity", tr.similarity, "Similarity matrix (CSV or STSM)")->required();
  train_cmd->add_option("--topology", tr.topology, "Topology JSON")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--window", tr.window, "Time window W")->capture_default_str();
  train_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
  train_cmd->add_option("--batch", tr.batch)->capture_default_str();
  train_cmd->add_option("--lr", tr.lr)->capture_default_str();
  train_cmd->add_option("--seed", tr.seed)->capture_default_str();
  train_cmd->add_option("--folds", tr.folds)->capture_default_str();
  train_cmd->add_option("--negative-ratio", tr.negative_ratio, "Negatives per positive")->capture_default_str();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Rank galleries and report CMC/mAP");
  evaluate->add_option("--method", ev.methods, "appearance, product and/or fusion")
      ->check(CLI::IsMember({"appearance", "product", "fusion"}))
      ->capture_default_str();
  evaluate->add_option("--observations", ev.observations, "Query+gallery observation CSV")->required();
  evaluate->add_option("--similarity", ev.similarity, "Similarity matrix (CSV or STSM)")->required();
  evaluate->add_option("--topology", ev.topology, "Topology JSON");
  evaluate->add_option("--models", ev.models, "Directory written by train");
  evaluate->add_option("--out", ev.out, "Report JSON path")->required();
  evaluate->add_option("--window", ev.window)->capture_default_str();
  evaluate->add_option("--folds", ev.folds, "Folds when --models is absent")->capture_default_str();
  evaluate->add_option("--seed", ev.seed)->capture_default_str();

  SimulateArgs si;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim_cmd->add_option("--config", si.config, "Simulator config JSON");
  sim_cmd->add_option("--preset", si.preset, "Built-in config: ring or mixed")
      ->check(CLI::IsMember({"ring", "mixed"}));
  sim_cmd->add_option("--seed", si.seed, "Override the config seed");
  sim_cmd->add_option("--out", si.out, "Output directory")->required();

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Run the pipeline over a parameter grid");
  sweep->add_option("--grid", sw.grid, "Axis key=v1,v2,... (alpha, beta, w, sigma-fixed)")->required();
  sweep->add_option("--train-observations", sw.train_observations, "Observations for topology")->required();
  sweep->add_option("--observations", sw.observations, "Query+gallery observation CSV")->required();
  sweep->add_option("--similarity", sw.similarity, "Similarity matrix (CSV or STSM)")->required();
  sweep->add_option("--out", sw.out, "Sweep CSV path")->required();
  sweep->add_option("--method", sw.method)->check(CLI::IsMember({"appearance", "product", "fusion"}))
      ->capture_default_str();
  sweep->add_option("--cameras", sw.cameras)->capture_default_str();
  sweep->add_option("--alpha", sw.alpha)->capture_default_str();
  sweep->add_option("--beta", sw.beta)->capture_default_str();
  sweep->add_option("--bins", sw.bins)->capture_default_str();
  sweep->add_option("--bin-width", sw.bin_width)->capture_default_str();
  sweep->add_option("--window", sw.window)->capture_default_str();
  sweep->add_option("--epochs", sw.epochs)->capture_default_str();
  sweep->add_option("--batch", sw.batch)->capture_default_str();
  sweep->add_option("--lr", sw.lr)->capture_default_str();
  sweep->add_option("--seed", sw.seed)->capture_default_str();
  sweep->add_option("--folds", sw.folds)->capture_default_str();
  sweep->add_option("--negative-ratio", sw.negative_ratio)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*estimate)
      return cmd_estimate_topology(topo);
    if (*train_cmd)
      return cmd_train(tr);
    if (*evaluate)
      return cmd_evaluate(ev);
    if (*sim_cmd)
      return cmd_simulate(si);
    if (*sweep)
      return cmd_sweep(sw);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
