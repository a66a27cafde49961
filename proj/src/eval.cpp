#include "streid/eval.hpp"

#include "streid/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace streid {

void SimilarityMatrix::validate() const {
  if (values.rows() != Eigen::Index(query_ids.size()) ||
      values.cols() != Eigen::Index(gallery_ids.size()))
    throw InputError("similarity matrix is " + std::to_string(values.rows()) + "x" +
                     std::to_string(values.cols()) + " but has " +
                     std::to_string(query_ids.size()) + " query and " +
                     std::to_string(gallery_ids.size()) + " gallery ids");
  if (!values.allFinite())
    throw InputError("similarity matrix contains non-finite values");
}

std::vector<std::size_t> rank_gallery(const Observation& query,
                                      std::span<const Observation> gallery,
                                      std::span<const double> scores) {
  if (scores.size() != gallery.size())
    throw InputError("rank_gallery: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(gallery.size()) + " gallery items");
  std::vector<std::size_t> order;
  order.reserve(gallery.size());
  for (std::size_t g = 0; g < gallery.size(); ++g) {
    if (!std::isfinite(scores[g]))
      throw InputError("rank_gallery: non-finite score for " + gallery[g].image_id);
    if (gallery[g].camera_id == query.camera_id && gallery[g].vehicle_id == query.vehicle_id)
      continue;
    order.push_back(g);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b])
      return scores[a] > scores[b];
    return gallery[a].image_id < gallery[b].image_id;
  });
  return order;
}

namespace {

std::size_t first_match(const Relevance& ranking) {
  const auto it = std::find(ranking.begin(), ranking.end(), true);
  if (it == ranking.end())
    throw InputError("ranking has no relevant item");
  return std::size_t(it - ranking.begin());
}

} // namespace

double cmc(const std::vector<Relevance>& rankings, int k) {
  if (rankings.empty())
    return 0.0;
  std::size_t hits = 0;
  for (const auto& r : rankings)
    hits += first_match(r) < std::size_t(std::max(k, 0)) ? 1 : 0;
  return double(hits) / double(rankings.size());
}

double average_precision(const Relevance& ranking) {
  std::size_t relevant = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (!ranking[i])
      continue;
    ++relevant;
    sum += double(relevant) / double(i + 1);
  }
  if (relevant == 0)
    throw InputError("ranking has no relevant item");
  return sum / double(relevant);
}

double mean_average_precision(const std::vector<Relevance>& rankings) {
  if (rankings.empty())
    return 0.0;
  double sum = 0.0;
  for (const auto& r : rankings)
    sum += average_precision(r);
  return sum / double(rankings.size());
}

int FoldAssignment::fold(const std::string& vehicle_id) const {
  const auto it = fold_of.find(vehicle_id);
  return it == fold_of.end() ? -1 : it->second;
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
  std::vector<std::size_t> sizes(std::size_t(std::max(n_folds, 0)), 0);
  for (const auto& [id, f] : fold_of)
    ++sizes[std::size_t(f)];
  return sizes;
}

FoldAssignment make_folds(std::span<const Observation> queries, int n_folds, std::uint64_t seed) {
  if (n_folds < 1)
    throw ConfigError("n_folds must be positive");
  std::set<std::string> distinct;
  for (const auto& q : queries)
    distinct.insert(q.vehicle_id);
  if (distinct.size() < std::size_t(n_folds))
    throw InputError("make_folds: " + std::to_string(distinct.size()) +
                     " query identities cannot fill " + std::to_string(n_folds) + " folds");

  std::vector<std::string> ids(distinct.begin(), distinct.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  FoldAssignment folds;
  folds.n_folds = n_folds;
  for (std::size_t i = 0; i < ids.size(); ++i)
    folds.fold_of[ids[i]] = int(i % std::size_t(n_folds));
  return folds;
}

EvalSet make_eval_set(std::span<const Observation> observations, const SimilarityMatrix& similarity) {
  similarity.validate();
  std::unordered_map<std::string, const Observation*> by_image;
  for (const auto& o : observations)
    by_image.emplace(o.image_id, &o);

  EvalSet set;
  set.similarity = &similarity;
  std::vector<std::string> missing;
  auto resolve = [&](const std::vector<std::string>& ids, std::vector<Observation>& out) {
    out.reserve(ids.size());
    for (const auto& id : ids) {
      const auto it = by_image.find(id);
      if (it == by_image.end()) {
        missing.push_back(id);
        continue;
      }
      out.push_back(*it->second);
    }
  };
  resolve(similarity.query_ids, set.queries);
  resolve(similarity.gallery_ids, set.gallery);
  if (!missing.empty()) {
    std::string msg = "similarity ids without observations:";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i)
      msg += " " + missing[i];
    if (missing.size() > 10)
      msg += " ... (" + std::to_string(missing.size()) + " total)";
    throw InputError(msg);
  }
  return set;
}

std::string Method::label() const {
  switch (kind) {
  case MethodKind::appearance_only:
    return "appearance";
  case MethodKind::product_baseline:
    return "product";
  case MethodKind::fusion:
    return "fusion(W=" + std::to_string(window) + ")";
  }
  return "unknown";
}

Method Method::parse(const std::string& name, int window) {
  if (name == "appearance")
    return {MethodKind::appearance_only, window};
  if (name == "product")
    return {MethodKind::product_baseline, window};
  if (name == "fusion")
    return {MethodKind::fusion, window};
  throw ConfigError("unknown method '" + name + "' (expected appearance, product or fusion)");
}

Eigen::VectorXd score_query(const Method& method, const EvalSet& data, std::size_t q,
                            const TopologyModel* topology, const FusionModel* model) {
  const auto& query = data.queries[q];
  const auto n = data.gallery.size();
  Eigen::VectorXd scores(Eigen::Index(n), 1);
  switch (method.kind) {
  case MethodKind::appearance_only:
    for (std::size_t g = 0; g < n; ++g)
      scores[Eigen::Index(g)] = data.appearance(q, g);
    break;
  case MethodKind::product_baseline:
    if (topology == nullptr)
      throw ConfigError("product baseline requires a topology");
    for (std::size_t g = 0; g < n; ++g) {
      const auto& item = data.gallery[g];
      scores[Eigen::Index(g)] = baseline_product(
          data.appearance(q, g),
          lookup_probability(*topology, query.camera_id, query.frame, item.camera_id, item.frame));
    }
    break;
  case MethodKind::fusion: {
    if (topology == nullptr || model == nullptr)
      throw ConfigError("fusion requires a topology and a fusion model");
    if (model->window != method.window)
      throw ConfigError("fusion model window " + std::to_string(model->window) +
                        " does not match method window " + std::to_string(method.window));
    Eigen::MatrixXd x(model->input_dim(), Eigen::Index(n));
    for (std::size_t g = 0; g < n; ++g) {
      const auto& item = data.gallery[g];
      x(0, Eigen::Index(g)) = data.appearance(q, g);
      x.col(Eigen::Index(g)).tail(2 * method.window + 1) = build_st_vector(
          *topology, query.camera_id, query.frame, item.camera_id, item.frame, method.window);
    }
    const Eigen::MatrixXd hidden = ((model->w1 * x).colwise() + model->b1).cwiseMax(0.0);
    scores = (model->w2.transpose() * hidden).transpose().array() + model->b2;
    break;
  }
  }
  return scores;
}

namespace {

MetricSummary summarize(const std::vector<Relevance>& rankings) {
  return {cmc(rankings, 1), cmc(rankings, 5), mean_average_precision(rankings)};
}

} // namespace

EvalReport evaluate_method(const Method& method, const EvalSet& data,
                           const TopologyModel* topology,
                           std::span<const FusionModel> fold_models,
                           const FoldAssignment& folds,
                           std::vector<int> ks) {
  if (data.similarity == nullptr)
    throw InputError("evaluate_method: eval set has no similarity matrix");
  if (method.kind == MethodKind::fusion && fold_models.size() != std::size_t(folds.n_folds))
    throw ConfigError("fusion evaluation needs " + std::to_string(folds.n_folds) +
                      " fold models, got " + std::to_string(fold_models.size()));
  if (data.gallery.empty())
    throw InputError("evaluate_method: empty gallery");

  EvalReport report;
  report.method = method.label();
  std::vector<Relevance> pooled;
  std::vector<std::vector<Relevance>> by_fold(std::size_t(folds.n_folds));

  for (std::size_t q = 0; q < data.queries.size(); ++q) {
    const auto& query = data.queries[q];
    const int fold = folds.fold(query.vehicle_id);
    if (fold < 0)
      throw InputError("query " + query.image_id + " has vehicle " + query.vehicle_id +
                       " outside the fold assignment");
    const FusionModel* model =
        method.kind == MethodKind::fusion ? &fold_models[std::size_t(fold)] : nullptr;
    const Eigen::VectorXd scores = score_query(method, data, q, topology, model);
    const auto order =
        rank_gallery(query, data.gallery, std::span<const double>(scores.data(), std::size_t(scores.size())));

    Relevance relevance(order.size());
    bool any = false;
    for (std::size_t i = 0; i < order.size(); ++i) {
      relevance[i] = data.gallery[order[i]].vehicle_id == query.vehicle_id;
      any = any || relevance[i];
    }
    if (!any) {
      ++report.n_skipped;
      continue;
    }
    by_fold[std::size_t(fold)].push_back(relevance);
    pooled.push_back(std::move(relevance));
  }
  if (report.n_skipped > 0)
    std::cerr << "warning: " << report.n_skipped
              << " queries skipped (no relevant gallery item after filtering)\n";

  report.n_queries = pooled.size();
  if (std::find(ks.begin(), ks.end(), 1) == ks.end())
    ks.push_back(1);
  if (std::find(ks.begin(), ks.end(), 5) == ks.end())
    ks.push_back(5);
  for (int k : ks)
    report.rank_accuracy[k] = cmc(pooled, k);
  report.map = mean_average_precision(pooled);

  std::vector<MetricSummary> fold_metrics;
  for (int f = 0; f < folds.n_folds; ++f) {
    const auto& rankings = by_fold[std::size_t(f)];
    FoldMetrics fm{f, rankings.size(), {}};
    if (!rankings.empty()) {
      fm.metrics = summarize(rankings);
      fold_metrics.push_back(fm.metrics);
    }
    report.per_fold.push_back(fm);
  }

  const auto n = double(fold_metrics.size());
  for (const auto& m : fold_metrics) {
    report.fold_mean.rank1 += m.rank1 / n;
    report.fold_mean.rank5 += m.rank5 / n;
    report.fold_mean.map += m.map / n;
  }
  if (fold_metrics.size() > 1) {
    for (const auto& m : fold_metrics) {
      report.fold_stdev.rank1 += std::pow(m.rank1 - report.fold_mean.rank1, 2) / (n - 1);
      report.fold_stdev.rank5 += std::pow(m.rank5 - report.fold_mean.rank5, 2) / (n - 1);
      report.fold_stdev.map += std::pow(m.map - report.fold_mean.map, 2) / (n - 1);
    }
    report.fold_stdev.rank1 = std::sqrt(report.fold_stdev.rank1);
    report.fold_stdev.rank5 = std::sqrt(report.fold_stdev.rank5);
    report.fold_stdev.map = std::sqrt(report.fold_stdev.map);
  }
  return report;
}

TrainingPairs make_training_pairs(const EvalSet& data, const TopologyModel& topology,
                                  const FoldAssignment& folds, int held_out_fold, int window,
                                  int negative_ratio, std::uint64_t seed) {
  if (negative_ratio < 1)
    throw ConfigError("negative_ratio must be positive");

  std::vector<std::size_t> train_queries, train_gallery;
  for (std::size_t q = 0; q < data.queries.size(); ++q) {
    const int f = folds.fold(data.queries[q].vehicle_id);
    if (f >= 0 && f != held_out_fold)
      train_queries.push_back(q);
  }
  for (std::size_t g = 0; g < data.gallery.size(); ++g)
    if (folds.fold(data.gallery[g].vehicle_id) != held_out_fold)
      train_gallery.push_back(g);

  std::vector<std::pair<std::size_t, std::size_t>> positives;
  std::size_t negative_total = 0;
  for (std::size_t q : train_queries) {
    for (std::size_t g : train_gallery) {
      const auto& a = data.queries[q];
      const auto& b = data.gallery[g];
      if (a.image_id == b.image_id)
        continue;
      if (a.vehicle_id == b.vehicle_id)
        positives.emplace_back(q, g);
      else
        ++negative_total;
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> negatives;
  const std::size_t wanted = positives.size() * std::size_t(negative_ratio);
  std::mt19937_64 rng(seed);
  if (wanted >= negative_total) {
    for (std::size_t q : train_queries)
      for (std::size_t g : train_gallery)
        if (data.queries[q].vehicle_id != data.gallery[g].vehicle_id &&
            data.queries[q].image_id != data.gallery[g].image_id)
          negatives.emplace_back(q, g);
  } else {
    std::unordered_set<std::uint64_t> seen;
    std::uniform_int_distribution<std::size_t> pick_q(0, train_queries.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_g(0, train_gallery.size() - 1);
    while (negatives.size() < wanted) {
      const std::size_t q = train_queries[pick_q(rng)];
      const std::size_t g = train_gallery[pick_g(rng)];
      if (data.queries[q].vehicle_id == data.gallery[g].vehicle_id ||
          data.queries[q].image_id == data.gallery[g].image_id)
        continue;
      if (seen.insert((std::uint64_t(q) << 32) | std::uint64_t(g)).second)
        negatives.emplace_back(q, g);
    }
  }

  TrainingPairs out;
  out.pairs.reserve(positives.size() + negatives.size());
  auto emit = [&](std::size_t q, std::size_t g, int label) {
    const auto& a = data.queries[q];
    const auto& b = data.gallery[g];
    out.pairs.push_back({make_fusion_input(topology, data.appearance(q, g), a.camera_id, a.frame,
                                           b.camera_id, b.frame, window),
                         label});
    out.source.emplace_back(q, g);
  };
  for (const auto& [q, g] : positives)
    emit(q, g, 1);
  for (const auto& [q, g] : negatives)
    emit(q, g, 0);
  return out;
}

std::string format_reports(std::span<const EvalReport> reports) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %18s %8s\n", "method", "rank-1", "rank-5",
                "mAP", "fold mAP (sd)", "queries");
  out += line;
  for (const auto& r : reports) {
    const auto rank = [&](int k) {
      const auto it = r.rank_accuracy.find(k);
      return it == r.rank_accuracy.end() ? 0.0 : 100.0 * it->second;
    };
    char fold[64];
    std::snprintf(fold, sizeof fold, "%.2f (%.2f)", 100.0 * r.fold_mean.map,
                  100.0 * r.fold_stdev.map);
    std::snprintf(line, sizeof line, "%-16s %8.2f %8.2f %8.2f %18s %8zu\n", r.method.c_str(),
                  rank(1), rank(5), 100.0 * r.map, fold, r.n_queries);
    out += line;
  }
  return out;
}

} // namespace streid
