#include "streid/dataio.hpp"

#include "streid/error.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace streid {

namespace {

std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const auto end = line.find(sep, pos);
    if (end == std::string_view::npos) {
      cells.push_back(line.substr(pos));
      return cells;
    }
    cells.push_back(line.substr(pos, end - pos));
    pos = end + 1;
  }
}

bool next_line(std::istream& in, std::string& line, std::size_t& line_no) {
  if (!std::getline(in, line))
    return false;
  ++line_no;
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  if (line_no == 1 && line.starts_with("\xEF\xBB\xBF"))
    line.erase(0, 3);
  return true;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size() && !text.empty();
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in)
    throw InputError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out)
    throw InputError("cannot write " + path.string());
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

} // namespace

std::string read_file(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  auto out = open_out(path, std::ios::binary);
  out.write(content.data(), std::streamsize(content.size()));
  if (!out)
    throw InputError("failed writing " + path.string());
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

// Observations ---------------------------------------------------------------

std::vector<Observation> parse_observations(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(in, line, line_no))
    throw FormatError(source + ": empty file, expected header image_id,vehicle_id,camera_id,frame");
  if (line != "image_id,vehicle_id,camera_id,frame")
    throw FormatError(where(source, 1) + "expected header image_id,vehicle_id,camera_id,frame, got '" +
                      line + "'");

  std::vector<Observation> out;
  std::unordered_set<std::string> seen;
  while (next_line(in, line, line_no)) {
    if (line.empty())
      continue;
    const auto cells = split(line);
    if (cells.size() != 4)
      throw FormatError(where(source, line_no) + "expected 4 columns, got " +
                        std::to_string(cells.size()));
    Observation obs;
    obs.image_id = std::string(cells[0]);
    obs.vehicle_id = std::string(cells[1]);
    if (obs.image_id.empty() || obs.vehicle_id.empty())
      throw FormatError(where(source, line_no) + "empty image_id or vehicle_id");
    if (!parse_number(cells[2], obs.camera_id) || obs.camera_id < 0)
      throw FormatError(where(source, line_no) + "camera_id '" + std::string(cells[2]) +
                        "' is not a non-negative integer");
    if (!parse_number(cells[3], obs.frame) || obs.frame < 0)
      throw FormatError(where(source, line_no) + "frame '" + std::string(cells[3]) +
                        "' is not a non-negative integer");
    if (!seen.insert(obs.image_id).second)
      throw FormatError(where(source, line_no) + "duplicate image_id " + obs.image_id);
    out.push_back(std::move(obs));
  }
  return out;
}

std::vector<Observation> load_observations(const fs::path& path) {
  auto in = open_in(path);
  return parse_observations(in, path.string());
}

void save_observations(const fs::path& path, std::span<const Observation> observations) {
  std::string out = "image_id,vehicle_id,camera_id,frame\n";
  for (const auto& o : observations)
    out += o.image_id + "," + o.vehicle_id + "," + std::to_string(o.camera_id) + "," +
           std::to_string(o.frame) + "\n";
  write_file(path, out);
}

// Similarity matrices --------------------------------------------------------

SimilarityMatrix parse_similarity_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(in, line, line_no))
    throw FormatError(source + ": empty similarity file");
  auto header = split(line);
  if (header.empty() || header[0] != "query_id")
    throw FormatError(where(source, 1) + "first header cell must be query_id");

  SimilarityMatrix m;
  for (std::size_t c = 1; c < header.size(); ++c)
    m.gallery_ids.emplace_back(header[c]);
  const auto cols = m.gallery_ids.size();

  std::vector<double> values;
  while (next_line(in, line, line_no)) {
    if (line.empty())
      continue;
    const auto cells = split(line);
    if (cells.size() != cols + 1)
      throw FormatError(where(source, line_no) + "expected " + std::to_string(cols + 1) +
                        " cells, got " + std::to_string(cells.size()));
    m.query_ids.emplace_back(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_number(cells[c], v) || !std::isfinite(v))
        throw FormatError(where(source, line_no) + "bad similarity value '" +
                          std::string(cells[c]) + "'");
      values.push_back(v);
    }
  }
  m.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), Eigen::Index(m.query_ids.size()), Eigen::Index(cols));
  return m;
}

SimilarityMatrix load_similarity_csv(const fs::path& path) {
  auto in = open_in(path);
  return parse_similarity_csv(in, path.string());
}

void save_similarity_csv(const fs::path& path, const SimilarityMatrix& m) {
  m.validate();
  std::string out = "query_id";
  for (const auto& g : m.gallery_ids)
    out += "," + g;
  out += "\n";
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    out += m.query_ids[std::size_t(r)];
    for (Eigen::Index c = 0; c < m.values.cols(); ++c)
      out += "," + format_double(m.values(r, c));
    out += "\n";
  }
  write_file(path, out);
}

namespace {

constexpr std::string_view similarity_magic = "STSM";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(char((v >> (8 * i)) & 0xFF));
}

class ByteReader {
public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8, "integer");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_ + std::size_t(i)])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string text() {
    const auto len = u64();
    need(len, "id");
    std::string s(bytes_.substr(pos_, std::size_t(len)));
    pos_ += std::size_t(len);
    return s;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  void need(std::uint64_t n, const char* what) {
    if (n > remaining())
      throw FormatError(std::string("similarity binary: truncated while reading ") + what);
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

} // namespace

std::string encode_similarity_binary(const SimilarityMatrix& m) {
  m.validate();
  std::string out(similarity_magic);
  put_u64(out, std::uint64_t(m.values.rows()));
  put_u64(out, std::uint64_t(m.values.cols()));
  for (const auto* ids : {&m.query_ids, &m.gallery_ids})
    for (const auto& id : *ids) {
      put_u64(out, id.size());
      out += id;
    }
  out.reserve(out.size() + std::size_t(m.values.size()) * 8);
  for (Eigen::Index r = 0; r < m.values.rows(); ++r)
    for (Eigen::Index c = 0; c < m.values.cols(); ++c)
      put_u64(out, std::bit_cast<std::uint64_t>(m.values(r, c)));
  return out;
}

SimilarityMatrix decode_similarity_binary(std::string_view bytes) {
  if (!bytes.starts_with(similarity_magic))
    throw FormatError("similarity binary: magic bytes mismatch (expected STSM)");
  ByteReader in(bytes.substr(similarity_magic.size()));
  const auto rows = in.u64();
  const auto cols = in.u64();
  // Every id needs at least its 8-byte length prefix.
  if (rows > in.remaining() / 8 || cols > in.remaining() / 8)
    throw FormatError("similarity binary: dimensions exceed file size");

  SimilarityMatrix m;
  m.query_ids.reserve(std::size_t(rows));
  for (std::uint64_t r = 0; r < rows; ++r)
    m.query_ids.push_back(in.text());
  m.gallery_ids.reserve(std::size_t(cols));
  for (std::uint64_t c = 0; c < cols; ++c)
    m.gallery_ids.push_back(in.text());

  if (cols != 0 && rows > std::numeric_limits<std::uint64_t>::max() / cols)
    throw FormatError("similarity binary: dimension overflow");
  const auto cells = rows * cols;
  if (cells > in.remaining() / 8)
    throw FormatError("similarity binary: truncated value block");
  if (in.remaining() != cells * 8)
    throw FormatError("similarity binary: trailing bytes after value block");

  m.values.resize(Eigen::Index(rows), Eigen::Index(cols));
  for (Eigen::Index r = 0; r < m.values.rows(); ++r)
    for (Eigen::Index c = 0; c < m.values.cols(); ++c)
      m.values(r, c) = in.f64();
  if (!m.values.allFinite())
    throw FormatError("similarity binary: non-finite values");
  return m;
}

SimilarityMatrix load_similarity_binary(const fs::path& path) {
  return decode_similarity_binary(read_file(path));
}

void save_similarity_binary(const fs::path& path, const SimilarityMatrix& m) {
  write_file(path, encode_similarity_binary(m));
}

SimilarityMatrix load_similarity(const fs::path& path) {
  char magic[4] = {};
  {
    auto in = open_in(path, std::ios::binary);
    in.read(magic, 4);
    if (in.gcount() == 4 && std::string_view(magic, 4) == similarity_magic)
      return load_similarity_binary(path);
  }
  return load_similarity_csv(path);
}

// Topology -------------------------------------------------------------------

namespace {

Json vector_to_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from_json(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), Eigen::Index(values.size()));
}

template <typename Fn>
auto parse_guard(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const Json::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
}

} // namespace

Json topology_to_json(const TopologyModel& model) {
  Json j;
  j["n_cameras"] = model.n_cameras;
  j["bin_count"] = model.geometry.bin_count;
  j["bin_width"] = model.geometry.bin_width;
  j["alpha"] = model.alpha;
  // An infinite beta (fixed bandwidth) serializes as null.
  j["beta"] = std::isinf(model.beta) ? Json(nullptr) : Json(model.beta);
  Json entries = Json::array();
  for (const auto& e : model.entries)
    entries.push_back({{"from", e.from_camera},
                       {"to", e.to_camera},
                       {"sigma", e.sigma},
                       {"pair_count", e.pair_count},
                       {"pdf", vector_to_json(e.pdf)}});
  j["entries"] = std::move(entries);
  return j;
}

TopologyModel topology_from_json(const Json& j) {
  auto model = parse_guard("topology json", [&] {
    TopologyModel m;
    m.n_cameras = j.at("n_cameras").get<int>();
    m.geometry.bin_count = j.at("bin_count").get<int>();
    m.geometry.bin_width = j.at("bin_width").get<int>();
    m.alpha = j.at("alpha").get<double>();
    m.beta = j.at("beta").is_null() ? std::numeric_limits<double>::infinity()
                                    : j.at("beta").get<double>();
    for (const auto& e : j.at("entries"))
      m.entries.push_back({e.at("from").get<int>(), e.at("to").get<int>(),
                           e.at("sigma").get<double>(), e.at("pair_count").get<std::int64_t>(),
                           vector_from_json(e.at("pdf"))});
    return m;
  });
  model.validate();
  return model;
}

void save_topology(const fs::path& path, const TopologyModel& model) {
  write_json(path, topology_to_json(model));
}

TopologyModel load_topology(const fs::path& path) { return topology_from_json(read_json(path)); }

// Fusion model ---------------------------------------------------------------

Json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"seed", c.seed},
          {"negative_ratio", c.negative_ratio}};
}

TrainConfig train_config_from_json(const Json& j) {
  return parse_guard("train config json", [&] {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.seed = j.value("seed", c.seed);
    c.negative_ratio = j.value("negative_ratio", c.negative_ratio);
    return c;
  });
}

Json fusion_model_to_json(const FusionModel& model) {
  Json j;
  j["window"] = model.window;
  j["input_dim"] = model.input_dim();
  j["hidden_dim"] = model.hidden_dim();
  std::vector<double> w1;
  w1.reserve(std::size_t(model.w1.size()));
  for (Eigen::Index r = 0; r < model.w1.rows(); ++r)
    for (Eigen::Index c = 0; c < model.w1.cols(); ++c)
      w1.push_back(model.w1(r, c));
  j["w1"] = w1;
  j["b1"] = vector_to_json(model.b1);
  j["w2"] = vector_to_json(model.w2);
  j["b2"] = model.b2;
  j["train_config"] = model.train_config ? train_config_to_json(*model.train_config) : Json(nullptr);
  j["final_loss"] = model.final_loss;
  return j;
}

FusionModel fusion_model_from_json(const Json& j) {
  auto model = parse_guard("fusion model json", [&] {
    FusionModel m;
    m.window = j.at("window").get<int>();
    if (m.window < 0)
      throw FormatError("fusion model json: negative window");
    if (j.at("input_dim").get<int>() != m.input_dim() || j.at("hidden_dim").get<int>() != m.hidden_dim())
      throw FormatError("fusion model json: dimensions do not match window");
    const auto w1 = j.at("w1").get<std::vector<double>>();
    if (w1.size() != std::size_t(m.input_dim()) * std::size_t(m.hidden_dim()))
      throw FormatError("fusion model json: w1 has " + std::to_string(w1.size()) + " values");
    m.w1 = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w1.data(), m.hidden_dim(), m.input_dim());
    m.b1 = vector_from_json(j.at("b1"));
    m.w2 = vector_from_json(j.at("w2"));
    m.b2 = j.at("b2").get<double>();
    if (j.contains("train_config") && !j.at("train_config").is_null())
      m.train_config = train_config_from_json(j.at("train_config"));
    m.final_loss = j.value("final_loss", 0.0);
    return m;
  });
  model.validate();
  return model;
}

void save_fusion_model(const fs::path& path, const FusionModel& model) {
  write_json(path, fusion_model_to_json(model));
}

FusionModel load_fusion_model(const fs::path& path) { return fusion_model_from_json(read_json(path)); }

void save_loss_log(const fs::path& path, std::span<const double> trace) {
  std::string out = "epoch,mean_loss\n";
  for (std::size_t e = 0; e < trace.size(); ++e)
    out += std::to_string(e) + "," + format_double(trace[e]) + "\n";
  write_file(path, out);
}

// Folds and reports ----------------------------------------------------------

Json folds_to_json(const FoldAssignment& folds) {
  return {{"n_folds", folds.n_folds}, {"fold_of", folds.fold_of}};
}

FoldAssignment folds_from_json(const Json& j) {
  return parse_guard("folds json", [&] {
    FoldAssignment f;
    f.n_folds = j.at("n_folds").get<int>();
    f.fold_of = j.at("fold_of").get<std::map<std::string, int>>();
    for (const auto& [id, fold] : f.fold_of)
      if (fold < 0 || fold >= f.n_folds)
        throw FormatError("folds json: fold index out of range for " + id);
    return f;
  });
}

namespace {

Json summary_to_json(const MetricSummary& m) {
  return {{"rank1", m.rank1}, {"rank5", m.rank5}, {"mAP", m.map}};
}

} // namespace

Json report_to_json(const EvalReport& report) {
  Json ranks = Json::object();
  for (const auto& [k, v] : report.rank_accuracy)
    ranks[std::to_string(k)] = v;
  Json folds = Json::array();
  for (const auto& f : report.per_fold) {
    Json entry = summary_to_json(f.metrics);
    entry["fold"] = f.fold;
    entry["n_queries"] = f.n_queries;
    folds.push_back(std::move(entry));
  }
  return {{"method", report.method},
          {"rank_accuracy", ranks},
          {"mAP", report.map},
          {"per_fold", folds},
          {"fold_mean", summary_to_json(report.fold_mean)},
          {"fold_stdev", summary_to_json(report.fold_stdev)},
          {"n_queries", report.n_queries},
          {"n_skipped", report.n_skipped}};
}

void save_reports(const fs::path& path, std::span<const EvalReport> reports) {
  Json j = Json::array();
  for (const auto& r : reports)
    j.push_back(report_to_json(r));
  write_json(path, reports.size() == 1 ? j.at(0) : j);
}

// Simulator ------------------------------------------------------------------

namespace {

Json beta_to_json(const BetaParams& b) { return Json::array({b.a, b.b}); }

BetaParams beta_from_json(const Json& j, BetaParams fallback) {
  if (j.is_null())
    return fallback;
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2)
    throw FormatError("Beta parameters must be [a, b]");
  return {v[0], v[1]};
}

} // namespace

Json sim_config_to_json(const SimConfig& c) {
  Json edges = Json::array();
  for (const auto& e : c.road_edges)
    edges.push_back({{"from", e.from},
                     {"to", e.to},
                     {"mean_transit_frames", e.mean_transit_frames},
                     {"stdev_frames", e.stdev_frames},
                     {"traffic_weight", e.traffic_weight}});
  return {{"n_cameras", c.n_cameras},
          {"n_vehicles", c.n_vehicles},
          {"n_train_vehicles", c.n_train_vehicles},
          {"n_model_types", c.n_model_types},
          {"road_edges", edges},
          {"frames_horizon", c.frames_horizon},
          {"min_visits", c.min_visits},
          {"max_visits", c.max_visits},
          {"same_id_similarity", beta_to_json(c.same_id_similarity)},
          {"same_cluster_similarity", beta_to_json(c.same_cluster_similarity)},
          {"cross_cluster_similarity", beta_to_json(c.cross_cluster_similarity)},
          {"seed", c.seed}};
}

SimConfig sim_config_from_json(const Json& j) {
  auto config = parse_guard("simulator config json", [&] {
    SimConfig c;
    c.n_cameras = j.at("n_cameras").get<int>();
    c.n_vehicles = j.at("n_vehicles").get<int>();
    c.n_train_vehicles = j.value("n_train_vehicles", c.n_vehicles);
    c.n_model_types = j.at("n_model_types").get<int>();
    for (const auto& e : j.at("road_edges"))
      c.road_edges.push_back({e.at("from").get<int>(), e.at("to").get<int>(),
                              e.at("mean_transit_frames").get<double>(),
                              e.at("stdev_frames").get<double>(),
                              e.value("traffic_weight", 1.0)});
    c.frames_horizon = j.value("frames_horizon", c.frames_horizon);
    c.min_visits = j.value("min_visits", c.min_visits);
    c.max_visits = j.value("max_visits", c.max_visits);
    c.same_id_similarity = beta_from_json(j.value("same_id_similarity", Json()), c.same_id_similarity);
    c.same_cluster_similarity =
        beta_from_json(j.value("same_cluster_similarity", Json()), c.same_cluster_similarity);
    c.cross_cluster_similarity =
        beta_from_json(j.value("cross_cluster_similarity", Json()), c.cross_cluster_similarity);
    c.seed = j.value("seed", c.seed);
    return c;
  });
  config.validate();
  return config;
}

SimConfig load_sim_config(const fs::path& path) { return sim_config_from_json(read_json(path)); }

Json ground_truth_to_json(std::span<const EdgeTruth> truth) {
  Json j = Json::array();
  for (const auto& t : truth)
    j.push_back({{"from", t.edge.from},
                 {"to", t.edge.to},
                 {"mean_transit_frames", t.edge.mean_transit_frames},
                 {"stdev_frames", t.edge.stdev_frames},
                 {"traffic_weight", t.edge.traffic_weight},
                 {"transitions", t.transitions}});
  return j;
}

Json ambiguity_to_json(const AmbiguityReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return {{"within_id_mean", opt(r.within_id_mean)},
          {"within_cluster_mean", opt(r.within_cluster_mean)},
          {"cross_cluster_mean", opt(r.cross_cluster_mean)},
          {"within_id_samples", r.within_id_samples},
          {"within_cluster_samples", r.within_cluster_samples},
          {"cross_cluster_samples", r.cross_cluster_samples},
          {"confusable_top_match_fraction", r.confusable_top_match_fraction},
          {"degenerate", r.degenerate}};
}

// Dataset validation ---------------------------------------------------------

void validate_dataset(const Dataset& d) {
  std::unordered_set<std::string> ids;
  for (const auto* split : {&d.train_observations, &d.query_observations, &d.gallery_observations})
    for (const auto& o : *split)
      if (!ids.insert(o.image_id).second)
        throw InputError("dataset: duplicate image_id " + o.image_id);
  if (!d.similarity)
    return;
  d.similarity->validate();
  std::unordered_set<std::string> queries, gallery;
  for (const auto& o : d.query_observations)
    queries.insert(o.image_id);
  for (const auto& o : d.gallery_observations)
    gallery.insert(o.image_id);
  for (const auto& id : d.similarity->query_ids)
    if (!queries.contains(id))
      throw InputError("dataset: similarity query id " + id + " has no query observation");
  for (const auto& id : d.similarity->gallery_ids)
    if (!gallery.contains(id))
      throw InputError("dataset: similarity gallery id " + id + " has no gallery observation");
}

} // namespace streid
