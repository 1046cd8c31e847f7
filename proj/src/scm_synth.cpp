#include "lighthcg/scm_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "lighthcg/image_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace lighthcg::scm {

namespace {

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }
double sigmoid1(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

GroundTruthDag GroundTruthDag::default_glaucoma() {
  GroundTruthDag dag;
  dag.nodes = {"rim", "cup", "vessel", "Y"};
  dag.coeff = Mat::Zero(4, 4);
  dag.coeff(0, 1) = -0.9;  // thin rim -> enlarged cup
  // Label coefficients sized so the Bayes rate of Y given the factors is
  // ~95%; smaller values leave too much label noise for any classifier.
  dag.coeff(0, 3) = -30.0;
  dag.coeff(1, 3) = 30.0;
  dag.coeff(2, 3) = 19.0;
  dag.intercept = Eigen::Vector4d(0.5, 0.5, 0.4, 0.0);
  dag.noise_scale = Eigen::Vector4d(0.16, 0.10, 0.18, 0.0);
  dag.y_index = 3;
  return dag;
}

Eigen::MatrixXi GroundTruthDag::binary() const {
  Eigen::MatrixXi b = Eigen::MatrixXi::Zero(d(), d());
  for (int i = 0; i < d(); ++i)
    for (int j = 0; j < d(); ++j)
      if (coeff(i, j) != 0.0) b(i, j) = 1;
  return b;
}

std::vector<int> GroundTruthDag::topological_order() const {
  int n = d();
  if (y_index >= 0)
    for (int j = 0; j < n; ++j)
      if (coeff(y_index, j) != 0.0)
        throw std::invalid_argument("ground-truth DAG: Y emits an edge");
  std::vector<int> indeg(n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (coeff(i, j) != 0.0) ++indeg[j];
  std::vector<int> order, queue;
  for (int i = 0; i < n; ++i)
    if (indeg[i] == 0) queue.push_back(i);
  while (!queue.empty()) {
    std::sort(queue.begin(), queue.end());
    int u = queue.front();
    queue.erase(queue.begin());
    order.push_back(u);
    for (int j = 0; j < n; ++j)
      if (coeff(u, j) != 0.0 && --indeg[j] == 0) queue.push_back(j);
  }
  if (static_cast<int>(order.size()) != n)
    throw std::invalid_argument("ground-truth DAG contains a cycle");
  return order;
}

void GroundTruthDag::save(const std::string& path) const {
  json j;
  j["nodes"] = nodes;
  j["y_index"] = y_index;
  std::vector<json> edges;
  for (int i = 0; i < d(); ++i)
    for (int k = 0; k < d(); ++k)
      if (coeff(i, k) != 0.0)
        edges.push_back({{"source", nodes[i]},
                         {"target", nodes[k]},
                         {"coefficient", coeff(i, k)}});
  j["edges"] = edges;
  j["intercept"] = std::vector<double>(intercept.data(),
                                       intercept.data() + intercept.size());
  j["noise_scale"] = std::vector<double>(
      noise_scale.data(), noise_scale.data() + noise_scale.size());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dag file: " + path);
  out << j.dump(2) << "\n";
}

GroundTruthDag GroundTruthDag::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dag file: " + path);
  json j = json::parse(in);
  GroundTruthDag dag;
  dag.nodes = j.at("nodes").get<std::vector<std::string>>();
  dag.y_index = j.at("y_index").get<int>();
  int n = dag.d();
  dag.coeff = Mat::Zero(n, n);
  auto index_of = [&](const std::string& name) {
    auto it = std::find(dag.nodes.begin(), dag.nodes.end(), name);
    if (it == dag.nodes.end())
      throw std::runtime_error("dag file references unknown node " + name);
    return static_cast<int>(it - dag.nodes.begin());
  };
  for (const auto& e : j.at("edges"))
    dag.coeff(index_of(e.at("source")), index_of(e.at("target"))) =
        e.at("coefficient").get<double>();
  auto iv = j.at("intercept").get<std::vector<double>>();
  auto nv = j.at("noise_scale").get<std::vector<double>>();
  dag.intercept = Eigen::Map<Eigen::VectorXd>(iv.data(), iv.size());
  dag.noise_scale = Eigen::Map<Eigen::VectorXd>(nv.data(), nv.size());
  dag.topological_order();  // validates
  return dag;
}

FactorTable sample_factors(int n, const GroundTruthDag& dag,
                           std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_factors: n >= 1 required");
  std::vector<int> order = dag.topological_order();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  int d = dag.d();
  Mat values(n, d);
  for (int s = 0; s < n; ++s) {
    for (int node : order) {
      double lin = dag.intercept(node);
      for (int p = 0; p < d; ++p)
        if (dag.coeff(p, node) != 0.0)
          lin += dag.coeff(p, node) * (values(s, p) - 0.5);
      if (node == dag.y_index) {
        values(s, node) = unif(rng) < sigmoid1(lin) ? 1.0 : 0.0;
      } else {
        values(s, node) = clamp01(lin + dag.noise_scale(node) * gauss(rng));
      }
    }
  }
  FactorTable out;
  out.seed = seed;
  int nf = dag.y_index >= 0 ? d - 1 : d;
  out.factors.resize(n, nf);
  int col = 0;
  for (int j = 0; j < d; ++j) {
    if (j == dag.y_index) continue;
    out.factors.col(col++) = values.col(j);
  }
  out.labels.resize(n);
  for (int s = 0; s < n; ++s)
    out.labels(s) = dag.y_index >= 0 ? static_cast<int>(values(s, dag.y_index))
                                     : 0;
  // Label-independent appearance nuisance; separate stream so factor draws
  // are unaffected by its presence.
  std::mt19937_64 rng2(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  out.nuisance.resize(n, 3);
  for (int s = 0; s < n; ++s)
    for (int k = 0; k < 3; ++k) out.nuisance(s, k) = sym(rng2);
  return out;
}

// ---------------------------------------------------------------------------
// renderer

namespace {

struct Geometry {
  double cx, cy, disc_r;
  explicit Geometry(const ImageConfig& cfg)
      : cx(0.5 * cfg.size), cy(0.5 * cfg.size), disc_r(0.30 * cfg.size) {}
};

constexpr int kVessels = 5;

// Fixed texture field shared by every sample of a config.
Eigen::RowVectorXd texture_field(const ImageConfig& cfg) {
  std::mt19937_64 rng(cfg.texture_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::RowVectorXd t(cfg.size * cfg.size * cfg.channels);
  for (Eigen::Index i = 0; i < t.size(); ++i)
    t(i) = cfg.noise_amplitude * gauss(rng);
  return t;
}

}  // namespace

Eigen::RowVectorXd render_single(double rim, double cup, double vessel,
                                 const ImageConfig& cfg, double illum,
                                 double dx, double dy) {
  const int s = cfg.size, c = cfg.channels;
  Geometry g(cfg);
  g.cx += dx * cfg.center_jitter * cfg.size;
  g.cy += dy * cfg.center_jitter * cfg.size;
  const double gain = 1.0 + illum * cfg.illum_jitter;
  const double bg[3] = {0.33, 0.10, 0.07};
  const double rim_base[3] = {0.93, 0.72, 0.45};
  const double cup_col[3] = {1.00, 0.93, 0.72};
  const double vessel_col[3] = {0.40, 0.06, 0.05};
  double rim_brightness = 0.50 + 0.50 * rim;
  double cup_r = 0.75 * g.disc_r * cup;

  Eigen::RowVectorXd px(s * s * c);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      double r = std::hypot(x + 0.5 - g.cx, y + 0.5 - g.cy);
      double a_disc = sigmoid1((g.disc_r - r) / 0.8);
      double a_cup = cup_r > 0 ? sigmoid1((cup_r - r) / 0.8) : 0.0;
      // Peripheral darkening grows with the vessel factor: a low-frequency
      // cue (beyond the thin strokes) that survives decoder blur.
      double dark = 1.0 - 0.30 * vessel * (1.0 - a_disc);
      for (int ch = 0; ch < c; ++ch) {
        int cc = ch % 3;
        double v = bg[cc];
        v = (1 - a_disc) * v + a_disc * rim_base[cc] * rim_brightness;
        v = (1 - a_cup) * v + a_cup * cup_col[cc];
        px((y * s + x) * c + ch) = v * dark;
      }
    }

  // Vessel curves radiating outward; the factor drives wobble amplitude,
  // stroke width and darkness so it stays visible at small resolutions.
  double wobble = 0.15 + 0.95 * vessel;
  double brush = 0.055 * s * (0.75 + 0.85 * vessel) / 3.2;
  double ink = 0.55 + 0.45 * vessel;
  for (int k = 0; k < kVessels; ++k) {
    double theta0 = 2.0 * M_PI * k / kVessels + 0.4;
    for (double tpar = 0.0; tpar <= 1.0; tpar += 0.02) {
      double rr = g.disc_r * (0.55 + 1.25 * tpar);
      double th = theta0 + 0.45 * wobble * std::sin(5.0 * tpar + 1.7 * k);
      double vx = g.cx + rr * std::cos(th);
      double vy = g.cy + rr * std::sin(th);
      int x0 = std::max(0, (int)std::floor(vx - 3 * brush));
      int x1 = std::min(s - 1, (int)std::ceil(vx + 3 * brush));
      int y0 = std::max(0, (int)std::floor(vy - 3 * brush));
      int y1 = std::min(s - 1, (int)std::ceil(vy + 3 * brush));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          double d2 = (x + 0.5 - vx) * (x + 0.5 - vx) +
                      (y + 0.5 - vy) * (y + 0.5 - vy);
          double a = ink * std::exp(-d2 / (2.0 * brush * brush));
          for (int ch = 0; ch < c; ++ch) {
            double& v = px((y * s + x) * c + ch);
            v = (1 - a) * v + a * vessel_col[ch % 3];
          }
        }
    }
  }
  if (gain != 1.0) px = (px * gain).cwiseMin(1.0).cwiseMax(0.0);
  return px;
}

ImageBatch render_fundus(const FactorTable& factors, const ImageConfig& cfg) {
  if (factors.factors.cols() < 3)
    throw std::invalid_argument("render_fundus: expected 3 factor columns");
  ImageBatch batch;
  batch.height = batch.width = cfg.size;
  batch.channels = cfg.channels;
  Eigen::RowVectorXd tex = texture_field(cfg);
  batch.pixels.resize(factors.factors.rows(), tex.size());
  const bool has_nuis = factors.nuisance.rows() == factors.factors.rows() &&
                        factors.nuisance.cols() >= 3;
  for (Eigen::Index i = 0; i < factors.factors.rows(); ++i) {
    double il = has_nuis ? factors.nuisance(i, 0) : 0.0;
    double dx = has_nuis ? factors.nuisance(i, 1) : 0.0;
    double dy = has_nuis ? factors.nuisance(i, 2) : 0.0;
    Eigen::RowVectorXd px =
        render_single(factors.factors(i, 0), factors.factors(i, 1),
                      factors.factors(i, 2), cfg, il, dx, dy) +
        tex;
    batch.pixels.row(i) = px.cwiseMax(0.0).cwiseMin(1.0);
  }
  return batch;
}

Eigen::RowVectorXd factor_mask(FactorKind kind, const ImageConfig& cfg) {
  const int s = cfg.size;
  Geometry g(cfg);
  Eigen::RowVectorXd mask = Eigen::RowVectorXd::Zero(s * s);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      double r = std::hypot(x + 0.5 - g.cx, y + 0.5 - g.cy);
      bool inside = false;
      switch (kind) {
        case FactorKind::Cup:
          inside = r <= 0.85 * g.disc_r;
          break;
        case FactorKind::Rim:
          inside = r >= 0.20 * g.disc_r && r <= 1.25 * g.disc_r;
          break;
        case FactorKind::Vessel:
          inside = r >= 0.50 * g.disc_r;
          break;
      }
      if (inside) mask(y * s + x) = 1.0;
    }
  return mask;
}

std::pair<Dataset, Dataset> generate_dataset(int n, const GroundTruthDag& dag,
                                             const ImageConfig& cfg,
                                             double split_ratio,
                                             std::uint64_t seed) {
  if (n < 4) throw std::invalid_argument("generate_dataset: n >= 4 required");
  if (!(split_ratio > 0.0 && split_ratio < 1.0))
    throw std::invalid_argument("split_ratio out of range");
  FactorTable table = sample_factors(n, dag, seed);
  ImageBatch images = render_fundus(table, cfg);
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed ^ 0xda3e39cb94b95bdbULL);
  std::shuffle(idx.begin(), idx.end(), rng);
  int n_train = static_cast<int>(std::round(split_ratio * n));
  n_train = std::max(1, std::min(n - 1, n_train));

  auto subset = [&](int begin, int count, const std::string& tag) {
    Dataset ds;
    ds.split = tag;
    ds.images.height = images.height;
    ds.images.width = images.width;
    ds.images.channels = images.channels;
    ds.images.pixels.resize(count, images.pixels.cols());
    ds.labels.resize(count);
    FactorTable ft;
    ft.seed = seed;
    ft.factors.resize(count, table.factors.cols());
    ft.nuisance.resize(count, table.nuisance.cols());
    ft.labels.resize(count);
    for (int i = 0; i < count; ++i) {
      int src = idx[begin + i];
      ds.images.pixels.row(i) = images.pixels.row(src);
      ds.labels(i) = table.labels(src);
      ft.factors.row(i) = table.factors.row(src);
      if (table.nuisance.rows() > 0)
        ft.nuisance.row(i) = table.nuisance.row(src);
      ft.labels(i) = table.labels(src);
    }
    ds.factors = std::move(ft);
    return ds;
  };
  return {subset(0, n_train, "train"), subset(n_train, n - n_train, "test")};
}

void save_dataset(const std::string& dir, const Dataset& ds,
                  const GroundTruthDag* dag) {
  fs::create_directories(fs::path(dir) / "images");
  std::ofstream labels(fs::path(dir) / "labels.csv");
  labels << "filename,label\n";
  char name[32];
  for (int i = 0; i < ds.images.count(); ++i) {
    std::snprintf(name, sizeof(name), "%04d.png", i);
    img::Image im = img::from_unit(ds.images.pixels.row(i), ds.images.height,
                                   ds.images.width, ds.images.channels);
    img::write_png((fs::path(dir) / "images" / name).string(), im);
    labels << name << "," << ds.labels(i) << "\n";
  }
  if (ds.factors) {
    std::ofstream fac(fs::path(dir) / "factors.csv");
    fac << "rim,cup,vessel,label\n";
    fac.precision(10);
    for (Eigen::Index i = 0; i < ds.factors->factors.rows(); ++i) {
      for (Eigen::Index j = 0; j < ds.factors->factors.cols(); ++j)
        fac << ds.factors->factors(i, j) << ",";
      fac << ds.factors->labels(i) << "\n";
    }
  }
  if (dag) dag->save((fs::path(dir) / "dag.json").string());
}

namespace {

Dataset load_from_labels_csv(const fs::path& root, const ImageConfig& cfg) {
  std::ifstream in(root / "labels.csv");
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::pair<std::string, int>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("malformed labels.csv line: " + line);
    rows.emplace_back(line.substr(0, comma),
                      std::stoi(line.substr(comma + 1)));
  }
  std::sort(rows.begin(), rows.end());
  Dataset ds;
  ds.images.height = ds.images.width = cfg.size;
  ds.images.channels = cfg.channels;
  ds.images.pixels.resize(rows.size(), cfg.size * cfg.size * cfg.channels);
  ds.labels.resize(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    fs::path p = root / "images" / rows[i].first;
    if (!fs::exists(p))
      throw std::runtime_error("labels.csv references missing file: " +
                               p.string());
    img::Image im = img::resize(img::read_png(p.string()), cfg.size, cfg.size);
    if (im.channels != cfg.channels)
      throw std::runtime_error("unexpected channel count in " + p.string());
    ds.images.pixels.row(static_cast<Eigen::Index>(i)) = img::to_unit(im);
    ds.labels(static_cast<Eigen::Index>(i)) = rows[i].second;
  }
  // Optional factor sidecar from the synthetic generator.
  if (fs::exists(root / "factors.csv")) {
    std::ifstream fac(root / "factors.csv");
    std::getline(fac, line);
    std::vector<std::array<double, 4>> vals;
    while (std::getline(fac, line)) {
      if (line.empty()) continue;
      std::array<double, 4> row{};
      size_t pos = 0;
      for (int j = 0; j < 4; ++j) {
        size_t next = line.find(',', pos);
        row[j] = std::stod(line.substr(pos, next - pos));
        pos = next == std::string::npos ? line.size() : next + 1;
      }
      vals.push_back(row);
    }
    FactorTable ft;
    ft.factors.resize(vals.size(), 3);
    ft.labels.resize(vals.size());
    for (size_t i = 0; i < vals.size(); ++i) {
      for (int j = 0; j < 3; ++j)
        ft.factors(static_cast<Eigen::Index>(i), j) = vals[i][j];
      ft.labels(static_cast<Eigen::Index>(i)) = static_cast<int>(vals[i][3]);
    }
    ds.factors = std::move(ft);
  }
  return ds;
}

Dataset load_from_class_dirs(const fs::path& root, const ImageConfig& cfg) {
  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  std::sort(classes.begin(), classes.end());
  if (classes.empty())
    throw std::runtime_error("no labels.csv and no class subdirectories in " +
                             root.string());
  std::vector<std::pair<std::string, int>> files;  // path, label
  for (size_t c = 0; c < classes.size(); ++c) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(root / classes[c]))
      if (e.is_regular_file()) names.push_back(e.path().string());
    std::sort(names.begin(), names.end());
    for (auto& n : names) files.emplace_back(n, static_cast<int>(c));
  }
  Dataset ds;
  ds.images.height = ds.images.width = cfg.size;
  ds.images.channels = cfg.channels;
  ds.images.pixels.resize(files.size(), cfg.size * cfg.size * cfg.channels);
  ds.labels.resize(files.size());
  for (size_t i = 0; i < files.size(); ++i) {
    img::Image im =
        img::resize(img::read_png(files[i].first), cfg.size, cfg.size);
    if (im.channels != cfg.channels)
      throw std::runtime_error("unexpected channel count in " +
                               files[i].first);
    ds.images.pixels.row(static_cast<Eigen::Index>(i)) = img::to_unit(im);
    ds.labels(static_cast<Eigen::Index>(i)) = files[i].second;
  }
  return ds;
}

}  // namespace

Dataset load_image_dataset(const std::string& root, const ImageConfig& cfg) {
  fs::path r(root);
  if (!fs::exists(r))
    throw std::runtime_error("dataset root does not exist: " + root);
  if (fs::exists(r / "labels.csv")) return load_from_labels_csv(r, cfg);
  return load_from_class_dirs(r, cfg);
}

}  // namespace lighthcg::scm
