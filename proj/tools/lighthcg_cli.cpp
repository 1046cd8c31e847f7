// Command-line driver: dataset generation, staged training, standalone
// structure discovery, evaluation and latent-traversal rendering.
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "lighthcg/causal_gae.hpp"
#include "lighthcg/evaluation.hpp"
#include "lighthcg/scm_synth.hpp"
#include "lighthcg/training.hpp"
#include "lighthcg/vae_core.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lighthcg;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 0;
  scm::ImageConfig image;
  int dataset_n = 600;
  double split_ratio = 0.8;
  vae::VaeConfig vae;
  gae::GaeConfig gae_net;
  train::TrainConfig training;
  gae::DiscoverConfig discover;
  double keep_fraction = 0.25;
};

void reject_unknown(const json& j, const std::vector<std::string>& keys,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
      throw UsageError("unknown config key \"" + it.key() + "\" in " + where);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig load_run_config(const std::string& path) {
  RunConfig c;
  if (path.empty()) return c;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw UsageError("config parse error: " + std::string(e.what()));
  }
  reject_unknown(j, {"seed", "image", "dataset", "vae", "gae", "train",
                     "discover", "keep_fraction"},
                 "top level");
  maybe(j, "seed", c.seed);
  maybe(j, "keep_fraction", c.keep_fraction);
  if (j.contains("image")) {
    const json& ji = j["image"];
    reject_unknown(ji, {"size", "channels", "noise_amplitude", "texture_seed"},
                   "image");
    maybe(ji, "size", c.image.size);
    maybe(ji, "channels", c.image.channels);
    maybe(ji, "noise_amplitude", c.image.noise_amplitude);
    maybe(ji, "texture_seed", c.image.texture_seed);
  }
  if (j.contains("dataset")) {
    const json& jd = j["dataset"];
    reject_unknown(jd, {"n", "split_ratio"}, "dataset");
    maybe(jd, "n", c.dataset_n);
    maybe(jd, "split_ratio", c.split_ratio);
  }
  if (j.contains("vae")) {
    const json& jv = j["vae"];
    reject_unknown(jv, {"height", "width", "channels", "z1_dim", "z2_dim"},
                   "vae");
    maybe(jv, "height", c.vae.height);
    maybe(jv, "width", c.vae.width);
    maybe(jv, "channels", c.vae.channels);
    maybe(jv, "z1_dim", c.vae.z1_dim);
    maybe(jv, "z2_dim", c.vae.z2_dim);
  }
  if (j.contains("gae")) {
    const json& jg = j["gae"];
    reject_unknown(jg, {"hidden"}, "gae");
    maybe(jg, "hidden", c.gae_net.hidden);
  }
  if (j.contains("train")) {
    const json& jt = j["train"];
    reject_unknown(jt,
                   {"epochs", "omega", "beta1", "lambda", "lr_adjacency",
                    "lr_gae", "lr_cvae", "batch_size", "boundaries"},
                   "train");
    maybe(jt, "epochs", c.training.epochs);
    maybe(jt, "omega", c.training.omega);
    maybe(jt, "beta1", c.training.beta1);
    maybe(jt, "lambda", c.training.lambda);
    maybe(jt, "lr_adjacency", c.training.lr_adjacency);
    maybe(jt, "lr_gae", c.training.lr_gae);
    maybe(jt, "lr_cvae", c.training.lr_cvae);
    maybe(jt, "batch_size", c.training.batch_size);
    maybe(jt, "boundaries", c.training.schedule.boundaries);
  }
  if (j.contains("discover")) {
    const json& jd = j["discover"];
    reject_unknown(jd,
                   {"epochs", "lr_adjacency", "lr_network", "lambda",
                    "y_index", "standardize", "hidden"},
                   "discover");
    maybe(jd, "epochs", c.discover.epochs);
    maybe(jd, "lr_adjacency", c.discover.lr_adjacency);
    maybe(jd, "lr_network", c.discover.lr_network);
    maybe(jd, "lambda", c.discover.lambda);
    maybe(jd, "y_index", c.discover.y_index);
    maybe(jd, "standardize", c.discover.standardize);
    maybe(jd, "hidden", c.discover.gae.hidden);
  }
  return c;
}

void save_config_snapshot(const RunConfig& c, const std::string& path) {
  json j;
  j["seed"] = c.seed;
  j["keep_fraction"] = c.keep_fraction;
  j["image"] = {{"size", c.image.size},
                {"channels", c.image.channels},
                {"noise_amplitude", c.image.noise_amplitude},
                {"texture_seed", c.image.texture_seed}};
  j["dataset"] = {{"n", c.dataset_n}, {"split_ratio", c.split_ratio}};
  j["vae"] = {{"height", c.vae.height},
              {"width", c.vae.width},
              {"channels", c.vae.channels},
              {"z1_dim", c.vae.z1_dim},
              {"z2_dim", c.vae.z2_dim}};
  j["gae"] = {{"hidden", c.gae_net.hidden}};
  j["train"] = {{"epochs", c.training.epochs},
                {"omega", c.training.omega},
                {"beta1", c.training.beta1},
                {"lambda", c.training.lambda},
                {"lr_adjacency", c.training.lr_adjacency},
                {"lr_gae", c.training.lr_gae},
                {"lr_cvae", c.training.lr_cvae},
                {"batch_size", c.training.batch_size},
                {"boundaries", c.training.schedule.boundaries}};
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

Eigen::MatrixXd read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read CSV: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t used = 0;
        double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace((unsigned char)cell[used]))
          ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        throw std::runtime_error("malformed CSV at line " +
                                 std::to_string(lineno) + " of " + path);
      }
    }
    if (!rows.empty() && row.size() != rows[0].size())
      throw std::runtime_error("ragged CSV at line " + std::to_string(lineno) +
                               " of " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty CSV: " + path);
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[0].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  out.precision(12);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out << m(i, j) << (j + 1 < m.cols() ? "," : "");
    out << "\n";
  }
}

void write_imatrix_csv(const std::string& path, const Eigen::MatrixXi& m) {
  write_matrix_csv(path, m.cast<double>());
}

// Truth DAG restricted to its nodes with Y relabeled last, so it lines up
// with the learned adjacency over (Z2, Y).
Eigen::MatrixXi truth_binary_y_last(const scm::GroundTruthDag& dag) {
  const int d = dag.d();
  std::vector<int> map(d);
  int next = 0;
  for (int i = 0; i < d; ++i)
    if (i != dag.y_index) map[i] = next++;
  map[dag.y_index] = d - 1;
  Eigen::MatrixXi b = Eigen::MatrixXi::Zero(d, d);
  Eigen::MatrixXi src = dag.binary();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (src(i, j)) b(map[i], map[j]) = 1;
  return b;
}

struct LoadedRun {
  RunConfig cfg;
  train::TrainedModel model;
};

LoadedRun load_run(const std::string& run_dir, const std::string& config_path) {
  LoadedRun r;
  std::string snap = (fs::path(run_dir) / "config.json").string();
  if (!config_path.empty())
    r.cfg = load_run_config(config_path);
  else if (fs::exists(snap))
    r.cfg = load_run_config(snap);
  if (!fs::exists(fs::path(run_dir) / "model.bin"))
    throw std::runtime_error("missing parameters file: " +
                             (fs::path(run_dir) / "model.bin").string());
  r.cfg.gae_net.d = r.cfg.vae.z2_dim + 1;
  r.model = train::TrainedModel::load(run_dir, r.cfg.vae, r.cfg.gae_net);
  return r;
}

Eigen::MatrixXd latent_mu(const scm::Dataset& ds,
                          const train::TrainedModel& model) {
  auto [mu, lv] = vae::encode(ds.images, model.vae);
  (void)lv;
  return mu;
}

int cmd_generate(const RunConfig& cfg, const std::string& out_dir) {
  scm::GroundTruthDag dag = scm::GroundTruthDag::default_glaucoma();
  auto [train_ds, test_ds] =
      scm::generate_dataset(cfg.dataset_n, dag, cfg.image, cfg.split_ratio,
                            cfg.seed);
  scm::save_dataset((fs::path(out_dir) / "train").string(), train_ds, &dag);
  scm::save_dataset((fs::path(out_dir) / "test").string(), test_ds, &dag);
  std::cerr << "wrote " << train_ds.images.count() << " train / "
            << test_ds.images.count() << " test images under " << out_dir
            << "\n";
  return 0;
}

int cmd_train(RunConfig cfg, const std::string& data_dir,
              const std::string& run_dir) {
  scm::Dataset ds = scm::load_image_dataset(data_dir, cfg.image);
  cfg.training.seed = cfg.seed;
  cfg.training.verbose = true;
  cfg.vae.height = cfg.image.size;
  cfg.vae.width = cfg.image.size;
  cfg.vae.channels = cfg.image.channels;
  train::TrainRun run = train::train(ds, cfg.vae, cfg.gae_net, cfg.training);
  fs::create_directories(run_dir);
  run.model.save(run_dir);
  train::write_history_csv((fs::path(run_dir) / "history.csv").string(),
                           run.history);
  save_config_snapshot(cfg, (fs::path(run_dir) / "config.json").string());
  const auto& last = run.history.back();
  std::cout << "final epoch " << last.epoch << ": total=" << last.total
            << " cvae=" << last.cvae << " gae=" << last.gae
            << " hsic1=" << last.hsic1 << " hsic2=" << last.hsic2
            << " h(A)=" << last.h << "\n";
  return 0;
}

int cmd_discover(const RunConfig& cfg, const std::string& csv_path,
                 const std::string& truth_path, const std::string& out_dir) {
  Eigen::MatrixXd data = read_csv_matrix(csv_path);
  fs::create_directories(out_dir);
  const int d = static_cast<int>(data.cols());
  if (d == 1) {
    write_matrix_csv((fs::path(out_dir) / "adjacency.csv").string(),
                     Eigen::MatrixXd::Zero(1, 1));
    write_imatrix_csv((fs::path(out_dir) / "adjacency_binarized.csv").string(),
                      Eigen::MatrixXi::Zero(1, 1));
    std::cout << "single variable; trivial empty graph\n";
    return 0;
  }
  gae::DiscoverConfig dc = cfg.discover;
  dc.gae.d = d;
  dc.seed = cfg.seed;
  gae::DiscoveryRun run = gae::standalone_discover(data, dc);
  write_matrix_csv((fs::path(out_dir) / "adjacency.csv").string(),
                   run.adjacency.weights);
  Eigen::MatrixXi bin = gae::binarize_adjacency(run.adjacency,
                                                cfg.keep_fraction);
  write_imatrix_csv((fs::path(out_dir) / "adjacency_binarized.csv").string(),
                    bin);
  std::cout << "h(A) = " << run.history.back().h << "\n";
  if (!truth_path.empty()) {
    scm::GroundTruthDag dag = scm::GroundTruthDag::load(truth_path);
    if (dag.d() != d)
      throw std::runtime_error("truth DAG has " + std::to_string(dag.d()) +
                               " nodes, data has " + std::to_string(d));
    std::vector<int> fixed;
    if (dc.y_index >= 0) fixed.push_back(d - 1);
    int shd = eval::shd_best_match(
        bin, dc.y_index >= 0 ? truth_binary_y_last(dag) : dag.binary(), fixed);
    std::cout << "SHD = " << shd << "\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& run_dir, const std::string& data_dir,
                 const std::string& config_path, std::uint64_t seed,
                 double keep_fraction) {
  LoadedRun run = load_run(run_dir, config_path);
  scm::Dataset train_ds = scm::load_image_dataset(
      (fs::path(data_dir) / "train").string(), run.cfg.image);
  scm::Dataset test_ds = scm::load_image_dataset(
      (fs::path(data_dir) / "test").string(), run.cfg.image);

  Eigen::MatrixXd mu_train = latent_mu(train_ds, run.model);
  Eigen::MatrixXd mu_test = latent_mu(test_ds, run.model);
  const int z1d = run.cfg.vae.z1_dim, z2d = run.cfg.vae.z2_dim;

  json report;
  std::vector<double> mi(z1d + z2d);
  for (int j = 0; j < z1d + z2d; ++j)
    mi[j] = eval::mutual_information_knn(mu_test.col(j), test_ds.labels);
  report["mi_z1"] = std::vector<double>(mi.begin(), mi.begin() + z1d);
  report["mi_z2"] = std::vector<double>(mi.begin() + z1d, mi.end());

  Eigen::MatrixXi bin =
      gae::binarize_adjacency(run.model.adjacency, keep_fraction);
  std::string dag_path = (fs::path(data_dir) / "train" / "dag.json").string();
  if (fs::exists(dag_path)) {
    scm::GroundTruthDag dag = scm::GroundTruthDag::load(dag_path);
    int shd = eval::shd_best_match(bin, truth_binary_y_last(dag),
                                   {run.cfg.vae.z2_dim});
    report["shd"] = shd;
  }

  eval::ClassifierConfig ccfg;
  ccfg.seed = seed;
  eval::Classifier clf = eval::train_downstream_classifier(
      mu_train.middleCols(z1d, z2d),
      train_ds.labels, ccfg);
  Eigen::VectorXd probs = clf.predict(mu_test.middleCols(z1d, z2d));
  eval::MetricsReport metrics =
      eval::classification_metrics(probs, test_ds.labels);
  report["metrics"] = json::parse(metrics.to_json());

  // Traversal strips over 50 encoded samples per causal coordinate.
  std::mt19937_64 rng(seed);
  std::vector<int> order(test_ds.images.count());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int nshow = std::min(50, test_ds.images.count());
  scm::ImageBatch sample;
  sample.height = test_ds.images.height;
  sample.width = test_ds.images.width;
  sample.channels = test_ds.images.channels;
  sample.pixels.resize(nshow, test_ds.images.pixels.cols());
  for (int i = 0; i < nshow; ++i)
    sample.pixels.row(i) = test_ds.images.pixels.row(order[i]);
  std::vector<eval::DifferenceMapStack> stacks;
  for (int f = 0; f < z2d; ++f) {
    Eigen::VectorXd col = mu_train.col(z1d + f);
    std::vector<double> sorted(col.data(), col.data() + col.size());
    std::sort(sorted.begin(), sorted.end());
    double baseline = sorted[sorted.size() / 2];
    stacks.push_back(eval::traversal_maps(
        run.model, sample, f,
        eval::make_grid(col.minCoeff(), col.maxCoeff()), baseline));
  }
  eval::write_map_strips((fs::path(run_dir) / "traversal").string(), stacks);

  std::ofstream jset(fs::path(run_dir) / "metrics.json");
  jset << report.dump(2) << "\n";
  std::ofstream tset(fs::path(run_dir) / "metrics.txt");
  tset << metrics.to_table();
  tset << "mi:";
  for (double v : mi) tset << " " << v;
  tset << "\n";
  if (report.contains("shd")) tset << "shd: " << report["shd"] << "\n";
  std::cout << metrics.to_table();
  if (report.contains("shd")) std::cout << "SHD = " << report["shd"] << "\n";
  return 0;
}

int cmd_traverse(const std::string& run_dir, const std::string& data_dir,
                 const std::string& config_path, std::uint64_t seed,
                 const std::string& out_dir) {
  LoadedRun run = load_run(run_dir, config_path);
  scm::Dataset ds = scm::load_image_dataset(data_dir, run.cfg.image);
  Eigen::MatrixXd mu = latent_mu(ds, run.model);
  const int z1d = run.cfg.vae.z1_dim, z2d = run.cfg.vae.z2_dim;
  std::mt19937_64 rng(seed);
  std::vector<int> order(ds.images.count());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int nshow = std::min(50, ds.images.count());
  scm::ImageBatch sample;
  sample.height = ds.images.height;
  sample.width = ds.images.width;
  sample.channels = ds.images.channels;
  sample.pixels.resize(nshow, ds.images.pixels.cols());
  for (int i = 0; i < nshow; ++i)
    sample.pixels.row(i) = ds.images.pixels.row(order[i]);
  std::vector<eval::DifferenceMapStack> stacks;
  for (int f = 0; f < z2d; ++f) {
    Eigen::VectorXd col = mu.col(z1d + f);
    std::vector<double> sorted(col.data(), col.data() + col.size());
    std::sort(sorted.begin(), sorted.end());
    stacks.push_back(eval::traversal_maps(
        run.model, sample, f,
        eval::make_grid(col.minCoeff(), col.maxCoeff()),
        sorted[sorted.size() / 2]));
  }
  eval::write_map_strips(out_dir, stacks);
  std::cerr << "wrote traversal strips to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled causal latent pipeline for synthetic fundus data"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, run_dir, csv_path, truth_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int epochs = -1;
  double keep_fraction = -1.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--seed", seed, "random seed")
        ->each([&](const std::string&) { seed_set = true; });
  };

  CLI::App* gen = app.add_subcommand("generate", "synthesize a dataset");
  add_common(gen);
  gen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* tr = app.add_subcommand("train", "run staged training");
  add_common(tr);
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--out", run_dir, "run directory")->required();
  tr->add_option("--epochs", epochs, "override training epochs");

  CLI::App* disc = app.add_subcommand("discover",
                                      "tabular causal structure discovery");
  add_common(disc);
  disc->add_option("--data", csv_path, "CSV of samples (n x d)")->required();
  disc->add_option("--truth", truth_path, "ground-truth DAG JSON");
  disc->add_option("--out", out_dir, "output directory")->required();
  disc->add_option("--epochs", epochs, "override discovery epochs");
  disc->add_option("--keep-fraction", keep_fraction,
                   "binarization keep fraction");

  CLI::App* ev = app.add_subcommand("evaluate", "evaluate a trained run");
  add_common(ev);
  ev->add_option("--run", run_dir, "run directory")->required();
  ev->add_option("--data", data_dir, "dataset root with train/ and test/")
      ->required();
  ev->add_option("--keep-fraction", keep_fraction,
                 "binarization keep fraction");

  CLI::App* tv = app.add_subcommand("traverse", "render traversal maps");
  add_common(tv);
  tv->add_option("--run", run_dir, "run directory")->required();
  tv->add_option("--data", data_dir, "dataset directory")->required();
  tv->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_run_config(config_path);
    if (seed_set) cfg.seed = seed;
    if (epochs >= 0) {
      cfg.training.epochs = epochs;
      cfg.discover.epochs = epochs;
    }
    if (keep_fraction >= 0) cfg.keep_fraction = keep_fraction;

    if (gen->parsed()) return cmd_generate(cfg, out_dir);
    if (tr->parsed()) return cmd_train(cfg, data_dir, run_dir);
    if (disc->parsed())
      return cmd_discover(cfg, csv_path, truth_path, out_dir);
    if (ev->parsed())
      return cmd_evaluate(run_dir, data_dir, config_path, cfg.seed,
                          keep_fraction >= 0 ? keep_fraction
                                             : cfg.keep_fraction);
    if (tv->parsed())
      return cmd_traverse(run_dir, data_dir, config_path, cfg.seed, out_dir);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
