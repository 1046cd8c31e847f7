// Python bindings for the main operations: kernel dependence measures,
// acyclicity, tabular causal discovery, synthetic data generation, staged
// training and the evaluation metrics. Images cross the boundary as flat
// (n, height*width*channels) float64 arrays in HWC row order.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lighthcg/causal_gae.hpp"
#include "lighthcg/evaluation.hpp"
#include "lighthcg/kernel_stats.hpp"
#include "lighthcg/scm_synth.hpp"
#include "lighthcg/training.hpp"
#include "lighthcg/vae_core.hpp"

namespace py = pybind11;
using namespace lighthcg;
using Mat = Eigen::MatrixXd;

namespace {

py::dict dataset_to_dict(const scm::Dataset& ds) {
  py::dict d;
  d["images"] = ds.images.pixels;
  d["height"] = ds.images.height;
  d["width"] = ds.images.width;
  d["channels"] = ds.images.channels;
  d["labels"] = ds.labels;
  if (ds.factors) d["factors"] = ds.factors->factors;
  return d;
}

scm::ImageBatch batch_from(const Mat& pixels, int height, int width,
                           int channels) {
  if (pixels.cols() != static_cast<Eigen::Index>(height) * width * channels)
    throw std::invalid_argument("images: column count != height*width*channels");
  scm::ImageBatch b;
  b.pixels = pixels;
  b.height = height;
  b.width = width;
  b.channels = channels;
  return b;
}

py::dict history_to_dict(const std::vector<train::EpochRecord>& hist) {
  const int n = static_cast<int>(hist.size());
  Mat m(n, 9);
  for (int i = 0; i < n; ++i) {
    const auto& r = hist[i];
    m.row(i) << r.epoch, r.total, r.cvae, r.gae, r.hsic1, r.hsic2, r.h,
        r.alpha, r.rho;
  }
  py::dict d;
  d["columns"] = std::vector<std::string>{"epoch", "loss_total", "loss_cvae",
                                          "loss_gae", "loss_h1", "loss_h2",
                                          "h", "alpha", "rho"};
  d["values"] = m;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Split-latent causal representation pipeline (C++ core)";

  // --- kernel statistics
  m.def("median_heuristic_bandwidth", &kstats::median_heuristic_bandwidth,
        py::arg("samples"),
        "Median pairwise distance (zero distances excluded).");
  m.def("hsic_normalized", &kstats::hsic_normalized, py::arg("x"),
        py::arg("y"),
        "Normalized HSIC in [0, 1] with median-heuristic RBF kernels.");
  m.def("disentanglement_loss", &kstats::disentanglement_loss, py::arg("z1"),
        py::arg("z2"), py::arg("y"), py::arg("omega"),
        "mean nHSIC(z1_j, y) - omega * mean nHSIC(z2_j, y).");

  // --- acyclicity
  m.def("matrix_exponential", &gae::matrix_exponential, py::arg("m"));
  m.def("acyclicity",
        static_cast<double (*)(const Mat&)>(&gae::acyclicity), py::arg("a"),
        "tr(exp(A*A)) - d; zero exactly for DAGs.");
  m.def("acyclicity_gradient", &gae::acyclicity_gradient, py::arg("a"));

  // --- tabular causal discovery
  m.def(
      "discover",
      [](const Mat& data, int epochs, int y_index, double lambda,
         double keep_fraction, bool standardize, std::uint64_t seed) {
        gae::DiscoverConfig cfg;
        cfg.epochs = epochs;
        cfg.y_index = y_index;
        cfg.lambda = lambda;
        cfg.standardize = standardize;
        cfg.seed = seed;
        cfg.gae.d = static_cast<int>(data.cols());
        gae::DiscoveryRun run = gae::standalone_discover(data, cfg);
        py::dict d;
        d["weights"] = run.adjacency.weights;
        d["binarized"] = gae::binarize_adjacency(run.adjacency, keep_fraction);
        d["h"] = run.history.back().h;
        return d;
      },
      py::arg("data"), py::arg("epochs") = 1500, py::arg("y_index") = -1,
      py::arg("lambda_l1") = 0.01, py::arg("keep_fraction") = 0.25,
      py::arg("standardize") = true, py::arg("seed") = 0,
      "Fit the graph autoencoder to tabular samples (n x d); returns the "
      "weighted and binarized adjacency and the final acyclicity value.");

  // --- synthetic data
  m.def(
      "generate",
      [](int n, int size, double split_ratio, std::uint64_t seed) {
        scm::GroundTruthDag dag = scm::GroundTruthDag::default_glaucoma();
        scm::ImageConfig icfg;
        icfg.size = size;
        auto [tr, te] = scm::generate_dataset(n, dag, icfg, split_ratio, seed);
        py::dict d;
        d["train"] = dataset_to_dict(tr);
        d["test"] = dataset_to_dict(te);
        d["dag"] = dag.binary();
        d["nodes"] = dag.nodes;
        return d;
      },
      py::arg("n"), py::arg("size") = 64, py::arg("split_ratio") = 0.5,
      py::arg("seed") = 0,
      "Sample the ground-truth structural model and render fundus images.");

  // --- training
  m.def(
      "train",
      [](const Mat& images, int height, int width, int channels,
         const Eigen::VectorXi& labels, int epochs, int batch_size,
         std::uint64_t seed, const std::string& out_dir) {
        scm::Dataset ds;
        ds.images = batch_from(images, height, width, channels);
        ds.labels = labels;
        vae::VaeConfig vcfg;
        vcfg.height = height;
        vcfg.width = width;
        vcfg.channels = channels;
        gae::GaeConfig gcfg;
        train::TrainConfig tcfg;
        tcfg.epochs = epochs;
        tcfg.batch_size = batch_size;
        tcfg.seed = seed;
        train::TrainRun run = train::train(ds, vcfg, gcfg, tcfg);
        if (!out_dir.empty()) {
          run.model.save(out_dir);
          train::write_history_csv(out_dir + "/history.csv", run.history);
        }
        auto [mu, lv] = vae::encode(ds.images, run.model.vae);
        py::dict d;
        d["history"] = history_to_dict(run.history);
        d["adjacency"] = run.model.adjacency.weights;
        d["mu"] = mu;
        return d;
      },
      py::arg("images"), py::arg("height"), py::arg("width"),
      py::arg("channels"), py::arg("labels"), py::arg("epochs") = 400,
      py::arg("batch_size") = 0, py::arg("seed") = 0, py::arg("out_dir") = "",
      "Staged training of the split-latent model plus adjacency; returns "
      "the loss history, learned adjacency and posterior means.");

  // --- evaluation
  m.def("mutual_information", &eval::mutual_information_knn,
        py::arg("feature"), py::arg("labels"), py::arg("k") = 5,
        "k-NN mutual information between a scalar feature and class labels.");
  m.def("shd", &eval::shd_best_match, py::arg("estimated"), py::arg("truth"),
        py::arg("fixed_nodes") = std::vector<int>{},
        "Structural Hamming distance under the best relabeling of "
        "non-fixed nodes; reversals cost 1.");
  m.def(
      "classification_metrics",
      [](const Eigen::VectorXd& probs, const Eigen::VectorXi& labels,
         double threshold) {
        eval::MetricsReport r = eval::classification_metrics(probs, labels,
                                                             threshold);
        py::dict d;
        d["accuracy"] = r.accuracy;
        d["recall"] = r.recall;
        d["precision"] = r.precision;
        d["f1"] = r.f1;
        d["auc"] = r.auc;
        return d;
      },
      py::arg("probs"), py::arg("labels"), py::arg("threshold") = 0.5);
}
