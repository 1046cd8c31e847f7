#pragma once

// Verification toolkit: k-NN mutual information between a scalar feature
// and a binary label, permutation-minimal structural Hamming distance,
// latent-traversal difference maps, a small downstream classifier over the
// causal latent block, and threshold/rank classification metrics.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "lighthcg/ad.hpp"
#include "lighthcg/scm_synth.hpp"
#include "lighthcg/training.hpp"

namespace lighthcg::eval {

using Mat = Eigen::MatrixXd;

// Mixed continuous/discrete k-NN estimator (per-class neighbor radii,
// neighbor counting, digamma sums). Ties broken by adding 1e-10 * index.
// Clamped at zero. Throws std::invalid_argument on single-class labels or
// n <= k.
double mutual_information_knn(const Eigen::VectorXd& feature,
                              const Eigen::VectorXi& labels, int k = 5);

// Minimum over permutations of the non-fixed nodes of the structural
// Hamming distance; missing, extra and reversed edges cost 1 each.
int shd_best_match(const Eigen::MatrixXi& estimated,
                   const Eigen::MatrixXi& truth,
                   const std::vector<int>& fixed_nodes);

struct DifferenceMapStack {
  int factor = 0;  // index within the causal latent block
  std::vector<double> grid;
  std::vector<Mat> maps;  // one H x W map per grid value, in [0,1]
  int height = 0, width = 0;
};

std::vector<double> make_grid(double lo, double hi, int points = 8);

// For each image: encode to mu, pin the chosen causal coordinate to
// `baseline`, decode; then sweep the coordinate over `grid`, decode, take
// the per-pixel absolute difference against the baseline reconstruction and
// average over images and channels. The whole sequence is normalized
// jointly to [0,1] and values below its 75th percentile are clipped to 0.
DifferenceMapStack traversal_maps(const train::TrainedModel& model,
                                  const scm::ImageBatch& images, int factor,
                                  const std::vector<double>& grid,
                                  double baseline);

// One PNG strip per factor row (grid steps left to right, factors stacked),
// plus per-step raw CSV maps next to it.
void write_map_strips(const std::string& dir,
                      const std::vector<DifferenceMapStack>& stacks);

struct ClassifierConfig {
  int epochs = 300;
  double lr = 1e-4;
  int batch_size = 100;
  double dropout = 0.05;
  std::uint64_t seed = 0;
};

// 3 -> 32 ELU -> BN -> Dropout -> 64 ELU -> BN -> 32 ELU -> BN -> 1 sigmoid.
struct Classifier {
  ad::ParamStore store;
  std::vector<Eigen::RowVectorXd> run_mean, run_var;  // per BN layer
  Eigen::VectorXd predict(const Mat& features) const;  // probabilities
};

// Throws std::invalid_argument on single-class training labels.
Classifier train_downstream_classifier(const Mat& features,
                                       const Eigen::VectorXi& labels,
                                       const ClassifierConfig& cfg = {});

struct MetricsReport {
  double accuracy = 0, recall = 0, precision = 0, f1 = 0, auc = 0;
  int confusion[2][2] = {{0, 0}, {0, 0}};  // [truth][prediction]

  std::string to_table() const;
  std::string to_json() const;
};

// Threshold confusion matrix; AUC by pairwise rank comparison, ties 0.5.
MetricsReport classification_metrics(const Eigen::VectorXd& probs,
                                     const Eigen::VectorXi& labels,
                                     double threshold = 0.5);

}  // namespace lighthcg::eval
