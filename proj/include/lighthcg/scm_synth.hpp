#pragma once

// Synthetic ground truth: a configurable causal DAG over fundus factors
// (rim thickness, cup ratio, vessel abnormality) plus binary label Y,
// ancestral sampling, a deterministic fundus-like renderer with per-factor
// influence masks, dataset persistence and a directory-of-images loader.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lighthcg::scm {

using Mat = Eigen::MatrixXd;

struct ImageBatch {
  Mat pixels;  // n x (height*width*channels), HWC rows, values in [0,1]
  int height = 0, width = 0, channels = 0;
  int count() const { return static_cast<int>(pixels.rows()); }
};

struct GroundTruthDag {
  std::vector<std::string> nodes;
  Mat coeff;  // coeff(i, j) = weight of edge i -> j (0 = no edge)
  Eigen::VectorXd intercept;
  Eigen::VectorXd noise_scale;
  int y_index = -1;  // Bernoulli(sigmoid(.)) node; must have no outgoing edges

  // rim -> cup, rim -> Y, cup -> Y, vessel -> Y.
  static GroundTruthDag default_glaucoma();

  int d() const { return static_cast<int>(nodes.size()); }
  Eigen::MatrixXi binary() const;
  // Throws std::invalid_argument when the graph has a cycle or Y emits edges.
  std::vector<int> topological_order() const;

  void save(const std::string& path) const;
  static GroundTruthDag load(const std::string& path);
};

struct FactorTable {
  Mat factors;   // n x (#non-Y nodes), each in [0,1]
  Mat nuisance;  // n x 3 in [-1,1]: illumination, disc dx, disc dy; empty =
                 // neutral. Label-independent appearance variation so nuisance
                 // latents have real content to model.
  Eigen::VectorXi labels;
  std::uint64_t seed = 0;
};

struct ImageConfig {
  int size = 64;
  int channels = 3;
  double noise_amplitude = 0.02;
  double illum_jitter = 0.12;   // max relative brightness change
  double center_jitter = 0.03;  // max disc offset, fraction of size
  std::uint64_t texture_seed = 7;
};

struct Dataset {
  ImageBatch images;
  Eigen::VectorXi labels;
  std::optional<FactorTable> factors;
  std::string split;  // "train" / "test" / ""
};

// Ancestral sampling in topological order; factor nodes are clamped linear
// responses, Y is Bernoulli(sigmoid(linear parents)). Deterministic per seed.
FactorTable sample_factors(int n, const GroundTruthDag& dag,
                           std::uint64_t seed);

// Deterministic renderer; identical factor (and nuisance) rows yield
// identical images.
ImageBatch render_fundus(const FactorTable& factors, const ImageConfig& cfg);
// One image for a single factor row; nuisance entries in [-1,1].
Eigen::RowVectorXd render_single(double rim, double cup, double vessel,
                                 const ImageConfig& cfg, double illum = 0.0,
                                 double dx = 0.0, double dy = 0.0);

enum class FactorKind { Rim = 0, Cup = 1, Vessel = 2 };
// Binary influence-region mask (size*size entries, 1 inside the region).
Eigen::RowVectorXd factor_mask(FactorKind kind, const ImageConfig& cfg);

std::pair<Dataset, Dataset> generate_dataset(int n, const GroundTruthDag& dag,
                                             const ImageConfig& cfg,
                                             double split_ratio,
                                             std::uint64_t seed);

// Layout: images/NNNN.png, labels.csv, factors.csv (when known), dag.json.
void save_dataset(const std::string& dir, const Dataset& ds,
                  const GroundTruthDag* dag);

// Reads either the layout above (labels.csv) or class subdirectories of
// images. Images are resized to cfg.size and scaled to [0,1]; ordering is
// lexicographic by filename.
Dataset load_image_dataset(const std::string& root, const ImageConfig& cfg);

}  // namespace lighthcg::scm
