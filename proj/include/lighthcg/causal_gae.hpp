#pragma once

// Graph-autoencoder causal structure learning over a small variable set:
// weighted adjacency with blacklist, per-variable masked sub-networks,
// tr(exp(A.*A)) - d acyclicity penalty, augmented Lagrangian schedule,
// quantile binarization and a standalone tabular discovery loop.

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <vector>

#include "lighthcg/ad.hpp"

namespace lighthcg::gae {

using Mat = Eigen::MatrixXd;
using MaskMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

struct WeightedAdjacency {
  Mat weights;        // d x d, row = source, column = target
  MaskMat blacklist;  // 1 = forced zero
  int d = 0;

  // Diagonal blacklisted; when y_index >= 0 the whole row emitting edges
  // from the Y node is blacklisted as well. Weights start at zero.
  static WeightedAdjacency make(int d, int y_index);
  void apply_blacklist();
  Mat free_mask() const;  // 1.0 where trainable, 0.0 where blacklisted
};

// Scaling-and-squaring truncated Taylor exponential, meant for d <= 8.
Mat matrix_exponential(const Mat& m);

double acyclicity(const Mat& a);
double acyclicity(const WeightedAdjacency& a);
// 2 A .* exp(A .* A)^T
Mat acyclicity_gradient(const Mat& a);

struct GaeConfig {
  int d = 4;
  int hidden = 4;  // hidden units per variable in the masked layers
  uint64_t seed = 0;
};

// Per-variable f1/f2 stacks realized as masked dense layers over a shared
// parameter store. Layer shapes: d -> d*h (ELU), d*h -> d*h (ELU),
// d*h -> d (linear) with block-diagonal masks on each.
struct GaeNetwork {
  GaeConfig cfg;
  std::vector<int> f1_w, f1_b, f2_w, f2_b;  // param indices per layer
  std::vector<Mat> f1_mask, f2_mask;

  static GaeNetwork build(ad::ParamStore& store, const GaeConfig& cfg,
                          const std::string& prefix);
  std::vector<int> param_indices() const;
};

struct LagrangianState {
  double alpha = 0.6;
  double rho = 0.1;
  double beta = 1.01;
  double gamma = 0.9;
  double h_prev = std::numeric_limits<double>::infinity();
};

LagrangianState lagrangian_update(const LagrangianState& lag, double h_new);

// Forward pass on a tape. zprime: n x d, adjacency already masked.
// bound = values of bind_params(t, store, net.param_indices()).
ad::Var gae_forward_node(ad::Tape& t, ad::Var zprime, const GaeNetwork& net,
                         const std::vector<ad::Var>& bound, ad::Var a_masked);

// Plain forward for a fitted network.
Mat gae_forward(const Mat& zprime, const GaeNetwork& net,
                const ad::ParamStore& store, const WeightedAdjacency& a);

// (1/n) sum ||Z - Zhat||^2 + lambda ||A||_1 + alpha h(A) + (rho/2) h(A)^2
double gae_loss(const Mat& zprime, const Mat& zhat,
                const WeightedAdjacency& a, double lambda,
                const LagrangianState& lag);
ad::Var gae_loss_node(ad::Tape& t, ad::Var zprime, ad::Var zhat,
                      ad::Var a_masked, double lambda,
                      const LagrangianState& lag);

// Acyclicity penalty tape node (closed-form gradient).
ad::Var acyclicity_node(ad::Tape& t, ad::Var a_masked);

// Inclusive-threshold quantile binarization over non-blacklisted entries.
// Throws when all non-blacklisted magnitudes are equal.
Eigen::MatrixXi binarize_adjacency(const WeightedAdjacency& a,
                                   double keep_fraction = 0.25);

struct DiscoverConfig {
  GaeConfig gae;
  int epochs = 1500;
  double lr_adjacency = 0.005;
  double lr_network = 0.002;
  // Mild L1 shrinkage on A; without it spurious edges into exogenous
  // variables can drift large at zero cost (the sub-networks rescale to
  // compensate, and such edges never close a cycle).
  double lambda = 0.01;
  int y_index = -1;  // -1: no Y blacklist row
  bool standardize = true;
  uint64_t seed = 0;
};

struct DiscoveryRecord {
  int epoch;
  double loss;
  double h;
  double alpha;
  double rho;
};

struct DiscoveryRun {
  std::vector<DiscoveryRecord> history;
  WeightedAdjacency adjacency;
};

// Fits the GAE to tabular data (n x d). Throws std::runtime_error naming the
// epoch if the loss goes non-finite.
DiscoveryRun standalone_discover(const Mat& data, const DiscoverConfig& cfg);

}  // namespace lighthcg::gae
