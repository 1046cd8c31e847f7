#pragma once

// RBF kernels, centering, empirical/normalized HSIC and the two HSIC loss
// terms. Plain Eigen entry points for evaluation plus tape builders for
// training (gradients flow through the sample matrices; bandwidths are
// treated as constants, recomputed per call by the median heuristic).

#include <Eigen/Dense>

#include "lighthcg/ad.hpp"

namespace lighthcg::kstats {

using Mat = Eigen::MatrixXd;

// Median of all strictly positive pairwise Euclidean distances.
// Throws std::invalid_argument("degenerate sample set") if all rows equal.
double median_heuristic_bandwidth(const Mat& samples);

// K_ij = exp(-||x_i - x_j||^2 / (2 sigma^2)).
Mat rbf_kernel_matrix(const Mat& samples, double bandwidth);

// HKH with H = I - (1/n) 1 1^T.
Mat center_kernel(const Mat& k);

// tr(K H L H) / (n-1)^2 with RBF kernels at the given bandwidths.
double hsic_empirical(const Mat& x, const Mat& y, double sigma_x,
                      double sigma_y);

// tr(Kc Lc) / (||Kc||_F ||Lc||_F), bandwidths by median heuristic.
// Throws std::invalid_argument("degenerate: zero centered kernel") when
// either input is constant.
double hsic_normalized(const Mat& x, const Mat& y);

// (1/J) sum_j nHSIC(Z1_j, Y) - omega * (1/M) sum_m nHSIC(Z2_m, Y),
// feature-wise. Constant columns contribute 0 with a warning on stderr.
double disentanglement_loss(const Mat& z1, const Mat& z2, const Mat& y,
                            double omega);

// Mean nHSIC over all unordered column pairs of Z2. Requires >= 2 columns.
double redundancy_loss(const Mat& z2);

// ---- tape builders (single-column inputs) ----

// nHSIC between two n x 1 columns; either side may be a constant leaf.
// Throws on constant columns.
ad::Var nhsic_node(ad::Tape& t, ad::Var x, ad::Var y);

// Feature-wise losses over latent blocks; y is a constant n x 1 column.
// Constant latent columns contribute 0 (warning), matching the plain path.
ad::Var disentanglement_node(ad::Tape& t, ad::Var z1, ad::Var z2,
                             const Mat& y, double omega);
ad::Var redundancy_node(ad::Tape& t, ad::Var z2);

}  // namespace lighthcg::kstats
