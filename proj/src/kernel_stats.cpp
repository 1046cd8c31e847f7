#include "lighthcg/kernel_stats.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <vector>

namespace lighthcg::kstats {

namespace {

Mat pairwise_sqdist(const Mat& x) {
  Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Mat d = sq.replicate(1, x.rows());
  d += sq.transpose().replicate(x.rows(), 1);
  d.noalias() -= 2.0 * x * x.transpose();
  return d.cwiseMax(0.0);
}

bool is_constant(const Mat& x) {
  for (Eigen::Index i = 1; i < x.rows(); ++i)
    if ((x.row(i) - x.row(0)).cwiseAbs().maxCoeff() > 0.0) return false;
  return true;
}

void check_finite(const Mat& x, const char* what) {
  if (!x.allFinite())
    throw std::invalid_argument(std::string(what) + ": non-finite values");
}

}  // namespace

double median_heuristic_bandwidth(const Mat& samples) {
  check_finite(samples, "median_heuristic_bandwidth");
  if (samples.rows() < 2)
    throw std::invalid_argument("median_heuristic_bandwidth: need n >= 2");
  std::vector<double> dists;
  dists.reserve(samples.rows() * (samples.rows() - 1) / 2);
  for (Eigen::Index i = 0; i < samples.rows(); ++i)
    for (Eigen::Index j = i + 1; j < samples.rows(); ++j) {
      double d = (samples.row(i) - samples.row(j)).norm();
      if (d > 0.0) dists.push_back(d);
    }
  if (dists.empty()) throw std::invalid_argument("degenerate sample set");
  std::sort(dists.begin(), dists.end());
  size_t m = dists.size();
  return m % 2 == 1 ? dists[m / 2]
                    : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
}

Mat rbf_kernel_matrix(const Mat& samples, double bandwidth) {
  check_finite(samples, "rbf_kernel_matrix");
  if (!(bandwidth > 0.0))
    throw std::invalid_argument("rbf_kernel_matrix: bandwidth must be > 0");
  Mat d = pairwise_sqdist(samples);
  return (-d.array() / (2.0 * bandwidth * bandwidth)).exp();
}

Mat center_kernel(const Mat& k) {
  if (k.rows() != k.cols())
    throw std::invalid_argument("center_kernel: matrix must be square");
  Eigen::VectorXd rm = k.rowwise().mean();
  Eigen::RowVectorXd cm = k.colwise().mean();
  double tm = k.mean();
  Mat out = k;
  out.colwise() -= rm;
  out.rowwise() -= cm;
  out.array() += tm;
  return out;
}

double hsic_empirical(const Mat& x, const Mat& y, double sigma_x,
                      double sigma_y) {
  if (x.rows() != y.rows())
    throw std::invalid_argument("hsic_empirical: sample count mismatch");
  if (x.rows() < 2)
    throw std::invalid_argument("hsic_empirical: need n >= 2");
  Mat kc = center_kernel(rbf_kernel_matrix(x, sigma_x));
  Mat lc = center_kernel(rbf_kernel_matrix(y, sigma_y));
  double n1 = static_cast<double>(x.rows() - 1);
  return kc.cwiseProduct(lc).sum() / (n1 * n1);
}

double hsic_normalized(const Mat& x, const Mat& y) {
  if (x.rows() != y.rows())
    throw std::invalid_argument("hsic_normalized: sample count mismatch");
  if (is_constant(x) || is_constant(y))
    throw std::invalid_argument("degenerate: zero centered kernel");
  Mat kc = center_kernel(rbf_kernel_matrix(x, median_heuristic_bandwidth(x)));
  Mat lc = center_kernel(rbf_kernel_matrix(y, median_heuristic_bandwidth(y)));
  double kn = kc.norm();
  double ln = lc.norm();
  return kc.cwiseProduct(lc).sum() / (kn * ln);
}

double disentanglement_loss(const Mat& z1, const Mat& z2, const Mat& y,
                            double omega) {
  if (z1.rows() != y.rows() || z2.rows() != y.rows())
    throw std::invalid_argument("disentanglement_loss: sample count mismatch");
  auto mean_term = [&](const Mat& z) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      Mat col = z.col(j);
      if (is_constant(col)) {
        std::cerr << "warning: constant latent column " << j
                  << " contributes 0 to HSIC loss\n";
        continue;
      }
      acc += hsic_normalized(col, y);
    }
    return acc / static_cast<double>(z.cols());
  };
  return mean_term(z1) - omega * mean_term(z2);
}

double redundancy_loss(const Mat& z2) {
  if (z2.cols() < 2)
    throw std::invalid_argument("redundancy_loss: need >= 2 columns");
  double acc = 0.0;
  int pairs = 0;
  for (Eigen::Index i = 0; i < z2.cols(); ++i)
    for (Eigen::Index j = i + 1; j < z2.cols(); ++j) {
      ++pairs;
      Mat a = z2.col(i), b = z2.col(j);
      if (is_constant(a) || is_constant(b)) {
        std::cerr << "warning: constant latent column in redundancy loss\n";
        continue;
      }
      acc += hsic_normalized(a, b);
    }
  return acc / pairs;
}

// ---------------------------------------------------------------------------
// tape builders

namespace {

// Centered RBF kernel of an n x 1 column as a tape node.
ad::Var centered_kernel_node(ad::Tape& t, ad::Var col) {
  const Mat& v = t.value(col);
  int n = static_cast<int>(v.rows());
  double bw = median_heuristic_bandwidth(v);
  ad::Var sq = ad::square(t, col);
  ad::Var ones_row = t.constant(Mat::Ones(1, n));
  ad::Var ones_col = t.constant(Mat::Ones(n, 1));
  ad::Var a = ad::matmul(t, sq, ones_row);           // s 1^T
  ad::Var b = ad::matmul(t, ones_col, ad::transpose(t, sq));
  ad::Var cross = ad::matmul(t, col, ad::transpose(t, col));
  ad::Var d = ad::sub(t, ad::add(t, a, b), ad::scale(t, cross, 2.0));
  ad::Var k = ad::exp_scale(t, d, -1.0 / (2.0 * bw * bw));
  return ad::center(t, k);
}

}  // namespace

ad::Var nhsic_node(ad::Tape& t, ad::Var x, ad::Var y) {
  if (is_constant(t.value(x)) || is_constant(t.value(y)))
    throw std::invalid_argument("degenerate: zero centered kernel");
  ad::Var kc = centered_kernel_node(t, x);
  ad::Var lc = centered_kernel_node(t, y);
  ad::Var num = ad::sum(t, ad::hadamard(t, kc, lc));
  ad::Var kk = ad::sqrt_v(t, ad::sum(t, ad::square(t, kc)));
  ad::Var ll = ad::sqrt_v(t, ad::sum(t, ad::square(t, lc)));
  return ad::cdiv(t, num, ad::hadamard(t, kk, ll));
}

namespace {

// Mean feature-wise nHSIC(z_col, y); constant columns skipped with warning.
ad::Var mean_nhsic_vs_const(ad::Tape& t, ad::Var z, const Mat& y) {
  int cols = static_cast<int>(t.value(z).cols());
  ad::Var acc = t.constant(Mat::Zero(1, 1));
  for (int j = 0; j < cols; ++j) {
    ad::Var col = ad::slice_cols(t, z, j, 1);
    if (is_constant(t.value(col))) {
      std::cerr << "warning: constant latent column " << j
                << " contributes 0 to HSIC loss\n";
      continue;
    }
    ad::Var yc = t.constant(y);
    acc = ad::add(t, acc, nhsic_node(t, col, yc));
  }
  return ad::scale(t, acc, 1.0 / cols);
}

}  // namespace

ad::Var disentanglement_node(ad::Tape& t, ad::Var z1, ad::Var z2,
                             const Mat& y, double omega) {
  ad::Var a = mean_nhsic_vs_const(t, z1, y);
  ad::Var b = mean_nhsic_vs_const(t, z2, y);
  return ad::sub(t, a, ad::scale(t, b, omega));
}

ad::Var redundancy_node(ad::Tape& t, ad::Var z2) {
  int m = static_cast<int>(t.value(z2).cols());
  if (m < 2) throw std::invalid_argument("redundancy_node: need >= 2 columns");
  ad::Var acc = t.constant(Mat::Zero(1, 1));
  int pairs = 0;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      ++pairs;
      ad::Var a = ad::slice_cols(t, z2, i, 1);
      ad::Var b = ad::slice_cols(t, z2, j, 1);
      if (is_constant(t.value(a)) || is_constant(t.value(b))) {
        std::cerr << "warning: constant latent column in redundancy loss\n";
        continue;
      }
      acc = ad::add(t, acc, nhsic_node(t, a, b));
    }
  return ad::scale(t, acc, 1.0 / pairs);
}

}  // namespace lighthcg::kstats
