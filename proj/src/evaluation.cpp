#include "lighthcg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "lighthcg/image_io.hpp"
#include "lighthcg/vae_core.hpp"

namespace fs = std::filesystem;

namespace lighthcg::eval {

namespace {

double digamma(double x) {
  double r = 0.0;
  while (x < 6.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double f = 1.0 / (x * x);
  return r + std::log(x) - 0.5 / x -
         f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240))));
}

}  // namespace

double mutual_information_knn(const Eigen::VectorXd& feature,
                              const Eigen::VectorXi& labels, int k) {
  const int n = static_cast<int>(feature.size());
  if (labels.size() != n)
    throw std::invalid_argument("mutual_information_knn: size mismatch");
  if (n <= k)
    throw std::invalid_argument("mutual_information_knn: need n > k");

  // Deterministic jitter breaks exact ties without disturbing the ranks of
  // genuinely distinct values.
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = feature(i) + 1e-10 * i;

  std::vector<int> count_of(2, 0);
  for (int i = 0; i < n; ++i) {
    int c = labels(i);
    if (c != 0 && c != 1)
      throw std::invalid_argument("mutual_information_knn: labels not binary");
    ++count_of[c];
  }
  if (count_of[0] == 0 || count_of[1] == 0)
    throw std::invalid_argument(
        "mutual_information_knn: labels contain a single class");

  // Points whose class has a lone member carry no neighbor radius.
  std::vector<int> keep;
  for (int i = 0; i < n; ++i)
    if (count_of[labels(i)] > 1) keep.push_back(i);
  const int m = static_cast<int>(keep.size());

  double sum_psi_k = 0, sum_psi_nc = 0, sum_psi_m = 0;
  std::vector<double> same;
  for (int a = 0; a < m; ++a) {
    const int i = keep[a];
    const int nc = count_of[labels(i)];
    const int ki = std::min(k, nc - 1);
    same.clear();
    for (int b = 0; b < m; ++b) {
      const int j = keep[b];
      if (j != i && labels(j) == labels(i))
        same.push_back(std::abs(x[j] - x[i]));
    }
    std::nth_element(same.begin(), same.begin() + (ki - 1), same.end());
    const double radius = std::nextafter(same[ki - 1], 0.0);
    int within = 0;
    for (int b = 0; b < m; ++b)
      if (std::abs(x[keep[b]] - x[i]) <= radius) ++within;  // includes self
    sum_psi_k += digamma(ki);
    sum_psi_nc += digamma(nc);
    sum_psi_m += digamma(within);
  }
  const double mi =
      digamma(m) + (sum_psi_k - sum_psi_nc - sum_psi_m) / m;
  return std::max(0.0, mi);
}

namespace {

int shd_plain(const Eigen::MatrixXi& e, const Eigen::MatrixXi& t) {
  const int d = static_cast<int>(e.rows());
  int cost = 0;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      int e0 = e(i, j), e1 = e(j, i), t0 = t(i, j), t1 = t(j, i);
      if (e0 == t0 && e1 == t1) continue;
      if ((e0 == 1 && e1 == 0 && t0 == 0 && t1 == 1) ||
          (e0 == 0 && e1 == 1 && t0 == 1 && t1 == 0))
        cost += 1;  // reversal
      else
        cost += std::abs(e0 - t0) + std::abs(e1 - t1);
    }
  return cost;
}

}  // namespace

int shd_best_match(const Eigen::MatrixXi& estimated,
                   const Eigen::MatrixXi& truth,
                   const std::vector<int>& fixed_nodes) {
  const int d = static_cast<int>(estimated.rows());
  if (truth.rows() != d || estimated.cols() != d || truth.cols() != d)
    throw std::invalid_argument("shd_best_match: dimension mismatch");
  std::vector<bool> fixed(d, false);
  for (int f : fixed_nodes) fixed.at(f) = true;
  std::vector<int> free_nodes;
  for (int i = 0; i < d; ++i)
    if (!fixed[i]) free_nodes.push_back(i);

  std::vector<int> perm = free_nodes;
  int best = std::numeric_limits<int>::max();
  std::vector<int> map(d);
  do {
    for (int i = 0; i < d; ++i) map[i] = i;
    for (size_t i = 0; i < free_nodes.size(); ++i) map[free_nodes[i]] = perm[i];
    Eigen::MatrixXi relabeled = Eigen::MatrixXi::Zero(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        if (estimated(i, j)) relabeled(map[i], map[j]) = 1;
    best = std::min(best, shd_plain(relabeled, truth));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<double> make_grid(double lo, double hi, int points) {
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i)
    g[i] = points == 1 ? lo : lo + (hi - lo) * i / (points - 1);
  return g;
}

DifferenceMapStack traversal_maps(const train::TrainedModel& model,
                                  const scm::ImageBatch& images, int factor,
                                  const std::vector<double>& grid,
                                  double baseline) {
  const vae::VaeParams& p = model.vae;
  if (p.store.entries.empty())
    throw std::invalid_argument("untrained model");
  if (factor < 0 || factor >= p.cfg.z2_dim)
    throw std::invalid_argument("traversal factor out of range");
  if (grid.empty()) throw std::invalid_argument("empty traversal grid");
  const int coord = p.cfg.z1_dim + factor;
  const int h = images.height, w = images.width, c = images.channels;
  const int n = images.count();

  auto [mu, log_var] = vae::encode(images, p);
  (void)log_var;
  Mat z = mu;
  z.col(coord).setConstant(baseline);
  scm::ImageBatch base = vae::decode(z, p);
  if ((base.pixels.array() - base.pixels(0, 0)).abs().maxCoeff() < 1e-12)
    throw std::invalid_argument("untrained model");

  DifferenceMapStack stack;
  stack.factor = factor;
  stack.grid = grid;
  stack.height = h;
  stack.width = w;
  for (double g : grid) {
    Mat zg = mu;
    zg.col(coord).setConstant(g);
    scm::ImageBatch recon = vae::decode(zg, p);
    Mat map = Mat::Zero(h, w);
    for (int i = 0; i < n; ++i)
      for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col) {
          double acc = 0;
          for (int ch = 0; ch < c; ++ch) {
            int idx = (r * w + col) * c + ch;
            acc += std::abs(recon.pixels(i, idx) - base.pixels(i, idx));
          }
          map(r, col) += acc / c;
        }
    map /= n;
    stack.maps.push_back(std::move(map));
  }

  // Joint normalization across the whole sequence, then clip everything
  // below the sequence's 75th percentile.
  double peak = 0;
  for (const Mat& m : stack.maps) peak = std::max(peak, m.maxCoeff());
  if (peak > 0)
    for (Mat& m : stack.maps) m /= peak;
  std::vector<double> all;
  all.reserve(stack.maps.size() * h * w);
  for (const Mat& m : stack.maps)
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col) all.push_back(m(r, col));
  std::sort(all.begin(), all.end());
  const double pos = 0.75 * (all.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const double frac = pos - lo;
  const double thresh =
      all[lo] + (lo + 1 < all.size() ? frac * (all[lo + 1] - all[lo]) : 0.0);
  for (Mat& m : stack.maps)
    m = (m.array() < thresh).select(Mat::Zero(h, w), m);
  return stack;
}

void write_map_strips(const std::string& dir,
                      const std::vector<DifferenceMapStack>& stacks) {
  fs::create_directories(dir);
  if (stacks.empty()) return;
  const int h = stacks[0].height, w = stacks[0].width;
  const int g = static_cast<int>(stacks[0].grid.size());
  img::Image strip;
  strip.height = h * static_cast<int>(stacks.size());
  strip.width = w * g;
  strip.channels = 1;
  strip.data.assign(static_cast<size_t>(strip.height) * strip.width, 0);
  for (size_t f = 0; f < stacks.size(); ++f) {
    const auto& st = stacks[f];
    for (int s = 0; s < static_cast<int>(st.maps.size()); ++s)
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          double v = std::clamp(st.maps[s](r, c), 0.0, 1.0);
          strip.data[(f * h + r) * strip.width + s * w + c] =
              static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    for (int s = 0; s < static_cast<int>(st.maps.size()); ++s) {
      std::ofstream out(fs::path(dir) / ("traversal_f" + std::to_string(st.factor) +
                                         "_step" + std::to_string(s) + ".csv"));
      out.precision(9);
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c)
          out << st.maps[s](r, c) << (c + 1 < w ? "," : "");
        out << "\n";
      }
    }
  }
  img::write_png((fs::path(dir) / "traversal_strips.png").string(), strip);
}

namespace {

struct ClassifierShape {
  std::vector<int> widths = {32, 64, 32};
};

}  // namespace

Classifier train_downstream_classifier(const Mat& features,
                                       const Eigen::VectorXi& labels,
                                       const ClassifierConfig& cfg) {
  const int n = static_cast<int>(features.rows());
  if (labels.size() != n)
    throw std::invalid_argument("classifier: size mismatch");
  if (labels.minCoeff() == labels.maxCoeff())
    throw std::invalid_argument("classifier: single-class training labels");

  Classifier clf;
  ClassifierShape shape;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  int in = static_cast<int>(features.cols());
  std::vector<int> w_idx, b_idx, g_idx, be_idx;
  for (size_t l = 0; l < shape.widths.size(); ++l) {
    int out = shape.widths[l];
    w_idx.push_back(clf.store.add("c_w" + std::to_string(l),
                                  ad::glorot_uniform(in, out, rng)));
    b_idx.push_back(
        clf.store.add("c_b" + std::to_string(l), Mat::Zero(1, out)));
    g_idx.push_back(
        clf.store.add("c_g" + std::to_string(l), Mat::Ones(1, out)));
    be_idx.push_back(
        clf.store.add("c_be" + std::to_string(l), Mat::Zero(1, out)));
    clf.run_mean.push_back(Eigen::RowVectorXd::Zero(out));
    clf.run_var.push_back(Eigen::RowVectorXd::Ones(out));
    in = out;
  }
  int w_out = clf.store.add("c_w3", ad::glorot_uniform(in, 1, rng));
  int b_out = clf.store.add("c_b3", Mat::Zero(1, 1));

  std::vector<int> all_idx;
  for (size_t l = 0; l < shape.widths.size(); ++l) {
    all_idx.push_back(w_idx[l]);
    all_idx.push_back(b_idx[l]);
    all_idx.push_back(g_idx[l]);
    all_idx.push_back(be_idx[l]);
  }
  all_idx.push_back(w_out);
  all_idx.push_back(b_out);

  ad::Adam opt(cfg.lr);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int bsz = std::min(cfg.batch_size, n);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += bsz) {
      int count = std::min(bsz, n - start);
      if (count < 2) break;  // batch statistics need at least two rows
      Mat xb(count, features.cols());
      Mat yb(count, 1);
      for (int i = 0; i < count; ++i) {
        xb.row(i) = features.row(order[start + i]);
        yb(i, 0) = labels(order[start + i]);
      }

      ad::Tape t;
      std::vector<ad::Var> bound = ad::bind_params(t, clf.store, all_idx);
      ad::Var h = t.constant(xb);
      for (size_t l = 0; l < shape.widths.size(); ++l) {
        ad::Var wv = bound[4 * l], bv = bound[4 * l + 1];
        ad::Var gv = bound[4 * l + 2], bev = bound[4 * l + 3];
        h = ad::elu(t, ad::add_rowvec(t, ad::matmul(t, h, wv), bv));
        Eigen::RowVectorXd bm, bvv;
        h = ad::batchnorm(t, h, gv, bev, 1e-5, &bm, &bvv);
        clf.run_mean[l] = 0.9 * clf.run_mean[l] + 0.1 * bm;
        clf.run_var[l] = 0.9 * clf.run_var[l] + 0.1 * bvv;
        if (l == 0 && cfg.dropout > 0) {
          Mat mask(count, shape.widths[l]);
          for (Eigen::Index j = 0; j < mask.cols(); ++j)
            for (Eigen::Index i = 0; i < mask.rows(); ++i)
              mask(i, j) =
                  unit(rng) < cfg.dropout ? 0.0 : 1.0 / (1.0 - cfg.dropout);
          h = ad::hadamard_mask(t, h, mask);
        }
      }
      ad::Var logits = ad::add_rowvec(
          t, ad::matmul(t, h, bound[bound.size() - 2]), bound.back());
      ad::Var probs = ad::sigmoid(t, logits);
      ad::Var loss = ad::bce_sum_mean(t, probs, yb);
      t.backward(loss);

      std::vector<Mat*> params;
      std::vector<Mat> grads;
      for (size_t i = 0; i < all_idx.size(); ++i) {
        params.push_back(&clf.store.value(all_idx[i]));
        grads.push_back(t.grad(bound[i]));
      }
      opt.step(params, grads);
    }
  }
  return clf;
}

Eigen::VectorXd Classifier::predict(const Mat& features) const {
  ClassifierShape shape;
  Mat h = features;
  auto elu = [](double v) { return v > 0 ? v : std::expm1(v); };
  for (size_t l = 0; l < shape.widths.size(); ++l) {
    const Mat& w = store.value(store.find("c_w" + std::to_string(l)));
    const Mat& b = store.value(store.find("c_b" + std::to_string(l)));
    const Mat& g = store.value(store.find("c_g" + std::to_string(l)));
    const Mat& be = store.value(store.find("c_be" + std::to_string(l)));
    h = (h * w).rowwise() + b.row(0);
    h = h.unaryExpr(elu);
    for (Eigen::Index j = 0; j < h.cols(); ++j)
      h.col(j) = (h.col(j).array() - run_mean[l](j)) /
                     std::sqrt(run_var[l](j) + 1e-5) * g(0, j) +
                 be(0, j);
  }
  const Mat& w = store.value(store.find("c_w3"));
  const Mat& b = store.value(store.find("c_b3"));
  Eigen::VectorXd logits = (h * w).col(0).array() + b(0, 0);
  return logits.unaryExpr(
      [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

MetricsReport classification_metrics(const Eigen::VectorXd& probs,
                                     const Eigen::VectorXi& labels,
                                     double threshold) {
  const int n = static_cast<int>(probs.size());
  if (labels.size() != n)
    throw std::invalid_argument("classification_metrics: size mismatch");
  MetricsReport r;
  for (int i = 0; i < n; ++i) {
    int pred = probs(i) >= threshold ? 1 : 0;
    ++r.confusion[labels(i)][pred];
  }
  const double tp = r.confusion[1][1], tn = r.confusion[0][0];
  const double fp = r.confusion[0][1], fn = r.confusion[1][0];
  r.accuracy = n > 0 ? (tp + tn) / n : 0;
  r.recall = tp + fn > 0 ? tp / (tp + fn) : 0;
  r.precision = tp + fp > 0 ? tp / (tp + fp) : 0;
  r.f1 = r.precision + r.recall > 0
             ? 2 * r.precision * r.recall / (r.precision + r.recall)
             : 0;
  double pairs = 0, wins = 0;
  for (int i = 0; i < n; ++i) {
    if (labels(i) != 1) continue;
    for (int j = 0; j < n; ++j) {
      if (labels(j) != 0) continue;
      pairs += 1;
      if (probs(i) > probs(j))
        wins += 1;
      else if (probs(i) == probs(j))
        wins += 0.5;
    }
  }
  r.auc = pairs > 0 ? wins / pairs : 0.5;
  return r;
}

std::string MetricsReport::to_table() const {
  std::ostringstream out;
  out.precision(4);
  out << std::fixed;
  out << "metric     value\n";
  out << "accuracy   " << accuracy << "\n";
  out << "recall     " << recall << "\n";
  out << "precision  " << precision << "\n";
  out << "f1         " << f1 << "\n";
  out << "auc        " << auc << "\n";
  out << "confusion  [[" << confusion[0][0] << ", " << confusion[0][1]
      << "], [" << confusion[1][0] << ", " << confusion[1][1] << "]]\n";
  return out.str();
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["accuracy"] = accuracy;
  j["recall"] = recall;
  j["precision"] = precision;
  j["f1"] = f1;
  j["auc"] = auc;
  j["confusion"] = {{confusion[0][0], confusion[0][1]},
                    {confusion[1][0], confusion[1][1]}};
  return j.dump(2);
}

}  // namespace lighthcg::eval
