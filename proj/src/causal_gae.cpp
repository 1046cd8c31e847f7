#include "lighthcg/causal_gae.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace lighthcg::gae {

WeightedAdjacency WeightedAdjacency::make(int d, int y_index) {
  WeightedAdjacency a;
  a.d = d;
  a.weights = Mat::Zero(d, d);
  a.blacklist = MaskMat::Zero(d, d);
  for (int i = 0; i < d; ++i) a.blacklist(i, i) = 1;
  if (y_index >= 0)
    for (int j = 0; j < d; ++j) a.blacklist(y_index, j) = 1;
  return a;
}

void WeightedAdjacency::apply_blacklist() {
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (blacklist(i, j)) weights(i, j) = 0.0;
}

Mat WeightedAdjacency::free_mask() const {
  Mat m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = blacklist(i, j) ? 0.0 : 1.0;
  return m;
}

Mat matrix_exponential(const Mat& m) {
  if (!m.allFinite())
    throw std::invalid_argument("matrix_exponential: non-finite input");
  if (m.rows() != m.cols())
    throw std::invalid_argument("matrix_exponential: square matrix required");
  double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = std::max(0, (int)std::ceil(std::log2(norm / 0.5)));
  Mat a = m / std::pow(2.0, squarings);
  int n = static_cast<int>(m.rows());
  Mat result = Mat::Identity(n, n);
  Mat term = Mat::Identity(n, n);
  for (int k = 1; k <= 24; ++k) {
    term = (term * a) / static_cast<double>(k);
    result += term;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

double acyclicity(const Mat& a) {
  Mat h = a.cwiseProduct(a);
  return matrix_exponential(h).trace() - static_cast<double>(a.rows());
}

double acyclicity(const WeightedAdjacency& a) { return acyclicity(a.weights); }

Mat acyclicity_gradient(const Mat& a) {
  Mat h = a.cwiseProduct(a);
  return 2.0 * a.cwiseProduct(matrix_exponential(h).transpose());
}

ad::Var acyclicity_node(ad::Tape& t, ad::Var a_masked) {
  const Mat& a = t.value(a_masked);
  Mat v(1, 1);
  v(0, 0) = acyclicity(a);
  return t.make(std::move(v), {a_masked}, [a_masked](ad::Tape& t, int self) {
    double g = t.grad_ref(self)(0, 0);
    t.accumulate(a_masked.idx, g * acyclicity_gradient(t.value(a_masked)));
  });
}

LagrangianState lagrangian_update(const LagrangianState& lag, double h_new) {
  LagrangianState out = lag;
  out.alpha = lag.alpha + lag.rho * h_new;
  if (std::abs(h_new) >= lag.gamma * std::abs(lag.h_prev))
    out.rho = lag.beta * lag.rho;
  out.h_prev = h_new;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Block-diagonal masks for per-variable sub-networks.
Mat block_mask(int d, int in_per_var, int out_per_var) {
  Mat m = Mat::Zero(d * in_per_var, d * out_per_var);
  for (int v = 0; v < d; ++v)
    m.block(v * in_per_var, v * out_per_var, in_per_var, out_per_var)
        .setOnes();
  return m;
}

}  // namespace

GaeNetwork GaeNetwork::build(ad::ParamStore& store, const GaeConfig& cfg,
                             const std::string& prefix) {
  GaeNetwork net;
  net.cfg = cfg;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  int d = cfg.d, h = cfg.hidden;
  struct LayerShape {
    int in, out, in_pv, out_pv;
  };
  std::vector<LayerShape> shapes = {
      {d, d * h, 1, h}, {d * h, d * h, h, h}, {d * h, d, h, 1}};
  auto build_stack = [&](const std::string& tag, std::vector<int>& ws,
                         std::vector<int>& bs, std::vector<Mat>& masks) {
    for (size_t l = 0; l < shapes.size(); ++l) {
      const auto& s = shapes[l];
      Mat w = ad::glorot_uniform(s.in, s.out, rng);
      Mat mask = block_mask(d, s.in_pv, s.out_pv);
      w = w.cwiseProduct(mask);
      ws.push_back(store.add(prefix + tag + "_w" + std::to_string(l), w));
      bs.push_back(store.add(prefix + tag + "_b" + std::to_string(l),
                             Mat::Zero(1, s.out)));
      masks.push_back(mask);
    }
  };
  build_stack("f1", net.f1_w, net.f1_b, net.f1_mask);
  build_stack("f2", net.f2_w, net.f2_b, net.f2_mask);
  return net;
}

std::vector<int> GaeNetwork::param_indices() const {
  std::vector<int> out;
  for (size_t l = 0; l < f1_w.size(); ++l) {
    out.push_back(f1_w[l]);
    out.push_back(f1_b[l]);
  }
  for (size_t l = 0; l < f2_w.size(); ++l) {
    out.push_back(f2_w[l]);
    out.push_back(f2_b[l]);
  }
  return out;
}

namespace {

ad::Var masked_stack(ad::Tape& t, ad::Var x, const std::vector<ad::Var>& bound,
                     size_t offset, const std::vector<Mat>& masks) {
  ad::Var h = x;
  for (size_t l = 0; l < masks.size(); ++l) {
    ad::Var w = bound[offset + 2 * l];
    ad::Var b = bound[offset + 2 * l + 1];
    ad::Var wm = ad::hadamard_mask(t, w, masks[l]);
    h = ad::add_rowvec(t, ad::matmul(t, h, wm), b);
    if (l + 1 < masks.size()) h = ad::elu(t, h);
  }
  return h;
}

}  // namespace

ad::Var gae_forward_node(ad::Tape& t, ad::Var zprime, const GaeNetwork& net,
                         const std::vector<ad::Var>& bound, ad::Var a_masked) {
  if (t.value(zprime).cols() != net.cfg.d)
    throw std::invalid_argument("gae_forward: column count mismatch");
  ad::Var features = masked_stack(t, zprime, bound, 0, net.f1_mask);
  ad::Var mixed = ad::matmul(t, features, a_masked);
  return masked_stack(t, mixed, bound, 2 * net.f1_mask.size(), net.f2_mask);
}

Mat gae_forward(const Mat& zprime, const GaeNetwork& net,
                const ad::ParamStore& store, const WeightedAdjacency& a) {
  ad::Tape t;
  ad::Var z = t.constant(zprime);
  std::vector<ad::Var> bound;
  for (int idx : net.param_indices())
    bound.push_back(t.constant(store.value(idx)));
  Mat w = a.weights.cwiseProduct(a.free_mask());
  ad::Var am = t.constant(w);
  return t.value(gae_forward_node(t, z, net, bound, am));
}

double gae_loss(const Mat& zprime, const Mat& zhat,
                const WeightedAdjacency& a, double lambda,
                const LagrangianState& lag) {
  double mse = (zprime - zhat).rowwise().squaredNorm().mean();
  double h = acyclicity(a);
  return mse + lambda * a.weights.cwiseAbs().sum() + lag.alpha * h +
         0.5 * lag.rho * h * h;
}

ad::Var gae_loss_node(ad::Tape& t, ad::Var zprime, ad::Var zhat,
                      ad::Var a_masked, double lambda,
                      const LagrangianState& lag) {
  const Mat& z = t.value(zprime);
  double n = static_cast<double>(z.rows());
  ad::Var diff = ad::sub(t, zprime, zhat);
  ad::Var mse = ad::scale(t, ad::sum(t, ad::square(t, diff)), 1.0 / n);
  ad::Var h = acyclicity_node(t, a_masked);
  ad::Var loss = ad::add(t, mse, ad::scale(t, h, lag.alpha));
  loss = ad::add(t, loss, ad::scale(t, ad::square(t, h), 0.5 * lag.rho));
  if (lambda != 0.0)
    loss = ad::add(t, loss, ad::scale(t, ad::sum_abs(t, a_masked), lambda));
  return loss;
}

Eigen::MatrixXi binarize_adjacency(const WeightedAdjacency& a,
                                   double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction < 1.0))
    throw std::invalid_argument("binarize_adjacency: keep_fraction range");
  std::vector<double> mags;
  for (int i = 0; i < a.d; ++i)
    for (int j = 0; j < a.d; ++j)
      if (!a.blacklist(i, j)) mags.push_back(std::abs(a.weights(i, j)));
  if (mags.empty())
    throw std::invalid_argument("degenerate weights; binarization undefined");
  double lo = *std::min_element(mags.begin(), mags.end());
  double hi = *std::max_element(mags.begin(), mags.end());
  if (hi - lo == 0.0)
    throw std::invalid_argument("degenerate weights; binarization undefined");
  std::sort(mags.begin(), mags.end());
  // Interpolated quantile at q = 1 - keep_fraction.
  double q = 1.0 - keep_fraction;
  double pos = q * static_cast<double>(mags.size() - 1);
  size_t lo_i = static_cast<size_t>(std::floor(pos));
  size_t hi_i = std::min(lo_i + 1, mags.size() - 1);
  double frac = pos - static_cast<double>(lo_i);
  double thr = mags[lo_i] * (1.0 - frac) + mags[hi_i] * frac;
  Eigen::MatrixXi out = Eigen::MatrixXi::Zero(a.d, a.d);
  for (int i = 0; i < a.d; ++i)
    for (int j = 0; j < a.d; ++j)
      if (!a.blacklist(i, j) && std::abs(a.weights(i, j)) >= thr)
        out(i, j) = 1;
  return out;
}

DiscoveryRun standalone_discover(const Mat& data, const DiscoverConfig& cfg) {
  int d = static_cast<int>(data.cols());
  Mat z = data;
  if (cfg.standardize) {
    for (int j = 0; j < d; ++j) {
      double mu = z.col(j).mean();
      double sd = std::sqrt((z.col(j).array() - mu).square().mean());
      if (sd > 0) z.col(j) = (z.col(j).array() - mu) / sd;
    }
  }
  GaeConfig gcfg = cfg.gae;
  gcfg.d = d;
  gcfg.seed = cfg.seed;
  ad::ParamStore store;
  WeightedAdjacency adj = WeightedAdjacency::make(d, cfg.y_index);
  int a_idx = store.add("adjacency", adj.weights);
  GaeNetwork net = GaeNetwork::build(store, gcfg, "gae_");
  std::vector<int> net_idx = net.param_indices();
  Mat fmask = adj.free_mask();

  ad::Adam opt_a(cfg.lr_adjacency);
  ad::Adam opt_net(cfg.lr_network);
  LagrangianState lag;
  DiscoveryRun run;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ad::Tape t;
    ad::Var zc = t.constant(z);
    ad::Var a_raw = t.leaf(store.value(a_idx), true);
    ad::Var a_masked = ad::hadamard_mask(t, a_raw, fmask);
    std::vector<ad::Var> bound = ad::bind_params(t, store, net_idx);
    ad::Var zhat = gae_forward_node(t, zc, net, bound, a_masked);
    ad::Var loss = gae_loss_node(t, zc, zhat, a_masked, cfg.lambda, lag);
    double loss_v = t.value(loss)(0, 0);
    if (!std::isfinite(loss_v))
      throw std::runtime_error("standalone_discover: non-finite loss at epoch " +
                               std::to_string(epoch));
    t.backward(loss);

    opt_a.step({&store.value(a_idx)}, {t.grad(a_raw)});
    std::vector<Mat*> net_params;
    std::vector<Mat> net_grads;
    for (size_t i = 0; i < net_idx.size(); ++i) {
      net_params.push_back(&store.value(net_idx[i]));
      net_grads.push_back(t.grad(bound[i]));
    }
    opt_net.step(net_params, net_grads);

    adj.weights = store.value(a_idx);
    adj.apply_blacklist();
    store.value(a_idx) = adj.weights;
    double h = acyclicity(adj);
    lag = lagrangian_update(lag, h);
    run.history.push_back({epoch, loss_v, h, lag.alpha, lag.rho});
  }
  run.adjacency = adj;
  return run;
}

}  // namespace lighthcg::gae
