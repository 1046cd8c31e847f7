#include "lighthcg/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "lighthcg/kernel_stats.hpp"

namespace fs = std::filesystem;

namespace lighthcg::train {

Weights stage_weights(int epoch, const StageSchedule& schedule) {
  if (epoch < 0) throw std::invalid_argument("stage_weights: epoch >= 0");
  size_t stage = 0;
  while (stage < schedule.boundaries.size() &&
         epoch >= schedule.boundaries[stage])
    ++stage;
  return schedule.weights.at(stage);
}

double total_loss(const Weights& parts, const Weights& phi) {
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) acc += phi[i] * parts[i];
  return acc;
}

namespace {

void check_finite(double v, const char* term, int epoch) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("non-finite ") + term +
                             " at epoch " + std::to_string(epoch));
}

}  // namespace

TrainRun train(const scm::Dataset& dataset, const vae::VaeConfig& vae_cfg,
               const gae::GaeConfig& gae_cfg_in, const TrainConfig& cfg) {
  const int n = dataset.images.count();
  if (n == 0) throw std::invalid_argument("train: empty dataset");
  if (cfg.batch_size != 0 && cfg.batch_size < 32)
    throw std::invalid_argument("train: mini-batch size must be >= 32");

  gae::GaeConfig gae_cfg = gae_cfg_in;
  gae_cfg.d = vae_cfg.z2_dim + 1;
  gae_cfg.seed = cfg.seed;

  TrainRun run;
  vae::VaeConfig vcfg = vae_cfg;
  vcfg.seed = cfg.seed;
  run.model.vae = vae::VaeParams::build(vcfg);
  vae::VaeParams& vp = run.model.vae;
  run.model.adjacency = gae::WeightedAdjacency::make(gae_cfg.d, gae_cfg.d - 1);
  int a_idx = run.model.gae_store.add("adjacency", run.model.adjacency.weights);
  run.model.gae_net =
      gae::GaeNetwork::build(run.model.gae_store, gae_cfg, "gae_");
  ad::ParamStore& gs = run.model.gae_store;
  const std::vector<int> gae_idx = run.model.gae_net.param_indices();
  const Mat fmask = run.model.adjacency.free_mask();

  ad::Adam opt_a(cfg.lr_adjacency), opt_gae(cfg.lr_gae), opt_cvae(cfg.lr_cvae);
  gae::LagrangianState lag;
  std::mt19937_64 rng(cfg.seed ^ 0xa0761d6478bd642fULL);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Mat y_col(n, 1);
  for (int i = 0; i < n; ++i) y_col(i, 0) = dataset.labels(i);

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  const int bsz = cfg.batch_size == 0 ? n : cfg.batch_size;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Weights phi = stage_weights(epoch, cfg.schedule);
    if (cfg.batch_size != 0) std::shuffle(order.begin(), order.end(), rng);

    double acc_parts[4] = {0, 0, 0, 0};
    double acc_total = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += bsz) {
      int count = std::min(bsz, n - start);
      if (cfg.batch_size != 0 && count < 32) break;  // drop runt batch
      Mat xb(count, dataset.images.pixels.cols());
      Mat yb(count, 1);
      for (int i = 0; i < count; ++i) {
        xb.row(i) = dataset.images.pixels.row(order[start + i]);
        yb(i, 0) = y_col(order[start + i], 0);
      }
      Mat noise(count, vcfg.z_dim());
      for (Eigen::Index j = 0; j < noise.cols(); ++j)
        for (Eigen::Index i = 0; i < noise.rows(); ++i)
          noise(i, j) = gauss(rng);

      ad::Tape t;
      ad::Var x = t.constant(xb);
      std::vector<ad::Var> enc_bound =
          ad::bind_params(t, vp.store, vp.encoder_idx);
      auto [mu, log_var] = vae::encode_node(t, x, vp, enc_bound);
      ad::Var sigma = ad::exp_scale(t, log_var, 0.5);
      ad::Var z = ad::add(t, mu, ad::hadamard(t, sigma, t.constant(noise)));
      const int z_floor = z.idx + 1;  // GAE backward never descends below z
      std::vector<ad::Var> dec_bound =
          ad::bind_params(t, vp.store, vp.decoder_idx);
      ad::Var xhat = vae::decode_node(t, z, vp, dec_bound);
      ad::Var l_cvae = vae::cvae_loss_node(t, xb, xhat, z, cfg.beta1);

      ad::Var z1 = ad::slice_cols(t, z, 0, vcfg.z1_dim);
      ad::Var z2 = ad::slice_cols(t, z, vcfg.z1_dim, vcfg.z2_dim);
      ad::Var zprime = ad::concat_cols(t, z2, t.constant(yb));
      ad::Var a_raw = t.leaf(gs.value(a_idx), true);
      ad::Var a_masked = ad::hadamard_mask(t, a_raw, fmask);
      std::vector<ad::Var> gae_bound = ad::bind_params(t, gs, gae_idx);
      ad::Var zhat = gae::gae_forward_node(t, zprime, run.model.gae_net,
                                           gae_bound, a_masked);
      ad::Var l_gae =
          gae::gae_loss_node(t, zprime, zhat, a_masked, cfg.lambda, lag);
      ad::Var l_h1 =
          kstats::disentanglement_node(t, z1, z2, yb, cfg.omega);
      ad::Var l_h2 = kstats::redundancy_node(t, z2);

      ad::Var l_total = ad::scale(t, l_cvae, phi[0]);
      l_total = ad::add(t, l_total, ad::scale(t, l_gae, phi[1]));
      l_total = ad::add(t, l_total, ad::scale(t, l_h1, phi[2]));
      l_total = ad::add(t, l_total, ad::scale(t, l_h2, phi[3]));

      double parts[4] = {t.value(l_cvae)(0, 0), t.value(l_gae)(0, 0),
                         t.value(l_h1)(0, 0), t.value(l_h2)(0, 0)};
      check_finite(parts[0], "L_cvae", epoch);
      check_finite(parts[1], "L_gae", epoch);
      check_finite(parts[2], "L_HSIC(1)", epoch);
      check_finite(parts[3], "L_HSIC(2)", epoch);
      double total = t.value(l_total)(0, 0);
      check_finite(total, "L_total", epoch);

      // Adjacency and GAE sub-networks step against L_gae alone.
      t.backward(l_gae, z_floor);
      Mat a_grad = t.grad(a_raw);
      std::vector<Mat*> gae_params;
      std::vector<Mat> gae_grads;
      for (size_t i = 0; i < gae_idx.size(); ++i) {
        gae_params.push_back(&gs.value(gae_idx[i]));
        gae_grads.push_back(t.grad(gae_bound[i]));
      }

      // Encoder/decoder step against the weighted total; gradients flow
      // through the (constant-valued) GAE path into Z.
      t.zero_grad();
      t.backward(l_total);
      std::vector<Mat*> cvae_params;
      std::vector<Mat> cvae_grads;
      for (size_t i = 0; i < vp.encoder_idx.size(); ++i) {
        cvae_params.push_back(&vp.store.value(vp.encoder_idx[i]));
        cvae_grads.push_back(t.grad(enc_bound[i]));
      }
      for (size_t i = 0; i < vp.decoder_idx.size(); ++i) {
        cvae_params.push_back(&vp.store.value(vp.decoder_idx[i]));
        cvae_grads.push_back(t.grad(dec_bound[i]));
      }

      opt_a.step({&gs.value(a_idx)}, {a_grad});
      opt_gae.step(gae_params, gae_grads);
      opt_cvae.step(cvae_params, cvae_grads);

      run.model.adjacency.weights = gs.value(a_idx);
      run.model.adjacency.apply_blacklist();
      gs.value(a_idx) = run.model.adjacency.weights;

      acc_total += total;
      for (int i = 0; i < 4; ++i) acc_parts[i] += parts[i];
      ++batches;
    }

    double h = gae::acyclicity(run.model.adjacency);
    lag = gae::lagrangian_update(lag, h);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.total = acc_total / batches;
    rec.cvae = acc_parts[0] / batches;
    rec.gae = acc_parts[1] / batches;
    rec.hsic1 = acc_parts[2] / batches;
    rec.hsic2 = acc_parts[3] / batches;
    rec.h = h;
    rec.alpha = lag.alpha;
    rec.rho = lag.rho;
    run.history.push_back(rec);
    if (cfg.verbose)
      std::cerr << rec.epoch << "," << rec.total << "," << rec.cvae << ","
                << rec.gae << "," << rec.hsic1 << "," << rec.hsic2 << ","
                << rec.h << "," << rec.alpha << "," << rec.rho << "\n";
  }
  return run;
}

void write_history_csv(const std::string& path,
                       const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write history file: " + path);
  out << "epoch,loss_total,loss_cvae,loss_gae,loss_h1,loss_h2,h,alpha,rho\n";
  out.precision(12);
  for (const auto& r : history)
    out << r.epoch << "," << r.total << "," << r.cvae << "," << r.gae << ","
        << r.hsic1 << "," << r.hsic2 << "," << r.h << "," << r.alpha << ","
        << r.rho << "\n";
}

void TrainedModel::save(const std::string& dir) const {
  fs::create_directories(dir);
  ad::ParamStore merged;
  for (const auto& e : vae.store.entries) merged.add(e.name, e.value);
  for (const auto& e : gae_store.entries) merged.add(e.name, e.value);
  vae::save_params((fs::path(dir) / "model.bin").string(), merged);
  auto write_csv = [&](const std::string& name, auto&& mat) {
    std::ofstream out(fs::path(dir) / name);
    out.precision(12);
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
      for (Eigen::Index j = 0; j < mat.cols(); ++j)
        out << mat(i, j) << (j + 1 < mat.cols() ? "," : "");
      out << "\n";
    }
  };
  write_csv("adjacency.csv", adjacency.weights);
  try {
    write_csv("adjacency_binarized.csv",
              gae::binarize_adjacency(adjacency, 0.25));
  } catch (const std::exception&) {
    // all-equal weights (e.g. untrained); skip the binarized dump
  }
}

TrainedModel TrainedModel::load(const std::string& dir,
                                const vae::VaeConfig& vcfg,
                                const gae::GaeConfig& gcfg) {
  TrainedModel m;
  m.vae = vae::VaeParams::build(vcfg);
  gae::GaeConfig gc = gcfg;
  gc.d = vcfg.z2_dim + 1;
  m.adjacency = gae::WeightedAdjacency::make(gc.d, gc.d - 1);
  int a_idx = m.gae_store.add("adjacency", m.adjacency.weights);
  m.gae_net = gae::GaeNetwork::build(m.gae_store, gc, "gae_");

  ad::ParamStore merged;
  vae::load_params((fs::path(dir) / "model.bin").string(), merged);
  auto pull = [&](ad::ParamStore& dst) {
    for (auto& e : dst.entries) {
      int src = merged.find(e.name);
      if (src < 0)
        throw std::runtime_error("parameters file missing tensor " + e.name);
      if (merged.value(src).rows() != e.value.rows() ||
          merged.value(src).cols() != e.value.cols())
        throw std::runtime_error("parameter shape mismatch for " + e.name);
      e.value = merged.value(src);
    }
  };
  pull(m.vae.store);
  pull(m.gae_store);
  m.adjacency.weights = m.gae_store.value(a_idx);
  m.adjacency.apply_blacklist();
  return m;
}

}  // namespace lighthcg::train
