#pragma once

// Staged optimization driver: composes the CVAE, GAE and HSIC partial
// losses with epoch-dependent weights, routes gradients with the split
// update rule (adjacency + GAE stepped against L_gae, encoder/decoder
// against L_total) and records the full run history.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lighthcg/causal_gae.hpp"
#include "lighthcg/scm_synth.hpp"
#include "lighthcg/vae_core.hpp"

namespace lighthcg::train {

using Mat = Eigen::MatrixXd;
using Weights = std::array<double, 4>;  // (phi1, phi2, phi3, phi4)

struct StageSchedule {
  std::vector<int> boundaries = {50, 100};
  std::vector<Weights> weights = {{1, 1, 0, 0}, {1, 1, 5, 0}, {2, 1, 5, 0.5}};
};

Weights stage_weights(int epoch, const StageSchedule& schedule);

double total_loss(const Weights& parts, const Weights& phi);

struct TrainConfig {
  int epochs = 400;
  double omega = 1.5;
  double beta1 = 0.001;
  double lambda = 0.0;
  double lr_adjacency = 0.005;
  double lr_gae = 0.002;
  double lr_cvae = 0.0005;
  int batch_size = 0;  // 0 = full batch; otherwise >= 32 enforced
  StageSchedule schedule;
  std::uint64_t seed = 0;
  bool verbose = false;  // per-epoch progress lines on stderr
};

struct EpochRecord {
  int epoch;
  double total, cvae, gae, hsic1, hsic2;
  double h, alpha, rho;
};

struct TrainedModel {
  vae::VaeParams vae;
  ad::ParamStore gae_store;
  gae::GaeNetwork gae_net;
  gae::WeightedAdjacency adjacency;

  // model.bin (named tensors) + adjacency.csv / adjacency_binarized.csv.
  void save(const std::string& dir) const;
  static TrainedModel load(const std::string& dir, const vae::VaeConfig& vcfg,
                           const gae::GaeConfig& gcfg);
};

struct TrainRun {
  std::vector<EpochRecord> history;
  TrainedModel model;
};

// Throws std::runtime_error identifying the term and epoch when a loss goes
// non-finite.
TrainRun train(const scm::Dataset& dataset, const vae::VaeConfig& vae_cfg,
               const gae::GaeConfig& gae_cfg, const TrainConfig& cfg);

void write_history_csv(const std::string& path,
                       const std::vector<EpochRecord>& history);

}  // namespace lighthcg::train
