#pragma once

// Split-latent convolutional VAE: conv encoder emitting (mu, log_var) for a
// 7-wide latent split into Z1 (first 4) and Z2 (last 3), reparameterization
// with injected noise, sigmoid transposed-conv decoder and the Bernoulli
// CVAE loss.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "lighthcg/ad.hpp"
#include "lighthcg/scm_synth.hpp"

namespace lighthcg::vae {

using Mat = Eigen::MatrixXd;
using scm::ImageBatch;

enum class Act { Silu, Elu, Sigmoid, Linear };

struct ConvSpec {
  int filters = 0;
  int kernel = 0;
  int stride = 1;
  Act act = Act::Silu;
};

struct VaeConfig {
  int height = 64, width = 64, channels = 3;
  std::vector<ConvSpec> encoder_conv = {{16, 4, 2, Act::Silu},
                                        {32, 6, 2, Act::Silu},
                                        {16, 4, 2, Act::Silu},
                                        {16, 3, 2, Act::Silu}};
  std::vector<int> encoder_dense = {128, 16};
  int z1_dim = 4;
  int z2_dim = 3;
  std::vector<int> decoder_dense = {16, 128};
  std::vector<ConvSpec> decoder_conv = {{16, 3, 2, Act::Silu},
                                        {32, 4, 2, Act::Silu},
                                        {16, 6, 2, Act::Silu},
                                        {3, 4, 2, Act::Sigmoid}};
  std::uint64_t seed = 0;

  int z_dim() const { return z1_dim + z2_dim; }
};

struct LatentState {
  Mat mu, log_var, z;  // each n x z_dim
  Mat z1() const { return z.leftCols(4); }
  Mat z2() const { return z.rightCols(z.cols() - 4); }
};

// Parameter store plus the derived layer geometry.
struct VaeParams {
  VaeConfig cfg;
  ad::ParamStore store;
  std::vector<int> encoder_idx, decoder_idx;   // parameter indices
  std::vector<ad::ConvGeom> enc_geom, dec_geom;
  int seed_h = 0, seed_w = 0, seed_c = 0;  // decoder reshape target

  static VaeParams build(const VaeConfig& cfg);
  std::vector<int> all_indices() const;
};

// Tape builders. x is n x (H*W*C). Returns (mu, log_var).
// enc_bound/dec_bound must follow encoder_idx/decoder_idx order.
std::pair<ad::Var, ad::Var> encode_node(ad::Tape& t, ad::Var x,
                                        const VaeParams& p,
                                        const std::vector<ad::Var>& enc_bound);
ad::Var decode_node(ad::Tape& t, ad::Var z, const VaeParams& p,
                    const std::vector<ad::Var>& dec_bound);

// Plain (no-gradient) entry points.
std::pair<Mat, Mat> encode(const ImageBatch& x, const VaeParams& p);
Mat reparameterize(const Mat& mu, const Mat& log_var, const Mat& noise);
ImageBatch decode(const Mat& z, const VaeParams& p);

// BCE summed per pixel, averaged per sample, plus beta1 * 0.5 * sum z^2 / n.
// Throws when xhat leaves (0,1).
double cvae_loss(const ImageBatch& x, const ImageBatch& xhat, const Mat& z,
                 double beta1);
ad::Var cvae_loss_node(ad::Tape& t, const Mat& x_target, ad::Var xhat,
                       ad::Var z, double beta1);

// Versioned named-tensor file (float32, row-major).
void save_params(const std::string& path, const ad::ParamStore& store);
void load_params(const std::string& path, ad::ParamStore& store);

}  // namespace lighthcg::vae
