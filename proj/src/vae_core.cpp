#include "lighthcg/vae_core.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace lighthcg::vae {

namespace {

ad::Var activate(ad::Tape& t, ad::Var x, Act act) {
  switch (act) {
    case Act::Silu:
      return ad::silu(t, x);
    case Act::Elu:
      return ad::elu(t, x);
    case Act::Sigmoid:
      return ad::sigmoid(t, x);
    case Act::Linear:
      return x;
  }
  throw std::logic_error("unknown activation");
}

}  // namespace

VaeParams VaeParams::build(const VaeConfig& cfg) {
  VaeParams p;
  p.cfg = cfg;
  std::mt19937_64 rng(cfg.seed ^ 0xc2b2ae3d27d4eb4fULL);
  int h = cfg.height, w = cfg.width, c = cfg.channels;
  int layer = 0;
  for (const ConvSpec& s : cfg.encoder_conv) {
    ad::ConvGeom g = ad::conv_geometry(h, w, c, s.filters, s.kernel, s.stride);
    p.enc_geom.push_back(g);
    p.encoder_idx.push_back(p.store.add(
        "enc_conv" + std::to_string(layer) + "_w",
        ad::glorot_uniform(s.kernel * s.kernel * c, s.filters, rng)));
    p.encoder_idx.push_back(p.store.add(
        "enc_conv" + std::to_string(layer) + "_b", Mat::Zero(1, s.filters)));
    h = g.out_h;
    w = g.out_w;
    c = g.out_c;
    ++layer;
  }
  p.seed_h = h;
  p.seed_w = w;
  p.seed_c = c;
  int width_in = h * w * c;
  layer = 0;
  for (int units : cfg.encoder_dense) {
    p.encoder_idx.push_back(
        p.store.add("enc_fc" + std::to_string(layer) + "_w",
                    ad::glorot_uniform(width_in, units, rng)));
    p.encoder_idx.push_back(p.store.add(
        "enc_fc" + std::to_string(layer) + "_b", Mat::Zero(1, units)));
    width_in = units;
    ++layer;
  }
  int z2x = 2 * cfg.z_dim();
  p.encoder_idx.push_back(
      p.store.add("enc_head_w", ad::glorot_uniform(width_in, z2x, rng)));
  p.encoder_idx.push_back(p.store.add("enc_head_b", Mat::Zero(1, z2x)));

  width_in = cfg.z_dim();
  layer = 0;
  for (int units : cfg.decoder_dense) {
    p.decoder_idx.push_back(
        p.store.add("dec_fc" + std::to_string(layer) + "_w",
                    ad::glorot_uniform(width_in, units, rng)));
    p.decoder_idx.push_back(p.store.add(
        "dec_fc" + std::to_string(layer) + "_b", Mat::Zero(1, units)));
    width_in = units;
    ++layer;
  }
  int seed_sz = p.seed_h * p.seed_w * p.seed_c;
  p.decoder_idx.push_back(
      p.store.add("dec_seed_w", ad::glorot_uniform(width_in, seed_sz, rng)));
  p.decoder_idx.push_back(p.store.add("dec_seed_b", Mat::Zero(1, seed_sz)));

  h = p.seed_h;
  w = p.seed_w;
  c = p.seed_c;
  layer = 0;
  for (const ConvSpec& s : cfg.decoder_conv) {
    ad::ConvGeom g =
        ad::conv_transpose_geometry(h, w, c, s.filters, s.kernel, s.stride);
    p.dec_geom.push_back(g);
    p.decoder_idx.push_back(p.store.add(
        "dec_conv" + std::to_string(layer) + "_w",
        ad::glorot_uniform(s.kernel * s.kernel * s.filters, c, rng)));
    p.decoder_idx.push_back(p.store.add(
        "dec_conv" + std::to_string(layer) + "_b", Mat::Zero(1, s.filters)));
    h *= s.stride;
    w *= s.stride;
    c = s.filters;
    ++layer;
  }
  if (h != cfg.height || w != cfg.width || c != cfg.channels)
    throw std::invalid_argument(
        "VaeConfig: decoder stack does not reproduce the input shape");
  return p;
}

std::vector<int> VaeParams::all_indices() const {
  std::vector<int> out = encoder_idx;
  out.insert(out.end(), decoder_idx.begin(), decoder_idx.end());
  return out;
}

std::pair<ad::Var, ad::Var> encode_node(
    ad::Tape& t, ad::Var x, const VaeParams& p,
    const std::vector<ad::Var>& enc_bound) {
  const VaeConfig& cfg = p.cfg;
  if (t.value(x).cols() != cfg.height * cfg.width * cfg.channels)
    throw std::invalid_argument("encode: image shape mismatch");
  ad::Var h = x;
  size_t bi = 0;
  for (size_t l = 0; l < cfg.encoder_conv.size(); ++l) {
    ad::Var w = enc_bound[bi++];
    ad::Var b = enc_bound[bi++];
    h = ad::conv2d(t, h, w, b, p.enc_geom[l]);
    h = activate(t, h, cfg.encoder_conv[l].act);
  }
  for (size_t l = 0; l < cfg.encoder_dense.size(); ++l) {
    ad::Var w = enc_bound[bi++];
    ad::Var b = enc_bound[bi++];
    h = ad::elu(t, ad::add_rowvec(t, ad::matmul(t, h, w), b));
  }
  ad::Var w = enc_bound[bi++];
  ad::Var b = enc_bound[bi++];
  h = ad::add_rowvec(t, ad::matmul(t, h, w), b);
  int zd = cfg.z_dim();
  return {ad::slice_cols(t, h, 0, zd), ad::slice_cols(t, h, zd, zd)};
}

ad::Var decode_node(ad::Tape& t, ad::Var z, const VaeParams& p,
                    const std::vector<ad::Var>& dec_bound) {
  const VaeConfig& cfg = p.cfg;
  if (t.value(z).cols() != cfg.z_dim())
    throw std::invalid_argument("decode: latent width mismatch");
  ad::Var h = z;
  size_t bi = 0;
  for (size_t l = 0; l < cfg.decoder_dense.size(); ++l) {
    ad::Var w = dec_bound[bi++];
    ad::Var b = dec_bound[bi++];
    h = ad::elu(t, ad::add_rowvec(t, ad::matmul(t, h, w), b));
  }
  {
    ad::Var w = dec_bound[bi++];
    ad::Var b = dec_bound[bi++];
    h = ad::elu(t, ad::add_rowvec(t, ad::matmul(t, h, w), b));
  }
  for (size_t l = 0; l < cfg.decoder_conv.size(); ++l) {
    ad::Var w = dec_bound[bi++];
    ad::Var b = dec_bound[bi++];
    h = ad::conv_transpose2d(t, h, w, b, p.dec_geom[l]);
    h = activate(t, h, cfg.decoder_conv[l].act);
  }
  return h;
}

std::pair<Mat, Mat> encode(const ImageBatch& x, const VaeParams& p) {
  ad::Tape t;
  ad::Var xv = t.constant(x.pixels);
  std::vector<ad::Var> bound;
  for (int idx : p.encoder_idx)
    bound.push_back(t.constant(p.store.value(idx)));
  auto [mu, lv] = encode_node(t, xv, p, bound);
  return {t.value(mu), t.value(lv)};
}

Mat reparameterize(const Mat& mu, const Mat& log_var, const Mat& noise) {
  if (mu.rows() != noise.rows() || mu.cols() != noise.cols())
    throw std::invalid_argument("reparameterize: noise shape mismatch");
  return mu.array() + (0.5 * log_var.array()).exp() * noise.array();
}

ImageBatch decode(const Mat& z, const VaeParams& p) {
  ad::Tape t;
  ad::Var zv = t.constant(z);
  std::vector<ad::Var> bound;
  for (int idx : p.decoder_idx)
    bound.push_back(t.constant(p.store.value(idx)));
  ad::Var out = decode_node(t, zv, p, bound);
  ImageBatch batch;
  batch.pixels = t.value(out);
  batch.height = p.cfg.height;
  batch.width = p.cfg.width;
  batch.channels = p.cfg.channels;
  return batch;
}

double cvae_loss(const ImageBatch& x, const ImageBatch& xhat, const Mat& z,
                 double beta1) {
  const Mat& p = xhat.pixels;
  const Mat& tgt = x.pixels;
  if (p.rows() != tgt.rows() || p.cols() != tgt.cols())
    throw std::invalid_argument("cvae_loss: shape mismatch");
  if (p.minCoeff() <= 0.0 || p.maxCoeff() >= 1.0)
    throw std::invalid_argument("cvae_loss: reconstruction outside (0,1)");
  double n = static_cast<double>(p.rows());
  double bce = 0.0;
  for (Eigen::Index j = 0; j < p.cols(); ++j)
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      bce -= tgt(i, j) * std::log(p(i, j)) +
             (1.0 - tgt(i, j)) * std::log1p(-p(i, j));
  return bce / n + beta1 * 0.5 * z.array().square().sum() / n;
}

ad::Var cvae_loss_node(ad::Tape& t, const Mat& x_target, ad::Var xhat,
                       ad::Var z, double beta1) {
  double n = static_cast<double>(x_target.rows());
  ad::Var bce = ad::bce_sum_mean(t, xhat, x_target);
  ad::Var reg =
      ad::scale(t, ad::sum(t, ad::square(t, z)), beta1 * 0.5 / n);
  return ad::add(t, bce, reg);
}

// ---------------------------------------------------------------------------
// serialization: "LHCG0001" | u32 count | { u32 name_len, name, u32 rows,
// u32 cols, f32 data row-major } ...

namespace {
constexpr char kMagic[8] = {'L', 'H', 'C', 'G', '0', '0', '0', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
}  // namespace

void save_params(const std::string& path, const ad::ParamStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write parameters file: " + path);
  out.write(kMagic, 8);
  write_u32(out, static_cast<std::uint32_t>(store.entries.size()));
  for (const auto& e : store.entries) {
    write_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_u32(out, static_cast<std::uint32_t>(e.value.rows()));
    write_u32(out, static_cast<std::uint32_t>(e.value.cols()));
    for (Eigen::Index i = 0; i < e.value.rows(); ++i)
      for (Eigen::Index j = 0; j < e.value.cols(); ++j) {
        float f = static_cast<float>(e.value(i, j));
        out.write(reinterpret_cast<const char*>(&f), 4);
      }
  }
}

void load_params(const std::string& path, ad::ParamStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read parameters file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("bad parameters file header: " + path);
  std::uint32_t count = read_u32(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::uint32_t len = read_u32(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint32_t rows = read_u32(in), cols = read_u32(in);
    Mat m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) {
        float f;
        in.read(reinterpret_cast<char*>(&f), 4);
        m(i, j) = static_cast<double>(f);
      }
    if (!in) throw std::runtime_error("truncated parameters file: " + path);
    int idx = store.find(name);
    if (idx < 0) {
      store.add(name, std::move(m));
    } else {
      if (store.value(idx).rows() != m.rows() ||
          store.value(idx).cols() != m.cols())
        throw std::runtime_error("parameter shape mismatch for " + name);
      store.value(idx) = std::move(m);
    }
  }
}

}  // namespace lighthcg::vae
