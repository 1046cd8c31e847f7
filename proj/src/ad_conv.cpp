#include "lighthcg/ad.hpp"

#include <cmath>
#include <cstring>
#include <memory>

namespace lighthcg::ad {

namespace {

// Row-major so each patch is a contiguous row; im2col/col2im then move
// contiguous in_c-channel runs instead of strided scalars.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;

// One sample's patch rows (out_h*out_w rows of k*k*in_c) written at `base`,
// laid out row-major; `base` may point inside a taller whole-batch matrix.
void im2col(const double* img, const ConvGeom& g, double* base) {
  const ptrdiff_t cols =
      static_cast<ptrdiff_t>(g.kernel) * g.kernel * g.in_c;
  std::memset(base, 0, sizeof(double) * cols * g.out_h * g.out_w);
  for (int oh = 0; oh < g.out_h; ++oh) {
    for (int ow = 0; ow < g.out_w; ++ow) {
      double* prow = base + (oh * g.out_w + ow) * cols;
      for (int dh = 0; dh < g.kernel; ++dh) {
        int ih = oh * g.stride - g.pad_top + dh;
        if (ih < 0 || ih >= g.in_h) continue;
        for (int dw = 0; dw < g.kernel; ++dw) {
          int iw = ow * g.stride - g.pad_left + dw;
          if (iw < 0 || iw >= g.in_w) continue;
          std::memcpy(prow + (dh * g.kernel + dw) * g.in_c,
                      img + (ih * g.in_w + iw) * g.in_c,
                      sizeof(double) * g.in_c);
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add one sample's patch rows back into the image.
void col2im(const double* base, const ConvGeom& g, double* img) {
  const ptrdiff_t cols =
      static_cast<ptrdiff_t>(g.kernel) * g.kernel * g.in_c;
  for (int oh = 0; oh < g.out_h; ++oh) {
    for (int ow = 0; ow < g.out_w; ++ow) {
      const double* prow = base + (oh * g.out_w + ow) * cols;
      for (int dh = 0; dh < g.kernel; ++dh) {
        int ih = oh * g.stride - g.pad_top + dh;
        if (ih < 0 || ih >= g.in_h) continue;
        for (int dw = 0; dw < g.kernel; ++dw) {
          int iw = ow * g.stride - g.pad_left + dw;
          if (iw < 0 || iw >= g.in_w) continue;
          double* dst = img + (ih * g.in_w + iw) * g.in_c;
          const double* src = prow + (dh * g.kernel + dw) * g.in_c;
          for (int c = 0; c < g.in_c; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace

ConvGeom conv_geometry(int in_h, int in_w, int in_c, int out_c, int kernel,
                       int stride) {
  ConvGeom g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.in_c = in_c;
  g.out_c = out_c;
  g.kernel = kernel;
  g.stride = stride;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  int pad_h = std::max((g.out_h - 1) * stride + kernel - in_h, 0);
  int pad_w = std::max((g.out_w - 1) * stride + kernel - in_w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

ConvGeom conv_transpose_geometry(int in_h, int in_w, int in_c, int out_c,
                                 int kernel, int stride) {
  // Internally described as the conv that maps the (larger) output back to
  // the input; forward/backward of the transpose swap the roles.
  ConvGeom g = conv_geometry(in_h * stride, in_w * stride, out_c, in_c,
                             kernel, stride);
  if (g.out_h != in_h || g.out_w != in_w)
    throw std::logic_error("conv_transpose_geometry: inconsistent shapes");
  return g;
}

Var conv2d(Tape& t, Var x, Var w, Var bias, const ConvGeom& g) {
  const Mat& xv = t.value(x);
  const int n = static_cast<int>(xv.rows());
  const int in_sz = g.in_h * g.in_w * g.in_c;
  const int out_sz = g.out_h * g.out_w * g.out_c;
  if (xv.cols() != in_sz) throw std::invalid_argument("conv2d: input shape");
  const Mat& wv = t.value(w);
  Eigen::RowVectorXd bv = t.value(bias).row(0);

  const int hw = g.out_h * g.out_w;
  const int pcols = g.kernel * g.kernel * g.in_c;
  // Whole-batch patch matrix: one big GEMM instead of n small ones; kept
  // alive for the backward pass, which reuses it for dW and dX.
  auto patches = std::make_shared<RowMat>(
      static_cast<Eigen::Index>(n) * hw, pcols);
  {
    Eigen::RowVectorXd row(in_sz);
    for (int i = 0; i < n; ++i) {
      row = xv.row(i);
      im2col(row.data(), g, patches->data() +
                                static_cast<ptrdiff_t>(i) * hw * pcols);
    }
  }
  RowMat y = *patches * wv;  // (n*hw) x out_c, sample rows contiguous
  y.rowwise() += bv;
  Mat out(n, out_sz);
  for (int i = 0; i < n; ++i)
    out.row(i) = Eigen::Map<const Eigen::RowVectorXd>(
        y.data() + static_cast<ptrdiff_t>(i) * out_sz, out_sz);
  return t.make(std::move(out), {x, w, bias},
                [x, w, bias, g, n, hw, pcols, patches](Tape& t, int self) {
    const Mat& gout = t.grad_ref(self);
    const Mat& wv = t.value(w);
    const int out_sz = hw * g.out_c;
    RowMat G(static_cast<Eigen::Index>(n) * hw, g.out_c);
    for (int i = 0; i < n; ++i)
      Eigen::Map<Eigen::RowVectorXd>(
          G.data() + static_cast<ptrdiff_t>(i) * out_sz, out_sz) =
          gout.row(i);
    Mat dW = patches->transpose() * G;
    t.accumulate(w.idx, dW);
    t.accumulate(bias.idx, G.colwise().sum());
    if (t.needs_grad(x)) {
      RowMat dP = G * wv.transpose();  // (n*hw) x pcols
      Mat dX = Mat::Zero(n, g.in_h * g.in_w * g.in_c);
      Eigen::RowVectorXd drow(dX.cols());
      for (int i = 0; i < n; ++i) {
        drow.setZero();
        col2im(dP.data() + static_cast<ptrdiff_t>(i) * hw * pcols, g,
               drow.data());
        dX.row(i) = drow;
      }
      t.accumulate(x.idx, dX);
    }
  });
}

Var conv_transpose2d(Tape& t, Var x, Var w, Var bias, const ConvGeom& g) {
  // g describes the associated conv large->small: g.in_* is the transpose
  // OUTPUT image, g.out_* spatial dims with g.out_c channels index the
  // transpose INPUT.
  const Mat& xv = t.value(x);
  const int n = static_cast<int>(xv.rows());
  const int hw = g.out_h * g.out_w;
  const int in_sz = hw * g.out_c;          // transpose input size
  const int out_sz = g.in_h * g.in_w * g.in_c;  // transpose output size
  if (xv.cols() != in_sz)
    throw std::invalid_argument("conv_transpose2d: input shape");
  const Mat& wv = t.value(w);  // (k*k*in_c) x out_c of the associated conv
  Eigen::RowVectorXd bv = t.value(bias).row(0);  // per g.in_c channel

  const int pcols = g.kernel * g.kernel * g.in_c;
  // Whole-batch input rows, kept for the backward dW GEMM.
  auto X = std::make_shared<RowMat>(static_cast<Eigen::Index>(n) * hw,
                                    g.out_c);
  for (int i = 0; i < n; ++i)
    Eigen::Map<Eigen::RowVectorXd>(
        X->data() + static_cast<ptrdiff_t>(i) * in_sz, in_sz) = xv.row(i);
  RowMat P = *X * wv.transpose();  // (n*hw) x (k*k*in_c)
  Mat out = Mat::Zero(n, out_sz);
  {
    Eigen::RowVectorXd row(out_sz);
    for (int i = 0; i < n; ++i) {
      row.setZero();
      col2im(P.data() + static_cast<ptrdiff_t>(i) * hw * pcols, g,
             row.data());
      for (int pix = 0; pix < g.in_h * g.in_w; ++pix)
        for (int c = 0; c < g.in_c; ++c) row(pix * g.in_c + c) += bv(c);
      out.row(i) = row;
    }
  }
  return t.make(std::move(out), {x, w, bias},
                [x, w, bias, g, n, hw, pcols, X](Tape& t, int self) {
    const Mat& gout = t.grad_ref(self);
    const Mat& wv = t.value(w);
    Eigen::RowVectorXd db = Eigen::RowVectorXd::Zero(g.in_c);
    RowMat Pg(static_cast<Eigen::Index>(n) * hw, pcols);
    Eigen::RowVectorXd grow(gout.cols());
    for (int i = 0; i < n; ++i) {
      grow = gout.row(i);
      im2col(grow.data(), g,
             Pg.data() + static_cast<ptrdiff_t>(i) * hw * pcols);
      for (int pix = 0; pix < g.in_h * g.in_w; ++pix)
        for (int c = 0; c < g.in_c; ++c) db(c) += grow(pix * g.in_c + c);
    }
    Mat dW = Pg.transpose() * *X;
    t.accumulate(w.idx, dW);
    t.accumulate(bias.idx, db);
    if (t.needs_grad(x)) {
      RowMat dXr = Pg * wv;  // (n*hw) x out_c, sample rows contiguous
      const int in_sz = hw * g.out_c;
      Mat dX(n, in_sz);
      for (int i = 0; i < n; ++i)
        dX.row(i) = Eigen::Map<const Eigen::RowVectorXd>(
            dXr.data() + static_cast<ptrdiff_t>(i) * in_sz, in_sz);
      t.accumulate(x.idx, dX);
    }
  });
}

Var batchnorm(Tape& t, Var x, Var gamma, Var beta, double eps,
              Eigen::RowVectorXd* batch_mean, Eigen::RowVectorXd* batch_var) {
  const Mat& xv = t.value(x);
  const double n = static_cast<double>(xv.rows());
  Eigen::RowVectorXd mu = xv.colwise().mean();
  Mat xc = xv.rowwise() - mu;
  Eigen::RowVectorXd var = xc.array().square().colwise().mean();
  Eigen::RowVectorXd istd = (var.array() + eps).rsqrt();
  Mat xhat = xc.array().rowwise() * istd.array();
  Eigen::RowVectorXd gv = t.value(gamma).row(0);
  Eigen::RowVectorXd bv = t.value(beta).row(0);
  Mat out = (xhat.array().rowwise() * gv.array()).rowwise() + bv.array();
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  return t.make(std::move(out), {x, gamma, beta},
                [x, gamma, beta, xhat, istd, n](Tape& t, int self) {
                  const Mat& g = t.grad_ref(self);
                  Eigen::RowVectorXd gv = t.value(gamma).row(0);
                  if (t.needs_grad(gamma))
                    t.accumulate(gamma.idx,
                                 g.cwiseProduct(xhat).colwise().sum());
                  if (t.needs_grad(beta)) t.accumulate(beta.idx, g.colwise().sum());
                  if (t.needs_grad(x)) {
                    Mat gxhat = g.array().rowwise() * gv.array();
                    Eigen::RowVectorXd s1 = gxhat.colwise().sum();
                    Eigen::RowVectorXd s2 =
                        gxhat.cwiseProduct(xhat).colwise().sum();
                    Mat dx =
                        (gxhat.array() - (s1.array() / n).replicate(xhat.rows(), 1) -
                         xhat.array() * (s2.array() / n).replicate(xhat.rows(), 1))
                            .rowwise() *
                        istd.array();
                    t.accumulate(x.idx, dx);
                  }
                });
}

}  // namespace lighthcg::ad
