#include <doctest.h>

#include <random>

#include "fd_check.hpp"
#include "lighthcg/ad.hpp"

using namespace lighthcg;
using ad::Mat;

namespace {

Mat randn(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = g(rng);
  return m;
}

}  // namespace

TEST_CASE("dense chain gradients match finite differences") {
  Mat x = randn(5, 3, 1), w = randn(3, 4, 2), b = randn(1, 4, 3);
  auto loss = [&](const std::vector<Mat>& p) {
    ad::Tape t;
    ad::Var xv = t.leaf(p[0], true);
    ad::Var wv = t.leaf(p[1], true);
    ad::Var bv = t.leaf(p[2], true);
    ad::Var h = ad::silu(t, ad::add_rowvec(t, ad::matmul(t, xv, wv), bv));
    h = ad::elu(t, h);
    h = ad::sigmoid(t, h);
    return t.value(ad::sum(t, ad::square(t, h)))(0, 0);
  };
  ad::Tape t;
  ad::Var xv = t.leaf(x, true), wv = t.leaf(w, true), bv = t.leaf(b, true);
  ad::Var h = ad::silu(t, ad::add_rowvec(t, ad::matmul(t, xv, wv), bv));
  h = ad::elu(t, h);
  h = ad::sigmoid(t, h);
  t.backward(ad::sum(t, ad::square(t, h)));
  double err = fdcheck::max_rel_error({x, w, b}, loss,
                                      {t.grad(xv), t.grad(wv), t.grad(bv)});
  CHECK(err < 1e-6);
}

TEST_CASE("misc op gradients: hadamard, cdiv, sqrt, exp_scale, sum_abs") {
  Mat a = randn(4, 4, 7).array() + 3.0;  // keep cdiv/sqrt away from 0
  Mat b = randn(4, 4, 8).array() + 3.0;
  auto loss = [&](const std::vector<Mat>& p) {
    ad::Tape t;
    ad::Var av = t.leaf(p[0], true), bv = t.leaf(p[1], true);
    ad::Var h = ad::cdiv(t, ad::hadamard(t, av, bv), bv);
    h = ad::sqrt_v(t, h);
    h = ad::exp_scale(t, h, -0.3);
    ad::Var s = ad::add(t, ad::sum_abs(t, h), ad::sum(t, ad::sub(t, av, bv)));
    return t.value(s)(0, 0);
  };
  ad::Tape t;
  ad::Var av = t.leaf(a, true), bv = t.leaf(b, true);
  ad::Var h = ad::cdiv(t, ad::hadamard(t, av, bv), bv);
  h = ad::sqrt_v(t, h);
  h = ad::exp_scale(t, h, -0.3);
  t.backward(ad::add(t, ad::sum_abs(t, h), ad::sum(t, ad::sub(t, av, bv))));
  double err =
      fdcheck::max_rel_error({a, b}, loss, {t.grad(av), t.grad(bv)});
  CHECK(err < 1e-6);
}

TEST_CASE("shape ops: concat/slice/transpose/center gradients") {
  Mat a = randn(6, 2, 11), b = randn(6, 3, 12);
  auto build = [&](ad::Tape& t, ad::Var av, ad::Var bv) {
    ad::Var c = ad::concat_cols(t, av, bv);
    ad::Var s = ad::slice_cols(t, c, 1, 3);
    ad::Var k = ad::matmul(t, s, ad::transpose(t, s));
    return ad::sum(t, ad::square(t, ad::center(t, k)));
  };
  auto loss = [&](const std::vector<Mat>& p) {
    ad::Tape t;
    ad::Var av = t.leaf(p[0], true), bv = t.leaf(p[1], true);
    return t.value(build(t, av, bv))(0, 0);
  };
  ad::Tape t;
  ad::Var av = t.leaf(a, true), bv = t.leaf(b, true);
  t.backward(build(t, av, bv));
  double err =
      fdcheck::max_rel_error({a, b}, loss, {t.grad(av), t.grad(bv)});
  CHECK(err < 1e-6);
}

TEST_CASE("center removes row and column means") {
  ad::Tape t;
  Mat k = randn(7, 7, 5);
  Mat sym = k + k.transpose();
  ad::Var c = ad::center(t, t.constant(sym));
  CHECK(t.value(c).rowwise().sum().cwiseAbs().maxCoeff() < 1e-9);
  CHECK(t.value(c).colwise().sum().cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("bce matches closed form and differentiates") {
  Mat target(2, 3);
  target << 0, 1, 0.5, 1, 0, 0.25;
  Mat logits = randn(2, 3, 21);
  auto loss = [&](const std::vector<Mat>& p) {
    ad::Tape t;
    ad::Var lv = t.leaf(p[0], true);
    return t.value(ad::bce_sum_mean(t, ad::sigmoid(t, lv), target))(0, 0);
  };
  ad::Tape t;
  ad::Var lv = t.leaf(logits, true);
  ad::Var pred = ad::sigmoid(t, lv);
  ad::Var l = ad::bce_sum_mean(t, pred, target);
  // closed form
  Mat p = t.value(pred);
  double expect = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      expect -= target(i, j) * std::log(p(i, j)) +
                (1 - target(i, j)) * std::log(1 - p(i, j));
  expect /= 2;
  CHECK(t.value(l)(0, 0) == doctest::Approx(expect).epsilon(1e-12));
  t.backward(l);
  CHECK(fdcheck::max_rel_error({logits}, loss, {t.grad(lv)}) < 1e-6);
}

TEST_CASE("same-padding conv geometry") {
  ad::ConvGeom g = ad::conv_geometry(64, 64, 3, 16, 4, 2);
  CHECK(g.out_h == 32);
  CHECK(g.out_w == 32);
  ad::ConvGeom g2 = ad::conv_geometry(5, 5, 1, 2, 3, 2);
  CHECK(g2.out_h == 3);
  // the returned struct describes the associated forward conv, so the
  // transpose's upsampled output lives in the in_* slots
  ad::ConvGeom gt = ad::conv_transpose_geometry(8, 8, 16, 32, 4, 2);
  CHECK(gt.in_h == 16);
  CHECK(gt.in_w == 16);
  CHECK(gt.out_h == 8);
}

TEST_CASE("conv2d gradients match finite differences") {
  ad::ConvGeom g = ad::conv_geometry(6, 6, 2, 3, 3, 2);
  Mat x = randn(2, 6 * 6 * 2, 31);
  Mat w = 0.3 * randn(3 * 3 * 2, 3, 32);
  Mat b = 0.1 * randn(1, 3, 33);
  auto build = [&](ad::Tape& t, ad::Var xv, ad::Var wv, ad::Var bv) {
    return ad::sum(t, ad::square(t, ad::silu(t, ad::conv2d(t, xv, wv, bv, g))));
  };
  auto loss = [&](const std::vector<Mat>& p) {
    ad::Tape t;
    ad::Var xv = t.leaf(p[0], true), wv = t.leaf(p[1], true),
            bv = t.leaf(p[2], true);
    return t.value(build(t, xv, wv, bv))(0, 0);
  };
  ad::Tape t;
  ad::Var xv = t.leaf(x, true), wv = t.leaf(w, true), bv = t.leaf(b, true);
  t.backward(build(t, xv, wv, bv));
  double err = fdcheck::max_rel_error(
      {x, w, b}, loss, {t.grad(xv), t.grad(wv), t.grad(bv)});
  CHECK(err < 1e-6);
}

TEST_CASE("conv_transpose2d gradients match finite differences") {
  ad::ConvGeom g = ad::conv_transpose_geometry(3, 3, 4, 2, 4, 2);
  Mat x = randn(2, 3 * 3 * 4, 41);
  Mat w = 0.3 * randn(4 * 4 * 2, 4, 42);
  Mat b = 0.1 * randn(1, 2, 43);
  auto build = [&](ad::Tape& t, ad::Var xv, ad::Var wv, ad::Var bv) {
    return ad::sum(
        t, ad::square(t, ad::sigmoid(t, ad::conv_transpose2d(t, xv, wv, bv, g))));
  };
  auto loss = [&](const std::vector<Mat>& p) {
    ad::Tape t;
    ad::Var xv = t.leaf(p[0], true), wv = t.leaf(p[1], true),
            bv = t.leaf(p[2], true);
    return t.value(build(t, xv, wv, bv))(0, 0);
  };
  ad::Tape t;
  ad::Var xv = t.leaf(x, true), wv = t.leaf(w, true), bv = t.leaf(b, true);
  t.backward(build(t, xv, wv, bv));
  double err = fdcheck::max_rel_error(
      {x, w, b}, loss, {t.grad(xv), t.grad(wv), t.grad(bv)}, 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("batchnorm gradients match finite differences") {
  Mat x = randn(8, 3, 51), gamma = Mat::Ones(1, 3), beta = Mat::Zero(1, 3);
  auto build = [&](ad::Tape& t, ad::Var xv, ad::Var gv, ad::Var bv) {
    Eigen::RowVectorXd bm, bvar;
    ad::Var h = ad::batchnorm(t, xv, gv, bv, 1e-5, &bm, &bvar);
    return ad::sum(t, ad::square(t, ad::elu(t, h)));
  };
  auto loss = [&](const std::vector<Mat>& p) {
    ad::Tape t;
    ad::Var xv = t.leaf(p[0], true), gv = t.leaf(p[1], true),
            bv = t.leaf(p[2], true);
    return t.value(build(t, xv, gv, bv))(0, 0);
  };
  ad::Tape t;
  ad::Var xv = t.leaf(x, true), gv = t.leaf(gamma, true),
          bv = t.leaf(beta, true);
  t.backward(build(t, xv, gv, bv));
  double err = fdcheck::max_rel_error(
      {x, gamma, beta}, loss, {t.grad(xv), t.grad(gv), t.grad(bv)});
  CHECK(err < 1e-5);
}

TEST_CASE("adam minimizes a quadratic") {
  Mat w = Mat::Constant(2, 2, 5.0);
  ad::Adam opt(0.1);
  for (int i = 0; i < 500; ++i) opt.step({&w}, {2.0 * w});
  CHECK(w.cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("backward min_idx skips lower tape segments") {
  ad::Tape t;
  Mat a = randn(3, 3, 61);
  ad::Var av = t.leaf(a, true);
  ad::Var low = ad::square(t, av);          // below the floor
  ad::Var bv = t.leaf(randn(3, 3, 62), true);
  ad::Var root = ad::sum(t, ad::hadamard(t, low, ad::square(t, bv)));
  t.backward(root, bv.idx);
  CHECK(t.grad(bv).rows() == 3);  // gradient reached the upper leaf
}
