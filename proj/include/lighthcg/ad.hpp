#pragma once

// Reverse-mode autodiff over dense Eigen matrices. A Tape owns a
// topologically ordered list of nodes; ops append nodes and return handles.
// Image batches are stored flat, one row per sample in HWC order, so the
// same machinery covers dense layers, convolutions and kernel matrices.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace lighthcg::ad {

using Mat = Eigen::MatrixXd;

class Tape;

struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

struct Node {
  Mat value;
  Mat grad;  // empty until first accumulation
  bool needs_grad = false;
  std::function<void(Tape&, int)> backward;  // null for leaves
};

class Tape {
 public:
  Var leaf(Mat value, bool needs_grad);
  Var constant(Mat value) { return leaf(std::move(value), false); }

  const Mat& value(Var v) const { return nodes_[v.idx].value; }
  const Mat& grad(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.idx].needs_grad; }

  // Accumulates into the grad slot, allocating zeros on first touch.
  void accumulate(int idx, const Mat& g);
  Mat& grad_ref(int idx);
  bool has_grad(int idx) const { return nodes_[idx].grad.size() > 0; }
  const Mat& value_at(int idx) const { return nodes_[idx].value; }

  // root must be 1x1; seeds d(root)/d(root) = 1 and sweeps the tape.
  // Nodes with index < min_idx are not traversed (their grads may be left
  // incomplete) — useful when only parameters bound above min_idx matter.
  void backward(Var root, int min_idx = 0);
  void zero_grad();

  Var make(Mat value, std::initializer_list<Var> parents,
           std::function<void(Tape&, int)> backward_fn);
  Var make(Mat value, const std::vector<Var>& parents,
           std::function<void(Tape&, int)> backward_fn);

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

// ---- arithmetic ----
Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var a);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var add_rowvec(Tape& t, Var a, Var bias);  // n x m plus 1 x m
Var scale(Tape& t, Var a, double c);
Var hadamard(Tape& t, Var a, Var b);
Var hadamard_mask(Tape& t, Var a, const Mat& mask);
Var cdiv(Tape& t, Var a, Var b);

// ---- elementwise nonlinearities ----
Var silu(Tape& t, Var a);
Var elu(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var square(Tape& t, Var a);
Var sqrt_v(Tape& t, Var a);
Var exp_scale(Tape& t, Var a, double c);  // exp(c * a)

// ---- shape ----
Var concat_cols(Tape& t, Var a, Var b);
Var slice_cols(Tape& t, Var a, int start, int count);

// ---- reductions (1x1 results) ----
Var sum(Tape& t, Var a);
Var sum_abs(Tape& t, Var a);  // subgradient 0 at 0
// Per-pixel Bernoulli cross entropy, summed per sample, mean over batch.
Var bce_sum_mean(Tape& t, Var pred, const Mat& target);
// Removes row and column means: HKH with H = I - (1/n) 1 1^T.
Var center(Tape& t, Var k);

// ---- convolution ----
struct ConvGeom {
  int in_h = 0, in_w = 0, in_c = 0;
  int out_h = 0, out_w = 0, out_c = 0;
  int kernel = 0, stride = 1;
  int pad_top = 0, pad_left = 0;
};

// "same" padding: out = ceil(in / stride).
ConvGeom conv_geometry(int in_h, int in_w, int in_c, int out_c, int kernel,
                       int stride);
// Transposed convolution doubling rule: out = in * stride.
ConvGeom conv_transpose_geometry(int in_h, int in_w, int in_c, int out_c,
                                 int kernel, int stride);

// x: n x (in_h*in_w*in_c), w: (k*k*in_c) x out_c, bias: 1 x out_c.
Var conv2d(Tape& t, Var x, Var w, Var bias, const ConvGeom& g);
// x: n x (in_h*in_w*in_c), w: (k*k*out_c) x in_c, bias: 1 x out_c.
Var conv_transpose2d(Tape& t, Var x, Var w, Var bias, const ConvGeom& g);

// ---- normalization / regularization ----
// Per-column batch normalization (training statistics). batch_mean/var are
// written out so the caller can maintain running estimates.
Var batchnorm(Tape& t, Var x, Var gamma, Var beta, double eps,
              Eigen::RowVectorXd* batch_mean, Eigen::RowVectorXd* batch_var);

// ---- parameters & optimizer ----
struct ParamStore {
  struct Entry {
    std::string name;
    Mat value;
  };
  std::vector<Entry> entries;

  int add(const std::string& name, Mat init);
  Mat& value(int idx) { return entries[idx].value; }
  const Mat& value(int idx) const { return entries[idx].value; }
  int find(const std::string& name) const;  // -1 when absent
};

// Registers every listed parameter as a leaf on a fresh tape.
std::vector<Var> bind_params(Tape& t, ParamStore& store,
                             const std::vector<int>& indices);

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step_count = 0;
  std::vector<Mat> m, v;

  explicit Adam(double learning_rate) : lr(learning_rate) {}
  // grads[i] may be empty (no gradient reached the parameter).
  void step(std::vector<Mat*> params, const std::vector<Mat>& grads);
};

// Seeded Glorot-uniform init for a fan_in x fan_out weight.
Mat glorot_uniform(int rows, int cols, std::mt19937_64& rng);

}  // namespace lighthcg::ad
