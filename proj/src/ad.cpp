#include "lighthcg/ad.hpp"

#include <cmath>

namespace lighthcg::ad {

Var Tape::leaf(Mat value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Mat& Tape::grad(Var v) const {
  const Node& n = nodes_[v.idx];
  if (n.grad.size() == 0) {
    static thread_local Mat zero;
    zero = Mat::Zero(n.value.rows(), n.value.cols());
    return zero;
  }
  return n.grad;
}

void Tape::accumulate(int idx, const Mat& g) {
  Node& n = nodes_[idx];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Mat& Tape::grad_ref(int idx) {
  Node& n = nodes_[idx];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root, int min_idx) {
  const Node& r = nodes_[root.idx];
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw std::invalid_argument("backward root must be a scalar node");
  accumulate(root.idx, Mat::Ones(1, 1));
  for (int i = root.idx; i >= min_idx; --i) {
    Node& n = nodes_[i];
    if (!n.backward || !n.needs_grad || n.grad.size() == 0) continue;
    n.backward(*this, i);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.resize(0, 0);
}

Var Tape::make(Mat value, std::initializer_list<Var> parents,
               std::function<void(Tape&, int)> backward_fn) {
  return make(std::move(value), std::vector<Var>(parents),
              std::move(backward_fn));
}

Var Tape::make(Mat value, const std::vector<Var>& parents,
               std::function<void(Tape&, int)> backward_fn) {
  bool ng = false;
  for (Var p : parents) ng = ng || nodes_[p.idx].needs_grad;
  Node n;
  n.value = std::move(value);
  n.needs_grad = ng;
  if (ng) n.backward = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var matmul(Tape& t, Var a, Var b) {
  Mat v = t.value(a) * t.value(b);
  return t.make(std::move(v), {a, b}, [a, b](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    if (t.needs_grad(a)) t.accumulate(a.idx, g * t.value(b).transpose());
    if (t.needs_grad(b)) t.accumulate(b.idx, t.value(a).transpose() * g);
  });
}

Var transpose(Tape& t, Var a) {
  return t.make(t.value(a).transpose(), {a}, [a](Tape& t, int self) {
    t.accumulate(a.idx, t.grad_ref(self).transpose());
  });
}

Var add(Tape& t, Var a, Var b) {
  return t.make(t.value(a) + t.value(b), {a, b}, [a, b](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    t.accumulate(a.idx, g);
    t.accumulate(b.idx, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  return t.make(t.value(a) - t.value(b), {a, b}, [a, b](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    t.accumulate(a.idx, g);
    t.accumulate(b.idx, -g);
  });
}

Var add_rowvec(Tape& t, Var a, Var bias) {
  Mat v = t.value(a);
  v.rowwise() += Eigen::RowVectorXd(t.value(bias).row(0));
  return t.make(std::move(v), {a, bias}, [a, bias](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    t.accumulate(a.idx, g);
    t.accumulate(bias.idx, g.colwise().sum());
  });
}

Var scale(Tape& t, Var a, double c) {
  return t.make(t.value(a) * c, {a}, [a, c](Tape& t, int self) {
    t.accumulate(a.idx, t.grad_ref(self) * c);
  });
}

Var hadamard(Tape& t, Var a, Var b) {
  Mat v = t.value(a).cwiseProduct(t.value(b));
  return t.make(std::move(v), {a, b}, [a, b](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    if (t.needs_grad(a)) t.accumulate(a.idx, g.cwiseProduct(t.value(b)));
    if (t.needs_grad(b)) t.accumulate(b.idx, g.cwiseProduct(t.value(a)));
  });
}

Var hadamard_mask(Tape& t, Var a, const Mat& mask) {
  Mat v = t.value(a).cwiseProduct(mask);
  return t.make(std::move(v), {a}, [a, mask](Tape& t, int self) {
    t.accumulate(a.idx, t.grad_ref(self).cwiseProduct(mask));
  });
}

Var cdiv(Tape& t, Var a, Var b) {
  Mat v = t.value(a).cwiseQuotient(t.value(b));
  return t.make(std::move(v), {a, b}, [a, b](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    const Mat& bv = t.value(b);
    if (t.needs_grad(a)) t.accumulate(a.idx, g.cwiseQuotient(bv));
    if (t.needs_grad(b)) {
      Mat q = t.value(a).cwiseQuotient(bv.cwiseProduct(bv));
      t.accumulate(b.idx, -g.cwiseProduct(q));
    }
  });
}

namespace {
inline double sigmoid1(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Var silu(Tape& t, Var a) {
  Mat v = t.value(a).unaryExpr([](double x) { return x * sigmoid1(x); });
  return t.make(std::move(v), {a}, [a](Tape& t, int self) {
    Mat d = t.value(a).unaryExpr([](double x) {
      double s = sigmoid1(x);
      return s * (1.0 + x * (1.0 - s));
    });
    t.accumulate(a.idx, t.grad_ref(self).cwiseProduct(d));
  });
}

Var elu(Tape& t, Var a) {
  Mat v = t.value(a).unaryExpr(
      [](double x) { return x > 0 ? x : std::expm1(x); });
  return t.make(std::move(v), {a}, [a](Tape& t, int self) {
    Mat d = t.value(a).unaryExpr(
        [](double x) { return x > 0 ? 1.0 : std::exp(x); });
    t.accumulate(a.idx, t.grad_ref(self).cwiseProduct(d));
  });
}

Var sigmoid(Tape& t, Var a) {
  Mat v = t.value(a).unaryExpr([](double x) { return sigmoid1(x); });
  return t.make(std::move(v), {a}, [a](Tape& t, int self) {
    const Mat& s = t.value_at(self);
    Mat d = s.array() * (1.0 - s.array());
    t.accumulate(a.idx, t.grad_ref(self).cwiseProduct(d));
  });
}

Var square(Tape& t, Var a) {
  Mat v = t.value(a).array().square();
  return t.make(std::move(v), {a}, [a](Tape& t, int self) {
    t.accumulate(a.idx, 2.0 * t.grad_ref(self).cwiseProduct(t.value(a)));
  });
}

Var sqrt_v(Tape& t, Var a) {
  Mat v = t.value(a).array().sqrt();
  return t.make(std::move(v), {a}, [a](Tape& t, int self) {
    Mat d = 0.5 * t.value_at(self).array().inverse();
    t.accumulate(a.idx, t.grad_ref(self).cwiseProduct(d));
  });
}

Var exp_scale(Tape& t, Var a, double c) {
  Mat v = (c * t.value(a).array()).exp();
  return t.make(std::move(v), {a}, [a, c](Tape& t, int self) {
    Mat d = c * t.value_at(self).array();
    t.accumulate(a.idx, t.grad_ref(self).cwiseProduct(d));
  });
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Mat& av = t.value(a);
  const Mat& bv = t.value(b);
  if (av.rows() != bv.rows())
    throw std::invalid_argument("concat_cols: row mismatch");
  Mat v(av.rows(), av.cols() + bv.cols());
  v << av, bv;
  int ac = static_cast<int>(av.cols());
  int bc = static_cast<int>(bv.cols());
  return t.make(std::move(v), {a, b}, [a, b, ac, bc](Tape& t, int self) {
    const Mat& g = t.grad_ref(self);
    if (t.needs_grad(a)) t.accumulate(a.idx, g.leftCols(ac));
    if (t.needs_grad(b)) t.accumulate(b.idx, g.rightCols(bc));
  });
}

Var slice_cols(Tape& t, Var a, int start, int count) {
  Mat v = t.value(a).middleCols(start, count);
  return t.make(std::move(v), {a}, [a, start, count](Tape& t, int self) {
    Mat g = Mat::Zero(t.value(a).rows(), t.value(a).cols());
    g.middleCols(start, count) = t.grad_ref(self);
    t.accumulate(a.idx, g);
  });
}

Var sum(Tape& t, Var a) {
  Mat v(1, 1);
  v(0, 0) = t.value(a).sum();
  return t.make(std::move(v), {a}, [a](Tape& t, int self) {
    double g = t.grad_ref(self)(0, 0);
    t.accumulate(a.idx,
                 Mat::Constant(t.value(a).rows(), t.value(a).cols(), g));
  });
}

Var sum_abs(Tape& t, Var a) {
  Mat v(1, 1);
  v(0, 0) = t.value(a).array().abs().sum();
  return t.make(std::move(v), {a}, [a](Tape& t, int self) {
    double g = t.grad_ref(self)(0, 0);
    Mat s = t.value(a).unaryExpr(
        [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
    t.accumulate(a.idx, g * s);
  });
}

Var bce_sum_mean(Tape& t, Var pred, const Mat& target) {
  const Mat& p = t.value(pred);
  if (p.rows() != target.rows() || p.cols() != target.cols())
    throw std::invalid_argument("bce_sum_mean: shape mismatch");
  double n = static_cast<double>(p.rows());
  double acc = 0.0;
  for (Eigen::Index j = 0; j < p.cols(); ++j)
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      double pv = p(i, j), x = target(i, j);
      acc -= x * std::log(pv) + (1.0 - x) * std::log1p(-pv);
    }
  Mat v(1, 1);
  v(0, 0) = acc / n;
  return t.make(std::move(v), {pred}, [pred, target, n](Tape& t, int self) {
    double g = t.grad_ref(self)(0, 0) / n;
    const Mat& p = t.value(pred);
    Mat d = (p.array() - target.array()) / (p.array() * (1.0 - p.array()));
    t.accumulate(pred.idx, g * d);
  });
}

Var center(Tape& t, Var k) {
  const Mat& kv = t.value(k);
  auto center_of = [](const Mat& m) {
    Eigen::VectorXd rm = m.rowwise().mean();
    Eigen::RowVectorXd cm = m.colwise().mean();
    double tm = m.mean();
    Mat out = m;
    out.colwise() -= rm;
    out.rowwise() -= cm;
    out.array() += tm;
    return out;
  };
  Mat v = center_of(kv);
  return t.make(std::move(v), {k}, [k, center_of](Tape& t, int self) {
    // d(HKH)/dK applied to upstream grad is H G H again.
    t.accumulate(k.idx, center_of(t.grad_ref(self)));
  });
}

// ---------------------------------------------------------------------------
// parameters & optimizer

int ParamStore::add(const std::string& name, Mat init) {
  entries.push_back({name, std::move(init)});
  return static_cast<int>(entries.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return static_cast<int>(i);
  return -1;
}

std::vector<Var> bind_params(Tape& t, ParamStore& store,
                             const std::vector<int>& indices) {
  std::vector<Var> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(t.leaf(store.value(i), true));
  return out;
}

void Adam::step(std::vector<Mat*> params, const std::vector<Mat>& grads) {
  if (m.empty()) {
    m.resize(params.size());
    v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m[i] = Mat::Zero(params[i]->rows(), params[i]->cols());
      v[i] = Mat::Zero(params[i]->rows(), params[i]->cols());
    }
  }
  ++step_count;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() == 0) continue;
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i].array().matrix() +
           (1.0 - beta2) * grads[i].array().square().matrix();
    Mat mhat = m[i] / bc1;
    Mat vhat = v[i] / bc2;
    params[i]->array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
  }
}

Mat glorot_uniform(int rows, int cols, std::mt19937_64& rng) {
  double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Mat w(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) w(i, j) = u(rng);
  return w;
}

}  // namespace lighthcg::ad
