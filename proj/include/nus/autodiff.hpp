#pragma once

// Dense reverse-mode differentiation over Eigen matrices.
//
// A Tape records every operation applied to Var handles. Nodes are appended
// after their inputs, so walking the node list backwards is a valid reverse
// topological order and each node is visited exactly once by backward().
// Parameters live outside any tape (in a ParameterStore) and receive their
// gradients additively, so one parameter may be used any number of times.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace nus::ad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mat = Matrix<double>;

template <typename Scalar>
struct BasicParameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  bool trainable = true;

  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Owns named parameters in registration order.
template <typename Scalar>
class BasicParameterStore {
 public:
  using Parameter = BasicParameter<Scalar>;

  Parameter& add(const std::string& name, Matrix<Scalar> init, bool trainable = true) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = std::move(init);
    p->trainable = trainable;
    p->zero_grad();
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter& add_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                         Scalar limit, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-static_cast<double>(limit),
                                                static_cast<double>(limit));
    Matrix<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
    return add(name, std::move(m));
  }

  Parameter& add_constant(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                          Scalar value = Scalar(0)) {
    return add(name, Matrix<Scalar>::Constant(rows, cols, value));
  }

  Parameter* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t count_prefix(const std::string& prefix) const {
    return static_cast<std::size_t>(std::count_if(params_.begin(), params_.end(), [&](const auto& p) {
      return p->name.rfind(prefix, 0) == 0;
    }));
  }

  Eigen::Index scalar_count() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename Scalar>
class BasicTape;

/// Handle to a node on a tape.
template <typename Scalar>
struct BasicVar {
  BasicTape<Scalar>* tape = nullptr;
  int id = -1;

  const Matrix<Scalar>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename Scalar>
class BasicTape {
 public:
  using Var = BasicVar<Scalar>;
  using Mat = Matrix<Scalar>;
  using Parameter = BasicParameter<Scalar>;
  using Backward = std::function<void(BasicTape&, const Mat& out_grad)>;

  /// With recording off, no backward closures are kept (inference only).
  explicit BasicTape(bool recording = true) : recording_(recording) {}
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  bool recording() const { return recording_; }

  Var constant(Mat value) { return push(std::move(value), false, {}); }

  /// Leaf bound to a parameter; repeated calls return the same node.
  Var param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var{this, it->second};
    const bool grad = recording_ && p.trainable;
    Var v = push(p.value, grad, {});
    if (grad) nodes_[v.id].param = &p;
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  Var push(Mat value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = recording_ && requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Adds g into the gradient slot of node id (allocated lazily).
  void accumulate(int id, const Mat& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = g;
    else n.grad += g;
  }
  template <typename Expr>
  void accumulate_expr(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = g;
    else n.grad += g;
  }

  /// Adds g into the block of node id starting at (row, col).
  void accumulate_block(int id, Eigen::Index row, Eigen::Index col, const Mat& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad.block(row, col, g.rows(), g.cols()) += g;
  }

  /// Reverse sweep from a scalar loss. Parameter gradients are added into
  /// Parameter::grad; call ParameterStore::zero_grad between steps.
  void backward(Var loss) {
    if (!recording_) throw std::logic_error("backward: tape was created without recording");
    const Mat& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      std::ostringstream os;
      os << "backward: loss must be scalar, got " << lv.rows() << "x" << lv.cols();
      throw std::invalid_argument(os.str());
    }
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad = Mat::Ones(1, 1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.param) {
        n.param->grad += n.grad;
      } else if (n.backward) {
        n.backward(*this, n.grad);
      }
      n.grad.resize(0, 0);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };

  bool recording_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

template <typename Scalar>
const Matrix<Scalar>& BasicVar<Scalar>::value() const {
  return tape->value(id);
}

using Tape = BasicTape<double>;
using Var = BasicVar<double>;
using Parameter = BasicParameter<double>;
using ParameterStore = BasicParameterStore<double>;

namespace detail {

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << "(" << r << "x" << c << ")";
  return os.str();
}

template <typename S>
[[noreturn]] void shape_error(const char* op, const Matrix<S>& a, const Matrix<S>& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                              " vs " + shape_str(b.rows(), b.cols()));
}

template <typename S>
bool any_grad(const BasicVar<S>& a) {
  return a.tape->requires_grad(a.id);
}
template <typename S>
bool any_grad(const BasicVar<S>& a, const BasicVar<S>& b) {
  return a.tape->requires_grad(a.id) || b.tape->requires_grad(b.id);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive operations.
// ---------------------------------------------------------------------------

template <typename S>
BasicVar<S> matmul(BasicVar<S> a, BasicVar<S> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) detail::shape_error("matmul", av, bv);
  Matrix<S> out = av * bv;
  return a.tape->push(std::move(out), detail::any_grad(a, b), [a, b](BasicTape<S>& t, const Matrix<S>& g) {
    if (t.requires_grad(a.id)) t.accumulate_expr(a.id, g * t.value(b.id).transpose());
    if (t.requires_grad(b.id)) t.accumulate_expr(b.id, t.value(a.id).transpose() * g);
  });
}

/// Elementwise a + b. A 1-row b is broadcast over the rows of a (bias add).
template <typename S>
BasicVar<S> add(BasicVar<S> a, BasicVar<S> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    return a.tape->push(av + bv, detail::any_grad(a, b), [a, b](BasicTape<S>& t, const Matrix<S>& g) {
      t.accumulate(a.id, g);
      t.accumulate(b.id, g);
    });
  }
  if (bv.rows() == 1 && bv.cols() == av.cols()) {
    Matrix<S> out = av.rowwise() + bv.row(0);
    return a.tape->push(std::move(out), detail::any_grad(a, b), [a, b](BasicTape<S>& t, const Matrix<S>& g) {
      t.accumulate(a.id, g);
      if (t.requires_grad(b.id)) t.accumulate_expr(b.id, g.colwise().sum());
    });
  }
  detail::shape_error("add", av, bv);
}

template <typename S>
BasicVar<S> sub(BasicVar<S> a, BasicVar<S> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) detail::shape_error("sub", av, bv);
  return a.tape->push(av - bv, detail::any_grad(a, b), [a, b](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate(a.id, g);
    if (t.requires_grad(b.id)) t.accumulate_expr(b.id, -g);
  });
}

template <typename S>
BasicVar<S> elemwise_mul(BasicVar<S> a, BasicVar<S> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) detail::shape_error("elemwise_mul", av, bv);
  Matrix<S> out = av.cwiseProduct(bv);
  return a.tape->push(std::move(out), detail::any_grad(a, b), [a, b](BasicTape<S>& t, const Matrix<S>& g) {
    if (t.requires_grad(a.id)) t.accumulate_expr(a.id, g.cwiseProduct(t.value(b.id)));
    if (t.requires_grad(b.id)) t.accumulate_expr(b.id, g.cwiseProduct(t.value(a.id)));
  });
}

template <typename S>
BasicVar<S> scale(BasicVar<S> a, S factor) {
  return a.tape->push(a.value() * factor, detail::any_grad(a), [a, factor](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate_expr(a.id, g * factor);
  });
}

/// Side-by-side concatenation: every input has the same row count.
template <typename S>
BasicVar<S> concat_cols(std::span<const BasicVar<S>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool grad = false;
  for (const auto& p : parts) {
    if (p.rows() != rows) detail::shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
    grad = grad || detail::any_grad(p);
  }
  Matrix<S> out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<BasicVar<S>> ins(parts.begin(), parts.end());
  return parts[0].tape->push(std::move(out), grad, [ins](BasicTape<S>& t, const Matrix<S>& g) {
    Eigen::Index at = 0;
    for (const auto& p : ins) {
      const Eigen::Index c = t.value(p.id).cols();
      if (t.requires_grad(p.id)) t.accumulate_expr(p.id, g.middleCols(at, c));
      at += c;
    }
  });
}

template <typename S>
BasicVar<S> concat_cols(std::initializer_list<BasicVar<S>> parts) {
  return concat_cols(std::span<const BasicVar<S>>(parts.begin(), parts.size()));
}

/// Vertical stacking: every input has the same column count.
template <typename S>
BasicVar<S> concat_rows(std::span<const BasicVar<S>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool grad = false;
  for (const auto& p : parts) {
    if (p.cols() != cols) detail::shape_error("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
    grad = grad || detail::any_grad(p);
  }
  Matrix<S> out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<BasicVar<S>> ins(parts.begin(), parts.end());
  return parts[0].tape->push(std::move(out), grad, [ins](BasicTape<S>& t, const Matrix<S>& g) {
    Eigen::Index at = 0;
    for (const auto& p : ins) {
      const Eigen::Index r = t.value(p.id).rows();
      if (t.requires_grad(p.id)) t.accumulate_expr(p.id, g.middleRows(at, r));
      at += r;
    }
  });
}

template <typename S>
BasicVar<S> concat_rows(std::initializer_list<BasicVar<S>> parts) {
  return concat_rows(std::span<const BasicVar<S>>(parts.begin(), parts.size()));
}

template <typename S>
BasicVar<S> slice_rows(BasicVar<S> a, Eigen::Index start, Eigen::Index count) {
  const auto& av = a.value();
  if (start < 0 || count < 0 || start + count > av.rows())
    throw std::invalid_argument("slice_rows: range out of bounds for " + detail::shape_str(av.rows(), av.cols()));
  Matrix<S> out = av.middleRows(start, count);
  return a.tape->push(std::move(out), detail::any_grad(a), [a, start](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate_block(a.id, start, 0, g);
  });
}

template <typename S>
BasicVar<S> slice_cols(BasicVar<S> a, Eigen::Index start, Eigen::Index count) {
  const auto& av = a.value();
  if (start < 0 || count < 0 || start + count > av.cols())
    throw std::invalid_argument("slice_cols: range out of bounds for " + detail::shape_str(av.rows(), av.cols()));
  Matrix<S> out = av.middleCols(start, count);
  return a.tape->push(std::move(out), detail::any_grad(a), [a, start](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate_block(a.id, 0, start, g);
  });
}

template <typename S>
BasicVar<S> transpose(BasicVar<S> a) {
  Matrix<S> out = a.value().transpose();
  return a.tape->push(std::move(out), detail::any_grad(a), [a](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate_expr(a.id, g.transpose());
  });
}

/// Row i of the result is row indices[i] of a.
template <typename S>
BasicVar<S> gather_rows(BasicVar<S> a, std::vector<Eigen::Index> indices) {
  const auto& av = a.value();
  Matrix<S> out(static_cast<Eigen::Index>(indices.size()), av.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= av.rows())
      throw std::invalid_argument("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = av.row(indices[i]);
  }
  const Eigen::Index rows = av.rows();
  return a.tape->push(std::move(out), detail::any_grad(a),
                      [a, idx = std::move(indices), rows](BasicTape<S>& t, const Matrix<S>& g) {
                        Matrix<S> full = Matrix<S>::Zero(rows, g.cols());
                        for (std::size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                        t.accumulate(a.id, full);
                      });
}

/// Row-wise softmax with max subtraction.
template <typename S>
BasicVar<S> softmax_rows(BasicVar<S> a) {
  const auto& av = a.value();
  Matrix<S> out(av.rows(), av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    const S m = av.row(r).maxCoeff();
    out.row(r) = (av.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  const int out_id = static_cast<int>(a.tape->node_count());
  return a.tape->push(std::move(out), detail::any_grad(a), [a, out_id](BasicTape<S>& t, const Matrix<S>& g) {
    const auto& y = t.value(out_id);
    Eigen::Matrix<S, Eigen::Dynamic, 1> dots = g.cwiseProduct(y).rowwise().sum();
    Matrix<S> dx = y.cwiseProduct(g - dots.replicate(1, g.cols()));
    t.accumulate(a.id, dx);
  });
}

template <typename S>
BasicVar<S> tanh(BasicVar<S> a) {
  Matrix<S> out = a.value().array().tanh().matrix();
  const int out_id = static_cast<int>(a.tape->node_count());
  return a.tape->push(std::move(out), detail::any_grad(a), [a, out_id](BasicTape<S>& t, const Matrix<S>& g) {
    const auto& y = t.value(out_id);
    t.accumulate_expr(a.id, (g.array() * (S(1) - y.array().square())).matrix());
  });
}

template <typename S>
BasicVar<S> sigmoid(BasicVar<S> a) {
  const auto& av = a.value();
  Matrix<S> out(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.size(); ++i) {
    const S x = av.data()[i];
    // Split by sign so exp never overflows.
    out.data()[i] = x >= 0 ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
  }
  const int out_id = static_cast<int>(a.tape->node_count());
  return a.tape->push(std::move(out), detail::any_grad(a), [a, out_id](BasicTape<S>& t, const Matrix<S>& g) {
    const auto& y = t.value(out_id);
    t.accumulate_expr(a.id, (g.array() * y.array() * (S(1) - y.array())).matrix());
  });
}

template <typename S>
BasicVar<S> relu(BasicVar<S> a) {
  Matrix<S> out = a.value().cwiseMax(S(0));
  return a.tape->push(std::move(out), detail::any_grad(a), [a](BasicTape<S>& t, const Matrix<S>& g) {
    const auto& x = t.value(a.id);
    t.accumulate_expr(a.id, (x.array() > S(0)).select(g, Matrix<S>::Zero(g.rows(), g.cols())));
  });
}

/// Column-wise maximum over rows (1 x cols). Ties route gradient to the first row.
template <typename S>
BasicVar<S> max_over_rows(BasicVar<S> a) {
  const auto& av = a.value();
  if (av.rows() == 0) throw std::invalid_argument("max_over_rows: empty input");
  Matrix<S> out(1, av.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(av.cols()));
  for (Eigen::Index c = 0; c < av.cols(); ++c) {
    Eigen::Index r;
    out(0, c) = av.col(c).maxCoeff(&r);
    arg[static_cast<std::size_t>(c)] = r;
  }
  const Eigen::Index rows = av.rows();
  return a.tape->push(std::move(out), detail::any_grad(a), [a, arg = std::move(arg), rows](BasicTape<S>& t, const Matrix<S>& g) {
    Matrix<S> full = Matrix<S>::Zero(rows, g.cols());
    for (Eigen::Index c = 0; c < g.cols(); ++c) full(arg[static_cast<std::size_t>(c)], c) = g(0, c);
    t.accumulate(a.id, full);
  });
}

/// Mean of all entries (1x1).
template <typename S>
BasicVar<S> mean(BasicVar<S> a) {
  const auto& av = a.value();
  if (av.size() == 0) throw std::invalid_argument("mean: empty input");
  Matrix<S> out(1, 1);
  out(0, 0) = av.mean();
  const Eigen::Index r = av.rows(), c = av.cols();
  return a.tape->push(std::move(out), detail::any_grad(a), [a, r, c](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate_expr(a.id, Matrix<S>::Constant(r, c, g(0, 0) / static_cast<S>(r * c)));
  });
}

/// Sum of all entries (1x1).
template <typename S>
BasicVar<S> sum(BasicVar<S> a) {
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().sum();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape->push(std::move(out), detail::any_grad(a), [a, r, c](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate_expr(a.id, Matrix<S>::Constant(r, c, g(0, 0)));
  });
}

/// Mean binary cross-entropy of probabilities p (N x 1) against 0/1 labels.
/// Probabilities are clamped to [eps, 1 - eps]; clamped entries pass no gradient.
template <typename S>
BasicVar<S> binary_cross_entropy(BasicVar<S> p, std::vector<S> labels, S eps = S(1e-12)) {
  const auto& pv = p.value();
  if (pv.cols() != 1 || pv.rows() != static_cast<Eigen::Index>(labels.size())) {
    std::ostringstream os;
    os << "binary_cross_entropy: " << pv.rows() << " scores vs " << labels.size() << " labels";
    throw std::invalid_argument(os.str());
  }
  const auto n = static_cast<S>(labels.size());
  Matrix<S> out(1, 1);
  S total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const S q = std::clamp(pv(static_cast<Eigen::Index>(i), 0), eps, S(1) - eps);
    total -= labels[i] * std::log(q) + (S(1) - labels[i]) * std::log(S(1) - q);
  }
  out(0, 0) = total / n;
  return p.tape->push(std::move(out), detail::any_grad(p), [p, labels = std::move(labels), eps, n](BasicTape<S>& t, const Matrix<S>& g) {
    const auto& pv = t.value(p.id);
    Matrix<S> d(pv.rows(), 1);
    for (Eigen::Index i = 0; i < pv.rows(); ++i) {
      const S q = pv(i, 0);
      const S y = labels[static_cast<std::size_t>(i)];
      d(i, 0) = (q < eps || q > S(1) - eps) ? S(0) : g(0, 0) * (-y / q + (S(1) - y) / (S(1) - q)) / n;
    }
    t.accumulate(p.id, d);
  });
}

template <typename S>
BasicVar<S> operator+(BasicVar<S> a, BasicVar<S> b) { return add(a, b); }
template <typename S>
BasicVar<S> operator-(BasicVar<S> a, BasicVar<S> b) { return sub(a, b); }

// ---------------------------------------------------------------------------
// Tape-free evaluation of a single primitive.
// ---------------------------------------------------------------------------

enum class Op { matmul, add, sub, elemwise_mul, concat, softmax_rows, tanh, sigmoid, relu, max_over_rows, mean };

/// Forward value of one primitive. concat joins side by side.
inline Mat eval(Op op, std::span<const Mat> inputs) {
  auto need = [&](std::size_t n, const char* name) {
    if (inputs.size() != n)
      throw std::invalid_argument(std::string(name) + ": expected " + std::to_string(n) + " inputs");
  };
  Tape tape(false);
  std::vector<Var> v;
  for (const auto& m : inputs) v.push_back(tape.constant(m));
  switch (op) {
    case Op::matmul: need(2, "matmul"); return matmul(v[0], v[1]).value();
    case Op::add: need(2, "add"); return add(v[0], v[1]).value();
    case Op::sub: need(2, "sub"); return sub(v[0], v[1]).value();
    case Op::elemwise_mul: need(2, "elemwise_mul"); return elemwise_mul(v[0], v[1]).value();
    case Op::concat: return concat_cols(std::span<const Var>(v)).value();
    case Op::softmax_rows: need(1, "softmax_rows"); return softmax_rows(v[0]).value();
    case Op::tanh: need(1, "tanh"); return tanh(v[0]).value();
    case Op::sigmoid: need(1, "sigmoid"); return sigmoid(v[0]).value();
    case Op::relu: need(1, "relu"); return relu(v[0]).value();
    case Op::max_over_rows: need(1, "max_over_rows"); return max_over_rows(v[0]).value();
    case Op::mean: need(1, "mean"); return mean(v[0]).value();
  }
  throw std::invalid_argument("eval: unknown op");
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.
// ---------------------------------------------------------------------------

using LossFn = std::function<Var(Tape&)>;

struct GradientCheck {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Analytic gradient of every trainable parameter, in registration order.
inline std::vector<Mat> analytic_gradients(const LossFn& f, ParameterStore& params) {
  params.zero_grad();
  Tape tape;
  Var loss = f(tape);
  tape.backward(loss);
  std::vector<Mat> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back(params[i].grad);
  return out;
}

/// Compares analytic gradients against central differences
/// (f(x+eps) - f(x-eps)) / 2eps for every trainable scalar. Relative error is
/// |a - n| / max(|a|, |n|, floor); the floor keeps entries whose true
/// gradient is ~0 from reporting finite-difference round-off as error.
inline GradientCheck gradient_check(const LossFn& f, ParameterStore& params, double eps = 1e-5,
                                    const std::vector<Mat>* analytic = nullptr, double floor = 1e-3) {
  if (!(eps > 0)) throw std::invalid_argument("gradient_check: eps must be positive");
  std::vector<Mat> own;
  if (!analytic) {
    own = analytic_gradients(f, params);
    analytic = &own;
  }
  auto eval_loss = [&]() {
    Tape tape(false);
    const double v = f(tape).value()(0, 0);
    if (!std::isfinite(v)) throw std::runtime_error("gradient_check: loss is not finite");
    return v;
  };
  GradientCheck result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params[p];
    if (!param.trainable) continue;
    for (Eigen::Index i = 0; i < param.value.size(); ++i) {
      double& x = param.value.data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = eval_loss();
      x = saved - eps;
      const double down = eval_loss();
      x = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = (*analytic)[p].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (result.worst_index < 0 || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_parameter = param.name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: "NUSCKPT1" magic, u32 version, u32 count, then per parameter
// u32 name length, name bytes, u32 rows, u32 cols, rows*cols little-endian
// IEEE-754 doubles in row-major order.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParameterStore& params);

/// Loads values into already-registered parameters of matching name and shape.
/// Throws on unknown names, shape mismatch, missing parameters, or a bad header.
void load_checkpoint(const std::string& path, ParameterStore& params);

}  // namespace nus::ad
