#include "nus/layers.hpp"

#include <cmath>

namespace nus::nn {

namespace {

using ad::Mat;

/// One LSTM cell update as a single tape node. pre is the 1 x 4h gate
/// pre-activation in [i, f, o, g] order; the result is 1 x 2h [h, c].
Var lstm_cell(Var pre, const Var* c_prev, int h) {
  const Mat& p = pre.value();
  Mat gates(1, 4 * h);
  gates.leftCols(3 * h) = p.leftCols(3 * h).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  gates.rightCols(h) = p.rightCols(h).array().tanh().matrix();
  Mat c = gates.leftCols(h).cwiseProduct(gates.rightCols(h));
  if (c_prev) c += gates.middleCols(h, h).cwiseProduct(c_prev->value());
  Mat out(1, 2 * h);
  out.leftCols(h) = gates.middleCols(2 * h, h).cwiseProduct(c.array().tanh().matrix());
  out.rightCols(h) = c;

  const bool grad = pre.tape->requires_grad(pre.id) || (c_prev && pre.tape->requires_grad(c_prev->id));
  const int prev_id = c_prev ? c_prev->id : -1;
  return pre.tape->push(std::move(out), grad, [pre, prev_id, h, gates, c](ad::Tape& t, const Mat& g) {
    const auto i = gates.leftCols(h).array();
    const auto f = gates.middleCols(h, h).array();
    const auto o = gates.middleCols(2 * h, h).array();
    const auto cand = gates.rightCols(h).array();
    const Eigen::ArrayXXd tc = c.array().tanh();
    const auto gh = g.leftCols(h).array();
    const Eigen::ArrayXXd dc = g.rightCols(h).array() + gh * o * (1.0 - tc * tc);
    Mat dpre(1, 4 * h);
    dpre.leftCols(h) = (dc * cand * i * (1.0 - i)).matrix();
    if (prev_id >= 0) {
      const auto cp = t.value(prev_id).array();
      dpre.middleCols(h, h) = (dc * cp * f * (1.0 - f)).matrix();
      t.accumulate(prev_id, (dc * f).matrix());
    } else {
      dpre.middleCols(h, h).setZero();
    }
    dpre.middleCols(2 * h, h) = (gh * tc * o * (1.0 - o)).matrix();
    dpre.rightCols(h) = (dc * i * (1.0 - cand * cand)).matrix();
    t.accumulate(pre.id, dpre);
  });
}

}  // namespace

Lstm Lstm::create(ParameterStore& store, const std::string& prefix, int input_dim, int hidden,
                  double init_scale, std::mt19937_64& rng) {
  Lstm l;
  l.hidden = hidden;
  l.w_in = &store.add_uniform(prefix + ".w_in", input_dim, 4 * hidden, init_scale, rng);
  l.w_rec = &store.add_uniform(prefix + ".w_rec", hidden, 4 * hidden, init_scale, rng);
  ad::Mat b = ad::Mat::Zero(1, 4 * hidden);
  b.middleCols(hidden, hidden).setOnes();
  l.bias = &store.add(prefix + ".bias", std::move(b));
  return l;
}

Var Lstm::run(Tape& tape, Var inputs, bool reverse) const {
  const Eigen::Index len = inputs.rows();
  if (len == 0) throw std::invalid_argument("lstm: empty input sequence");
  const int h = hidden;
  Var projected = ad::add(ad::matmul(inputs, tape.param(*w_in)), tape.param(*bias));
  Var rec = tape.param(*w_rec);
  std::vector<Var> states(static_cast<std::size_t>(len));
  Var h_prev{}, c_prev{};
  for (Eigen::Index step = 0; step < len; ++step) {
    const Eigen::Index t = reverse ? len - 1 - step : step;
    Var pre = ad::slice_rows(projected, t, 1);
    if (step > 0) pre = ad::add(pre, ad::matmul(h_prev, rec));
    Var hc = lstm_cell(pre, step > 0 ? &c_prev : nullptr, h);
    Var hs = ad::slice_cols(hc, 0, h);
    Var c = ad::slice_cols(hc, h, h);
    states[static_cast<std::size_t>(t)] = hs;
    h_prev = hs;
    c_prev = c;
  }
  return ad::concat_rows(std::span<const Var>(states));
}

BiLstm BiLstm::create(ParameterStore& store, const std::string& prefix, int input_dim, int hidden,
                      double init_scale, std::mt19937_64& rng) {
  BiLstm b;
  b.forward = Lstm::create(store, prefix + ".fwd", input_dim, hidden, init_scale, rng);
  b.backward = Lstm::create(store, prefix + ".bwd", input_dim, hidden, init_scale, rng);
  return b;
}

Var BiLstm::encode(Tape& tape, Var inputs) const {
  return ad::concat_cols({forward.run(tape, inputs, false), backward.run(tape, inputs, true)});
}

Var BiLstm::final_state(Var encoded) const {
  const Eigen::Index h = forward.hidden;
  Var last_fwd = ad::slice_cols(ad::slice_rows(encoded, encoded.rows() - 1, 1), 0, h);
  Var first_bwd = ad::slice_cols(ad::slice_rows(encoded, 0, 1), h, h);
  return ad::concat_cols({last_fwd, first_bwd});
}

Mlp Mlp::create(ParameterStore& store, const std::string& prefix, int input_dim, int hidden,
                double init_scale, std::mt19937_64& rng) {
  Mlp m;
  m.w1 = &store.add_uniform(prefix + ".w1", input_dim, hidden, init_scale, rng);
  m.b1 = &store.add_constant(prefix + ".b1", 1, hidden);
  m.w2 = &store.add_uniform(prefix + ".w2", hidden, 1, init_scale, rng);
  m.b2 = &store.add_constant(prefix + ".b2", 1, 1);
  return m;
}

Var Mlp::probability(Tape& tape, Var v) const {
  if (v.cols() != w1->value.rows())
    throw std::invalid_argument("mlp: input width " + std::to_string(v.cols()) + " != " +
                                std::to_string(w1->value.rows()));
  Var hidden = ad::relu(ad::add(ad::matmul(v, tape.param(*w1)), tape.param(*b1)));
  return ad::sigmoid(ad::add(ad::matmul(hidden, tape.param(*w2)), tape.param(*b2)));
}

}  // namespace nus::nn
