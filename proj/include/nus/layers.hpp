#pragma once

// Recurrent and feed-forward building blocks on top of the tape.

#include "nus/autodiff.hpp"

#include <random>
#include <string>

namespace nus::nn {

using ad::Parameter;
using ad::ParameterStore;
using ad::Tape;
using ad::Var;

/// Single-direction LSTM; gate blocks are ordered [input, forget, output, candidate].
struct Lstm {
  Parameter* w_in = nullptr;   // in x 4h
  Parameter* w_rec = nullptr;  // h x 4h
  Parameter* bias = nullptr;   // 1 x 4h, forget block starts at 1.0
  int hidden = 0;

  static Lstm create(ParameterStore& store, const std::string& prefix, int input_dim, int hidden,
                     double init_scale, std::mt19937_64& rng);

  /// Hidden state for every input row, in input order. With reverse set the
  /// sequence is consumed from the last row to the first, so row i then holds
  /// the state after reading rows L-1..i.
  Var run(Tape& tape, Var inputs, bool reverse = false) const;
};

struct BiLstm {
  Lstm forward;
  Lstm backward;

  static BiLstm create(ParameterStore& store, const std::string& prefix, int input_dim, int hidden,
                       double init_scale, std::mt19937_64& rng);

  int width() const { return 2 * forward.hidden; }

  /// L x 2h: row i = [forward state at i; backward state at i].
  Var encode(Tape& tape, Var inputs) const;

  /// 1 x 2h: [forward state at the last row; backward state at the first row].
  Var final_state(Var encoded) const;
};

/// relu(v W1 + b1) W2 + b2 followed by a sigmoid.
struct Mlp {
  Parameter* w1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* w2 = nullptr;
  Parameter* b2 = nullptr;

  static Mlp create(ParameterStore& store, const std::string& prefix, int input_dim, int hidden,
                    double init_scale, std::mt19937_64& rng);

  int input_dim() const { return static_cast<int>(w1->value.rows()); }

  /// v is N x input_dim; returns N x 1 probabilities.
  Var probability(Tape& tape, Var v) const;
};

}  // namespace nus::nn
