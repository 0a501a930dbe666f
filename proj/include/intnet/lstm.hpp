#pragma once

#include <span>
#include <string>
#include <vector>

#include "intnet/autodiff.hpp"
#include "intnet/rng.hpp"

namespace intnet {

// Peephole LSTM cell. The peephole weights are full H x H matrices applied to
// the cell state: the input and forget gates read c_{t-1}, the output gate
// reads c_t.
struct LstmCell {
  ad::NodePtr w_zi, w_zf, w_zo, w_zc;  // H x D input weights
  ad::NodePtr w_hi, w_hf, w_ho, w_hc;  // H x H recurrent weights
  ad::NodePtr w_ci, w_cf, w_co;        // H x H peephole weights
  ad::NodePtr b_i, b_f, b_o, b_c;      // H biases
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
};

LstmCell make_lstm_cell(ad::ParamStore& store, const std::string& prefix,
                        std::size_t input_dim, std::size_t hidden_dim,
                        RngState& rng);

struct LstmStep {
  ad::NodePtr h, c;
  ad::NodePtr input_gate, forget_gate, output_gate;
};

LstmStep lstm_step(const ad::NodePtr& z, const ad::NodePtr& h_prev,
                   const ad::NodePtr& c_prev, const LstmCell& cell);

// Both directions start from zero states; output t is [fwd_h[t] ; bwd_h[t]].
struct BiLstmOutput {
  std::vector<ad::NodePtr> forward_h;
  std::vector<ad::NodePtr> backward_h;
  std::vector<ad::NodePtr> concat;
};

BiLstmOutput bilstm_forward(std::span<const ad::NodePtr> inputs,
                            const LstmCell& fwd, const LstmCell& bwd);

// Uniform Glorot range for a weight matrix, shared by every recurrent layer.
std::vector<ad::Scalar> glorot_uniform(std::size_t rows, std::size_t cols,
                                       RngState& rng);

}  // namespace intnet
