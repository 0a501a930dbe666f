#include "intnet/lstm.hpp"

#include <cmath>

namespace intnet {

using ad::Act;
using ad::NodePtr;
using ad::Scalar;

std::vector<Scalar> glorot_uniform(std::size_t rows, std::size_t cols,
                                   RngState& rng) {
  const Scalar bound = std::sqrt(Scalar(6) / static_cast<Scalar>(rows + cols));
  std::vector<Scalar> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

LstmCell make_lstm_cell(ad::ParamStore& store, const std::string& prefix,
                        std::size_t input_dim, std::size_t hidden_dim,
                        RngState& rng) {
  LstmCell cell;
  cell.input_dim = input_dim;
  cell.hidden_dim = hidden_dim;
  const std::size_t h = hidden_dim, d = input_dim;
  auto mat = [&](const char* name, std::size_t rows, std::size_t cols) {
    return store.add(prefix + "." + name, {rows, cols},
                     glorot_uniform(rows, cols, rng));
  };
  auto vec = [&](const char* name) {
    return store.add(prefix + "." + name, {h}, std::vector<Scalar>(h, 0));
  };
  cell.w_zi = mat("w_zi", h, d);
  cell.w_zf = mat("w_zf", h, d);
  cell.w_zo = mat("w_zo", h, d);
  cell.w_zc = mat("w_zc", h, d);
  cell.w_hi = mat("w_hi", h, h);
  cell.w_hf = mat("w_hf", h, h);
  cell.w_ho = mat("w_ho", h, h);
  cell.w_hc = mat("w_hc", h, h);
  cell.w_ci = mat("w_ci", h, h);
  cell.w_cf = mat("w_cf", h, h);
  cell.w_co = mat("w_co", h, h);
  cell.b_i = vec("b_i");
  cell.b_f = vec("b_f");
  cell.b_o = vec("b_o");
  cell.b_c = vec("b_c");
  return cell;
}

LstmStep lstm_step(const ad::NodePtr& z, const ad::NodePtr& h_prev,
                   const ad::NodePtr& c_prev, const LstmCell& cell) {
  if (z->shape != ad::Shape{cell.input_dim}) {
    throw DimensionError("lstm_step: input dimension mismatch");
  }
  if (h_prev->shape != ad::Shape{cell.hidden_dim} ||
      c_prev->shape != ad::Shape{cell.hidden_dim}) {
    throw DimensionError("lstm_step: state dimension mismatch");
  }
  using ad::activation, ad::add, ad::add_n, ad::matvec, ad::mul;
  NodePtr i_gate = activation(
      add_n({matvec(cell.w_zi, z), matvec(cell.w_hi, h_prev),
             matvec(cell.w_ci, c_prev), cell.b_i}),
      Act::sigmoid);
  NodePtr f_gate = activation(
      add_n({matvec(cell.w_zf, z), matvec(cell.w_hf, h_prev),
             matvec(cell.w_cf, c_prev), cell.b_f}),
      Act::sigmoid);
  NodePtr c_tilde = activation(
      add_n({matvec(cell.w_zc, z), matvec(cell.w_hc, h_prev), cell.b_c}),
      Act::tanh);
  NodePtr c = add(mul(f_gate, c_prev), mul(i_gate, c_tilde));
  NodePtr o_gate = activation(
      add_n({matvec(cell.w_zo, z), matvec(cell.w_ho, h_prev),
             matvec(cell.w_co, c), cell.b_o}),
      Act::sigmoid);
  NodePtr h = mul(o_gate, activation(c, Act::tanh));
  return LstmStep{h, c, i_gate, f_gate, o_gate};
}

BiLstmOutput bilstm_forward(std::span<const ad::NodePtr> inputs,
                            const LstmCell& fwd, const LstmCell& bwd) {
  if (inputs.empty()) throw ContractError("bilstm_forward: empty sentence");
  const std::size_t T = inputs.size();
  BiLstmOutput out;
  out.forward_h.resize(T);
  out.backward_h.resize(T);
  out.concat.resize(T);

  NodePtr h = ad::zeros({fwd.hidden_dim});
  NodePtr c = ad::zeros({fwd.hidden_dim});
  for (std::size_t t = 0; t < T; ++t) {
    auto step = lstm_step(inputs[t], h, c, fwd);
    h = step.h;
    c = step.c;
    out.forward_h[t] = h;
  }
  h = ad::zeros({bwd.hidden_dim});
  c = ad::zeros({bwd.hidden_dim});
  for (std::size_t t = T; t-- > 0;) {
    auto step = lstm_step(inputs[t], h, c, bwd);
    h = step.h;
    c = step.c;
    out.backward_h[t] = h;
  }
  for (std::size_t t = 0; t < T; ++t) {
    out.concat[t] = ad::concat_vec({out.forward_h[t], out.backward_h[t]});
  }
  return out;
}

}  // namespace intnet
