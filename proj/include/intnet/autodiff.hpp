#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "intnet/error.hpp"
#include "intnet/rng.hpp"

namespace intnet::ad {

#ifdef INTNET_SCALAR
using Scalar = INTNET_SCALAR;
#else
// 64-bit by default; all test tolerances assume this. Define INTNET_SCALAR
// to float at configure time for a faster, looser build.
using Scalar = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);

enum class Mode { train, eval };
enum class Act { relu, sigmoid, tanh };

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One tensor in a reverse-mode tape. Nodes form a DAG through `parents`;
// `backprop` reads this node's grad and accumulates into the parents' grads.
// Leaves (inputs and parameters) have no backprop and keep their grad across
// tape rebuilds until explicitly zeroed.
struct Node {
  Shape shape;
  std::vector<Scalar> value;
  std::vector<Scalar> grad;
  std::vector<NodePtr> parents;
  std::function<void()> backprop;
  std::uint64_t id = 0;  // creation order; makes traversals deterministic

  bool is_leaf() const { return !backprop; }
  std::size_t size() const { return value.size(); }
  Scalar scalar() const;  // value of a one-element tensor
  void zero_grad() { std::fill(grad.begin(), grad.end(), Scalar(0)); }
};

NodePtr leaf(Shape shape, std::vector<Scalar> values);
NodePtr zeros(Shape shape);
NodePtr scalar(Scalar v);

// Elementwise and reduction ops.
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr add_n(std::vector<NodePtr> terms);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& a, Scalar c);
NodePtr sum(const NodePtr& a);
NodePtr activation(const NodePtr& a, Act kind);
inline NodePtr relu(const NodePtr& a) { return activation(a, Act::relu); }

// Linear algebra. Matrices are row-major.
NodePtr matvec(const NodePtr& w, const NodePtr& x);             // [m,n]·[n] -> [m]
NodePtr affine(const NodePtr& w, const NodePtr& x, const NodePtr& b);

// Same-length 1-D cross-correlation with zero padding. Input is C_in x T,
// weight C_out x C_in x k, bias C_out; output C_out x T for every k (left pad
// floor((k-1)/2), right pad ceil((k-1)/2), so even kernels work).
NodePtr conv1d(const NodePtr& input, const NodePtr& weight, const NodePtr& bias);

// Per-channel batch normalization over the time axis of a C x T tensor.
// Train mode uses batch statistics and folds them into the running estimates
// with the given momentum; eval mode applies the running estimates and
// requires at least one prior train-mode update.
struct BatchNormState {
  std::vector<Scalar> running_mean;
  std::vector<Scalar> running_var;
  std::uint64_t updates = 0;
  explicit BatchNormState(std::size_t channels)
      : running_mean(channels, 0), running_var(channels, 1) {}
};
NodePtr batch_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                   BatchNormState& state, Mode mode, Scalar eps = 1e-5,
                   Scalar momentum = 0.1);

// Concatenation along the channel axis (2-D inputs sharing T) or of vectors.
NodePtr concat_channels(const std::vector<NodePtr>& inputs);
NodePtr concat_vec(const std::vector<NodePtr>& inputs);

// Per-channel maximum over positions [0, valid_length). Padding positions
// never win. Gradient goes to the lowest-index maximum of each channel.
NodePtr max_over_time(const NodePtr& x, std::size_t valid_length);

// Inverted dropout: train mode zeroes elements with probability `rate` and
// scales survivors by 1/(1-rate); eval mode is the identity.
NodePtr dropout(const NodePtr& x, Scalar rate, Mode mode, RngState* rng);

// Indexing and reshaping.
NodePtr gather_columns(const NodePtr& table, const std::vector<std::size_t>& cols);
NodePtr column(const NodePtr& m, std::size_t j);
NodePtr at2d(const NodePtr& m, std::size_t i, std::size_t j);  // [1]
NodePtr slice2d(const NodePtr& m, std::size_t r0, std::size_t r1,
                std::size_t c0, std::size_t c1);
NodePtr reshape(const NodePtr& a, Shape shape);
NodePtr broadcast_cols(const NodePtr& v, std::size_t cols);    // [n] -> [n,cols]
NodePtr pick(const NodePtr& v, std::size_t i);                 // [1]

// Log-sum-exp with max-shift stabilization.
NodePtr logsumexp(const NodePtr& v);                           // [n] -> [1]
NodePtr logsumexp_cols(const NodePtr& m);                      // [r,c] -> [c]

// Reverse-mode sweep from a scalar loss. Every node reachable from the loss
// gets its grad accumulated (+=); repeating backward without zeroing doubles
// the grads. Unreachable leaves are untouched.
void backward(const NodePtr& loss);

// Named trainable tensor.
struct Parameter {
  std::string name;
  NodePtr tensor;
};

// Ordered registry of parameters plus named batch-norm state. Registration
// order is the enumeration order everywhere (optimizer, checkpoints).
class ParamStore {
 public:
  NodePtr add(std::string name, Shape shape, std::vector<Scalar> values);
  const std::vector<Parameter>& all() const { return params_; }
  NodePtr find(std::string_view name) const;
  void zero_grads();
  std::size_t value_count() const;

  void register_state(std::string name, BatchNormState* state);
  const std::vector<std::pair<std::string, BatchNormState*>>& state() const {
    return state_;
  }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::pair<std::string, BatchNormState*>> state_;
};

// Central-difference verification of backward(). `f` must rebuild the graph
// on every call and be deterministic (eval-mode or fixed-mask dropout/norm).
// Returns max over checked elements of |analytic - numeric| /
// max(1e-8, |analytic| + |numeric|). When max_elems_per_param is nonzero,
// elements are sampled with a deterministic stride instead of exhaustively.
Scalar grad_check(const std::function<NodePtr()>& f,
                  std::span<const NodePtr> params, Scalar eps = 1e-5,
                  std::size_t max_elems_per_param = 0);

// Debug dump: "shape:" header then one row of decimals per line.
std::string dump_tensor(const Node& t);

// When set, relu and max_over_time report how close the current values sit
// to their kinks; used to certify finite-difference fixtures.
struct KinkMonitor {
  Scalar min_relu_abs = 1e300;
  Scalar min_max_gap = 1e300;
};
void set_kink_monitor(KinkMonitor* monitor);

}  // namespace intnet::ad
