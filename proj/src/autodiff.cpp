#include "intnet/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <unordered_set>
#include <utility>

namespace intnet::ad {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

KinkMonitor* g_kink_monitor = nullptr;

void ensure_finite(const std::vector<Scalar>& values, const char* op) {
  for (Scalar v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

NodePtr new_node(Shape shape, std::vector<Scalar> value,
                 std::vector<NodePtr> parents, const char* op) {
  if (numel(shape) != value.size()) {
    throw ContractError(std::string(op) + ": shape/value size mismatch");
  }
  ensure_finite(value, op);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->grad.assign(n->value.size(), Scalar(0));
  n->parents = std::move(parents);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

void require(bool ok, const char* msg) {
  if (!ok) throw DimensionError(msg);
}

}  // namespace

void set_kink_monitor(KinkMonitor* monitor) { g_kink_monitor = monitor; }

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Scalar Node::scalar() const {
  if (value.size() != 1) throw ContractError("scalar() on a non-scalar tensor");
  return value[0];
}

NodePtr leaf(Shape shape, std::vector<Scalar> values) {
  return new_node(std::move(shape), std::move(values), {}, "leaf");
}

NodePtr zeros(Shape shape) {
  std::size_t n = numel(shape);
  return new_node(std::move(shape), std::vector<Scalar>(n, 0), {}, "zeros");
}

NodePtr scalar(Scalar v) { return new_node({1}, {v}, {}, "scalar"); }

NodePtr add(const NodePtr& a, const NodePtr& b) {
  require(a->shape == b->shape, "add: shape mismatch");
  std::vector<Scalar> y(a->size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->value[i] + b->value[i];
  auto n = new_node(a->shape, std::move(y), {a, b}, "add");
  n->backprop = [pa = a.get(), pb = b.get(), out = n.get()] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      pa->grad[i] += out->grad[i];
      pb->grad[i] += out->grad[i];
    }
  };
  return n;
}

NodePtr add_n(std::vector<NodePtr> terms) {
  if (terms.empty()) throw ContractError("add_n: no terms");
  for (const auto& t : terms) {
    require(t->shape == terms[0]->shape, "add_n: shape mismatch");
  }
  std::vector<Scalar> y(terms[0]->size(), 0);
  for (const auto& t : terms) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += t->value[i];
  }
  auto n = new_node(terms[0]->shape, std::move(y), terms, "add_n");
  n->backprop = [out = n.get()] {
    for (const auto& p : out->parents) {
      for (std::size_t i = 0; i < out->grad.size(); ++i) {
        p->grad[i] += out->grad[i];
      }
    }
  };
  return n;
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
  require(a->shape == b->shape, "sub: shape mismatch");
  std::vector<Scalar> y(a->size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->value[i] - b->value[i];
  auto n = new_node(a->shape, std::move(y), {a, b}, "sub");
  n->backprop = [pa = a.get(), pb = b.get(), out = n.get()] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      pa->grad[i] += out->grad[i];
      pb->grad[i] -= out->grad[i];
    }
  };
  return n;
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  require(a->shape == b->shape, "mul: shape mismatch");
  std::vector<Scalar> y(a->size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->value[i] * b->value[i];
  auto n = new_node(a->shape, std::move(y), {a, b}, "mul");
  n->backprop = [pa = a.get(), pb = b.get(), out = n.get()] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      pa->grad[i] += out->grad[i] * pb->value[i];
      pb->grad[i] += out->grad[i] * pa->value[i];
    }
  };
  return n;
}

NodePtr scale(const NodePtr& a, Scalar c) {
  std::vector<Scalar> y(a->size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->value[i] * c;
  auto n = new_node(a->shape, std::move(y), {a}, "scale");
  n->backprop = [pa = a.get(), c, out = n.get()] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      pa->grad[i] += out->grad[i] * c;
    }
  };
  return n;
}

NodePtr sum(const NodePtr& a) {
  Scalar s = 0;
  for (Scalar v : a->value) s += v;
  auto n = new_node({1}, {s}, {a}, "sum");
  n->backprop = [pa = a.get(), out = n.get()] {
    const Scalar g = out->grad[0];
    for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g;
  };
  return n;
}

NodePtr activation(const NodePtr& a, Act kind) {
  std::vector<Scalar> y(a->size());
  switch (kind) {
    case Act::relu:
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (g_kink_monitor) {
          g_kink_monitor->min_relu_abs =
              std::min(g_kink_monitor->min_relu_abs, std::abs(a->value[i]));
        }
        y[i] = a->value[i] > 0 ? a->value[i] : 0;
      }
      break;
    case Act::sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) {
        const Scalar x = a->value[i];
        y[i] = x >= 0 ? 1 / (1 + std::exp(-x))
                      : std::exp(x) / (1 + std::exp(x));
      }
      break;
    case Act::tanh:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(a->value[i]);
      break;
  }
  auto n = new_node(a->shape, std::move(y), {a}, "activation");
  n->backprop = [pa = a.get(), kind, out = n.get()] {
    switch (kind) {
      case Act::relu:
        // subgradient 0 at exactly 0
        for (std::size_t i = 0; i < out->grad.size(); ++i) {
          if (pa->value[i] > 0) pa->grad[i] += out->grad[i];
        }
        break;
      case Act::sigmoid:
        for (std::size_t i = 0; i < out->grad.size(); ++i) {
          const Scalar s = out->value[i];
          pa->grad[i] += out->grad[i] * s * (1 - s);
        }
        break;
      case Act::tanh:
        for (std::size_t i = 0; i < out->grad.size(); ++i) {
          const Scalar t = out->value[i];
          pa->grad[i] += out->grad[i] * (1 - t * t);
        }
        break;
    }
  };
  return n;
}

NodePtr matvec(const NodePtr& w, const NodePtr& x) {
  require(w->shape.size() == 2, "matvec: weight must be 2-D");
  require(x->shape.size() == 1, "matvec: input must be 1-D");
  const std::size_t m = w->shape[0], k = w->shape[1];
  require(x->shape[0] == k, "matvec: dimension mismatch");
  std::vector<Scalar> y(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const Scalar* row = w->value.data() + i * k;
    Scalar acc = 0;
    for (std::size_t j = 0; j < k; ++j) acc += row[j] * x->value[j];
    y[i] = acc;
  }
  auto n = new_node({m}, std::move(y), {w, x}, "matvec");
  n->backprop = [pw = w.get(), px = x.get(), m, k, out = n.get()] {
    for (std::size_t i = 0; i < m; ++i) {
      const Scalar g = out->grad[i];
      if (g == 0) continue;
      Scalar* wrow = pw->grad.data() + i * k;
      const Scalar* wval = pw->value.data() + i * k;
      for (std::size_t j = 0; j < k; ++j) {
        wrow[j] += g * px->value[j];
        px->grad[j] += g * wval[j];
      }
    }
  };
  return n;
}

NodePtr affine(const NodePtr& w, const NodePtr& x, const NodePtr& b) {
  require(b->shape.size() == 1 && w->shape.size() == 2 &&
              b->shape[0] == w->shape[0],
          "affine: bias dimension mismatch");
  return add(matvec(w, x), b);
}

NodePtr conv1d(const NodePtr& input, const NodePtr& weight, const NodePtr& bias) {
  require(input->shape.size() == 2, "conv1d: input must be C_in x T");
  require(weight->shape.size() == 3, "conv1d: weight must be C_out x C_in x k");
  require(bias->shape.size() == 1, "conv1d: bias must be 1-D");
  const std::size_t cin = input->shape[0], T = input->shape[1];
  const std::size_t cout = weight->shape[0], k = weight->shape[2];
  require(weight->shape[1] == cin, "conv1d: channel mismatch");
  require(bias->shape[0] == cout, "conv1d: bias/filter count mismatch");
  require(T >= 1 && k >= 1, "conv1d: empty input or kernel");
  const std::ptrdiff_t pad_left = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const std::ptrdiff_t sT = static_cast<std::ptrdiff_t>(T);

  std::vector<Scalar> y(cout * T);
  const Scalar* x = input->value.data();
  const Scalar* w = weight->value.data();
  for (std::size_t o = 0; o < cout; ++o) {
    Scalar* yo = y.data() + o * T;
    std::fill(yo, yo + T, bias->value[o]);
    for (std::size_t i = 0; i < cin; ++i) {
      const Scalar* xi = x + i * T;
      const Scalar* wo = w + (o * cin + i) * k;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const Scalar wv = wo[kk];
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kk) - pad_left;
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(sT, sT - off);
        for (std::ptrdiff_t t = t0; t < t1; ++t) yo[t] += wv * xi[t + off];
      }
    }
  }
  auto n = new_node({cout, T}, std::move(y), {input, weight, bias}, "conv1d");
  n->backprop = [pi = input.get(), pw = weight.get(), pb = bias.get(), cin,
                 cout, T, k, pad_left, sT, out = n.get()] {
    const Scalar* g = out->grad.data();
    for (std::size_t o = 0; o < cout; ++o) {
      const Scalar* go = g + o * T;
      Scalar bacc = 0;
      for (std::size_t t = 0; t < T; ++t) bacc += go[t];
      pb->grad[o] += bacc;
      for (std::size_t i = 0; i < cin; ++i) {
        const Scalar* xi = pi->value.data() + i * T;
        Scalar* xgi = pi->grad.data() + i * T;
        const Scalar* wv = pw->value.data() + (o * cin + i) * k;
        Scalar* wg = pw->grad.data() + (o * cin + i) * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kk) - pad_left;
          const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
          const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(sT, sT - off);
          Scalar wacc = 0;
          const Scalar w0 = wv[kk];
          for (std::ptrdiff_t t = t0; t < t1; ++t) {
            wacc += go[t] * xi[t + off];
            xgi[t + off] += w0 * go[t];
          }
          wg[kk] += wacc;
        }
      }
    }
  };
  return n;
}

NodePtr batch_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                   BatchNormState& state, Mode mode, Scalar eps,
                   Scalar momentum) {
  require(x->shape.size() == 2, "batch_norm: input must be C x T");
  const std::size_t C = x->shape[0], T = x->shape[1];
  require(gamma->shape == Shape{C} && beta->shape == Shape{C},
          "batch_norm: gamma/beta must match channel count");
  require(state.running_mean.size() == C, "batch_norm: state channel mismatch");

  if (mode == Mode::eval && state.updates == 0) {
    throw UninitializedStatsError(
        "batch_norm: eval mode before any train-mode update");
  }

  std::vector<Scalar> y(C * T);
  if (mode == Mode::train) {
    auto xhat = std::make_shared<std::vector<Scalar>>(C * T);
    auto inv_std = std::make_shared<std::vector<Scalar>>(C);
    for (std::size_t c = 0; c < C; ++c) {
      const Scalar* xc = x->value.data() + c * T;
      Scalar mean = 0;
      for (std::size_t t = 0; t < T; ++t) mean += xc[t];
      mean /= static_cast<Scalar>(T);
      Scalar var = 0;
      for (std::size_t t = 0; t < T; ++t) {
        const Scalar d = xc[t] - mean;
        var += d * d;
      }
      var /= static_cast<Scalar>(T);
      const Scalar is = Scalar(1) / std::sqrt(var + eps);
      (*inv_std)[c] = is;
      for (std::size_t t = 0; t < T; ++t) {
        const Scalar xh = (xc[t] - mean) * is;
        (*xhat)[c * T + t] = xh;
        y[c * T + t] = gamma->value[c] * xh + beta->value[c];
      }
      state.running_mean[c] = (1 - momentum) * state.running_mean[c] + momentum * mean;
      state.running_var[c] = (1 - momentum) * state.running_var[c] + momentum * var;
    }
    state.updates += 1;
    auto n = new_node({C, T}, std::move(y), {x, gamma, beta}, "batch_norm");
    n->backprop = [px = x.get(), pg = gamma.get(), pbt = beta.get(), xhat,
                   inv_std, C, T, out = n.get()] {
      for (std::size_t c = 0; c < C; ++c) {
        const Scalar* gy = out->grad.data() + c * T;
        const Scalar* xh = xhat->data() + c * T;
        Scalar gsum = 0, gx_sum = 0;
        for (std::size_t t = 0; t < T; ++t) {
          gsum += gy[t];
          gx_sum += gy[t] * xh[t];
        }
        pg->grad[c] += gx_sum;
        pbt->grad[c] += gsum;
        const Scalar scale = pg->value[c] * (*inv_std)[c];
        const Scalar invT = Scalar(1) / static_cast<Scalar>(T);
        Scalar* gx = px->grad.data() + c * T;
        for (std::size_t t = 0; t < T; ++t) {
          gx[t] += scale * (gy[t] - gsum * invT - xh[t] * gx_sum * invT);
        }
      }
    };
    return n;
  }

  // eval: affine transform by the running statistics
  auto inv_std = std::make_shared<std::vector<Scalar>>(C);
  for (std::size_t c = 0; c < C; ++c) {
    const Scalar is = Scalar(1) / std::sqrt(state.running_var[c] + eps);
    (*inv_std)[c] = is;
    const Scalar mean = state.running_mean[c];
    const Scalar* xc = x->value.data() + c * T;
    for (std::size_t t = 0; t < T; ++t) {
      y[c * T + t] = gamma->value[c] * (xc[t] - mean) * is + beta->value[c];
    }
  }
  auto mean_copy = std::make_shared<std::vector<Scalar>>(state.running_mean);
  auto n = new_node({C, T}, std::move(y), {x, gamma, beta}, "batch_norm");
  n->backprop = [px = x.get(), pg = gamma.get(), pbt = beta.get(), inv_std,
                 mean_copy, C, T, out = n.get()] {
    for (std::size_t c = 0; c < C; ++c) {
      const Scalar* gy = out->grad.data() + c * T;
      const Scalar* xc = px->value.data() + c * T;
      const Scalar is = (*inv_std)[c];
      const Scalar mean = (*mean_copy)[c];
      const Scalar scale = pg->value[c] * is;
      Scalar gsum = 0, gx_sum = 0;
      for (std::size_t t = 0; t < T; ++t) {
        gsum += gy[t];
        gx_sum += gy[t] * (xc[t] - mean) * is;
        px->grad[c * T + t] += scale * gy[t];
      }
      pg->grad[c] += gx_sum;
      pbt->grad[c] += gsum;
    }
  };
  return n;
}

NodePtr concat_channels(const std::vector<NodePtr>& inputs) {
  if (inputs.empty()) throw ContractError("concat_channels: no inputs");
  if (inputs.size() == 1) return inputs[0];
  const std::size_t T = inputs[0]->shape.size() == 2 ? inputs[0]->shape[1] : 0;
  std::size_t total = 0;
  for (const auto& in : inputs) {
    require(in->shape.size() == 2, "concat_channels: inputs must be C x T");
    require(in->shape[1] == T, "concat_channels: time-length mismatch");
    total += in->shape[0];
  }
  std::vector<Scalar> y;
  y.reserve(total * T);
  for (const auto& in : inputs) {
    y.insert(y.end(), in->value.begin(), in->value.end());
  }
  auto n = new_node({total, T}, std::move(y), inputs, "concat_channels");
  n->backprop = [out = n.get()] {
    std::size_t offset = 0;
    for (const auto& p : out->parents) {
      for (std::size_t i = 0; i < p->grad.size(); ++i) {
        p->grad[i] += out->grad[offset + i];
      }
      offset += p->grad.size();
    }
  };
  return n;
}

NodePtr concat_vec(const std::vector<NodePtr>& inputs) {
  if (inputs.empty()) throw ContractError("concat_vec: no inputs");
  if (inputs.size() == 1) return inputs[0];
  std::size_t total = 0;
  for (const auto& in : inputs) {
    require(in->shape.size() == 1, "concat_vec: inputs must be 1-D");
    total += in->shape[0];
  }
  std::vector<Scalar> y;
  y.reserve(total);
  for (const auto& in : inputs) {
    y.insert(y.end(), in->value.begin(), in->value.end());
  }
  auto n = new_node({total}, std::move(y), inputs, "concat_vec");
  n->backprop = [out = n.get()] {
    std::size_t offset = 0;
    for (const auto& p : out->parents) {
      for (std::size_t i = 0; i < p->grad.size(); ++i) {
        p->grad[i] += out->grad[offset + i];
      }
      offset += p->grad.size();
    }
  };
  return n;
}

NodePtr max_over_time(const NodePtr& x, std::size_t valid_length) {
  require(x->shape.size() == 2, "max_over_time: input must be C x T");
  const std::size_t C = x->shape[0], T = x->shape[1];
  if (valid_length == 0) {
    throw EmptyWordError("max_over_time: valid_length is zero");
  }
  require(valid_length <= T, "max_over_time: valid_length exceeds time length");
  std::vector<Scalar> y(C);
  auto argmax = std::make_shared<std::vector<std::size_t>>(C);
  for (std::size_t c = 0; c < C; ++c) {
    const Scalar* xc = x->value.data() + c * T;
    std::size_t best = 0;
    Scalar second = -std::numeric_limits<Scalar>::infinity();
    for (std::size_t t = 1; t < valid_length; ++t) {
      if (xc[t] > xc[best]) {
        second = xc[best];
        best = t;
      } else {
        second = std::max(second, xc[t]);
      }
    }
    if (g_kink_monitor && valid_length > 1) {
      g_kink_monitor->min_max_gap =
          std::min(g_kink_monitor->min_max_gap, xc[best] - second);
    }
    y[c] = xc[best];
    (*argmax)[c] = best;
  }
  auto n = new_node({C}, std::move(y), {x}, "max_over_time");
  n->backprop = [px = x.get(), argmax, T, out = n.get()] {
    for (std::size_t c = 0; c < out->grad.size(); ++c) {
      px->grad[c * T + (*argmax)[c]] += out->grad[c];
    }
  };
  return n;
}

NodePtr dropout(const NodePtr& x, Scalar rate, Mode mode, RngState* rng) {
  if (rate < 0 || rate >= 1) {
    throw ConfigError("dropout: rate must be in [0, 1)");
  }
  if (mode == Mode::eval || rate == 0) return x;
  if (!rng) throw ContractError("dropout: train mode requires an rng");
  const Scalar keep_scale = Scalar(1) / (Scalar(1) - rate);
  auto mask = std::make_shared<std::vector<Scalar>>(x->size());
  std::vector<Scalar> y(x->size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const Scalar m = rng->next_double() >= rate ? keep_scale : Scalar(0);
    (*mask)[i] = m;
    y[i] = x->value[i] * m;
  }
  auto n = new_node(x->shape, std::move(y), {x}, "dropout");
  n->backprop = [px = x.get(), mask, out = n.get()] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      px->grad[i] += out->grad[i] * (*mask)[i];
    }
  };
  return n;
}

NodePtr gather_columns(const NodePtr& table, const std::vector<std::size_t>& cols) {
  require(table->shape.size() == 2, "gather_columns: table must be 2-D");
  const std::size_t d = table->shape[0], V = table->shape[1];
  const std::size_t n_cols = cols.size();
  if (n_cols == 0) throw EmptyWordError("gather_columns: no columns requested");
  for (std::size_t c : cols) {
    require(c < V, "gather_columns: column index out of range");
  }
  std::vector<Scalar> y(d * n_cols);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t j = 0; j < n_cols; ++j) {
      y[r * n_cols + j] = table->value[r * V + cols[j]];
    }
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(cols);
  auto n = new_node({d, n_cols}, std::move(y), {table}, "gather_columns");
  n->backprop = [pt = table.get(), idx, d, V, n_cols, out = n.get()] {
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t j = 0; j < n_cols; ++j) {
        pt->grad[r * V + (*idx)[j]] += out->grad[r * n_cols + j];
      }
    }
  };
  return n;
}

NodePtr column(const NodePtr& m, std::size_t j) {
  require(m->shape.size() == 2, "column: input must be 2-D");
  const std::size_t rows = m->shape[0], cols = m->shape[1];
  require(j < cols, "column: index out of range");
  std::vector<Scalar> y(rows);
  for (std::size_t r = 0; r < rows; ++r) y[r] = m->value[r * cols + j];
  auto n = new_node({rows}, std::move(y), {m}, "column");
  n->backprop = [pm = m.get(), j, cols, out = n.get()] {
    for (std::size_t r = 0; r < out->grad.size(); ++r) {
      pm->grad[r * cols + j] += out->grad[r];
    }
  };
  return n;
}

NodePtr at2d(const NodePtr& m, std::size_t i, std::size_t j) {
  require(m->shape.size() == 2, "at2d: input must be 2-D");
  require(i < m->shape[0] && j < m->shape[1], "at2d: index out of range");
  const std::size_t cols = m->shape[1];
  auto n = new_node({1}, {m->value[i * cols + j]}, {m}, "at2d");
  n->backprop = [pm = m.get(), i, j, cols, out = n.get()] {
    pm->grad[i * cols + j] += out->grad[0];
  };
  return n;
}

NodePtr slice2d(const NodePtr& m, std::size_t r0, std::size_t r1,
                std::size_t c0, std::size_t c1) {
  require(m->shape.size() == 2, "slice2d: input must be 2-D");
  require(r0 <= r1 && r1 <= m->shape[0] && c0 <= c1 && c1 <= m->shape[1],
          "slice2d: slice out of range");
  const std::size_t rows = r1 - r0, cols = c1 - c0, stride = m->shape[1];
  std::vector<Scalar> y(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      y[r * cols + c] = m->value[(r0 + r) * stride + (c0 + c)];
    }
  }
  auto n = new_node({rows, cols}, std::move(y), {m}, "slice2d");
  n->backprop = [pm = m.get(), r0, c0, rows, cols, stride, out = n.get()] {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        pm->grad[(r0 + r) * stride + (c0 + c)] += out->grad[r * cols + c];
      }
    }
  };
  return n;
}

NodePtr reshape(const NodePtr& a, Shape shape) {
  require(numel(shape) == a->size(), "reshape: element count mismatch");
  auto n = new_node(std::move(shape), a->value, {a}, "reshape");
  n->backprop = [pa = a.get(), out = n.get()] {
    for (std::size_t i = 0; i < out->grad.size(); ++i) {
      pa->grad[i] += out->grad[i];
    }
  };
  return n;
}

NodePtr broadcast_cols(const NodePtr& v, std::size_t cols) {
  require(v->shape.size() == 1, "broadcast_cols: input must be 1-D");
  require(cols >= 1, "broadcast_cols: need at least one column");
  const std::size_t rows = v->shape[0];
  std::vector<Scalar> y(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(y.begin() + r * cols, y.begin() + (r + 1) * cols, v->value[r]);
  }
  auto n = new_node({rows, cols}, std::move(y), {v}, "broadcast_cols");
  n->backprop = [pv = v.get(), rows, cols, out = n.get()] {
    for (std::size_t r = 0; r < rows; ++r) {
      Scalar acc = 0;
      for (std::size_t c = 0; c < cols; ++c) acc += out->grad[r * cols + c];
      pv->grad[r] += acc;
    }
  };
  return n;
}

NodePtr pick(const NodePtr& v, std::size_t i) {
  require(v->shape.size() == 1, "pick: input must be 1-D");
  require(i < v->shape[0], "pick: index out of range");
  auto n = new_node({1}, {v->value[i]}, {v}, "pick");
  n->backprop = [pv = v.get(), i, out = n.get()] {
    pv->grad[i] += out->grad[0];
  };
  return n;
}

NodePtr logsumexp(const NodePtr& v) {
  require(v->shape.size() == 1 && v->shape[0] >= 1,
          "logsumexp: input must be a non-empty vector");
  Scalar mx = v->value[0];
  for (Scalar x : v->value) mx = std::max(mx, x);
  Scalar s = 0;
  for (Scalar x : v->value) s += std::exp(x - mx);
  const Scalar lse = mx + std::log(s);
  auto n = new_node({1}, {lse}, {v}, "logsumexp");
  n->backprop = [pv = v.get(), lse, out = n.get()] {
    const Scalar g = out->grad[0];
    for (std::size_t i = 0; i < pv->grad.size(); ++i) {
      pv->grad[i] += g * std::exp(pv->value[i] - lse);
    }
  };
  return n;
}

NodePtr logsumexp_cols(const NodePtr& m) {
  require(m->shape.size() == 2 && m->shape[0] >= 1,
          "logsumexp_cols: input must be a non-empty matrix");
  const std::size_t rows = m->shape[0], cols = m->shape[1];
  std::vector<Scalar> y(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    Scalar mx = m->value[c];
    for (std::size_t r = 1; r < rows; ++r) {
      mx = std::max(mx, m->value[r * cols + c]);
    }
    Scalar s = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      s += std::exp(m->value[r * cols + c] - mx);
    }
    y[c] = mx + std::log(s);
  }
  auto n = new_node({cols}, std::move(y), {m}, "logsumexp_cols");
  n->backprop = [pm = m.get(), rows, cols, out = n.get()] {
    for (std::size_t c = 0; c < cols; ++c) {
      const Scalar g = out->grad[c];
      if (g == 0) continue;
      const Scalar lse = out->value[c];
      for (std::size_t r = 0; r < rows; ++r) {
        pm->grad[r * cols + c] += g * std::exp(pm->value[r * cols + c] - lse);
      }
    }
  };
  return n;
}

void backward(const NodePtr& loss) {
  if (!loss) throw ContractError("backward: null loss");
  if (loss->size() != 1) throw ContractError("backward: loss must be scalar");

  // Iterative post-order: parents appear before the nodes that use them.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    Node* n = stack.back().first;
    std::size_t i = stack.back().second;
    if (i < n->parents.size()) {
      ++stack.back().second;
      Node* p = n->parents[i].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
      continue;
    }
    order.push_back(n);
    stack.pop_back();
  }

  // Stash accumulated grads so this sweep starts from zero, then add them
  // back afterwards: calling backward twice doubles every grad.
  std::vector<std::vector<Scalar>> saved(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    saved[i] = std::move(order[i]->grad);
    order[i]->grad.assign(order[i]->value.size(), Scalar(0));
  }
  loss->grad[0] = 1;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop();
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& g = order[i]->grad;
    const auto& s = saved[i];
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += s[j];
  }
}

NodePtr ParamStore::add(std::string name, Shape shape,
                        std::vector<Scalar> values) {
  if (index_.count(name)) {
    throw ContractError("duplicate parameter name: " + name);
  }
  NodePtr t = leaf(std::move(shape), std::move(values));
  index_[name] = params_.size();
  params_.push_back(Parameter{std::move(name), t});
  return t;
}

NodePtr ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return nullptr;
  return params_[it->second].tensor;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p.tensor->zero_grad();
}

std::size_t ParamStore::value_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor->size();
  return n;
}

void ParamStore::register_state(std::string name, BatchNormState* state) {
  state_.emplace_back(std::move(name), state);
}

Scalar grad_check(const std::function<NodePtr()>& f,
                  std::span<const NodePtr> params, Scalar eps,
                  std::size_t max_elems_per_param) {
  for (const auto& p : params) p->zero_grad();
  NodePtr loss = f();
  if (!std::isfinite(loss->scalar())) {
    throw NumericError("grad_check: non-finite objective");
  }
  backward(loss);
  std::vector<std::vector<Scalar>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p->grad);

  Scalar worst = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Node* p = params[pi].get();
    const std::size_t n = p->size();
    std::size_t step = 1;
    if (max_elems_per_param > 0 && n > max_elems_per_param) {
      step = (n + max_elems_per_param - 1) / max_elems_per_param;
    }
    for (std::size_t j = 0; j < n; j += step) {
      const Scalar v = p->value[j];
      p->value[j] = v + eps;
      const Scalar f_plus = f()->scalar();
      p->value[j] = v - eps;
      const Scalar f_minus = f()->scalar();
      p->value[j] = v;
      const Scalar numeric = (f_plus - f_minus) / (2 * eps);
      const Scalar a = analytic[pi][j];
      const Scalar rel = std::abs(a - numeric) /
                         std::max<Scalar>(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

std::string dump_tensor(const Node& t) {
  std::string out = "shape:";
  for (std::size_t d : t.shape) {
    out += ' ';
    out += std::to_string(d);
  }
  out += '\n';
  const std::size_t last = t.shape.empty() ? 1 : t.shape.back();
  const std::size_t rows = t.size() / std::max<std::size_t>(1, last);
  char buf[64];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < last; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", t.value[r * last + c]);
      if (c) out += ' ';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace intnet::ad
