#include "tedi/autograd.hpp"

#include <cmath>
#include <string>

#include "tedi/kernels.hpp"

namespace tedi::nn {

namespace k = kernels::omp;

template <class T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw ContractError("variable " + std::to_string(v.id) + " is not on this graph");
  }
  return nodes_[v.id];
}

template <class T>
typename Graph<T>::Node& Graph<T>::node(Var v) {
  return const_cast<Node&>(static_cast<const Graph&>(*this).node(v));
}

template <class T>
Var Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
Var Graph<T>::parameter(Parameter<T>& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = grad_enabled_;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
const Tensor<T>& Graph<T>::value(Var v) const {
  return node(v).value;
}

template <class T>
Tensor<T>& Graph<T>::grad(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <class T>
Var Graph<T>::record(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn fn) {
  bool needs = false;
  if (grad_enabled_) {
    for (Var in : inputs) needs = needs || node(in).requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
void Graph<T>::backward(Var loss) {
  if (nodes_.empty()) throw ContractError("backward called on an empty graph");
  if (node(loss).value.numel() != 1) {
    throw ContractError("backward(loss) needs a scalar, got shape " + node(loss).value.shape_string());
  }
  grad(loss)[0] += T(1);
  run_backward(loss.id);
}

template <class T>
void Graph<T>::backward(Var output, const Tensor<T>& seed) {
  if (nodes_.empty()) throw ContractError("backward called on an empty graph");
  if (!node(output).value.same_shape(seed)) {
    throw ContractError("seed shape " + seed.shape_string() + " does not match output " +
                        node(output).value.shape_string());
  }
  Tensor<T>& gr = grad(output);
  for (long i = 0; i < gr.numel(); ++i) gr[i] += seed[i];
  run_backward(output.id);
}

template <class T>
void Graph<T>::run_backward(int from) {
  if (!nodes_[from].requires_grad) {
    throw ContractError("output does not depend on any parameter; no graph was recorded");
  }
  for (int id = from; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param) {
      Parameter<T>& p = *n.param;
      if (p.grad.empty()) p.grad = Tensor<T>(p.value.shape());
      for (long i = 0; i < p.grad.numel(); ++i) p.grad[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(*this, id);
      n.grad = Tensor<T>();  // intermediate gradients are not needed afterwards
    }
  }
}

namespace ops {
namespace {

template <class T>
void require_rank3(const Tensor<T>& t, const char* op) {
  if (t.rank() != 3) throw ContractError(std::string(op) + " expects [C, B, L], got " + t.shape_string());
}

template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ContractError(std::string(op) + " shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

}  // namespace

template <class T>
Var conv1d(Graph<T>& g, Var x, Var w, Var b, int stride, int pad) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& wv = g.value(w);
  require_rank3(xv, "conv1d");
  if (wv.rank() != 3 || wv.dim(1) != xv.dim(0) || g.value(b).numel() != wv.dim(0)) {
    throw ContractError("conv1d weight " + wv.shape_string() + " incompatible with input " + xv.shape_string());
  }
  const kernels::ConvShape s{xv.dim(0), wv.dim(0), xv.dim(1), xv.dim(2), wv.dim(2), stride, pad};
  const int lout = s.out_length();
  const int rows = s.in_channels * s.kernel;
  const int cols = s.batch * lout;
  const bool pointwise = s.kernel == 1 && stride == 1 && pad == 0;

  std::vector<T> col;
  if (!pointwise) {
    col.resize(static_cast<std::size_t>(rows) * cols);
    k::im2col(s, xv.data(), col.data());
  }
  const T* colp = pointwise ? xv.data() : col.data();

  Tensor<T> y({s.out_channels, s.batch, lout});
  const T* bias = g.value(b).data();
  for (int c = 0; c < s.out_channels; ++c) {
    std::fill(y.data() + static_cast<long>(c) * cols, y.data() + static_cast<long>(c + 1) * cols, bias[c]);
  }
  k::gemm(false, false, s.out_channels, cols, rows, T(1), wv.data(), colp, T(1), y.data());

  return g.record(std::move(y), {x, w, b}, [x, w, b, s, col = std::move(col), pointwise](Graph<T>& gr, int id) {
    const int lo = s.out_length();
    const int rws = s.in_channels * s.kernel;
    const int cls = s.batch * lo;
    const Tensor<T>& dy = gr.grad(Var{id});
    const T* colp = pointwise ? gr.value(x).data() : col.data();
    if (gr.requires_grad(w)) {
      k::gemm(false, true, s.out_channels, rws, cls, T(1), dy.data(), colp, T(1), gr.grad(w).data());
    }
    if (gr.requires_grad(b)) {
      T* db = gr.grad(b).data();
      for (int c = 0; c < s.out_channels; ++c) {
        T acc = 0;
        const T* row = dy.data() + static_cast<long>(c) * cls;
        for (int i = 0; i < cls; ++i) acc += row[i];
        db[c] += acc;
      }
    }
    if (gr.requires_grad(x)) {
      const T* wd = gr.value(w).data();
      if (pointwise) {
        k::gemm(true, false, rws, cls, s.out_channels, T(1), wd, dy.data(), T(1), gr.grad(x).data());
      } else {
        std::vector<T> dcol(static_cast<std::size_t>(rws) * cls);
        k::gemm(true, false, rws, cls, s.out_channels, T(1), wd, dy.data(), T(0), dcol.data());
        k::col2im(s, dcol.data(), gr.grad(x).data());
      }
    }
  });
}

template <class T>
Var group_norm(Graph<T>& g, Var x, Var gamma, Var beta, int groups, T eps) {
  const Tensor<T>& xv = g.value(x);
  require_rank3(xv, "group_norm");
  if (groups <= 0 || xv.dim(0) % groups != 0) {
    throw ContractError("group_norm: " + std::to_string(xv.dim(0)) + " channels not divisible into " +
                        std::to_string(groups) + " groups");
  }
  const kernels::NormShape s{xv.dim(0), xv.dim(1), xv.dim(2), groups};
  Tensor<T> y(xv.shape());
  std::vector<T> mean(static_cast<std::size_t>(s.batch) * groups), rstd(mean.size());
  k::group_norm_forward(s, xv.data(), g.value(gamma).data(), g.value(beta).data(), eps, y.data(), mean.data(),
                        rstd.data());
  return g.record(std::move(y), {x, gamma, beta},
                  [x, gamma, beta, s, mean = std::move(mean), rstd = std::move(rstd)](Graph<T>& gr, int id) {
                    const Tensor<T>& dy = gr.grad(Var{id});
                    Tensor<T> dgamma({s.channels}), dbeta({s.channels});
                    Tensor<T> scratch;
                    T* dx;
                    if (gr.requires_grad(x)) {
                      dx = gr.grad(x).data();
                    } else {
                      scratch = Tensor<T>(gr.value(x).shape());
                      dx = scratch.data();
                    }
                    k::group_norm_backward(s, gr.value(x).data(), gr.value(gamma).data(), mean.data(), rstd.data(),
                                           dy.data(), dx, dgamma.data(), dbeta.data());
                    if (gr.requires_grad(gamma)) {
                      Tensor<T>& gg = gr.grad(gamma);
                      for (int c = 0; c < s.channels; ++c) gg[c] += dgamma[c];
                    }
                    if (gr.requires_grad(beta)) {
                      Tensor<T>& gb = gr.grad(beta);
                      for (int c = 0; c < s.channels; ++c) gb[c] += dbeta[c];
                    }
                  });
}

template <class T>
Var silu(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  Tensor<T> y(xv.shape());
  k::silu_forward(xv.numel(), xv.data(), y.data());
  return g.record(std::move(y), {x}, [x](Graph<T>& gr, int id) {
    const Tensor<T>& xv = gr.value(x);
    k::silu_backward(xv.numel(), xv.data(), gr.grad(Var{id}).data(), gr.grad(x).data());
  });
}

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
  require_same(g.value(a), g.value(b), "add");
  Tensor<T> y = g.value(a);
  const Tensor<T>& bv = g.value(b);
  for (long i = 0; i < y.numel(); ++i) y[i] += bv[i];
  return g.record(std::move(y), {a, b}, [a, b](Graph<T>& gr, int id) {
    const Tensor<T>& dy = gr.grad(Var{id});
    for (Var v : {a, b}) {
      if (!gr.requires_grad(v)) continue;
      Tensor<T>& d = gr.grad(v);
      for (long i = 0; i < d.numel(); ++i) d[i] += dy[i];
    }
  });
}

template <class T>
Var mul(Graph<T>& g, Var a, Var b) {
  require_same(g.value(a), g.value(b), "mul");
  Tensor<T> y = g.value(a);
  const Tensor<T>& bv = g.value(b);
  for (long i = 0; i < y.numel(); ++i) y[i] *= bv[i];
  return g.record(std::move(y), {a, b}, [a, b](Graph<T>& gr, int id) {
    const Tensor<T>& dy = gr.grad(Var{id});
    if (gr.requires_grad(a)) {
      Tensor<T>& d = gr.grad(a);
      const Tensor<T>& bv = gr.value(b);
      for (long i = 0; i < d.numel(); ++i) d[i] += dy[i] * bv[i];
    }
    if (gr.requires_grad(b)) {
      Tensor<T>& d = gr.grad(b);
      const Tensor<T>& av = gr.value(a);
      for (long i = 0; i < d.numel(); ++i) d[i] += dy[i] * av[i];
    }
  });
}

template <class T>
Var scale(Graph<T>& g, Var a, T s) {
  Tensor<T> y = g.value(a);
  for (long i = 0; i < y.numel(); ++i) y[i] *= s;
  return g.record(std::move(y), {a}, [a, s](Graph<T>& gr, int id) {
    const Tensor<T>& dy = gr.grad(Var{id});
    Tensor<T>& d = gr.grad(a);
    for (long i = 0; i < d.numel(); ++i) d[i] += s * dy[i];
  });
}

template <class T>
Var sum(Graph<T>& g, Var a) {
  const Tensor<T>& av = g.value(a);
  T acc = 0;
  for (long i = 0; i < av.numel(); ++i) acc += av[i];
  return g.record(Tensor<T>({1}, acc), {a}, [a](Graph<T>& gr, int id) {
    const T dy = gr.grad(Var{id})[0];
    Tensor<T>& d = gr.grad(a);
    for (long i = 0; i < d.numel(); ++i) d[i] += dy;
  });
}

template <class T>
Var mse(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  require_same(av, bv, "mse");
  T acc = 0;
  for (long i = 0; i < av.numel(); ++i) {
    const T d = av[i] - bv[i];
    acc += d * d;
  }
  const T n = static_cast<T>(av.numel());
  return g.record(Tensor<T>({1}, acc / n), {a, b}, [a, b, n](Graph<T>& gr, int id) {
    const T dy = gr.grad(Var{id})[0];
    const Tensor<T>& av = gr.value(a);
    const Tensor<T>& bv = gr.value(b);
    const T c = T(2) * dy / n;
    if (gr.requires_grad(a)) {
      Tensor<T>& d = gr.grad(a);
      for (long i = 0; i < d.numel(); ++i) d[i] += c * (av[i] - bv[i]);
    }
    if (gr.requires_grad(b)) {
      Tensor<T>& d = gr.grad(b);
      for (long i = 0; i < d.numel(); ++i) d[i] -= c * (av[i] - bv[i]);
    }
  });
}

template <class T>
Var concat_channels(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  require_rank3(av, "concat_channels");
  require_rank3(bv, "concat_channels");
  if (av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2)) {
    throw ContractError("concat_channels shape mismatch " + av.shape_string() + " vs " + bv.shape_string());
  }
  Tensor<T> y({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  std::copy(av.values().begin(), av.values().end(), y.data());
  std::copy(bv.values().begin(), bv.values().end(), y.data() + av.numel());
  const long split = av.numel();
  return g.record(std::move(y), {a, b}, [a, b, split](Graph<T>& gr, int id) {
    const Tensor<T>& dy = gr.grad(Var{id});
    if (gr.requires_grad(a)) {
      Tensor<T>& d = gr.grad(a);
      for (long i = 0; i < d.numel(); ++i) d[i] += dy[i];
    }
    if (gr.requires_grad(b)) {
      Tensor<T>& d = gr.grad(b);
      for (long i = 0; i < d.numel(); ++i) d[i] += dy[split + i];
    }
  });
}

template <class T>
Var slice_channels(Graph<T>& g, Var a, int begin, int count) {
  const Tensor<T>& av = g.value(a);
  require_rank3(av, "slice_channels");
  if (begin < 0 || count <= 0 || begin + count > av.dim(0)) {
    throw ContractError("slice_channels range out of bounds for " + av.shape_string());
  }
  const long plane = static_cast<long>(av.dim(1)) * av.dim(2);
  Tensor<T> y({count, av.dim(1), av.dim(2)});
  std::copy(av.data() + begin * plane, av.data() + (begin + count) * plane, y.data());
  return g.record(std::move(y), {a}, [a, begin, plane](Graph<T>& gr, int id) {
    const Tensor<T>& dy = gr.grad(Var{id});
    T* d = gr.grad(a).data() + begin * plane;
    for (long i = 0; i < dy.numel(); ++i) d[i] += dy[i];
  });
}

template <class T>
Var upsample_nearest2(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  require_rank3(xv, "upsample_nearest2");
  const long rows = static_cast<long>(xv.dim(0)) * xv.dim(1);
  const int len = xv.dim(2);
  Tensor<T> y({xv.dim(0), xv.dim(1), 2 * len});
  for (long r = 0; r < rows; ++r) {
    for (int t = 0; t < 2 * len; ++t) y[r * 2 * len + t] = xv[r * len + t / 2];
  }
  return g.record(std::move(y), {x}, [x, rows, len](Graph<T>& gr, int id) {
    const Tensor<T>& dy = gr.grad(Var{id});
    Tensor<T>& d = gr.grad(x);
    for (long r = 0; r < rows; ++r) {
      for (int t = 0; t < 2 * len; ++t) d[r * len + t / 2] += dy[r * 2 * len + t];
    }
  });
}

template <class T>
Var avg_pool2(Graph<T>& g, Var x) {
  const Tensor<T>& xv = g.value(x);
  require_rank3(xv, "avg_pool2");
  if (xv.dim(2) % 2 != 0) throw ContractError("avg_pool2 needs an even length, got " + xv.shape_string());
  const long rows = static_cast<long>(xv.dim(0)) * xv.dim(1);
  const int half = xv.dim(2) / 2;
  Tensor<T> y({xv.dim(0), xv.dim(1), half});
  for (long r = 0; r < rows; ++r) {
    for (int t = 0; t < half; ++t) {
      y[r * half + t] = T(0.5) * (xv[r * 2 * half + 2 * t] + xv[r * 2 * half + 2 * t + 1]);
    }
  }
  return g.record(std::move(y), {x}, [x, rows, half](Graph<T>& gr, int id) {
    const Tensor<T>& dy = gr.grad(Var{id});
    Tensor<T>& d = gr.grad(x);
    for (long r = 0; r < rows; ++r) {
      for (int t = 0; t < half; ++t) {
        d[r * 2 * half + 2 * t] += T(0.5) * dy[r * half + t];
        d[r * 2 * half + 2 * t + 1] += T(0.5) * dy[r * half + t];
      }
    }
  });
}

template <class T>
Var attention(Graph<T>& g, Var q, Var kk, Var v) {
  const Tensor<T>& qv = g.value(q);
  require_rank3(qv, "attention");
  require_same(qv, g.value(kk), "attention");
  require_same(qv, g.value(v), "attention");
  const kernels::AttentionShape s{qv.dim(0), qv.dim(1), qv.dim(2)};
  Tensor<T> y(qv.shape());
  std::vector<T> probs(static_cast<std::size_t>(s.batch) * s.length * s.length);
  k::attention_forward(s, qv.data(), g.value(kk).data(), g.value(v).data(), y.data(), probs.data());
  return g.record(std::move(y), {q, kk, v}, [q, kk, v, s, probs = std::move(probs)](Graph<T>& gr, int id) {
    const long n = gr.value(q).numel();
    // The kernel accumulates into all three; route unused ones to scratch.
    Tensor<T> scratch;
    auto target = [&](Var var) -> T* {
      if (gr.requires_grad(var)) return gr.grad(var).data();
      if (scratch.empty()) scratch = Tensor<T>({static_cast<int>(n)});
      return scratch.data();
    };
    T* dq = target(q);
    T* dk = target(kk);
    T* dv = target(v);
    k::attention_backward(s, gr.value(q).data(), gr.value(kk).data(), gr.value(v).data(), probs.data(),
                          gr.grad(Var{id}).data(), dq, dk, dv);
  });
}

template <class T>
Var sigmoid_channels(Graph<T>& g, Var x, int begin, int count) {
  const Tensor<T>& xv = g.value(x);
  require_rank3(xv, "sigmoid_channels");
  if (begin < 0 || count < 0 || begin + count > xv.dim(0)) {
    throw ContractError("sigmoid_channels range out of bounds for " + xv.shape_string());
  }
  const long plane = static_cast<long>(xv.dim(1)) * xv.dim(2);
  const long lo = begin * plane, hi = (begin + count) * plane;
  Tensor<T> y = xv;
  for (long i = lo; i < hi; ++i) y[i] = T(1) / (T(1) + std::exp(-xv[i]));
  return g.record(std::move(y), {x}, [x, lo, hi](Graph<T>& gr, int id) {
    const Tensor<T>& dy = gr.grad(Var{id});
    const Tensor<T>& yv = gr.value(Var{id});
    Tensor<T>& d = gr.grad(x);
    for (long i = 0; i < d.numel(); ++i) {
      d[i] += (i >= lo && i < hi) ? dy[i] * yv[i] * (T(1) - yv[i]) : dy[i];
    }
  });
}

#define TEDI_OPS(T)                                                     \
  template Var conv1d<T>(Graph<T>&, Var, Var, Var, int, int);           \
  template Var group_norm<T>(Graph<T>&, Var, Var, Var, int, T);         \
  template Var silu<T>(Graph<T>&, Var);                                 \
  template Var add<T>(Graph<T>&, Var, Var);                             \
  template Var mul<T>(Graph<T>&, Var, Var);                             \
  template Var scale<T>(Graph<T>&, Var, T);                             \
  template Var sum<T>(Graph<T>&, Var);                                  \
  template Var mse<T>(Graph<T>&, Var, Var);                             \
  template Var concat_channels<T>(Graph<T>&, Var, Var);                 \
  template Var slice_channels<T>(Graph<T>&, Var, int, int);             \
  template Var upsample_nearest2<T>(Graph<T>&, Var);                    \
  template Var avg_pool2<T>(Graph<T>&, Var);                            \
  template Var attention<T>(Graph<T>&, Var, Var, Var);                  \
  template Var sigmoid_channels<T>(Graph<T>&, Var, int, int);

TEDI_OPS(float)
TEDI_OPS(double)

}  // namespace ops

template class Graph<float>;
template class Graph<double>;

}  // namespace tedi::nn
