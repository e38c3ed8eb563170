#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tedi/tensor.hpp"

namespace tedi::nn {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Handle to a node recorded on a Graph.
struct Var {
  int id = -1;
};

// Reverse-mode tape. Ops append nodes in evaluation order; backward walks
// them in reverse. One graph records one forward pass.
template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int)>;

  Var constant(Tensor<T> value);
  Var parameter(Parameter<T>& p);

  const Tensor<T>& value(Var v) const;
  // Gradient buffer of a node, allocated as zeros on first access.
  Tensor<T>& grad(Var v);
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 for a scalar node.
  void backward(Var loss);
  // Seeds an arbitrary upstream gradient of the output's shape.
  void backward(Var output, const Tensor<T>& seed);

  // With gradients disabled no backward closures are kept (inference).
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  // Used by op implementations.
  Var record(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn fn);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  void run_backward(int from);

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

namespace ops {

// x [Cin, B, L], w [Cout, Cin, k], b [Cout] -> [Cout, B, Lout]
template <class T>
Var conv1d(Graph<T>& g, Var x, Var w, Var b, int stride, int pad);
// Per-sample group normalization with per-channel affine gamma, beta [C].
template <class T>
Var group_norm(Graph<T>& g, Var x, Var gamma, Var beta, int groups, T eps = T(1e-5));
template <class T>
Var silu(Graph<T>& g, Var x);
template <class T>
Var add(Graph<T>& g, Var a, Var b);
template <class T>
Var mul(Graph<T>& g, Var a, Var b);
template <class T>
Var scale(Graph<T>& g, Var a, T s);
// Scalar sum of all elements.
template <class T>
Var sum(Graph<T>& g, Var a);
// Scalar mean of squared differences.
template <class T>
Var mse(Graph<T>& g, Var a, Var b);
template <class T>
Var concat_channels(Graph<T>& g, Var a, Var b);
template <class T>
Var slice_channels(Graph<T>& g, Var a, int begin, int count);
// [C, B, L] -> [C, B, 2L]
template <class T>
Var upsample_nearest2(Graph<T>& g, Var x);
// [C, B, L] -> [C, B, L/2]
template <class T>
Var avg_pool2(Graph<T>& g, Var x);
// q, k, v [C, B, L] -> [C, B, L]
template <class T>
Var attention(Graph<T>& g, Var q, Var k, Var v);
// Logistic sigmoid on channels [begin, begin + count); identity elsewhere.
template <class T>
Var sigmoid_channels(Graph<T>& g, Var x, int begin, int count);

}  // namespace ops

}  // namespace tedi::nn
