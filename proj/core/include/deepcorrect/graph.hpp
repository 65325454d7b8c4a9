#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deepcorrect/layers.hpp"
#include "deepcorrect/rng.hpp"
#include "deepcorrect/tensor.hpp"

namespace deepcorrect {

enum class RunMode { train, eval };

// One layer instance. Parameter tensors are empty when the kind has none.
// BatchNorm: weight=gamma, bias=beta, plus running statistics.
// SeparableConv2D: weight=vertical bank, weight2=horizontal bank.
template <typename T>
struct NodeT {
  std::string name;
  LayerKind kind;
  int input = -1;  // producing node id; -1 means the graph input
  bool trainable = true;

  TensorT<T> weight;
  TensorT<T> weight2;
  TensorT<T> bias;
  TensorT<T> bn_mean;
  TensorT<T> bn_var;
};

// Ordered layer graph; node id == position, links always point backwards.
template <typename T>
struct ModelGraphT {
  std::vector<NodeT<T>> nodes;
  std::vector<int> input_shape;  // (C,H,W)
  uint64_t init_seed = 0;
  std::string config_digest;  // free-form provenance carried into checkpoints

  int add(NodeT<T> n) {
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
  }
  int size() const { return static_cast<int>(nodes.size()); }

  // Index of the loss head, or -1 for headless fragments.
  int loss_node() const;
  // Node feeding the loss head (the logits), or the last node when headless.
  int logits_node() const;
  // Conv2D node ids in topological order; ranking uses 1-based positions here.
  std::vector<int> conv_node_ids() const;
  int find(const std::string& name) const;  // -1 when absent

  void validate() const;
};

using ModelGraph = ModelGraphT<float>;

ModelGraphT<double> to_double(const ModelGraph& g);

// Per-node output shapes (without the batch dimension), resolved statically.
template <typename T>
std::vector<std::vector<int>> infer_shapes(const ModelGraphT<T>& g);

template <typename T>
struct ForwardResultT {
  std::vector<TensorT<T>> acts;  // one per node; loss head holds softmax probabilities
  int logits_id = -1;
  RunMode mode = RunMode::eval;
  double loss = 0.0;
  bool has_loss = false;

  const TensorT<T>& logits() const { return acts[static_cast<size_t>(logits_id)]; }
};

using ForwardResult = ForwardResultT<float>;

// Runs the whole graph, caching every activation. Train mode updates BatchNorm
// running statistics on trainable BN nodes; frozen BN always uses running
// statistics so frozen base behavior matches the pre-trained model.
template <typename T>
ForwardResultT<T> forward(ModelGraphT<T>& g, const TensorT<T>& batch, RunMode mode,
                          const std::vector<int>* labels = nullptr);

// Eval-only forward against an immutable graph (parallel-safe).
template <typename T>
ForwardResultT<T> forward_eval(const ModelGraphT<T>& g, const TensorT<T>& batch,
                               const std::vector<int>* labels = nullptr);

// Recomputes every node with id > start from the cached activations in
// `fr.acts`, in place. Used for activation swapping and split-point checks.
template <typename T>
void forward_from(const ModelGraphT<T>& g, int start, ForwardResultT<T>& fr,
                  const std::vector<int>* labels = nullptr);

template <typename T>
struct ParamGradsT {
  TensorT<T> weight;
  TensorT<T> weight2;
  TensorT<T> bias;
  bool present = false;
};

// Gradients aligned with trainable parameters; frozen nodes have no entry.
template <typename T>
struct GradientTapeT {
  double loss = 0.0;
  std::vector<ParamGradsT<T>> grads;  // indexed by node id

  bool has(int node) const { return grads[static_cast<size_t>(node)].present; }
};

using GradientTape = GradientTapeT<float>;

template <typename T>
GradientTapeT<T> backward(const ModelGraphT<T>& g, const ForwardResultT<T>& fr, const std::vector<int>& labels);

// Momentum buffers for SGD, lazily sized from the first tape.
template <typename T>
struct SgdStateT {
  std::vector<ParamGradsT<T>> velocity;
};

using SgdState = SgdStateT<float>;

// v <- m*v + grad + wd*theta;  theta <- theta - lr*v. Applied to trainable
// parameters only.
template <typename T>
void sgd_step(ModelGraphT<T>& g, const GradientTapeT<T>& tape, SgdStateT<T>& state, double lr, double momentum,
              double weight_decay);

// Fan-in-scaled uniform init for Conv/Dense/Separable weights, gamma=1 beta=0
// for BatchNorm, zero biases.
template <typename T>
void init_parameters(ModelGraphT<T>& g, uint64_t seed);

// Visits every parameter tensor of a node in checkpoint order.
template <typename T, typename Fn>
void for_each_param(NodeT<T>& n, Fn&& fn) {
  if (!n.weight.empty()) fn("weight", n.weight);
  if (!n.weight2.empty()) fn("weight2", n.weight2);
  if (!n.bias.empty()) fn("bias", n.bias);
  if (!n.bn_mean.empty()) fn("bn_mean", n.bn_mean);
  if (!n.bn_var.empty()) fn("bn_var", n.bn_var);
}

template <typename T, typename Fn>
void for_each_param(const NodeT<T>& n, Fn&& fn) {
  if (!n.weight.empty()) fn("weight", n.weight);
  if (!n.weight2.empty()) fn("weight2", n.weight2);
  if (!n.bias.empty()) fn("bias", n.bias);
  if (!n.bn_mean.empty()) fn("bn_mean", n.bn_mean);
  if (!n.bn_var.empty()) fn("bn_var", n.bn_var);
}

// argmax over the class axis of (B, classes) logits.
template <typename T>
std::vector<int> predict_classes(const TensorT<T>& logits);

}  // namespace deepcorrect
