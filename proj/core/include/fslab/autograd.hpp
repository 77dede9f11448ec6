#pragma once

// Reverse-mode automatic differentiation over C x H x W tensors.
//
// Every op returns a Var holding its forward value. When any input requires a
// gradient (and recording is enabled) the op also records a backward closure;
// `backward(loss)` replays the recorded closures in reverse topological order.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fslab/tensor.hpp"

namespace fslab::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<const NodePtr> parents)>;

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward_fn;
};

class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Accumulated gradient; empty until backward reaches this node.
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();

  const NodePtr& node() const { return node_; }
  bool same_node(const Var& other) const { return node_ == other.node_; }

 private:
  friend Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn fn);
  explicit Var(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

/// Builds an op result; the backward closure is kept only when an input needs it.
Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn fn);

/// Adds `g` into the node's gradient buffer, allocating it on first use.
void accumulate_grad(Node& node, const Tensor& g);

/// Seeds d(loss)/d(loss) = 1 and propagates; `loss` must hold a single value.
void backward(const Var& loss);

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Counts convolution multiply-accumulates issued on this thread while alive.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  std::uint64_t macs() const { return macs_; }

 private:
  std::uint64_t macs_ = 0;
  std::uint64_t* previous_;
};

// ---- ops -------------------------------------------------------------------

/// 2-D convolution. `weight` has shape {out, in, kernel*kernel}; `bias` is
/// either undefined or {out, 1, 1}. Zero padding.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride, int pad);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var add(std::span<const Var> terms);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);

/// x (C x H x W) times a per-channel weight vector v (C x 1 x 1).
Var channel_scale(const Var& x, const Var& v);

/// Per-channel spatial mean, C x H x W -> C x 1 x 1.
Var global_avg_pool(const Var& x);

Var concat_channels(std::span<const Var> parts);

/// Zero-pads x with extra channels up to `channels`.
Var pad_channels(const Var& x, int channels);

/// Bilinear resampling with half-pixel centres (align_corners = false).
Var resize_bilinear(const Var& x, int out_h, int out_w);

/// Adaptive average pooling to an out_h x out_w grid.
Var adaptive_avg_pool(const Var& x, int out_h, int out_w);

Var sum(const Var& x);
Var mean(const Var& x);

enum class Reduction { kSum, kMean };

/// Binary cross-entropy between probabilities `s` and a fixed target.
/// Probabilities are clamped to [eps, 1 - eps] before the logs; the gradient
/// uses the clamped value at every pixel so saturated outputs still learn.
Var bce(const Var& s, const Tensor& target, double eps, Reduction reduction);

}  // namespace fslab::ag
