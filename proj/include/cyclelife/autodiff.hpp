#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cyclelife/rng.hpp"
#include "cyclelife/tensor.hpp"

namespace cyclelife::ad {

// Define-by-run reverse-mode tape. Each op records one node holding the
// forward value and a closure that scatters upstream gradient into the
// node's inputs. A fresh graph is built per forward pass; `reset()`
// reuses the node storage between passes.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, int self)>;

  // Registers `t` as a leaf and links it to this tape.
  int watch(Tensor& t);

  int record(Shape shape, std::vector<double> values, std::vector<int> inputs, BackFn back);

  // Reverse accumulation from a scalar loss. Gradient slots are cleared
  // first, so repeated calls on the same graph give identical results.
  void backward(const Tensor& loss);

  // Gradient of the loss w.r.t. a recorded tensor (zeros if unreached).
  std::vector<double> grad(const Tensor& t) const;

  const std::vector<double>& values(int node) const { return nodes_[static_cast<std::size_t>(node)].values; }
  const Shape& shape(int node) const { return nodes_[static_cast<std::size_t>(node)].shape; }

  // Gradient buffer of a node, allocated (zeroed) on first touch.
  std::vector<double>& grad_buffer(int node);

  void reset() { nodes_.clear(); }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<int> inputs;
    BackFn back;
    std::vector<double> grad;
  };
  std::vector<Node> nodes_;
};

// Input captured for a backward closure: a node reference when the input
// is recorded, a copy of the values otherwise.
struct Saved {
  int node = -1;
  std::vector<double> copy;

  const std::vector<double>& get(const Tape& tape) const {
    return node >= 0 ? tape.values(node) : copy;
  }
};

Saved save(const Tensor& t);

// ---- elementwise and linear-algebra ops ----
// Binary ops accept equal shapes or a scalar on either side.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double c);

Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
Tensor leaky_relu(Tape& tape, const Tensor& x, double negative_slope = 0.01);

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& x);

// Valid (no padding) 1-D convolution over rows of x. x is L x C,
// kernels is {F, K, C}, bias is {F}; output is L_out x F with
// L_out = (L - K) / stride + 1.
Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride);

// Inverted dropout: zero with probability p and scale survivors by
// 1/(1-p) while training; identity in inference mode.
Tensor dropout(Tape& tape, const Tensor& x, double p, bool training, Rng& rng);

// ---- shape ops ----
Tensor row(Tape& tape, const Tensor& x, std::size_t r);            // 1 x C slice
Tensor stack_rows(Tape& tape, std::span<const Tensor> columns);    // T columns {H,1} -> {T,H}
Tensor concat(Tape& tape, const Tensor& a, const Tensor& b);       // flat -> {na+nb, 1}

// ---- reductions ----
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);
Tensor softmax(Tape& tape, const Tensor& x);  // over all elements

// Max relative error between analytic gradients and central finite
// differences of a scalar-valued function at x. `f` must build its
// graph on the tape it is given.
double gradient_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
                      double step = 1e-5);

// Same check restricted to `max_coords` randomly chosen coordinates;
// used for large parameter tensors where the full sweep is wasteful.
double gradient_check_sampled(const std::function<Tensor(Tape&, const Tensor&)>& f,
                              const Tensor& x, double step, std::size_t max_coords, Rng& rng);

}  // namespace cyclelife::ad
