#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Minimal reverse-mode automatic differentiation over dense 64-bit tensors.
// Graphs are built eagerly by each op call and released with the root.
namespace wattnet::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;
  std::string_view op = "leaf";
  bool requires_grad = false;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Shape shape, std::vector<double> values);
  static Var parameter(Shape shape, std::vector<double> values);

  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::span<const double> value() const { return node_->value; }
  std::span<double> mutable_value() { return node_->value; }
  double item() const;
  // Empty span until a backward pass reaches this node.
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }
  bool requires_grad() const { return node_->requires_grad; }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

// Creates an interior node. `backward` is only attached (and parents kept)
// when at least one parent requires a gradient.
Var make_op(std::string_view op, Shape shape, std::vector<double> value, std::vector<Var> parents,
            std::function<void(Node&)> backward);

// Seeds d(root)/d(root) = 1 and runs every node once in reverse topological
// order. root must hold a single element.
void backward(const Var& root);

// ---------------------------------------------------------------- elementwise
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var sum(const Var& a);
Var reshape(const Var& a, Shape shape);

// x [..., in] * w [in, out] + b [out]; b may be empty.
Var dense(const Var& x, const Var& w, const Var& b);

struct ConvSpec {
  int kernel_size = 2;
  int dilation = 1;
  int groups = 0;  // 0 = one group per series; any other value must equal M
};

// Output length of a strictly-lagged dilated convolution: T - k*d.
long conv_output_length(long t, const ConvSpec& spec);

// x [N, T, M], w [M, k] -> [N, T - k*d, M]. Output position t' reads
// x[t' + k*d - i*d] for i = 1..k with weight w[m, i-1]; series never mix.
Var grouped_dilated_conv(const Var& x, const Var& w, const ConvSpec& spec);

// sigmoid(z_alpha) * tanh(z_beta)
Var gated_activation(const Var& z_alpha, const Var& z_beta);

// Shared single-head attention weights. Each series' scalar latent becomes a
// token h = z * lift_w + lift_b (width d_k); queries h*wq, keys h*wk, values
// h . wv.
struct AttentionWeights {
  Var lift_w;  // [d_k]
  Var lift_b;  // [d_k]
  Var wq;      // [d_k, d_k]
  Var wk;      // [d_k, d_k]
  Var wv;      // [d_k]
  std::size_t d_k() const { return lift_w.size(); }
};

// z [N, T, M] -> [N, T, M]: for every (n, t) slice, softmax(QK^T/sqrt(d_k)) V
// over the M tokens, the same weights for every slice. Token reductions use
// compensated sums, so permuting series permutes the output exactly.
Var slice_attention(const Var& z, const AttentionWeights& w);

// Row-major [M, M] attention matrix of one slice, computed the same way as
// slice_attention's forward pass.
std::vector<double> attention_matrix(std::span<const double> slice, const AttentionWeights& w);

enum class Reduction { mean, sum };

// logits [N, C]; max-subtracted log-softmax.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels, Reduction reduction = Reduction::mean);

// ------------------------------------------------------------- verification
struct GradCheckOptions {
  double h = 1e-4;
  // Tensors up to this many coordinates are checked exhaustively; larger
  // ones are subsampled down to it (never below 200 in total).
  std::size_t max_coords = 200;
  // Denominator floor for the relative error.
  double abs_floor = 1e-7;
  std::uint64_t seed = 1;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coords_checked = 0;
};

// Central differences on `f` (which must rebuild its graph from the current
// parameter values) against one reverse pass. Throws ComputeError on
// non-finite values.
GradCheckResult grad_check(const std::function<Var()>& f, std::span<Var> params, const GradCheckOptions& opts = {});

}  // namespace wattnet::ad
