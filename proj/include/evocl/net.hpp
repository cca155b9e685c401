#ifndef EVOCL_NET_HPP
#define EVOCL_NET_HPP

#include <vector>

#include "evocl/common.hpp"

namespace evocl {

enum class Activation { relu, tanh };

// Feedforward stack of affine layers. Hidden layers use the configured
// activation, the output layer is always identity (softmax lives in the
// loss, latent outputs stay raw).
struct LayerSpec {
  std::vector<int> widths;  // input, hidden..., output
  Activation hidden_activation = Activation::relu;

  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }
  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
  Eigen::Index param_count() const;
  void validate() const;  // throws std::invalid_argument
};

// The flat parameter vector is the single source of truth; layer weights are
// mapped out of it. Layout per layer: weight matrix (in x out, column-major)
// followed by the bias. flatten/unflatten is the identity on this vector.
struct DenseNet {
  LayerSpec spec;
  Vector params;

  Eigen::Map<const Matrix> weights(int layer) const;
  Eigen::Map<const Vector> biases(int layer) const;
  Eigen::Map<Matrix> weights(int layer);
  Eigen::Map<Vector> biases(int layer);
};

struct Batch {
  Matrix inputs;  // rows = examples
  std::vector<int> labels;

  void validate(int num_classes) const;
};

// Fan-in scaled Gaussian weights (sqrt(2/fan_in) before relu, sqrt(1/fan_in)
// before tanh or identity), zero biases. Deterministic in seed.
DenseNet init_network(const LayerSpec& spec, std::uint64_t seed);

Matrix forward(const DenseNet& net, const Matrix& inputs);

// Same forward pass over an external flat parameter block (no copy); params
// must hold spec.param_count() doubles. Lets ES evaluate candidate segments
// in place.
Matrix forward(const LayerSpec& spec, const double* params, const Matrix& inputs);

// Row-wise softmax with max subtraction.
Matrix softmax(const Matrix& logits);

// Mean over rows of -log softmax(row)[label]. Stable for large logits.
double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels);

// Mean over all entries of the squared difference.
double mse(const Matrix& pred, const Matrix& target);

// Exact reverse-mode gradient of the mean loss w.r.t. params. If input_grad
// is given it receives d(loss)/d(inputs), which lets callers chain nets.
Vector backward_cross_entropy(const DenseNet& net, const Matrix& inputs,
                              const std::vector<int>& labels, Matrix* input_grad = nullptr);
Vector backward_mse(const DenseNet& net, const Matrix& inputs, const Matrix& target,
                    Matrix* input_grad = nullptr);

// Generic chain piece: backprop an upstream output gradient through the net.
Vector backprop(const DenseNet& net, const Matrix& inputs, const Matrix& output_grad,
                Matrix* input_grad = nullptr);

void sgd_step(DenseNet& net, const Vector& grad, double lr);

const Vector& flatten_params(const DenseNet& net);
void set_params(DenseNet& net, const Vector& v);

}  // namespace evocl

#endif
