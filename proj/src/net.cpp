#include "evocl/net.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace evocl {

Eigen::Index LayerSpec::param_count() const {
  Eigen::Index n = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    n += static_cast<Eigen::Index>(widths[i]) * widths[i + 1] + widths[i + 1];
  return n;
}

void LayerSpec::validate() const {
  if (widths.size() < 2)
    throw std::invalid_argument("LayerSpec needs at least input and output widths");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("LayerSpec widths must be positive");
}

namespace {

Eigen::Index layer_offset(const LayerSpec& spec, int layer) {
  Eigen::Index off = 0;
  for (int i = 0; i < layer; ++i)
    off += static_cast<Eigen::Index>(spec.widths[i]) * spec.widths[i + 1] + spec.widths[i + 1];
  return off;
}

}  // namespace

Eigen::Map<const Matrix> DenseNet::weights(int layer) const {
  const Eigen::Index in = spec.widths[layer], out = spec.widths[layer + 1];
  return {params.data() + layer_offset(spec, layer), in, out};
}

Eigen::Map<const Vector> DenseNet::biases(int layer) const {
  const Eigen::Index in = spec.widths[layer], out = spec.widths[layer + 1];
  return {params.data() + layer_offset(spec, layer) + in * out, out};
}

Eigen::Map<Matrix> DenseNet::weights(int layer) {
  const Eigen::Index in = spec.widths[layer], out = spec.widths[layer + 1];
  return {params.data() + layer_offset(spec, layer), in, out};
}

Eigen::Map<Vector> DenseNet::biases(int layer) {
  const Eigen::Index in = spec.widths[layer], out = spec.widths[layer + 1];
  return {params.data() + layer_offset(spec, layer) + in * out, out};
}

void Batch::validate(int num_classes) const {
  if (!labels.empty() && inputs.rows() != static_cast<Eigen::Index>(labels.size()))
    throw std::invalid_argument("batch label count does not match input rows");
  for (int y : labels)
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument("batch label " + std::to_string(y) + " outside class universe");
}

DenseNet init_network(const LayerSpec& spec, std::uint64_t seed) {
  spec.validate();
  DenseNet net{spec, Vector::Zero(spec.param_count())};
  auto rng = make_rng(seed, Stream::net_init);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const bool relu_next =
        l + 1 < spec.num_layers() && spec.hidden_activation == Activation::relu;
    const double scale = std::sqrt((relu_next ? 2.0 : 1.0) / spec.widths[l]);
    auto w = net.weights(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * normal(rng);
    // biases stay zero
  }
  return net;
}

namespace {

void apply_hidden(Matrix& z, Activation act) {
  if (act == Activation::relu)
    z = z.cwiseMax(0.0);
  else
    z = z.array().tanh().matrix();
}

}  // namespace

Matrix forward(const LayerSpec& spec, const double* params, const Matrix& inputs) {
  if (inputs.cols() != spec.input_width())
    throw std::invalid_argument("forward: input width " + std::to_string(inputs.cols()) +
                                " does not match spec width " +
                                std::to_string(spec.input_width()));
  Matrix a = inputs;
  const int L = spec.num_layers();
  Eigen::Index off = 0;
  for (int l = 0; l < L; ++l) {
    const Eigen::Index in = spec.widths[l], out = spec.widths[l + 1];
    Eigen::Map<const Matrix> w(params + off, in, out);
    Eigen::Map<const Vector> b(params + off + in * out, out);
    off += in * out + out;
    Matrix z = (a * w).rowwise() + b.transpose();
    if (l + 1 < L) apply_hidden(z, spec.hidden_activation);
    a = std::move(z);
  }
  return a;
}

Matrix forward(const DenseNet& net, const Matrix& inputs) {
  return forward(net.spec, net.params.data(), inputs);
}

Matrix softmax(const Matrix& logits) {
  Matrix p = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp();
  return p.array().colwise() / p.rowwise().sum().array();
}

double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows() == 0) throw std::invalid_argument("cross entropy over empty batch");
  if (logits.rows() != static_cast<Eigen::Index>(labels.size()))
    throw std::invalid_argument("cross entropy label count does not match logit rows");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= logits.cols())
      throw std::invalid_argument("label " + std::to_string(y) + " out of logit range");
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    total += lse - logits(i, y);
  }
  return total / static_cast<double>(logits.rows());
}

double mse(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("mse shape mismatch");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Vector backprop(const DenseNet& net, const Matrix& inputs, const Matrix& output_grad,
                Matrix* input_grad) {
  const int L = net.spec.num_layers();
  if (inputs.cols() != net.spec.input_width())
    throw std::invalid_argument("backprop: input width mismatch");
  if (output_grad.rows() != inputs.rows() || output_grad.cols() != net.spec.output_width())
    throw std::invalid_argument("backprop: output gradient shape mismatch");

  // forward, keeping post-activation values per layer
  std::vector<Matrix> acts(L + 1);
  acts[0] = inputs;
  for (int l = 0; l < L; ++l) {
    Matrix z = (acts[l] * net.weights(l)).rowwise() + net.biases(l).transpose();
    if (l + 1 < L) apply_hidden(z, net.spec.hidden_activation);
    acts[l + 1] = std::move(z);
  }

  Vector grad = Vector::Zero(net.params.size());
  Matrix g = output_grad;
  for (int l = L - 1; l >= 0; --l) {
    const Eigen::Index in = net.spec.widths[l], out = net.spec.widths[l + 1];
    const Eigen::Index base = layer_offset(net.spec, l);
    Eigen::Map<Matrix>(grad.data() + base, in, out) = acts[l].transpose() * g;
    Eigen::Map<Vector>(grad.data() + base + in * out, out) = g.colwise().sum();
    if (l > 0 || input_grad) {
      Matrix gi = g * net.weights(l).transpose();
      if (l > 0) {
        // chain through the activation of layer l-1's output
        if (net.spec.hidden_activation == Activation::relu)
          gi = (acts[l].array() > 0.0).cast<double>() * gi.array();
        else
          gi = (1.0 - acts[l].array().square()) * gi.array();
      }
      if (l == 0 && input_grad) *input_grad = std::move(gi);
      if (l > 0) g = std::move(gi);
    }
  }
  return grad;
}

Vector backward_cross_entropy(const DenseNet& net, const Matrix& inputs,
                              const std::vector<int>& labels, Matrix* input_grad) {
  Matrix logits = forward(net, inputs);
  if (logits.rows() == 0) throw std::invalid_argument("cross entropy over empty batch");
  if (logits.rows() != static_cast<Eigen::Index>(labels.size()))
    throw std::invalid_argument("cross entropy label count does not match logit rows");
  Matrix g = softmax(logits);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= g.cols())
      throw std::invalid_argument("label " + std::to_string(y) + " out of logit range");
    g(i, y) -= 1.0;
  }
  g /= static_cast<double>(g.rows());
  return backprop(net, inputs, g, input_grad);
}

Vector backward_mse(const DenseNet& net, const Matrix& inputs, const Matrix& target,
                    Matrix* input_grad) {
  Matrix out = forward(net, inputs);
  if (out.rows() != target.rows() || out.cols() != target.cols())
    throw std::invalid_argument("mse shape mismatch");
  Matrix g = 2.0 * (out - target) / static_cast<double>(out.size());
  return backprop(net, inputs, g, input_grad);
}

void sgd_step(DenseNet& net, const Vector& grad, double lr) {
  if (grad.size() != net.params.size())
    throw std::invalid_argument("sgd_step gradient dimension mismatch");
  net.params -= lr * grad;
}

const Vector& flatten_params(const DenseNet& net) { return net.params; }

void set_params(DenseNet& net, const Vector& v) {
  if (v.size() != net.spec.param_count())
    throw std::invalid_argument("set_params dimension mismatch: got " + std::to_string(v.size()) +
                                ", expected " + std::to_string(net.spec.param_count()));
  net.params = v;
}

}  // namespace evocl
