#include "uqr/encoder.hpp"

#include <cmath>
#include <string>

#include "uqr/errors.hpp"
#include "uqr/rng.hpp"

namespace uqr {

void EncoderConfig::validate() const {
  if (input_dim < 1) throw InvalidInputError("encoder: input_dim must be >= 1");
  if (output_dim < 1) throw InvalidInputError("encoder: output_dim must be >= 1");
  for (int d : hidden_dims)
    if (d < 1) throw InvalidInputError("encoder: hidden dims must be >= 1");
  if (!(spectral_bound > 0.0)) throw InvalidInputError("encoder: spectral_bound must be positive");
  if (power_iterations < 1) throw InvalidInputError("encoder: power_iterations must be >= 1");
}

Encoder::Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::vector<int> dims;
  dims.push_back(cfg_.input_dim);
  dims.insert(dims.end(), cfg_.hidden_dims.begin(), cfg_.hidden_dims.end());
  dims.push_back(cfg_.output_dim);

  Rng rng(derive_seed(cfg_.seed, 0xe7c0de));
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    Eigen::MatrixXd w(fan_out, fan_in);
    const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = std * rng.normal();
    weights_.push_back(std::move(w));
    biases_.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  power_states_.resize(weights_.size());
  project_spectral();
}

void Encoder::check_input(Eigen::Index rows) const {
  if (rows != cfg_.input_dim)
    throw InvalidInputError("encoder: input length " + std::to_string(rows) +
                            " does not match input_dim " + std::to_string(cfg_.input_dim));
}

Eigen::MatrixXd Encoder::activate(Eigen::MatrixXd pre) const {
  if (cfg_.activation == Activation::Tanh) return pre.array().tanh().matrix();
  return pre.cwiseMax(0.0);
}

Eigen::MatrixXd Encoder::activation_grad(const Eigen::MatrixXd& pre,
                                         const Eigen::MatrixXd& act) const {
  if (cfg_.activation == Activation::Tanh)
    return (1.0 - act.array().square()).matrix();
  return (pre.array() > 0.0).cast<double>().matrix();
}

Eigen::VectorXd Encoder::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return forward_batch(x);
}

Eigen::MatrixXd Encoder::forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  check_input(x.rows());
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd pre = weights_[l] * h;
    pre.colwise() += biases_[l];
    h = activate(std::move(pre));
  }
  return h;
}

Eigen::MatrixXd Encoder::forward_cached(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                        Cache& cache) const {
  check_input(x.rows());
  cache.input = x;
  cache.preacts.assign(weights_.size(), {});
  cache.acts.assign(weights_.size(), {});
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd pre = weights_[l] * h;
    pre.colwise() += biases_[l];
    cache.preacts[l] = pre;
    h = activate(std::move(pre));
    cache.acts[l] = h;
  }
  return h;
}

void Encoder::backward(const Cache& cache, const Eigen::Ref<const Eigen::MatrixXd>& grad_hidden,
                       std::vector<LayerGrads>& grads) const {
  const auto layers = static_cast<int>(weights_.size());
  if (static_cast<int>(grads.size()) != layers) grads = zero_grads();
  Eigen::MatrixXd delta = grad_hidden;
  for (int l = layers - 1; l >= 0; --l) {
    delta = delta.cwiseProduct(activation_grad(cache.preacts[l], cache.acts[l]));
    const Eigen::MatrixXd& below = l == 0 ? cache.input : cache.acts[l - 1];
    grads[l].w.noalias() += delta * below.transpose();
    grads[l].b.noalias() += delta.rowwise().sum();
    if (l > 0) delta = weights_[l].transpose() * delta;
  }
}

void Encoder::apply_update(const std::vector<LayerGrads>& grads, double learning_rate) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    weights_[l].noalias() -= learning_rate * grads[l].w;
    biases_[l].noalias() -= learning_rate * grads[l].b;
  }
  project_spectral();
}

void Encoder::project_spectral() {
  for (std::size_t l = 0; l < weights_.size(); ++l)
    clip_spectral_norm(weights_[l], cfg_.spectral_bound, power_states_[l], cfg_.power_iterations);
}

double Encoder::spectral_norm_estimate(int layer) const {
  PowerIterState fresh;
  return estimate_spectral_norm(weights_[layer], fresh, cfg_.power_iterations);
}

void Encoder::set_layer(int layer, Eigen::MatrixXd w, Eigen::VectorXd b) {
  if (layer < 0 || layer >= n_layers()) throw InvalidInputError("encoder: layer out of range");
  if (w.rows() != b.size()) throw SchemaError("encoder: layer weight/bias shape mismatch");
  weights_[layer] = std::move(w);
  biases_[layer] = std::move(b);
  power_states_[layer] = PowerIterState{};
}

std::vector<LayerGrads> Encoder::zero_grads() const {
  std::vector<LayerGrads> grads(weights_.size());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    grads[l].w = Eigen::MatrixXd::Zero(weights_[l].rows(), weights_[l].cols());
    grads[l].b = Eigen::VectorXd::Zero(biases_[l].size());
  }
  return grads;
}

}  // namespace uqr
