#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "uqr/spectral.hpp"

namespace uqr {

enum class Activation { Tanh, Relu };

struct EncoderConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims{64, 64};
  int output_dim = 32;  // D_h
  double spectral_bound = 1.0;
  int power_iterations = 5;
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;

  void validate() const;
};

// Gradients for one layer, in the same order as the parameters.
struct LayerGrads {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
};

// Spectrally-normalized feed-forward encoder. Every layer's weight matrix is
// kept at or below `spectral_bound`, so the whole map is Lipschitz with
// constant bound^depth (activations are 1-Lipschitz).
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(EncoderConfig cfg);

  int input_dim() const { return cfg_.input_dim; }
  int output_dim() const { return cfg_.output_dim; }
  int n_layers() const { return static_cast<int>(weights_.size()); }
  const EncoderConfig& config() const { return cfg_; }

  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // Columns of `x` are inputs; returns D_h x N hidden states.
  Eigen::MatrixXd forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  struct Cache {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> preacts;
    std::vector<Eigen::MatrixXd> acts;
  };
  Eigen::MatrixXd forward_cached(const Eigen::Ref<const Eigen::MatrixXd>& x, Cache& cache) const;

  // Backpropagates dL/dH (D_h x N) through the cached forward pass and fills
  // per-layer gradients (already averaged with the caller's scaling).
  void backward(const Cache& cache, const Eigen::Ref<const Eigen::MatrixXd>& grad_hidden,
                std::vector<LayerGrads>& grads) const;

  // Gradient step followed by projection of every layer back inside the
  // spectral bound (warm-started power iteration).
  void apply_update(const std::vector<LayerGrads>& grads, double learning_rate);
  void project_spectral();

  double spectral_norm_estimate(int layer) const;

  const Eigen::MatrixXd& layer_weights(int layer) const { return weights_[layer]; }
  const Eigen::VectorXd& layer_bias(int layer) const { return biases_[layer]; }
  void set_layer(int layer, Eigen::MatrixXd w, Eigen::VectorXd b);

  std::vector<LayerGrads> zero_grads() const;

 private:
  Eigen::MatrixXd activate(Eigen::MatrixXd pre) const;
  Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& act) const;
  void check_input(Eigen::Index rows) const;

  EncoderConfig cfg_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
  mutable std::vector<PowerIterState> power_states_;
};

}  // namespace uqr
