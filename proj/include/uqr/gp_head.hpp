#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "uqr/encoder.hpp"
#include "uqr/random_features.hpp"

namespace uqr {

struct GpHeadConfig {
  double tau = 1e-3;     // ridge coefficient of the Laplace precision
  double lambda = 10.0;  // uncertainty scale
  double learning_rate = 0.05;
  int epochs = 2;
  int batch_size = 64;
  std::uint64_t seed = 0;
  bool use_strength_scaling = true;
  enum class Optimizer { Sgd, Adam } optimizer = Optimizer::Sgd;
  double min_lr_ratio = 0.1;  // cosine decay floor, as a fraction of base LR

  void validate() const;
};

// Reward-difference prediction for one ordered pair. p = g / u holds exactly.
struct PairScore {
  double p = 0.0;  // uncertainty-scaled reward difference
  double u = 1.0;  // epistemic uncertainty, >= 1
  double g = 0.0;  // raw logit
};

struct PosteriorCovariance {
  Eigen::MatrixXd sigma;           // D_r x D_r, symmetric positive definite
  Eigen::MatrixXd precision_chol;  // lower-triangular L with L L^T = sigma^{-1}
  std::int64_t n_samples = 0;
};

// Training data: columns of `x` are ordered-pair encodings, `label` is the
// preference z in {0,1} for the pair as ordered, `strength` in {1,2,3}.
struct PairBatch {
  Eigen::MatrixXd x;
  Eigen::VectorXi label;
  Eigen::VectorXd strength;

  Eigen::Index size() const { return x.cols(); }
  void validate() const;
};

struct TrainReport {
  std::vector<double> epoch_mean_loss;
  double initial_loss = 0.0;  // full-data loss before the first step
  double final_loss = 0.0;    // full-data loss after the last step
  int steps = 0;
};

// Pairwise preference model with a random-feature GP output layer. Training
// fits beta and the encoder under the (optionally strength-scaled) swap
// classification loss; a separate frozen pass accumulates the Laplace
// posterior covariance used for uncertainty-scaled prediction.
class GpHead {
 public:
  GpHead() = default;
  GpHead(const EncoderConfig& encoder_cfg, const RffConfig& rff_cfg, GpHeadConfig cfg);

  TrainReport train(const PairBatch& data);
  void compute_covariance(const PairBatch& data);

  // Raw logit g = phi(h)^T beta; does not require the covariance.
  double logit(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd logits_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  // Full prediction p = g/u, u = sqrt(1 + lambda * phi^T Sigma phi).
  PairScore predict(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  std::vector<PairScore> predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  // Mean scaled-BT loss at the current parameters; gradient w.r.t. beta and
  // (optionally) the encoder. Exposed so tests can check against finite
  // differences.
  double loss(const PairBatch& data) const;
  double loss_and_grad(const PairBatch& data, Eigen::VectorXd& grad_beta,
                       std::vector<LayerGrads>* encoder_grads) const;

  bool has_covariance() const { return covariance_.has_value(); }
  const PosteriorCovariance& covariance() const;
  const Eigen::VectorXd& beta() const { return beta_; }
  const Encoder& encoder() const { return encoder_; }
  const RandomFeatureMap& feature_map() const { return feature_map_; }
  const GpHeadConfig& config() const { return cfg_; }
  int input_dim() const { return encoder_.input_dim(); }

  // Checkpoint restore hooks.
  void set_beta(Eigen::VectorXd beta);
  void set_covariance(PosteriorCovariance cov);
  static GpHead from_parts(Encoder encoder, RandomFeatureMap map, GpHeadConfig cfg);

 private:
  Eigen::MatrixXd features_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  double batch_loss_and_grads(const PairBatch& data, const std::vector<Eigen::Index>& idx,
                              Eigen::VectorXd& grad_beta, std::vector<LayerGrads>& enc_grads) const;

  Encoder encoder_;
  RandomFeatureMap feature_map_;
  Eigen::VectorXd beta_;
  std::optional<PosteriorCovariance> covariance_;
  GpHeadConfig cfg_;
};

}  // namespace uqr
