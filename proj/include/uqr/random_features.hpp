#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

#include "uqr/errors.hpp"
#include "uqr/rng.hpp"

namespace uqr {

struct RffConfig {
  int feature_dim = 512;  // D_r; 4096 reproduces the reference setup
  double sigma_k = 1.0;   // kernel amplitude
  std::uint64_t seed = 0;

  static RffConfig reference_scale() { return RffConfig{4096, 1.0, 0}; }

  void validate() const {
    if (feature_dim < 1) throw InvalidInputError("rff: feature_dim must be >= 1");
    if (!(sigma_k > 0.0)) throw InvalidInputError("rff: sigma_k must be positive");
  }
};

// Frozen random projection realizing phi(h) = sqrt(2 sigma_k^2 / D_r) * cos(W h + b)
// with W_ij ~ N(0,1) and b_i ~ Unif[0, 2*pi). W and b never change after
// construction; the same seed reproduces them bit-exactly.
class RandomFeatureMap {
 public:
  RandomFeatureMap() = default;

  RandomFeatureMap(int feature_dim, int input_dim, double sigma_k, std::uint64_t seed)
      : sigma_k_(sigma_k), seed_(seed) {
    RffConfig{feature_dim, sigma_k, seed}.validate();
    if (input_dim < 1) throw InvalidInputError("rff: input_dim must be >= 1");
    Rng rng(derive_seed(seed, 0x52ff));
    weights_.resize(feature_dim, input_dim);
    for (Eigen::Index r = 0; r < weights_.rows(); ++r)
      for (Eigen::Index c = 0; c < weights_.cols(); ++c) weights_(r, c) = rng.normal();
    offsets_.resize(feature_dim);
    for (Eigen::Index i = 0; i < offsets_.size(); ++i)
      offsets_[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    amplitude_ = std::sqrt(2.0 * sigma_k * sigma_k / static_cast<double>(feature_dim));
  }

  RandomFeatureMap(const RffConfig& cfg, int input_dim)
      : RandomFeatureMap(cfg.feature_dim, input_dim, cfg.sigma_k, cfg.seed) {}

  int feature_dim() const { return static_cast<int>(weights_.rows()); }
  int input_dim() const { return static_cast<int>(weights_.cols()); }
  double sigma_k() const { return sigma_k_; }
  double amplitude() const { return amplitude_; }
  std::uint64_t seed() const { return seed_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::VectorXd& offsets() const { return offsets_; }

  Eigen::VectorXd transform(const Eigen::Ref<const Eigen::VectorXd>& h) const {
    check_dim(h.size());
    return amplitude_ * ((weights_ * h + offsets_).array().cos()).matrix();
  }

  // Columns of `h` are hidden states; returns D_r x N features.
  Eigen::MatrixXd transform_batch(const Eigen::Ref<const Eigen::MatrixXd>& h) const {
    check_dim(h.rows());
    Eigen::MatrixXd pre = weights_ * h;
    pre.colwise() += offsets_;
    return amplitude_ * pre.array().cos().matrix();
  }

  // Used for backprop through the cosine: d phi / d pre = -amplitude * sin(pre).
  Eigen::MatrixXd preactivations(const Eigen::Ref<const Eigen::MatrixXd>& h) const {
    check_dim(h.rows());
    Eigen::MatrixXd pre = weights_ * h;
    pre.colwise() += offsets_;
    return pre;
  }

  // Restores a map from checkpointed arrays.
  static RandomFeatureMap from_arrays(Eigen::MatrixXd w, Eigen::VectorXd b, double sigma_k,
                                      std::uint64_t seed) {
    RandomFeatureMap m;
    if (w.rows() != b.size()) throw SchemaError("rff: W rows and b length disagree");
    m.weights_ = std::move(w);
    m.offsets_ = std::move(b);
    m.sigma_k_ = sigma_k;
    m.seed_ = seed;
    m.amplitude_ = std::sqrt(2.0 * sigma_k * sigma_k / static_cast<double>(m.weights_.rows()));
    return m;
  }

 private:
  void check_dim(Eigen::Index n) const {
    if (n != weights_.cols())
      throw InvalidInputError("rff: hidden state length " + std::to_string(n) +
                              " does not match input_dim " + std::to_string(weights_.cols()));
  }

  Eigen::MatrixXd weights_;  // D_r x D_h
  Eigen::VectorXd offsets_;  // D_r
  double sigma_k_ = 1.0;
  double amplitude_ = 0.0;
  std::uint64_t seed_ = 0;
};

// The kernel the feature map approximates in expectation over (W, b).
template <typename DerivedA, typename DerivedB>
double gaussian_kernel(const Eigen::MatrixBase<DerivedA>& h1, const Eigen::MatrixBase<DerivedB>& h2,
                       double sigma_k) {
  return sigma_k * sigma_k * std::exp(-0.5 * (h1 - h2).squaredNorm());
}

}  // namespace uqr
