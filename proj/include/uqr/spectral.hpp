#pragma once

#include <Eigen/Core>
#include <algorithm>

#include "uqr/errors.hpp"
#include "uqr/rng.hpp"

namespace uqr {

// Singular-vector estimate carried across calls so per-step renormalization
// during training only needs a few iterations (warm start).
struct PowerIterState {
  Eigen::VectorXd left;   // size rows
  Eigen::VectorXd right;  // size cols
  bool initialized = false;
};

template <typename Derived>
void init_power_iter_state(const Eigen::MatrixBase<Derived>& w, PowerIterState& state) {
  Rng rng(derive_seed(0x5eedULL, static_cast<std::uint64_t>(w.rows()) << 32 | static_cast<std::uint64_t>(w.cols())));
  state.right.resize(w.cols());
  for (Eigen::Index i = 0; i < state.right.size(); ++i) state.right[i] = rng.normal();
  state.right.normalize();
  state.left.resize(w.rows());
  state.left.setZero();
  state.initialized = true;
}

// Power-iteration estimate of the top singular value. The estimate is a
// lower bound that converges from below.
template <typename Derived>
double estimate_spectral_norm(const Eigen::MatrixBase<Derived>& w, PowerIterState& state,
                              int iterations) {
  if (iterations < 1) throw InvalidInputError("spectral norm: iterations must be >= 1");
  if (!state.initialized || state.right.size() != w.cols() || state.left.size() != w.rows()) {
    init_power_iter_state(w, state);
  }
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    state.left.noalias() = w * state.right;
    const double ln = state.left.norm();
    if (ln == 0.0) return 0.0;
    state.left /= ln;
    state.right.noalias() = w.transpose() * state.left;
    sigma = state.right.norm();
    if (sigma == 0.0) return 0.0;
    state.right /= sigma;
  }
  return sigma;
}

// Rescales so the estimated top singular value does not exceed `bound`.
// Matrices already inside the bound are returned unchanged.
template <typename Derived>
Eigen::MatrixXd spectral_normalize(const Eigen::MatrixBase<Derived>& w, double bound,
                                   int iterations) {
  if (!w.allFinite()) throw InvalidInputError("spectral_normalize: matrix has non-finite entries");
  if (bound <= 0.0) throw InvalidInputError("spectral_normalize: bound must be positive");
  PowerIterState state;
  const double sigma = estimate_spectral_norm(w, state, iterations);
  const double scale = sigma > bound ? bound / sigma : 1.0;
  return w * scale;
}

// In-place variant used after every training step; keeps the warm-started
// singular vectors in `state`.
inline void clip_spectral_norm(Eigen::MatrixXd& w, double bound, PowerIterState& state,
                               int iterations) {
  const double sigma = estimate_spectral_norm(w, state, iterations);
  if (sigma > bound) w *= bound / sigma;
}

}  // namespace uqr
