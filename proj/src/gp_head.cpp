#include "uqr/gp_head.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "uqr/errors.hpp"
#include "uqr/rng.hpp"

namespace uqr {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace

void GpHeadConfig::validate() const {
  if (!(tau > 0.0)) throw InvalidInputError("gp head: tau must be positive");
  if (lambda < 0.0) throw InvalidInputError("gp head: lambda must be nonnegative");
  if (!(learning_rate > 0.0)) throw InvalidInputError("gp head: learning_rate must be positive");
  if (epochs < 1) throw InvalidInputError("gp head: epochs must be >= 1");
  if (batch_size < 1) throw InvalidInputError("gp head: batch_size must be >= 1");
}

void PairBatch::validate() const {
  if (x.cols() != label.size() || x.cols() != strength.size())
    throw InvalidInputError("pair batch: column/label/strength counts disagree");
  for (Eigen::Index i = 0; i < label.size(); ++i) {
    if (label[i] != 0 && label[i] != 1)
      throw InvalidInputError("pair batch: label must be 0 or 1");
    if (!(strength[i] >= 1.0))
      throw InvalidInputError("pair batch: strength must be >= 1");
  }
}

GpHead::GpHead(const EncoderConfig& encoder_cfg, const RffConfig& rff_cfg, GpHeadConfig cfg)
    : encoder_(encoder_cfg),
      feature_map_(rff_cfg.feature_dim, encoder_cfg.output_dim, rff_cfg.sigma_k,
                   rff_cfg.seed != 0 ? rff_cfg.seed : derive_seed(cfg.seed, 0xf00d)),
      beta_(Eigen::VectorXd::Zero(rff_cfg.feature_dim)),
      cfg_(cfg) {
  cfg_.validate();
}

GpHead GpHead::from_parts(Encoder encoder, RandomFeatureMap map, GpHeadConfig cfg) {
  GpHead head;
  head.encoder_ = std::move(encoder);
  head.feature_map_ = std::move(map);
  head.beta_ = Eigen::VectorXd::Zero(head.feature_map_.feature_dim());
  head.cfg_ = cfg;
  return head;
}

void GpHead::set_beta(Eigen::VectorXd beta) {
  if (beta.size() != feature_map_.feature_dim())
    throw SchemaError("gp head: beta length does not match feature_dim");
  beta_ = std::move(beta);
}

void GpHead::set_covariance(PosteriorCovariance cov) {
  if (cov.sigma.rows() != feature_map_.feature_dim())
    throw SchemaError("gp head: covariance size does not match feature_dim");
  covariance_ = std::move(cov);
}

const PosteriorCovariance& GpHead::covariance() const {
  if (!covariance_) throw StateError("gp head: covariance pass has not been run");
  return *covariance_;
}

Eigen::MatrixXd GpHead::features_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  return feature_map_.transform_batch(encoder_.forward_batch(x));
}

double GpHead::logit(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return feature_map_.transform(encoder_.forward(x)).dot(beta_);
}

Eigen::VectorXd GpHead::logits_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  return features_batch(x).transpose() * beta_;
}

PairScore GpHead::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const auto& cov = covariance();
  const Eigen::VectorXd phi = feature_map_.transform(encoder_.forward(x));
  PairScore s;
  s.g = phi.dot(beta_);
  const double variance = std::max(phi.dot(cov.sigma * phi), 0.0);
  s.u = std::sqrt(1.0 + cfg_.lambda * variance);
  s.p = s.g / s.u;
  return s;
}

std::vector<PairScore> GpHead::predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  const auto& cov = covariance();
  const Eigen::MatrixXd phi = features_batch(x);
  const Eigen::VectorXd g = phi.transpose() * beta_;
  const Eigen::MatrixXd sigma_phi = cov.sigma * phi;
  std::vector<PairScore> out(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    PairScore& s = out[static_cast<std::size_t>(i)];
    s.g = g[i];
    const double variance = std::max(phi.col(i).dot(sigma_phi.col(i)), 0.0);
    s.u = std::sqrt(1.0 + cfg_.lambda * variance);
    s.p = s.g / s.u;
  }
  return out;
}

double GpHead::loss(const PairBatch& data) const {
  data.validate();
  if (data.size() == 0) throw InvalidInputError("gp head: empty dataset");
  const Eigen::VectorXd g = logits_batch(data.x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double t = data.label[i] == 1 ? 1.0 : -1.0;
    const double s = cfg_.use_strength_scaling ? data.strength[i] : 1.0;
    total += s * stable_softplus(-t * g[i]);
  }
  return total / static_cast<double>(data.size());
}

double GpHead::loss_and_grad(const PairBatch& data, Eigen::VectorXd& grad_beta,
                             std::vector<LayerGrads>* encoder_grads) const {
  data.validate();
  if (data.size() == 0) throw InvalidInputError("gp head: empty dataset");

  Encoder::Cache cache;
  const Eigen::MatrixXd hidden = encoder_.forward_cached(data.x, cache);
  const Eigen::MatrixXd pre = feature_map_.preactivations(hidden);
  const Eigen::MatrixXd phi = feature_map_.amplitude() * pre.array().cos().matrix();
  const Eigen::VectorXd g = phi.transpose() * beta_;

  const double inv_n = 1.0 / static_cast<double>(data.size());
  Eigen::VectorXd dloss_dg(data.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double t = data.label[i] == 1 ? 1.0 : -1.0;
    const double s = cfg_.use_strength_scaling ? data.strength[i] : 1.0;
    total += s * stable_softplus(-t * g[i]);
    dloss_dg[i] = -s * t * stable_sigmoid(-t * g[i]) * inv_n;
  }

  grad_beta.noalias() = phi * dloss_dg;

  if (encoder_grads != nullptr) {
    // d g / d h = -amplitude * W^T (sin(pre) .* beta); chain with dloss/dg.
    Eigen::MatrixXd weighted = pre.array().sin().matrix();
    weighted.array().colwise() *= beta_.array();
    weighted.array().rowwise() *= dloss_dg.transpose().array();
    const Eigen::MatrixXd grad_hidden =
        -feature_map_.amplitude() * (feature_map_.weights().transpose() * weighted);
    *encoder_grads = encoder_.zero_grads();
    encoder_.backward(cache, grad_hidden, *encoder_grads);
  }

  return total * inv_n;
}

double GpHead::batch_loss_and_grads(const PairBatch& data, const std::vector<Eigen::Index>& idx,
                                    Eigen::VectorXd& grad_beta,
                                    std::vector<LayerGrads>& enc_grads) const {
  PairBatch sub;
  sub.x.resize(data.x.rows(), static_cast<Eigen::Index>(idx.size()));
  sub.label.resize(static_cast<Eigen::Index>(idx.size()));
  sub.strength.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    sub.x.col(static_cast<Eigen::Index>(k)) = data.x.col(idx[k]);
    sub.label[static_cast<Eigen::Index>(k)] = data.label[idx[k]];
    sub.strength[static_cast<Eigen::Index>(k)] = data.strength[idx[k]];
  }
  return loss_and_grad(sub, grad_beta, &enc_grads);
}

TrainReport GpHead::train(const PairBatch& data) {
  data.validate();
  if (data.size() == 0) throw InvalidInputError("gp head: cannot train on an empty dataset");
  if (data.x.rows() != encoder_.input_dim())
    throw InvalidInputError("gp head: pair encoding length does not match encoder input_dim");

  TrainReport report;
  report.initial_loss = loss(data);

  const Eigen::Index n = data.size();
  const int steps_per_epoch =
      static_cast<int>((n + cfg_.batch_size - 1) / cfg_.batch_size);
  const int total_steps = steps_per_epoch * cfg_.epochs;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng shuffle_rng(derive_seed(cfg_.seed, 0x7a41));

  // Adam state, allocated lazily.
  Eigen::VectorXd m_beta, v_beta;
  std::vector<LayerGrads> m_enc, v_enc;
  const double adam_b1 = 0.9, adam_b2 = 0.999, adam_eps = 1e-8;
  std::int64_t adam_t = 0;

  Eigen::VectorXd grad_beta;
  std::vector<LayerGrads> enc_grads;
  int step = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (int b = 0; b < steps_per_epoch; ++b, ++step) {
      const std::size_t lo = static_cast<std::size_t>(b) * cfg_.batch_size;
      const std::size_t hi = std::min(lo + cfg_.batch_size, order.size());
      const std::vector<Eigen::Index> idx(order.begin() + lo, order.begin() + hi);

      const double batch_loss = batch_loss_and_grads(data, idx, grad_beta, enc_grads);
      if (!std::isfinite(batch_loss))
        throw DivergenceError("gp head: non-finite loss at epoch " + std::to_string(epoch) +
                              " batch " + std::to_string(b) + " (loss=" +
                              std::to_string(batch_loss) + ")");
      epoch_loss += batch_loss * static_cast<double>(idx.size());

      // Cosine decay from base LR down to min_lr_ratio * base.
      const double progress = total_steps > 1 ? static_cast<double>(step) / (total_steps - 1) : 1.0;
      const double floor = cfg_.min_lr_ratio * cfg_.learning_rate;
      const double lr =
          floor + 0.5 * (cfg_.learning_rate - floor) * (1.0 + std::cos(std::numbers::pi * progress));

      if (cfg_.optimizer == GpHeadConfig::Optimizer::Adam) {
        if (m_beta.size() == 0) {
          m_beta = Eigen::VectorXd::Zero(beta_.size());
          v_beta = Eigen::VectorXd::Zero(beta_.size());
          m_enc = encoder_.zero_grads();
          v_enc = encoder_.zero_grads();
        }
        ++adam_t;
        const double bc1 = 1.0 - std::pow(adam_b1, static_cast<double>(adam_t));
        const double bc2 = 1.0 - std::pow(adam_b2, static_cast<double>(adam_t));
        m_beta = adam_b1 * m_beta + (1.0 - adam_b1) * grad_beta;
        v_beta = adam_b2 * v_beta + (1.0 - adam_b2) * grad_beta.cwiseProduct(grad_beta);
        beta_.array() -=
            lr * (m_beta.array() / bc1) / ((v_beta.array() / bc2).sqrt() + adam_eps);
        std::vector<LayerGrads> adam_step = encoder_.zero_grads();
        for (std::size_t l = 0; l < adam_step.size(); ++l) {
          m_enc[l].w = adam_b1 * m_enc[l].w + (1.0 - adam_b1) * enc_grads[l].w;
          v_enc[l].w = adam_b2 * v_enc[l].w + (1.0 - adam_b2) * enc_grads[l].w.cwiseProduct(enc_grads[l].w);
          m_enc[l].b = adam_b1 * m_enc[l].b + (1.0 - adam_b1) * enc_grads[l].b;
          v_enc[l].b = adam_b2 * v_enc[l].b + (1.0 - adam_b2) * enc_grads[l].b.cwiseProduct(enc_grads[l].b);
          adam_step[l].w = (m_enc[l].w.array() / bc1 / ((v_enc[l].w.array() / bc2).sqrt() + adam_eps)).matrix();
          adam_step[l].b = (m_enc[l].b.array() / bc1 / ((v_enc[l].b.array() / bc2).sqrt() + adam_eps)).matrix();
        }
        encoder_.apply_update(adam_step, lr);
      } else {
        beta_.noalias() -= lr * grad_beta;
        encoder_.apply_update(enc_grads, lr);
      }
    }
    report.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(n));
  }

  report.steps = step;
  report.final_loss = loss(data);
  covariance_.reset();  // parameters moved; any previous covariance is stale
  return report;
}

void GpHead::compute_covariance(const PairBatch& data) {
  data.validate();
  const Eigen::Index d = feature_map_.feature_dim();

  Eigen::MatrixXd precision = cfg_.tau * Eigen::MatrixXd::Identity(d, d);
  if (data.size() > 0) {
    const Eigen::MatrixXd phi = features_batch(data.x);
    const Eigen::VectorXd g = phi.transpose() * beta_;
    // Streaming accumulation in dataset order; weights clamped away from zero
    // so extreme logits keep the precision update finite.
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const double sg = stable_sigmoid(g[i]);
      const double w = std::max(sg * (1.0 - sg), 1e-12);
      precision.selfadjointView<Eigen::Lower>().rankUpdate(phi.col(i), w);
    }
    precision.triangularView<Eigen::StrictlyUpper>() =
        precision.transpose().triangularView<Eigen::StrictlyUpper>();
  }

  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success)
    throw SingularityError("gp head: covariance precision is not positive definite");

  PosteriorCovariance cov;
  cov.precision_chol = llt.matrixL();
  cov.sigma = llt.solve(Eigen::MatrixXd::Identity(d, d));
  cov.sigma = 0.5 * (cov.sigma + cov.sigma.transpose()).eval();
  cov.n_samples = data.size();
  covariance_ = std::move(cov);
}

}  // namespace uqr
