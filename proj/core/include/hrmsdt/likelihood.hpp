#pragma once

#include <array>
#include <cmath>
#include <span>

#include <Eigen/Dense>

#include "hrmsdt/design.hpp"
#include "hrmsdt/params.hpp"
#include "hrmsdt/target.hpp"

namespace hrmsdt {

inline double sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

// sigma = σ(x), sigma_neg = σ(-x), computed from one exp without overflow.
struct SigmoidPair {
  double sigma;
  double sigma_neg;
};

inline SigmoidPair sigmoid_pair(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    double inv = 1.0 / (1.0 + e);
    return {inv, e * inv};
  }
  double e = std::exp(x);
  double inv = 1.0 / (1.0 + e);
  return {e * inv, inv};
}

// Ordered-logit pmf over 5 categories: Pr(cat <= k) = σ(cuts[k] - loc).
// Interior categories use the product form
//   σ(x_k) σ(-x_{k-1}) (1 - e^{-(cuts_k - cuts_{k-1})})
// which avoids cancellation of nearly-equal CDF values in the tails.
std::array<double, 5> ordered_logit_pmf(double loc, std::span<const double> cuts);

// Stage 1: pmf of the latent performance state eta given the item-level
// linear predictor s = (theta_i + gamma_q)' a_l and thresholds b_t.
std::array<double, 5> stage1_pmf(Eigen::Ref<const Eigen::VectorXd> theta_i,
                                 Eigen::Ref<const Eigen::VectorXd> loading,
                                 Eigen::Ref<const Eigen::VectorXd> gamma_q,
                                 Eigen::Ref<const Eigen::Vector4d> b_t);

// Stage 2: pmf of the observed rating given eta in 1..5, rater detection
// d_eff > 0 and ascending criteria c_eff. Location is d_eff * (eta-1)/4.
std::array<double, 5> stage2_pmf(int eta, double d_eff,
                                 Eigen::Ref<const Eigen::Vector4d> c_eff);

// Group-adjusted rater parameters: d_j exp(delta_d_jg), c_j + delta_c_jg.
// Indices are 0-based.
std::pair<double, Eigen::Vector4d> effective_rater_params(int rater, int group,
                                                          const NaturalParams& p);

// Mixture over the five latent levels. Indices are 0-based.
std::array<double, 5> marginal_rating_pmf(int learner, int rater, int item,
                                          const NaturalParams& p, const Blueprint& bp);

// Bernoulli gate log-likelihood: sum over records of
// A log σ(ω_{q,g}) + (1-A) log(1-σ(ω_{q,g})).
double applicability_loglik(const RatingsDataset& ds, const NaturalParams& p,
                            const Blueprint& bp);

// Marginalized HRM-SDT log-posterior over the unconstrained space.
// Pure function of (z, dataset, blueprint, prior); thread-safe.
class Posterior : public Target {
 public:
  Posterior(const Blueprint& bp, const RatingsDataset& ds, PriorConfig prior);

  int dim() const override { return layout_.unconstrained_dim(); }
  double logp_grad(std::span<const double> z, std::span<double> grad) const override;
  double logp(std::span<const double> z) const override;
  std::string coord_name(int index) const override { return layout_.z_coord_name(index); }
  std::string diagnose(std::span<const double> z) const override;

  double log_posterior(Eigen::Ref<const Eigen::VectorXd> z) const;
  Eigen::VectorXd grad_log_posterior(Eigen::Ref<const Eigen::VectorXd> z) const;

  const ParamLayout& layout() const { return layout_; }
  const PriorConfig& prior() const { return prior_; }
  const Blueprint& blueprint() const { return *bp_; }
  const RatingsDataset& dataset() const { return *ds_; }

 private:
  template <bool WithGrad>
  double evaluate(const double* z, double* grad) const;

  struct ItemView {
    int case0 = 0;   // 0-based case
    int group0 = 0;  // 0-based theta-group
    int trow0 = 0;   // 0-based threshold row
    // (dimension, weight) pairs for nonzero loading entries
    std::vector<std::pair<int, double>> loading_nz;
  };

  const Blueprint* bp_;
  const RatingsDataset* ds_;
  PriorConfig prior_;
  ModelDims dims_;
  ParamLayout layout_;
  std::vector<ItemView> items_;
  Eigen::VectorXd prior_loc_;
  Eigen::VectorXd prior_inv_scale_;
  double prior_log_norm_ = 0.0;
};

}  // namespace hrmsdt
