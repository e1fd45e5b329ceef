#include "hrmsdt/likelihood.hpp"

#include <cmath>
#include <limits>

#include "hrmsdt/util.hpp"

namespace hrmsdt {

namespace {

constexpr double kProbFloor = 1e-300;

inline void pmf_from_cuts(const double* x, const double* cut_incr_fac, double* pmf) {
  // x[m] = cuts[m] - loc, ascending; cut_incr_fac[m] = 1 - e^{-(cuts_m - cuts_{m-1})}
  SigmoidPair s0 = sigmoid_pair(x[0]);
  SigmoidPair s1 = sigmoid_pair(x[1]);
  SigmoidPair s2 = sigmoid_pair(x[2]);
  SigmoidPair s3 = sigmoid_pair(x[3]);
  pmf[0] = s0.sigma;
  pmf[1] = s1.sigma * s0.sigma_neg * cut_incr_fac[1];
  pmf[2] = s2.sigma * s1.sigma_neg * cut_incr_fac[2];
  pmf[3] = s3.sigma * s2.sigma_neg * cut_incr_fac[3];
  pmf[4] = s3.sigma_neg;
}

}  // namespace

std::array<double, 5> ordered_logit_pmf(double loc, std::span<const double> cuts) {
  for (std::size_t m = 1; m < 4; ++m)
    if (!(cuts[m] > cuts[m - 1]))
      throw validation_error("ordered_logit_pmf: cutpoints must be strictly increasing");
  double x[4], fac[4];
  fac[0] = 0.0;
  for (int m = 0; m < 4; ++m) {
    x[m] = cuts[m] - loc;
    if (m > 0) fac[m] = -std::expm1(-(cuts[m] - cuts[m - 1]));
  }
  std::array<double, 5> pmf;
  pmf_from_cuts(x, fac, pmf.data());
  return pmf;
}

std::array<double, 5> stage1_pmf(Eigen::Ref<const Eigen::VectorXd> theta_i,
                                 Eigen::Ref<const Eigen::VectorXd> loading,
                                 Eigen::Ref<const Eigen::VectorXd> gamma_q,
                                 Eigen::Ref<const Eigen::Vector4d> b_t) {
  double s = (theta_i + gamma_q).dot(loading);
  double cuts[4] = {b_t[0], b_t[1], b_t[2], b_t[3]};
  return ordered_logit_pmf(s, cuts);
}

std::array<double, 5> stage2_pmf(int eta, double d_eff,
                                 Eigen::Ref<const Eigen::Vector4d> c_eff) {
  if (eta < 1 || eta > 5) throw validation_error("stage2_pmf: eta must be in 1..5");
  if (!(d_eff > 0.0)) throw validation_error("stage2_pmf: d_eff must be > 0");
  double eta_norm = static_cast<double>(eta - 1) / 4.0;
  double cuts[4] = {c_eff[0], c_eff[1], c_eff[2], c_eff[3]};
  return ordered_logit_pmf(d_eff * eta_norm, cuts);
}

std::pair<double, Eigen::Vector4d> effective_rater_params(int rater, int group,
                                                          const NaturalParams& p) {
  double d_eff = p.d[rater] * std::exp(p.delta_d(rater, group));
  Eigen::Vector4d c_eff;
  for (int k = 0; k < 4; ++k) c_eff[k] = p.c(rater, k) + p.delta_c(rater, group);
  return {d_eff, c_eff};
}

std::array<double, 5> marginal_rating_pmf(int learner, int rater, int item,
                                          const NaturalParams& p, const Blueprint& bp) {
  const ItemSpec& spec = bp.items[static_cast<std::size_t>(item)];
  Eigen::Vector4d b_t = p.b.row(spec.threshold_group - 1);
  std::array<double, 5> pi =
      stage1_pmf(p.theta.row(learner), spec.loading, p.gamma.row(spec.case_index - 1), b_t);
  auto [d_eff, c_eff] = effective_rater_params(rater, spec.theta_group - 1, p);
  std::array<double, 5> out{};
  for (int k = 0; k < 5; ++k) {
    std::array<double, 5> rho = stage2_pmf(k + 1, d_eff, c_eff);
    for (int y = 0; y < 5; ++y) out[static_cast<std::size_t>(y)] += pi[static_cast<std::size_t>(k)] * rho[static_cast<std::size_t>(y)];
  }
  return out;
}

double applicability_loglik(const RatingsDataset& ds, const NaturalParams& p,
                            const Blueprint& bp) {
  double ll = 0.0;
  for (int q = 0; q < bp.n_cases(); ++q) {
    for (int g = 0; g < bp.n_groups(); ++g) {
      int n1 = ds.gate_applicable()(q, g);
      int n0 = ds.gate_inapplicable()(q, g);
      if (n1 == 0 && n0 == 0) continue;
      double w = p.omega(q, g);
      ll += n1 * log_sigmoid(w) + n0 * log_sigmoid(-w);
    }
  }
  return ll;
}

Posterior::Posterior(const Blueprint& bp, const RatingsDataset& ds, PriorConfig prior)
    : bp_(&bp),
      ds_(&ds),
      prior_(std::move(prior)),
      dims_(ModelDims::from(bp, std::max(ds.n_learners, 1), std::max(ds.n_raters, 1))),
      layout_(dims_) {
  prior_.validate();
  Eigen::VectorXd scale;
  layout_.prior_moments(prior_, prior_loc_, scale);
  prior_inv_scale_ = scale.cwiseInverse();
  constexpr double half_log_2pi = 0.9189385332046727;
  prior_log_norm_ = -scale.array().log().sum() -
                    half_log_2pi * static_cast<double>(layout_.unconstrained_dim());
  items_.reserve(bp.items.size());
  for (const ItemSpec& spec : bp.items) {
    ItemView view;
    view.case0 = spec.case_index - 1;
    view.group0 = spec.theta_group - 1;
    view.trow0 = spec.threshold_group - 1;
    for (int p = 0; p < bp.n_dims; ++p)
      if (spec.loading[p] != 0.0) view.loading_nz.emplace_back(p, spec.loading[p]);
    items_.push_back(std::move(view));
  }
}

namespace {

// Scratch buffers reused across evaluations; one instance per thread.
struct EvalWorkspace {
  Eigen::VectorXd nat_grad;
  // Stage-2 tables per (rater, group), transposed to [y][k] so the record
  // loop reads contiguously over latent levels k.
  std::vector<double> rho;      // J*G*25
  std::vector<double> dud;      // J*G*25, (d rho / d u) * eta_norm_k
  std::vector<double> dc;       // J*G*4*25
  std::vector<double> d_eff;    // J*G
  std::vector<double> exp_dd;   // J*G
  std::vector<double> b_fac;    // T*4, increment factors for stage-1 rows
  std::vector<double> c_fac;    // J*4

  void resize(int natural_dim, int J, int G, int T) {
    nat_grad.resize(natural_dim);
    rho.assign(static_cast<std::size_t>(J) * G * 25, 0.0);
    dud.assign(static_cast<std::size_t>(J) * G * 25, 0.0);
    dc.assign(static_cast<std::size_t>(J) * G * 100, 0.0);
    d_eff.assign(static_cast<std::size_t>(J) * G, 0.0);
    exp_dd.assign(static_cast<std::size_t>(J) * G, 0.0);
    b_fac.assign(static_cast<std::size_t>(T) * 4, 0.0);
    c_fac.assign(static_cast<std::size_t>(J) * 4, 0.0);
  }
};

thread_local EvalWorkspace tl_workspace;

}  // namespace

template <bool WithGrad>
double Posterior::evaluate(const double* z_ptr, double* grad_ptr) const {
  const ModelDims& m = dims_;
  const int zdim = layout_.unconstrained_dim();
  Eigen::Map<const Eigen::VectorXd> z(z_ptr, zdim);
  static double grad_sink = 0.0;
  Eigen::Map<Eigen::VectorXd> z_grad(WithGrad ? grad_ptr : &grad_sink, WithGrad ? zdim : 1);
  for (int i = 0; i < zdim; ++i)
    if (!std::isfinite(z[i])) {
      if constexpr (WithGrad) z_grad.setZero();
      return -std::numeric_limits<double>::infinity();
    }

  EvalWorkspace& ws = tl_workspace;
  ws.resize(layout_.natural_dim(), m.J, m.G, m.T);

  NaturalParams p = layout_.to_natural(z);

  double lp = prior_log_norm_;
  for (int i = 0; i < zdim; ++i) {
    double r = (z[i] - prior_loc_[i]) * prior_inv_scale_[i];
    lp -= 0.5 * r * r;
    if constexpr (WithGrad) z_grad[i] = -r * prior_inv_scale_[i];
  }
  if constexpr (WithGrad) ws.nat_grad.setZero();

  // Applicability gate, aggregated per (case, group) cell.
  const Eigen::MatrixXi& n1 = ds_->gate_applicable();
  const Eigen::MatrixXi& n0 = ds_->gate_inapplicable();
  for (int q = 0; q < m.C; ++q) {
    for (int g = 0; g < m.G; ++g) {
      int a1 = n1(q, g), a0 = n0(q, g);
      if (a1 == 0 && a0 == 0) continue;
      double w = p.omega(q, g);
      lp += a1 * log_sigmoid(w) + a0 * log_sigmoid(-w);
      if constexpr (WithGrad) {
        SigmoidPair sp = sigmoid_pair(w);
        ws.nat_grad[layout_.nat_omega() + q * m.G + g] += a1 * sp.sigma_neg - a0 * sp.sigma;
      }
    }
  }

  if (ds_->n_applicable() > 0) {
    // Threshold-row increment factors 1 - e^{-(b_k - b_{k-1})}.
    for (int t = 0; t < m.T; ++t) {
      ws.b_fac[static_cast<std::size_t>(t) * 4] = 0.0;
      for (int k = 1; k < 4; ++k)
        ws.b_fac[static_cast<std::size_t>(t) * 4 + k] = -std::expm1(-(p.b(t, k) - p.b(t, k - 1)));
    }
    for (int j = 0; j < m.J; ++j) {
      ws.c_fac[static_cast<std::size_t>(j) * 4] = 0.0;
      for (int k = 1; k < 4; ++k)
        ws.c_fac[static_cast<std::size_t>(j) * 4 + k] = -std::expm1(-(p.c(j, k) - p.c(j, k - 1)));
    }

    // Stage-2 tables per (rater, group).
    const double eta_norm[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (int j = 0; j < m.J; ++j) {
      for (int g = 0; g < m.G; ++g) {
        std::size_t jg = static_cast<std::size_t>(j) * m.G + g;
        double edd = std::exp(p.delta_d(j, g));
        double de = p.d[j] * edd;
        ws.exp_dd[jg] = edd;
        ws.d_eff[jg] = de;
        double shift = p.delta_c(j, g);
        double* rho = ws.rho.data() + jg * 25;
        double* dud = ws.dud.data() + jg * 25;
        double* dcm = ws.dc.data() + jg * 100;
        for (int k = 0; k < 5; ++k) {
          double u = de * eta_norm[k];
          double x[4];
          SigmoidPair sp[4];
          for (int mm = 0; mm < 4; ++mm) {
            x[mm] = p.c(j, mm) + shift - u;
            sp[mm] = sigmoid_pair(x[mm]);
          }
          double pmf[5];
          pmf[0] = sp[0].sigma;
          pmf[1] = sp[1].sigma * sp[0].sigma_neg * ws.c_fac[static_cast<std::size_t>(j) * 4 + 1];
          pmf[2] = sp[2].sigma * sp[1].sigma_neg * ws.c_fac[static_cast<std::size_t>(j) * 4 + 2];
          pmf[3] = sp[3].sigma * sp[2].sigma_neg * ws.c_fac[static_cast<std::size_t>(j) * 4 + 3];
          pmf[4] = sp[3].sigma_neg;
          for (int y = 0; y < 5; ++y) rho[y * 5 + k] = pmf[y];
          if constexpr (WithGrad) {
            double sd[4];
            for (int mm = 0; mm < 4; ++mm) sd[mm] = sp[mm].sigma * sp[mm].sigma_neg;
            // d pmf / d u, scaled by eta_norm so it chains straight to d_eff
            dud[0 * 5 + k] = -sd[0] * eta_norm[k];
            dud[1 * 5 + k] = (sd[0] - sd[1]) * eta_norm[k];
            dud[2 * 5 + k] = (sd[1] - sd[2]) * eta_norm[k];
            dud[3 * 5 + k] = (sd[2] - sd[3]) * eta_norm[k];
            dud[4 * 5 + k] = sd[3] * eta_norm[k];
            // d pmf / d c_m: boundary m feeds categories m and m+1
            for (int mm = 0; mm < 4; ++mm) {
              double* slot = dcm + mm * 25;
              slot[mm * 5 + k] = sd[mm];
              slot[(mm + 1) * 5 + k] = -sd[mm];
            }
          }
        }
      }
    }

    // Rating likelihood, grouped by (learner, item) transcript cell.
    for (const TranscriptCell& cell : ds_->cells()) {
      if (cell.scored.empty()) continue;
      const ItemView& item = items_[static_cast<std::size_t>(cell.item)];
      int i0 = cell.learner - 1;

      double s = 0.0;
      for (const auto& [pdim, w] : item.loading_nz)
        s += (p.theta(i0, pdim) + p.gamma(item.case0, pdim)) * w;

      double x[4];
      SigmoidPair sp[4];
      for (int k = 0; k < 4; ++k) {
        x[k] = p.b(item.trow0, k) - s;
        sp[k] = sigmoid_pair(x[k]);
      }
      const double* bfac = ws.b_fac.data() + static_cast<std::size_t>(item.trow0) * 4;
      double pi[5];
      pi[0] = sp[0].sigma;
      pi[1] = sp[1].sigma * sp[0].sigma_neg * bfac[1];
      pi[2] = sp[2].sigma * sp[1].sigma_neg * bfac[2];
      pi[3] = sp[3].sigma * sp[2].sigma_neg * bfac[3];
      pi[4] = sp[3].sigma_neg;

      double sd[4];
      double dpi[5];
      if constexpr (WithGrad) {
        for (int k = 0; k < 4; ++k) sd[k] = sp[k].sigma * sp[k].sigma_neg;
        dpi[0] = -sd[0];
        dpi[1] = sd[0] - sd[1];
        dpi[2] = sd[1] - sd[2];
        dpi[3] = sd[2] - sd[3];
        dpi[4] = sd[3];
      }

      double gs = 0.0;  // d cell-loglik / d s
      for (const auto& [rater, rating] : cell.scored) {
        int j = rater - 1;
        int y = rating - 1;
        std::size_t jg = static_cast<std::size_t>(j) * m.G + item.group0;
        const double* rho_y = ws.rho.data() + jg * 25 + static_cast<std::size_t>(y) * 5;

        double py = pi[0] * rho_y[0] + pi[1] * rho_y[1] + pi[2] * rho_y[2] + pi[3] * rho_y[3] +
                    pi[4] * rho_y[4];
        if (py < kProbFloor) py = kProbFloor;
        lp += std::log(py);

        if constexpr (WithGrad) {
          double inv = 1.0 / py;
          gs += inv * (dpi[0] * rho_y[0] + dpi[1] * rho_y[1] + dpi[2] * rho_y[2] +
                       dpi[3] * rho_y[3] + dpi[4] * rho_y[4]);

          double* gb = ws.nat_grad.data() + layout_.nat_b() + item.trow0 * 4;
          gb[0] += inv * sd[0] * (rho_y[0] - rho_y[1]);
          gb[1] += inv * sd[1] * (rho_y[1] - rho_y[2]);
          gb[2] += inv * sd[2] * (rho_y[2] - rho_y[3]);
          gb[3] += inv * sd[3] * (rho_y[3] - rho_y[4]);

          const double* dud_y = ws.dud.data() + jg * 25 + static_cast<std::size_t>(y) * 5;
          double g_deff = inv * (pi[0] * dud_y[0] + pi[1] * dud_y[1] + pi[2] * dud_y[2] +
                                 pi[3] * dud_y[3] + pi[4] * dud_y[4]);
          ws.nat_grad[layout_.nat_d() + j] += g_deff * ws.exp_dd[jg];
          ws.nat_grad[layout_.nat_delta_d() + j * m.G + item.group0] += g_deff * ws.d_eff[jg];

          const double* dc_base = ws.dc.data() + jg * 100;
          double g_shift = 0.0;
          for (int mm = 0; mm < 4; ++mm) {
            const double* dcm_y = dc_base + mm * 25 + static_cast<std::size_t>(y) * 5;
            double gc = inv * (pi[0] * dcm_y[0] + pi[1] * dcm_y[1] + pi[2] * dcm_y[2] +
                               pi[3] * dcm_y[3] + pi[4] * dcm_y[4]);
            ws.nat_grad[layout_.nat_c() + j * 4 + mm] += gc;
            g_shift += gc;
          }
          ws.nat_grad[layout_.nat_delta_c() + j * m.G + item.group0] += g_shift;
        }
      }

      if constexpr (WithGrad) {
        for (const auto& [pdim, w] : item.loading_nz) {
          double g = gs * w;
          ws.nat_grad[layout_.nat_theta() + i0 * m.P + pdim] += g;
          ws.nat_grad[layout_.nat_gamma() + item.case0 * m.P + pdim] += g;
        }
      }
    }
  }

  if constexpr (WithGrad) {
    layout_.chain_gradient(z, p, ws.nat_grad, z_grad);
  }
  return lp;
}

double Posterior::log_posterior(Eigen::Ref<const Eigen::VectorXd> z) const {
  return evaluate<false>(z.data(), nullptr);
}

Eigen::VectorXd Posterior::grad_log_posterior(Eigen::Ref<const Eigen::VectorXd> z) const {
  Eigen::VectorXd grad(layout_.unconstrained_dim());
  evaluate<true>(z.data(), grad.data());
  return grad;
}

double Posterior::logp(std::span<const double> z) const {
  return evaluate<false>(z.data(), nullptr);
}

double Posterior::logp_grad(std::span<const double> z, std::span<double> grad) const {
  return evaluate<true>(z.data(), grad.data());
}

std::string Posterior::diagnose(std::span<const double> z) const {
  Eigen::Map<const Eigen::VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
  for (int i = 0; i < zv.size(); ++i)
    if (!std::isfinite(zv[i])) return "non-finite input coordinate " + layout_.z_coord_name(i);
  NaturalParams p = layout_.to_natural(zv);
  double prior_lp = layout_.log_prior(zv, prior_);
  if (!std::isfinite(prior_lp)) return "non-finite log-prior";
  double gate = applicability_loglik(*ds_, p, *bp_);
  if (!std::isfinite(gate)) return "non-finite applicability term";
  return "non-finite rating likelihood";
}

template double Posterior::evaluate<true>(const double*, double*) const;
template double Posterior::evaluate<false>(const double*, double*) const;

}  // namespace hrmsdt
