#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hrmsdt/design.hpp"

namespace hrmsdt {

// Shape of the parameter space for one (blueprint, dataset) pair.
struct ModelDims {
  int N = 0;  // learners
  int P = 0;  // competency dimensions
  int C = 0;  // cases
  int G = 0;  // theta-groups
  int T = 0;  // Stage-1 threshold groups
  int J = 0;  // raters
  int K = 4;  // category boundaries

  static ModelDims from(const Blueprint& bp, int n_learners, int n_raters);
};

// Natural (constrained) parameter point. Invariants hold by construction
// when produced through ParamLayout::to_natural.
struct NaturalParams {
  Eigen::MatrixXd theta;    // N x P
  Eigen::MatrixXd gamma;    // C x P, column sums zero
  Eigen::MatrixXd b;        // T x K, rows strictly increasing
  Eigen::VectorXd d;        // J, positive
  Eigen::MatrixXd delta_d;  // J x G, row sums zero
  Eigen::MatrixXd c;        // J x K, rows strictly increasing
  Eigen::MatrixXd delta_c;  // J x G, row sums zero
  Eigen::MatrixXd omega;    // C x G

  static NaturalParams zeros(const ModelDims& dims);
};

// Location/scale pairs for every unconstrained parameter block. The
// gamma / delta entries apply to the free coordinates of the sum-to-zero
// parameterization; b/c entries to the first threshold and the
// log-increments; d to log(d).
struct PriorConfig {
  double theta_loc = 0.0, theta_scale = 1.0;
  double gamma_loc = 0.0, gamma_scale = 1.0;
  double b_first_loc = 0.0, b_first_scale = 2.0;
  double b_logincr_loc = 0.0, b_logincr_scale = 1.0;
  double log_d_loc = 1.0, log_d_scale = 0.5;
  double delta_d_loc = 0.0, delta_d_scale = 0.3;
  double c_first_loc = 0.0, c_first_scale = 2.0;
  double c_logincr_loc = 0.0, c_logincr_scale = 1.0;
  double delta_c_loc = 0.0, delta_c_scale = 0.3;
  double omega_loc = 0.0, omega_scale = 1.5;

  void validate() const;
};

PriorConfig load_prior_config(const std::filesystem::path& path);
void save_prior_config(const PriorConfig& prior, const std::filesystem::path& path);

// Flat-vector layout of the unconstrained space z and of the natural
// space, plus the bidirectional transform between them.
//
// Unconstrained blocks, in order:
//   theta      N*P      identity
//   gamma      (C-1)*P  free values; last case = -(sum of free)
//   b          T*K      first threshold + log-increments per row
//   d          J        log
//   delta_d    J*(G-1)  free values; last group = -(sum of free)
//   c          J*K      first criterion + log-increments per row
//   delta_c    J*(G-1)  free values
//   omega      C*G      identity
class ParamLayout {
 public:
  explicit ParamLayout(const ModelDims& dims);

  const ModelDims& dims() const { return dims_; }
  int unconstrained_dim() const { return z_dim_; }
  int natural_dim() const { return natural_dim_; }

  NaturalParams to_natural(Eigen::Ref<const Eigen::VectorXd> z) const;
  Eigen::VectorXd from_natural(const NaturalParams& p) const;

  // Natural point -> flat vector in the named-column order used by draw
  // files: theta, gamma, b, d, delta_d, c, delta_c, omega (row-major).
  Eigen::VectorXd flatten(const NaturalParams& p) const;
  NaturalParams unflatten(Eigen::Ref<const Eigen::VectorXd> flat) const;
  const std::vector<std::string>& natural_names() const { return natural_names_; }

  // Gradient pullback: given d(target)/d(natural) accumulated in `nat_grad`
  // (flat layout as in flatten()), add the chain-ruled d(target)/dz into
  // `z_grad`. `z` must be the point the naturals came from.
  void chain_gradient(Eigen::Ref<const Eigen::VectorXd> z, const NaturalParams& p,
                      Eigen::Ref<const Eigen::VectorXd> nat_grad,
                      Eigen::Ref<Eigen::VectorXd> z_grad) const;

  // Independent-normal log-prior over z. log_prior_grad also adds the
  // prior gradient into `grad`.
  double log_prior(Eigen::Ref<const Eigen::VectorXd> z, const PriorConfig& prior) const;
  double log_prior_grad(Eigen::Ref<const Eigen::VectorXd> z, const PriorConfig& prior,
                        Eigen::Ref<Eigen::VectorXd> grad) const;

  // Per-coordinate prior location/scale, used for truth generation and
  // initialization heuristics.
  void prior_moments(const PriorConfig& prior, Eigen::VectorXd& loc, Eigen::VectorXd& scale) const;

  // Offsets into z (unconstrained space)
  int z_theta() const { return 0; }
  int z_gamma() const { return z_gamma_; }
  int z_b() const { return z_b_; }
  int z_d() const { return z_d_; }
  int z_delta_d() const { return z_delta_d_; }
  int z_c() const { return z_c_; }
  int z_delta_c() const { return z_delta_c_; }
  int z_omega() const { return z_omega_; }

  // Offsets into the flat natural vector
  int nat_theta() const { return 0; }
  int nat_gamma() const { return nat_gamma_; }
  int nat_b() const { return nat_b_; }
  int nat_d() const { return nat_d_; }
  int nat_delta_d() const { return nat_delta_d_; }
  int nat_c() const { return nat_c_; }
  int nat_delta_c() const { return nat_delta_c_; }
  int nat_omega() const { return nat_omega_; }

  std::string z_coord_name(int index) const;

 private:
  ModelDims dims_;
  int z_dim_ = 0, natural_dim_ = 0;
  int z_gamma_ = 0, z_b_ = 0, z_d_ = 0, z_delta_d_ = 0, z_c_ = 0, z_delta_c_ = 0, z_omega_ = 0;
  int nat_gamma_ = 0, nat_b_ = 0, nat_d_ = 0, nat_delta_d_ = 0, nat_c_ = 0, nat_delta_c_ = 0,
      nat_omega_ = 0;
  std::vector<std::string> natural_names_;
};

}  // namespace hrmsdt
