#include "hrmsdt/params.hpp"

#include <cmath>

#include <json.hpp>

#include "hrmsdt/util.hpp"

namespace hrmsdt {

using nlohmann::json;

ModelDims ModelDims::from(const Blueprint& bp, int n_learners, int n_raters) {
  ModelDims dims;
  dims.N = n_learners;
  dims.P = bp.n_dims;
  dims.C = bp.n_cases();
  dims.G = bp.n_groups();
  dims.T = bp.n_threshold_groups();
  dims.J = n_raters;
  dims.K = bp.n_boundaries();
  if (dims.N < 1 || dims.J < 1) throw validation_error("model dims: N and J must be >= 1");
  return dims;
}

NaturalParams NaturalParams::zeros(const ModelDims& dims) {
  NaturalParams p;
  p.theta = Eigen::MatrixXd::Zero(dims.N, dims.P);
  p.gamma = Eigen::MatrixXd::Zero(dims.C, dims.P);
  p.b = Eigen::MatrixXd::Zero(dims.T, dims.K);
  p.d = Eigen::VectorXd::Zero(dims.J);
  p.delta_d = Eigen::MatrixXd::Zero(dims.J, dims.G);
  p.c = Eigen::MatrixXd::Zero(dims.J, dims.K);
  p.delta_c = Eigen::MatrixXd::Zero(dims.J, dims.G);
  p.omega = Eigen::MatrixXd::Zero(dims.C, dims.G);
  return p;
}

void PriorConfig::validate() const {
  const double scales[] = {theta_scale,   gamma_scale,   b_first_scale, b_logincr_scale,
                           log_d_scale,   delta_d_scale, c_first_scale, c_logincr_scale,
                           delta_c_scale, omega_scale};
  for (double s : scales)
    if (!(s > 0.0)) throw validation_error("prior config: all scales must be > 0");
}

namespace {

void get_pair(const json& j, const std::string& key, double& loc, double& scale) {
  if (!j.contains(key)) return;
  const json& jk = j.at(key);
  loc = jk.value("loc", loc);
  scale = jk.value("scale", scale);
}

json pair_json(double loc, double scale) { return json{{"loc", loc}, {"scale", scale}}; }

}  // namespace

PriorConfig load_prior_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw validation_error("prior config parse failure in " + path.string() + ": " + e.what());
  }
  PriorConfig prior;
  get_pair(j, "theta", prior.theta_loc, prior.theta_scale);
  get_pair(j, "gamma", prior.gamma_loc, prior.gamma_scale);
  get_pair(j, "b_first", prior.b_first_loc, prior.b_first_scale);
  get_pair(j, "b_logincr", prior.b_logincr_loc, prior.b_logincr_scale);
  get_pair(j, "log_d", prior.log_d_loc, prior.log_d_scale);
  get_pair(j, "delta_d", prior.delta_d_loc, prior.delta_d_scale);
  get_pair(j, "c_first", prior.c_first_loc, prior.c_first_scale);
  get_pair(j, "c_logincr", prior.c_logincr_loc, prior.c_logincr_scale);
  get_pair(j, "delta_c", prior.delta_c_loc, prior.delta_c_scale);
  get_pair(j, "omega", prior.omega_loc, prior.omega_scale);
  prior.validate();
  return prior;
}

void save_prior_config(const PriorConfig& p, const std::filesystem::path& path) {
  json j;
  j["theta"] = pair_json(p.theta_loc, p.theta_scale);
  j["gamma"] = pair_json(p.gamma_loc, p.gamma_scale);
  j["b_first"] = pair_json(p.b_first_loc, p.b_first_scale);
  j["b_logincr"] = pair_json(p.b_logincr_loc, p.b_logincr_scale);
  j["log_d"] = pair_json(p.log_d_loc, p.log_d_scale);
  j["delta_d"] = pair_json(p.delta_d_loc, p.delta_d_scale);
  j["c_first"] = pair_json(p.c_first_loc, p.c_first_scale);
  j["c_logincr"] = pair_json(p.c_logincr_loc, p.c_logincr_scale);
  j["delta_c"] = pair_json(p.delta_c_loc, p.delta_c_scale);
  j["omega"] = pair_json(p.omega_loc, p.omega_scale);
  write_text_file(path, j.dump(2) + "\n");
}

ParamLayout::ParamLayout(const ModelDims& dims) : dims_(dims) {
  const int N = dims.N, P = dims.P, C = dims.C, G = dims.G, T = dims.T, J = dims.J, K = dims.K;
  if (C < 1 || G < 1 || T < 1 || K != 4)
    throw validation_error("param layout: unsupported model dims");

  z_gamma_ = N * P;
  z_b_ = z_gamma_ + (C - 1) * P;
  z_d_ = z_b_ + T * K;
  z_delta_d_ = z_d_ + J;
  z_c_ = z_delta_d_ + J * (G - 1);
  z_delta_c_ = z_c_ + J * K;
  z_omega_ = z_delta_c_ + J * (G - 1);
  z_dim_ = z_omega_ + C * G;

  nat_gamma_ = N * P;
  nat_b_ = nat_gamma_ + C * P;
  nat_d_ = nat_b_ + T * K;
  nat_delta_d_ = nat_d_ + J;
  nat_c_ = nat_delta_d_ + J * G;
  nat_delta_c_ = nat_c_ + J * K;
  nat_omega_ = nat_delta_c_ + J * G;
  natural_dim_ = nat_omega_ + C * G;

  natural_names_.reserve(static_cast<std::size_t>(natural_dim_));
  auto name2 = [this](const char* base, int i, int j) {
    natural_names_.push_back(std::string(base) + "[" + std::to_string(i) + "," +
                             std::to_string(j) + "]");
  };
  for (int i = 1; i <= N; ++i)
    for (int p = 1; p <= P; ++p) name2("theta", i, p);
  for (int q = 1; q <= C; ++q)
    for (int p = 1; p <= P; ++p) name2("gamma", q, p);
  for (int t = 1; t <= T; ++t)
    for (int k = 1; k <= K; ++k) name2("b", t, k);
  for (int j = 1; j <= J; ++j) natural_names_.push_back("d[" + std::to_string(j) + "]");
  for (int j = 1; j <= J; ++j)
    for (int g = 1; g <= G; ++g) name2("delta_d", j, g);
  for (int j = 1; j <= J; ++j)
    for (int k = 1; k <= K; ++k) name2("c", j, k);
  for (int j = 1; j <= J; ++j)
    for (int g = 1; g <= G; ++g) name2("delta_c", j, g);
  for (int q = 1; q <= C; ++q)
    for (int g = 1; g <= G; ++g) name2("omega", q, g);
}

namespace {

// Ordered row from first value + log-increments.
inline void ordered_from_z(const double* z, int K, double* out) {
  out[0] = z[0];
  for (int k = 1; k < K; ++k) out[k] = out[k - 1] + std::exp(z[k]);
}

inline void ordered_to_z(const double* row, int K, double* z) {
  z[0] = row[0];
  for (int k = 1; k < K; ++k) z[k] = std::log(row[k] - row[k - 1]);
}

}  // namespace

NaturalParams ParamLayout::to_natural(Eigen::Ref<const Eigen::VectorXd> z) const {
  const ModelDims& m = dims_;
  NaturalParams p = NaturalParams::zeros(m);

  for (int i = 0; i < m.N; ++i)
    for (int pp = 0; pp < m.P; ++pp) p.theta(i, pp) = z[z_theta() + i * m.P + pp];

  for (int pp = 0; pp < m.P; ++pp) {
    double sum = 0.0;
    for (int q = 0; q < m.C - 1; ++q) {
      double v = z[z_gamma_ + q * m.P + pp];
      p.gamma(q, pp) = v;
      sum += v;
    }
    p.gamma(m.C - 1, pp) = -sum;
  }

  for (int t = 0; t < m.T; ++t) {
    double row[4];
    ordered_from_z(z.data() + z_b_ + t * m.K, m.K, row);
    for (int k = 0; k < m.K; ++k) p.b(t, k) = row[k];
  }

  for (int j = 0; j < m.J; ++j) p.d[j] = std::exp(z[z_d_ + j]);

  for (int j = 0; j < m.J; ++j) {
    double sum = 0.0;
    for (int g = 0; g < m.G - 1; ++g) {
      double v = z[z_delta_d_ + j * (m.G - 1) + g];
      p.delta_d(j, g) = v;
      sum += v;
    }
    p.delta_d(j, m.G - 1) = -sum;
  }

  for (int j = 0; j < m.J; ++j) {
    double row[4];
    ordered_from_z(z.data() + z_c_ + j * m.K, m.K, row);
    for (int k = 0; k < m.K; ++k) p.c(j, k) = row[k];
  }

  for (int j = 0; j < m.J; ++j) {
    double sum = 0.0;
    for (int g = 0; g < m.G - 1; ++g) {
      double v = z[z_delta_c_ + j * (m.G - 1) + g];
      p.delta_c(j, g) = v;
      sum += v;
    }
    p.delta_c(j, m.G - 1) = -sum;
  }

  for (int q = 0; q < m.C; ++q)
    for (int g = 0; g < m.G; ++g) p.omega(q, g) = z[z_omega_ + q * m.G + g];

  return p;
}

Eigen::VectorXd ParamLayout::from_natural(const NaturalParams& p) const {
  const ModelDims& m = dims_;
  Eigen::VectorXd z(z_dim_);

  for (int i = 0; i < m.N; ++i)
    for (int pp = 0; pp < m.P; ++pp) z[z_theta() + i * m.P + pp] = p.theta(i, pp);
  for (int q = 0; q < m.C - 1; ++q)
    for (int pp = 0; pp < m.P; ++pp) z[z_gamma_ + q * m.P + pp] = p.gamma(q, pp);
  for (int t = 0; t < m.T; ++t) {
    double row[4];
    for (int k = 0; k < m.K; ++k) row[k] = p.b(t, k);
    ordered_to_z(row, m.K, z.data() + z_b_ + t * m.K);
  }
  for (int j = 0; j < m.J; ++j) z[z_d_ + j] = std::log(p.d[j]);
  for (int j = 0; j < m.J; ++j)
    for (int g = 0; g < m.G - 1; ++g) z[z_delta_d_ + j * (m.G - 1) + g] = p.delta_d(j, g);
  for (int j = 0; j < m.J; ++j) {
    double row[4];
    for (int k = 0; k < m.K; ++k) row[k] = p.c(j, k);
    ordered_to_z(row, m.K, z.data() + z_c_ + j * m.K);
  }
  for (int j = 0; j < m.J; ++j)
    for (int g = 0; g < m.G - 1; ++g) z[z_delta_c_ + j * (m.G - 1) + g] = p.delta_c(j, g);
  for (int q = 0; q < m.C; ++q)
    for (int g = 0; g < m.G; ++g) z[z_omega_ + q * m.G + g] = p.omega(q, g);

  return z;
}

Eigen::VectorXd ParamLayout::flatten(const NaturalParams& p) const {
  const ModelDims& m = dims_;
  Eigen::VectorXd flat(natural_dim_);
  int at = 0;
  for (int i = 0; i < m.N; ++i)
    for (int pp = 0; pp < m.P; ++pp) flat[at++] = p.theta(i, pp);
  for (int q = 0; q < m.C; ++q)
    for (int pp = 0; pp < m.P; ++pp) flat[at++] = p.gamma(q, pp);
  for (int t = 0; t < m.T; ++t)
    for (int k = 0; k < m.K; ++k) flat[at++] = p.b(t, k);
  for (int j = 0; j < m.J; ++j) flat[at++] = p.d[j];
  for (int j = 0; j < m.J; ++j)
    for (int g = 0; g < m.G; ++g) flat[at++] = p.delta_d(j, g);
  for (int j = 0; j < m.J; ++j)
    for (int k = 0; k < m.K; ++k) flat[at++] = p.c(j, k);
  for (int j = 0; j < m.J; ++j)
    for (int g = 0; g < m.G; ++g) flat[at++] = p.delta_c(j, g);
  for (int q = 0; q < m.C; ++q)
    for (int g = 0; g < m.G; ++g) flat[at++] = p.omega(q, g);
  return flat;
}

NaturalParams ParamLayout::unflatten(Eigen::Ref<const Eigen::VectorXd> flat) const {
  const ModelDims& m = dims_;
  NaturalParams p = NaturalParams::zeros(m);
  int at = 0;
  for (int i = 0; i < m.N; ++i)
    for (int pp = 0; pp < m.P; ++pp) p.theta(i, pp) = flat[at++];
  for (int q = 0; q < m.C; ++q)
    for (int pp = 0; pp < m.P; ++pp) p.gamma(q, pp) = flat[at++];
  for (int t = 0; t < m.T; ++t)
    for (int k = 0; k < m.K; ++k) p.b(t, k) = flat[at++];
  for (int j = 0; j < m.J; ++j) p.d[j] = flat[at++];
  for (int j = 0; j < m.J; ++j)
    for (int g = 0; g < m.G; ++g) p.delta_d(j, g) = flat[at++];
  for (int j = 0; j < m.J; ++j)
    for (int k = 0; k < m.K; ++k) p.c(j, k) = flat[at++];
  for (int j = 0; j < m.J; ++j)
    for (int g = 0; g < m.G; ++g) p.delta_c(j, g) = flat[at++];
  for (int q = 0; q < m.C; ++q)
    for (int g = 0; g < m.G; ++g) p.omega(q, g) = flat[at++];
  return p;
}

void ParamLayout::chain_gradient(Eigen::Ref<const Eigen::VectorXd> z, const NaturalParams& p,
                                 Eigen::Ref<const Eigen::VectorXd> nat_grad,
                                 Eigen::Ref<Eigen::VectorXd> z_grad) const {
  const ModelDims& m = dims_;

  // theta: identity
  for (int i = 0; i < m.N * m.P; ++i) z_grad[z_theta() + i] += nat_grad[nat_theta() + i];

  // gamma: free coordinate q feels both gamma_q and the balancing last case
  for (int pp = 0; pp < m.P; ++pp) {
    double g_last = nat_grad[nat_gamma_ + (m.C - 1) * m.P + pp];
    for (int q = 0; q < m.C - 1; ++q)
      z_grad[z_gamma_ + q * m.P + pp] += nat_grad[nat_gamma_ + q * m.P + pp] - g_last;
  }

  // b rows: b_k = b_1 + sum_{m<=k} exp(z_m)  =>  suffix sums
  for (int t = 0; t < m.T; ++t) {
    const double* gb = nat_grad.data() + nat_b_ + t * m.K;
    double suffix = 0.0;
    for (int k = m.K - 1; k >= 1; --k) {
      suffix += gb[k];
      z_grad[z_b_ + t * m.K + k] += suffix * std::exp(z[z_b_ + t * m.K + k]);
    }
    z_grad[z_b_ + t * m.K] += suffix + gb[0];
  }

  // d: log transform
  for (int j = 0; j < m.J; ++j) z_grad[z_d_ + j] += nat_grad[nat_d_ + j] * p.d[j];

  // delta_d / delta_c: same structure as gamma, per rater row
  for (int j = 0; j < m.J; ++j) {
    double g_last = nat_grad[nat_delta_d_ + j * m.G + (m.G - 1)];
    for (int g = 0; g < m.G - 1; ++g)
      z_grad[z_delta_d_ + j * (m.G - 1) + g] += nat_grad[nat_delta_d_ + j * m.G + g] - g_last;
  }

  for (int j = 0; j < m.J; ++j) {
    const double* gc = nat_grad.data() + nat_c_ + j * m.K;
    double suffix = 0.0;
    for (int k = m.K - 1; k >= 1; --k) {
      suffix += gc[k];
      z_grad[z_c_ + j * m.K + k] += suffix * std::exp(z[z_c_ + j * m.K + k]);
    }
    z_grad[z_c_ + j * m.K] += suffix + gc[0];
  }

  for (int j = 0; j < m.J; ++j) {
    double g_last = nat_grad[nat_delta_c_ + j * m.G + (m.G - 1)];
    for (int g = 0; g < m.G - 1; ++g)
      z_grad[z_delta_c_ + j * (m.G - 1) + g] += nat_grad[nat_delta_c_ + j * m.G + g] - g_last;
  }

  for (int i = 0; i < m.C * m.G; ++i) z_grad[z_omega_ + i] += nat_grad[nat_omega_ + i];
}

void ParamLayout::prior_moments(const PriorConfig& prior, Eigen::VectorXd& loc,
                                Eigen::VectorXd& scale) const {
  const ModelDims& m = dims_;
  loc.resize(z_dim_);
  scale.resize(z_dim_);
  auto fill = [&](int start, int count, double l, double s) {
    for (int i = 0; i < count; ++i) {
      loc[start + i] = l;
      scale[start + i] = s;
    }
  };
  fill(z_theta(), m.N * m.P, prior.theta_loc, prior.theta_scale);
  fill(z_gamma_, (m.C - 1) * m.P, prior.gamma_loc, prior.gamma_scale);
  for (int t = 0; t < m.T; ++t) {
    loc[z_b_ + t * m.K] = prior.b_first_loc;
    scale[z_b_ + t * m.K] = prior.b_first_scale;
    for (int k = 1; k < m.K; ++k) {
      loc[z_b_ + t * m.K + k] = prior.b_logincr_loc;
      scale[z_b_ + t * m.K + k] = prior.b_logincr_scale;
    }
  }
  fill(z_d_, m.J, prior.log_d_loc, prior.log_d_scale);
  fill(z_delta_d_, m.J * (m.G - 1), prior.delta_d_loc, prior.delta_d_scale);
  for (int j = 0; j < m.J; ++j) {
    loc[z_c_ + j * m.K] = prior.c_first_loc;
    scale[z_c_ + j * m.K] = prior.c_first_scale;
    for (int k = 1; k < m.K; ++k) {
      loc[z_c_ + j * m.K + k] = prior.c_logincr_loc;
      scale[z_c_ + j * m.K + k] = prior.c_logincr_scale;
    }
  }
  fill(z_omega_, m.C * m.G, prior.omega_loc, prior.omega_scale);
}

double ParamLayout::log_prior(Eigen::Ref<const Eigen::VectorXd> z,
                              const PriorConfig& prior) const {
  Eigen::VectorXd loc, scale;
  prior_moments(prior, loc, scale);
  constexpr double half_log_2pi = 0.9189385332046727;
  double lp = 0.0;
  for (int i = 0; i < z_dim_; ++i) {
    double r = (z[i] - loc[i]) / scale[i];
    lp -= 0.5 * r * r + std::log(scale[i]) + half_log_2pi;
  }
  return lp;
}

double ParamLayout::log_prior_grad(Eigen::Ref<const Eigen::VectorXd> z, const PriorConfig& prior,
                                   Eigen::Ref<Eigen::VectorXd> grad) const {
  Eigen::VectorXd loc, scale;
  prior_moments(prior, loc, scale);
  constexpr double half_log_2pi = 0.9189385332046727;
  double lp = 0.0;
  for (int i = 0; i < z_dim_; ++i) {
    double r = (z[i] - loc[i]) / scale[i];
    lp -= 0.5 * r * r + std::log(scale[i]) + half_log_2pi;
    grad[i] -= r / scale[i];
  }
  return lp;
}

std::string ParamLayout::z_coord_name(int index) const {
  const ModelDims& m = dims_;
  auto two = [](const char* base, int a, int b) {
    return std::string(base) + "[" + std::to_string(a + 1) + "," + std::to_string(b + 1) + "]";
  };
  if (index < z_gamma_) return two("z_theta", index / m.P, index % m.P);
  if (index < z_b_) {
    int r = index - z_gamma_;
    return two("z_gamma_free", r / m.P, r % m.P);
  }
  if (index < z_d_) {
    int r = index - z_b_;
    return two(r % m.K == 0 ? "z_b_first" : "z_b_logincr", r / m.K, r % m.K);
  }
  if (index < z_delta_d_) return "z_log_d[" + std::to_string(index - z_d_ + 1) + "]";
  if (index < z_c_) {
    int r = index - z_delta_d_;
    return two("z_delta_d_free", r / (m.G - 1), r % (m.G - 1));
  }
  if (index < z_delta_c_) {
    int r = index - z_c_;
    return two(r % m.K == 0 ? "z_c_first" : "z_c_logincr", r / m.K, r % m.K);
  }
  if (index < z_omega_) {
    int r = index - z_delta_c_;
    return two("z_delta_c_free", r / (m.G - 1), r % (m.G - 1));
  }
  int r = index - z_omega_;
  return two("z_omega", r / m.G, r % m.G);
}

}  // namespace hrmsdt
