#pragma once

#include <span>
#include <string>
#include <vector>

namespace hrmsdt {

// Differentiable log-density over an unconstrained vector. Implementations
// must be callable concurrently from independent chains.
class Target {
 public:
  virtual ~Target() = default;

  virtual int dim() const = 0;

  // Log density at z; writes the gradient into `grad` (size dim()).
  virtual double logp_grad(std::span<const double> z, std::span<double> grad) const = 0;

  virtual double logp(std::span<const double> z) const {
    std::vector<double> g(static_cast<std::size_t>(dim()));
    return logp_grad(z, g);
  }

  virtual std::string coord_name(int index) const { return "z[" + std::to_string(index) + "]"; }

  // Human-readable hint about which term made logp(z) non-finite; empty
  // when unknown or not applicable.
  virtual std::string diagnose(std::span<const double> z) const {
    (void)z;
    return {};
  }
};

}  // namespace hrmsdt
