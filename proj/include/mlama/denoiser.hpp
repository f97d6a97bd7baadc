#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlama/constellation.hpp"

namespace mlama {

enum class DenoiserKind { Discrete, Gaussian, Hypercube, BoxClip };

/// Whether a denoiser acts on complex-valued (kernel exp(-|r-a|^2/tau))
/// or real-valued (kernel exp(-(r-a)^2/(2 tau))) systems.
enum class Field { Complex, Real };

/// Posterior-mean function of a (possibly mismatched) prior.
///
/// The complex interface takes the variance parameter tau of a circular
/// Gaussian kernel; the real interface takes the variance of a real Gaussian
/// kernel. Every kind also exposes a per-dimension scalar form with kernel
/// variance `var`; a complex call evaluates it at var = tau / 2 on the real
/// and imaginary parts (Discrete requires a separable alphabet for this).
///
/// Limits: tau = 0 gives the nearest-symbol map (Discrete), the identity
/// (Gaussian) and the box clip (Hypercube); tau = +inf gives the prior mean.
class Denoiser {
 public:
  static Denoiser discrete(Constellation c);
  static Denoiser discrete(RealConstellation c);
  /// Mismatched Gaussian prior with E|S|^2 = energy.
  static Denoiser gaussian(double energy, Field field = Field::Complex);
  /// Uniform prior on the hypercube [-alpha, alpha] per real dimension.
  static Denoiser hypercube(double alpha);
  /// tau -> 0 limit of the hypercube denoiser.
  static Denoiser boxclip(double alpha);

  DenoiserKind kind() const { return kind_; }
  Field field() const { return field_; }
  std::string label() const;
  double alpha() const { return alpha_; }
  double energy() const { return energy_; }
  const std::optional<Constellation>& constellation() const { return complex_; }
  /// Per-dimension alphabet (Discrete only; empty if the complex one is not separable).
  const std::optional<RealConstellation>& scalar_constellation() const { return real_; }

  cdouble operator()(cdouble z, double tau) const;
  /// (dF_R/dz_R + dF_I/dz_I) / 2.
  double derivative(cdouble z, double tau) const;

  double operator()(double x, double tau) const;
  double derivative(double x, double tau) const;

  bool has_scalar_form() const;
  double scalar(double x, double var) const;
  double scalar_derivative(double x, double var) const;

  /// Points of the real line where the scalar form changes regime
  /// (box edges, decision boundaries). Used to split quadrature panels.
  std::vector<double> scalar_breakpoints() const;
  /// Width of the transition around each breakpoint at kernel variance var
  /// (0 for an exact kink).
  double transition_width(double var) const;

 private:
  Denoiser(DenoiserKind kind, Field field) : kind_(kind), field_(field) {}
  void require_real_call() const;

  DenoiserKind kind_;
  Field field_;
  double alpha_ = 0.0;
  double energy_ = 0.0;
  std::optional<Constellation> complex_;
  std::optional<RealConstellation> real_;
};

/// Exact posterior mean over a discrete alphabet (complex kernel).
cdouble f_discrete(cdouble z, double tau, const Constellation& c);
/// Real-kernel counterpart, exp(-(x-a)^2 / (2 var)).
double f_discrete(double x, double var, const RealConstellation& c);

cdouble f_gaussian(cdouble z, double tau, double energy);

/// Posterior mean of a uniform prior on the alpha-box; tau must be > 0.
cdouble f_hypercube(cdouble z, double tau, double alpha);

cdouble f_boxclip(cdouble z, double alpha);

/// Component average of the denoiser derivative, <F'(z, tau)>.
double divergence(const Denoiser& d, std::span<const cdouble> z, double tau);
double divergence(const Denoiser& d, std::span<const double> z, double tau);

namespace scalar {

struct Posterior {
  double mean;
  double derivative;  ///< d mean / dx = posterior variance / var
};

/// Truncated-Gaussian posterior mean on [-alpha, alpha] with kernel variance var.
Posterior hypercube(double x, double var, double alpha);

/// Posterior over a real alphabet with kernel variance var.
Posterior discrete(double x, double var, const RealConstellation& c);

}  // namespace scalar

}  // namespace mlama
