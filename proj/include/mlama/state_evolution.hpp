#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "mlama/constellation.hpp"
#include "mlama/denoiser.hpp"

namespace mlama {

enum class TuningMode { Optimal, Fixed, Matched };

/// How the variance parameter tau is chosen each iteration.
///
/// Fixed accepts 0 and +inf as the tau -> 0 and tau -> inf limits; those
/// markers are only meaningful for Gaussian and Hypercube/BoxClip denoisers.
struct TuningPolicy {
  TuningMode mode = TuningMode::Optimal;
  double fixed_tau = 0.0;

  static TuningPolicy optimal() { return {TuningMode::Optimal, 0.0}; }
  static TuningPolicy matched() { return {TuningMode::Matched, 0.0}; }
  static TuningPolicy fixed(double tau) { return {TuningMode::Fixed, tau}; }
  static TuningPolicy limit_zero() { return fixed(0.0); }
  static TuningPolicy limit_infinity();

  std::string label() const;
};

/// Throws std::invalid_argument if `policy` cannot be used with `d`.
void validate_policy(const TuningPolicy& policy, const Denoiser& d);

struct TuneResult {
  double tau = 0.0;
  double objective = 0.0;
  bool flagged = false;  ///< minimiser sat on the search grid boundary
};

/// 40-point log grid over [1e-6 s, 1e3 s] followed by golden-section
/// refinement in log(tau) to relative tolerance 1e-6.
TuneResult minimize_tau(const std::function<double(double)>& objective, double scale);

struct PsiStar {
  double value = 0.0;     ///< Psi*(sigma^2)
  double gamma_sq = 0.0;  ///< tuned gamma^2
  bool flagged = false;
};

struct QuadratureCheck {
  double value = 0.0;
  double doubled = 0.0;  ///< same integral with twice the nodes per panel
  bool converged = true; ///< |value - doubled| <= 1e-7
};

/// Scalar-channel model behind state evolution: true prior, denoiser and
/// tuning rule. Complex systems are reduced to one real dimension through
/// the separable decomposition (per-dimension noise variance sigma^2 / 2,
/// kernel variance gamma^2 / 2, MSE doubled).
class SeModel {
 public:
  SeModel(Constellation prior, Denoiser denoiser, TuningPolicy tuning);
  SeModel(RealConstellation prior, Denoiser denoiser, TuningPolicy tuning);

  bool real_system() const { return real_system_; }
  const Denoiser& denoiser() const { return denoiser_; }
  const TuningPolicy& tuning() const { return tuning_; }
  const RealConstellation& scalar_prior() const { return scalar_prior_; }
  const std::string& prior_label() const { return prior_label_; }
  double prior_variance() const { return variance_; }
  double prior_energy() const { return energy_; }

  /// MSE E|F(S0 + sigma Z, gamma^2) - S0|^2.
  double psi(double sigma_sq, double gamma_sq) const;
  QuadratureCheck psi_checked(double sigma_sq, double gamma_sq) const;

  /// Psi*(sigma^2) under the tuning rule.
  PsiStar psi_star(double sigma_sq) const;

  /// dPsi*/dsigma^2; closed form for the Gaussian and box-clip/QAM cases.
  double psi_star_derivative(double sigma_sq) const;

 private:
  double quadrature(double sigma_sq, double gamma_sq, bool doubled) const;
  bool boxclip_closed_form() const;

  bool real_system_;
  RealConstellation scalar_prior_;
  std::string prior_label_;
  Denoiser denoiser_;
  TuningPolicy tuning_;
  double energy_;
  double variance_;
  double noise_scale_;  // per-dimension noise variance / sigma^2
  double tau_scale_;    // per-dimension kernel variance / gamma^2
  double mse_scale_;    // total MSE / per-dimension MSE
};

/// Psi by quadrature over Z and an exact sum over the prior.
double psi_numeric(double sigma_sq, double gamma_sq, const Constellation& prior,
                   const Denoiser& d);
double psi_numeric(double sigma_sq, double gamma_sq, const RealConstellation& prior,
                   const Denoiser& d);

/// Box-clip MSE for equally likely M-PAM, alpha = M - 1, Z ~ N(0, 1).
double psi_pam_closed(double sigma_sq, int m);
double psi_pam_closed_derivative(double sigma_sq, int m);
/// Complex M^2-QAM version, 2 Psi_PAM(sigma^2 / 2).
double psi_qam_closed(double sigma_sq, int m);
double psi_qam_closed_derivative(double sigma_sq, int m);

/// BPSK box-relaxation MSE written in terms of tau^2.
double box_relaxation_psi(double tau_sq);

struct SeStep {
  double sigma_sq_next = 0.0;
  double gamma_sq = 0.0;
  bool flagged = false;
};

SeStep se_step(double sigma_sq, double beta, double n0, const SeModel& model);

struct SeTrace {
  std::vector<double> sigma_sq;  ///< sigma_1^2 .. sigma_{t_max+1}^2
  std::vector<double> gamma_sq;  ///< gamma_1^2 .. gamma_{t_max}^2
  double beta = 0.0;
  double n0 = 0.0;
  std::string prior_label;
  std::string denoiser_label;
  bool flagged = false;
};

SeTrace run_se(double beta, double n0, const SeModel& model, int t_max);

struct FixedPointReport {
  std::vector<double> solutions;  ///< ascending
  double converged_to = 0.0;      ///< fixed point reached by SE from sigma_1^2
  bool unique = false;
  bool warning = false;           ///< no sign change; converged_to is an iterated limit
};

/// All roots of sigma^2 = N0 + beta Psi*(sigma^2) found by a 2000-point
/// log-spaced sign-change scan plus bisection. Roots closer together than
/// the grid spacing may merge.
FixedPointReport fixed_point(double beta, double n0, const SeModel& model);

/// Minimum recovery threshold 1 / max dPsi*/dsigma^2 over sigma^2 in
/// [1e-8, 1e3]; +inf when the derivative is nonpositive everywhere.
double mrt(const SeModel& model);

struct BoxRelaxation {
  double tau = 0.0;
  double tau_sq = 0.0;
  double objective = 0.0;
  double stationarity_residual = 0.0;  ///< |tau^2 - N0 - beta Psi(tau^2)|
};

/// The g(tau) objective of the real BPSK box-relaxation analysis.
double box_relaxation_objective(double tau, double beta, double n0);

/// Minimiser of g(tau) for real BPSK with beta < 2.
BoxRelaxation box_relaxation_tau(double beta, double n0);

/// Exact nearest-neighbour symbol error probability of a separable
/// alphabet in complex AWGN with total variance sigma^2.
double ser_prediction(double sigma_sq, const Constellation& c);
/// Real alphabet in real AWGN with variance sigma^2 (BPSK: Q(1/sigma)).
double ser_prediction(double sigma_sq, const RealConstellation& c);

}  // namespace mlama
