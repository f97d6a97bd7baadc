#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "mlama/denoiser.hpp"
#include "mlama/mimo_instance.hpp"
#include "mlama/state_evolution.hpp"

namespace mlama {

template <class T>
struct AmpStateT {
  Vec<T> s;  ///< current estimate, length MT
  Vec<T> r;  ///< current residual, length MR
};

/// s^1 = E[S0] for every entry, r^1 = y - H s^1.
template <class T>
AmpStateT<T> init_state(const MimoInstanceT<T>& inst, const BasicConstellation<T>& prior);

/// ||r||^2 / MR.
template <class T>
double estimate_decoupled_variance(const Vec<T>& r, Eigen::Index mr);

/// Chooses tau from the estimated decoupled variance. Optimal mode
/// minimises the true-prior MSE of the denoiser; Matched returns
/// sigma_hat_sq; Fixed returns the fixed value (0 / +inf are limits).
class Tuner {
 public:
  Tuner(const Denoiser& d, const Constellation& true_prior, TuningPolicy policy);
  Tuner(const Denoiser& d, const RealConstellation& true_prior, TuningPolicy policy);

  TuneResult operator()(double sigma_hat_sq) const;
  const TuningPolicy& policy() const { return policy_; }

 private:
  TuningPolicy policy_;
  std::optional<SeModel> model_;
};

template <class T>
TuneResult tune_tau(double sigma_hat_sq, const Denoiser& d, const BasicConstellation<T>& true_prior,
                    const TuningPolicy& policy) {
  if (!(sigma_hat_sq >= 0.0)) throw std::invalid_argument("tune_tau: sigma_hat_sq must be >= 0");
  return Tuner(d, true_prior, policy)(sigma_hat_sq);
}

template <class T>
struct AmpStepT {
  AmpStateT<T> next;
  Vec<T> z;           ///< s^t + H^H r^t
  double divergence;  ///< <F'(z, tau)>
};

/// One iteration: s^{t+1} = F(s^t + H^H r^t, tau) and
/// r^{t+1} = y - H s^{t+1} + beta r^t <F'(s^t + H^H r^t, tau)>.
/// Throws NumericalError on a non-finite state.
template <class T>
AmpStepT<T> amp_step(const AmpStateT<T>& state, const MimoInstanceT<T>& inst, const Denoiser& d,
                     double tau);

struct AmpOptions {
  int t_max = 10;
  bool store_vectors = true;
  /// Stop once ||s^{t+1} - s^t||^2 <= tol * MT; 0 runs exactly t_max iterations.
  double early_stop_tol = 0.0;
};

template <class T>
struct AmpTraceT {
  std::vector<Vec<T>> s;             ///< s^1 .. s^{T+1} (when stored)
  std::vector<Vec<T>> r;             ///< r^1 .. r^{T+1} (when stored)
  std::vector<double> sigma_hat_sq;  ///< t = 1 .. T+1
  std::vector<double> tau;           ///< t = 1 .. T
  std::vector<double> divergence;    ///< t = 1 .. T
  Vec<T> z_final;                    ///< s^{T+1} + H^H r^{T+1}
  std::vector<std::size_t> decisions;
  Vec<T> sliced;
  int iterations = 0;
  bool tuning_flagged = false;
};

using AmpTrace = AmpTraceT<cdouble>;
using RealAmpTrace = AmpTraceT<double>;

/// Runs the mismatched AMP detector and slices z_final onto `true_prior`.
template <class T>
AmpTraceT<T> run_amp(const MimoInstanceT<T>& inst, const Denoiser& d, const TuningPolicy& policy,
                     const BasicConstellation<T>& true_prior, const AmpOptions& options = {});

}  // namespace mlama
