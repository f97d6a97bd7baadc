#include "mlama/amp.hpp"

#include <cmath>
#include <span>
#include <stdexcept>

#include "mlama/special.hpp"

namespace mlama {
namespace {

template <class T>
bool all_finite(const Vec<T>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(std::abs(v[i]))) return false;
  return true;
}

template <class T>
void check_dimensions(const MimoInstanceT<T>& inst) {
  if (inst.H.rows() == 0 || inst.H.cols() == 0)
    throw std::invalid_argument("amp: empty channel matrix");
  if (inst.y.size() != inst.H.rows())
    throw std::invalid_argument("amp: y length does not match the number of receive antennas");
}

}  // namespace

template <class T>
AmpStateT<T> init_state(const MimoInstanceT<T>& inst, const BasicConstellation<T>& prior) {
  check_dimensions(inst);
  AmpStateT<T> st;
  st.s = Vec<T>::Constant(inst.mt(), prior.moments().mean);
  st.r = inst.y - inst.H * st.s;
  return st;
}

template <class T>
double estimate_decoupled_variance(const Vec<T>& r, Eigen::Index mr) {
  if (mr <= 0) throw std::invalid_argument("estimate_decoupled_variance: MR must be > 0");
  return r.squaredNorm() / static_cast<double>(mr);
}

Tuner::Tuner(const Denoiser& d, const Constellation& true_prior, TuningPolicy policy)
    : policy_(policy) {
  validate_policy(policy_, d);
  if (policy_.mode == TuningMode::Optimal) model_.emplace(true_prior, d, policy_);
}

Tuner::Tuner(const Denoiser& d, const RealConstellation& true_prior, TuningPolicy policy)
    : policy_(policy) {
  validate_policy(policy_, d);
  if (policy_.mode == TuningMode::Optimal) model_.emplace(true_prior, d, policy_);
}

TuneResult Tuner::operator()(double sigma_hat_sq) const {
  switch (policy_.mode) {
    case TuningMode::Fixed:
      return {policy_.fixed_tau, 0.0, false};
    case TuningMode::Matched:
      return {sigma_hat_sq, 0.0, false};
    case TuningMode::Optimal:
      break;
  }
  const auto ps = model_->psi_star(sigma_hat_sq);
  return {ps.gamma_sq, ps.value, ps.flagged};
}

template <class T>
AmpStepT<T> amp_step(const AmpStateT<T>& state, const MimoInstanceT<T>& inst, const Denoiser& d,
                     double tau) {
  check_dimensions(inst);
  if (state.s.size() != inst.mt() || state.r.size() != inst.mr())
    throw std::invalid_argument("amp_step: state dimensions do not match the instance");
  AmpStepT<T> out;
  out.z = state.s + inst.H.adjoint() * state.r;
  out.next.s.resize(inst.mt());
  for (Eigen::Index i = 0; i < inst.mt(); ++i) out.next.s[i] = d(out.z[i], tau);
  out.divergence = divergence(d, std::span<const T>(out.z.data(), out.z.size()), tau);
  out.next.r = inst.y - inst.H * out.next.s + (inst.beta() * out.divergence) * state.r;
  if (!all_finite(out.next.s) || !all_finite(out.next.r) || !std::isfinite(out.divergence))
    throw NumericalError("amp_step: non-finite state (tau = " + std::to_string(tau) + ")");
  return out;
}

template <class T>
AmpTraceT<T> run_amp(const MimoInstanceT<T>& inst, const Denoiser& d, const TuningPolicy& policy,
                     const BasicConstellation<T>& true_prior, const AmpOptions& options) {
  if (options.t_max < 1) throw std::invalid_argument("run_amp: t_max must be >= 1");
  const Tuner tuner(d, true_prior, policy);
  AmpTraceT<T> tr;
  auto st = init_state(inst, true_prior);
  if (options.store_vectors) {
    tr.s.push_back(st.s);
    tr.r.push_back(st.r);
  }
  for (int t = 0; t < options.t_max; ++t) {
    const double sigma_hat_sq = estimate_decoupled_variance<T>(st.r, inst.mr());
    if (!std::isfinite(sigma_hat_sq))
      throw NumericalError("run_amp: non-finite residual at iteration " + std::to_string(t + 1));
    const auto tuned = tuner(sigma_hat_sq);
    auto step = amp_step(st, inst, d, tuned.tau);
    tr.sigma_hat_sq.push_back(sigma_hat_sq);
    tr.tau.push_back(tuned.tau);
    tr.divergence.push_back(step.divergence);
    tr.tuning_flagged = tr.tuning_flagged || tuned.flagged;
    const double change = (step.next.s - st.s).squaredNorm();
    st = std::move(step.next);
    if (options.store_vectors) {
      tr.s.push_back(st.s);
      tr.r.push_back(st.r);
    }
    ++tr.iterations;
    if (options.early_stop_tol > 0.0 &&
        change <= options.early_stop_tol * static_cast<double>(inst.mt()))
      break;
  }
  tr.sigma_hat_sq.push_back(estimate_decoupled_variance<T>(st.r, inst.mr()));
  tr.z_final = st.s + inst.H.adjoint() * st.r;
  tr.decisions.resize(static_cast<std::size_t>(inst.mt()));
  tr.sliced.resize(inst.mt());
  for (Eigen::Index i = 0; i < inst.mt(); ++i) {
    tr.decisions[i] = true_prior.nearest(tr.z_final[i]);
    tr.sliced[i] = true_prior.symbols()[tr.decisions[i]];
  }
  return tr;
}

#define MLAMA_INSTANTIATE_AMP(T)                                                             \
  template AmpStateT<T> init_state(const MimoInstanceT<T>&, const BasicConstellation<T>&);    \
  template double estimate_decoupled_variance(const Vec<T>&, Eigen::Index);                   \
  template AmpStepT<T> amp_step(const AmpStateT<T>&, const MimoInstanceT<T>&, const Denoiser&, \
                                double);                                                      \
  template AmpTraceT<T> run_amp(const MimoInstanceT<T>&, const Denoiser&, const TuningPolicy&, \
                                const BasicConstellation<T>&, const AmpOptions&);

MLAMA_INSTANTIATE_AMP(double)
MLAMA_INSTANTIATE_AMP(cdouble)

#undef MLAMA_INSTANTIATE_AMP

}  // namespace mlama
