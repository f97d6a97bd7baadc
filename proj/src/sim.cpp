#include "mlama/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

#include "mlama/special.hpp"

namespace mlama {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Runs fn(i) for i in [0, n) on `threads` workers. Each call owns its output
// slot, so results do not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::size_t draw_index(std::mt19937_64& rng, const std::vector<double>& probs) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

template <class T>
T gaussian(std::mt19937_64& rng, double variance) {
  std::normal_distribution<double> nd(0.0, 1.0);
  if constexpr (std::is_same_v<T, double>) {
    return std::sqrt(variance) * nd(rng);
  } else {
    const double sd = std::sqrt(variance / 2.0);
    const double re = nd(rng);
    const double im = nd(rng);
    return {sd * re, sd * im};
  }
}

template <class T>
MimoInstanceT<T> generate(int mt, int mr, const BasicConstellation<T>& c, double n0,
                          std::uint64_t seed) {
  if (mt < 1 || mr < 1) throw std::invalid_argument("gen_instance: MT and MR must be >= 1");
  if (!(n0 >= 0.0)) throw std::invalid_argument("gen_instance: N0 must be >= 0");
  std::mt19937_64 rng(splitmix64(seed));
  MimoInstanceT<T> inst;
  inst.n0 = n0;
  inst.H.resize(mr, mt);
  const double hvar = 1.0 / mr;
  for (Eigen::Index j = 0; j < mt; ++j)
    for (Eigen::Index i = 0; i < mr; ++i) inst.H(i, j) = gaussian<T>(rng, hvar);
  inst.s0.resize(mt);
  inst.index.resize(static_cast<std::size_t>(mt));
  for (Eigen::Index j = 0; j < mt; ++j) {
    inst.index[j] = draw_index(rng, c.probabilities());
    inst.s0[j] = c.symbols()[inst.index[j]];
  }
  inst.y = inst.H * inst.s0;
  if (n0 > 0.0)
    for (Eigen::Index i = 0; i < mr; ++i) inst.y[i] += gaussian<T>(rng, n0);
  return inst;
}

template <class T>
void slice(DetectionT<T>& det, const BasicConstellation<T>& c) {
  det.decisions.resize(static_cast<std::size_t>(det.soft.size()));
  det.sliced.resize(det.soft.size());
  for (Eigen::Index i = 0; i < det.soft.size(); ++i) {
    det.decisions[i] = c.nearest(det.soft[i]);
    det.sliced[i] = c.symbols()[det.decisions[i]];
  }
}

double clip_unit(double x) { return std::clamp(x, -1.0, 1.0); }
cdouble clip_unit(cdouble z) { return {clip_unit(z.real()), clip_unit(z.imag())}; }

double real_inner(double a, double b) { return a * b; }
double real_inner(cdouble a, cdouble b) { return (std::conj(a) * b).real(); }

template <class T>
double largest_squared_singular_value(const Mat<T>& H) {
  Vec<T> v = Vec<T>::Ones(H.cols()).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    Vec<T> w = H.adjoint() * (H * v);
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    v = w / next;
    if (std::abs(next - lambda) <= 1e-12 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t snr_index, std::uint64_t trial) {
  return splitmix64(splitmix64(splitmix64(master) ^ snr_index) ^ (trial * 0x2545f4914f6cdd1dULL));
}

MimoInstance gen_instance(int mt, int mr, const Constellation& c, double n0, std::uint64_t seed) {
  return generate<cdouble>(mt, mr, c, n0, seed);
}

RealMimoInstance gen_real_instance(int mt, int mr, const RealConstellation& c, double n0,
                                   std::uint64_t seed) {
  return generate<double>(mt, mr, c, n0, seed);
}

// ---------------------------------------------------------------------------
// Linear baselines

template <class T>
DetectionT<T> mmse_exact(const MimoInstanceT<T>& inst, const BasicConstellation<T>& c) {
  const auto m = c.moments();
  const Eigen::Index mt = inst.mt();
  const double reg = inst.n0 / m.energy;
  const Mat<T> gram = inst.H.adjoint() * inst.H;
  const Mat<T> g = gram + Mat<T>::Identity(mt, mt) * reg;
  DetectionT<T> det;
  Eigen::LLT<Mat<T>> llt(g);
  Mat<T> ginv;
  if (llt.info() != Eigen::Success) {
    det.flagged = true;
    ginv = g.completeOrthogonalDecomposition().pseudoInverse();
  } else {
    ginv = llt.solve(Mat<T>::Identity(mt, mt));
  }
  det.soft = ginv * (inst.H.adjoint() * inst.y);
  // Per-stream gain of (G⁻¹ HᴴH) is 1 - reg [G⁻¹]_kk; dividing it out removes the shrinkage.
  for (Eigen::Index k = 0; k < mt; ++k) {
    const double gain = 1.0 - reg * std::real(ginv(k, k));
    if (gain > 0.0) det.soft[k] /= gain;
  }
  slice(det, c);
  return det;
}

template <class T>
DetectionT<T> zf_exact(const MimoInstanceT<T>& inst, const BasicConstellation<T>& c) {
  if (inst.mt() > inst.mr())
    throw std::invalid_argument("zf_exact: requires MT <= MR");
  DetectionT<T> det;
  Eigen::ColPivHouseholderQR<Mat<T>> qr(inst.H);
  if (qr.rank() < inst.mt()) det.flagged = true;
  det.soft = qr.solve(inst.y);
  slice(det, c);
  return det;
}

template <class T>
DetectionT<T> mf_exact(const MimoInstanceT<T>& inst, const BasicConstellation<T>& c) {
  DetectionT<T> det;
  det.soft = inst.H.adjoint() * inst.y;
  slice(det, c);
  return det;
}

template <class T>
DetectionT<T> box_detector(const MimoInstanceT<T>& inst, const BasicConstellation<T>& c,
                           int max_iters, double tol) {
  if (max_iters < 1) throw std::invalid_argument("box_detector: max_iters must be >= 1");
  const Eigen::Index mt = inst.mt();
  // Power iteration approaches the top eigenvalue from below; pad it slightly.
  const double lipschitz = 1.01 * largest_squared_singular_value(inst.H);
  DetectionT<T> det;
  if (lipschitz == 0.0) {
    det.soft = Vec<T>::Zero(mt);
    slice(det, c);
    return det;
  }
  auto objective = [&](const Vec<T>& s) { return 0.5 * (inst.y - inst.H * s).squaredNorm(); };
  const double floor = 1e-12 * inst.y.squaredNorm();

  Vec<T> x = Vec<T>::Zero(mt);
  Vec<T> v = x;
  double t = 1.0;
  double f = objective(x);
  Vec<T> best = x;
  double best_f = f;
  det.flagged = true;
  int it = 0;
  for (; it < max_iters; ++it) {
    const Vec<T> grad = inst.H.adjoint() * (inst.H * v - inst.y);
    Vec<T> x_new = v - grad / lipschitz;
    for (Eigen::Index i = 0; i < mt; ++i) x_new[i] = clip_unit(x_new[i]);
    const double f_new = objective(x_new);
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    // Gradient-based adaptive restart.
    double dir = 0.0;
    for (Eigen::Index i = 0; i < mt; ++i) dir += real_inner(v[i] - x_new[i], x_new[i] - x[i]);
    if (dir > 0.0) {
      v = x_new;
      t = 1.0;
    } else {
      v = x_new + ((t - 1.0) / t_new) * (x_new - x);
      t = t_new;
    }
    const bool small = std::abs(f_new - f) <= tol * std::max(f_new, floor);
    x = std::move(x_new);
    f = f_new;
    if (f < best_f) {
      best_f = f;
      best = x;
    }
    if (small && dir <= 0.0) {
      det.flagged = false;
      ++it;
      break;
    }
  }
  det.iterations = it;
  det.soft = best;
  det.objective = best_f;
  slice(det, c);
  return det;
}

#define MLAMA_INSTANTIATE_DETECTORS(T)                                                         \
  template DetectionT<T> mmse_exact(const MimoInstanceT<T>&, const BasicConstellation<T>&);     \
  template DetectionT<T> zf_exact(const MimoInstanceT<T>&, const BasicConstellation<T>&);       \
  template DetectionT<T> mf_exact(const MimoInstanceT<T>&, const BasicConstellation<T>&);       \
  template DetectionT<T> box_detector(const MimoInstanceT<T>&, const BasicConstellation<T>&, int, \
                                      double);

MLAMA_INSTANTIATE_DETECTORS(double)
MLAMA_INSTANTIATE_DETECTORS(cdouble)

#undef MLAMA_INSTANTIATE_DETECTORS

WilsonInterval wilson_interval(std::uint64_t successes, std::uint64_t n, double z) {
  if (n == 0) throw std::invalid_argument("wilson_interval: n must be > 0");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  // The exact interval ends at 0 (1) when no (every) trial succeeds.
  const double low = successes == 0 ? 0.0 : std::max(0.0, center - half);
  const double high = successes == n ? 1.0 : std::min(1.0, center + half);
  return {low, high};
}

// ---------------------------------------------------------------------------
// Registry

namespace {

struct RegistryEntry {
  DetectorKind kind;
  std::string_view label;
};

constexpr RegistryEntry kRegistry[] = {
    {DetectorKind::Lama, "lama"},           {DetectorKind::Gauss, "gauss"},
    {DetectorKind::GaussZf, "gauss-zf"},    {DetectorKind::GaussMf, "gauss-mf"},
    {DetectorKind::Hypercube, "hypercube"}, {DetectorKind::BoxClip, "boxclip"},
    {DetectorKind::MmseExact, "mmse-exact"}, {DetectorKind::ZfExact, "zf-exact"},
    {DetectorKind::MfExact, "mf-exact"},    {DetectorKind::BoxCvx, "box-cvx"},
};

TuningPolicy adaptive_policy(TuningMode tuning) {
  if (tuning == TuningMode::Fixed)
    throw std::invalid_argument("detector tuning must be optimal or matched");
  return {tuning, 0.0};
}

template <class T>
AmpDetector amp_detector(DetectorKind k, const BasicConstellation<T>& prior, TuningMode tuning) {
  constexpr bool real = std::is_same_v<T, double>;
  const Field field = real ? Field::Real : Field::Complex;
  const double energy = prior.moments().energy;
  auto alpha = [&] {
    if constexpr (real)
      return prior.alpha();
    else
      return real_decompose(prior).alpha();
  };
  switch (k) {
    case DetectorKind::Lama:
      return {Denoiser::discrete(prior), TuningPolicy::matched()};
    case DetectorKind::Gauss:
      return {Denoiser::gaussian(energy, field), adaptive_policy(tuning)};
    case DetectorKind::GaussZf:
      return {Denoiser::gaussian(energy, field), TuningPolicy::limit_zero()};
    case DetectorKind::GaussMf:
      return {Denoiser::gaussian(energy, field), TuningPolicy::limit_infinity()};
    case DetectorKind::Hypercube:
      return {Denoiser::hypercube(alpha()), adaptive_policy(tuning)};
    case DetectorKind::BoxClip:
      return {Denoiser::boxclip(alpha()), TuningPolicy::limit_zero()};
    default:
      break;
  }
  throw std::invalid_argument("detector '" + std::string(detector_label(k)) +
                              "' is not an AMP detector");
}

template <class T>
std::optional<double> prediction(DetectorKind k, const BasicConstellation<T>& prior, double beta,
                                 double n0, int t_max, TuningMode tuning) {
  const auto m = prior.moments();
  if constexpr (std::is_same_v<T, cdouble>) {
    if (!prior.separable()) return std::nullopt;
  }
  auto fixed_point_ser = [&](DetectorKind amp_kind) -> std::optional<double> {
    const auto det = amp_detector(amp_kind, prior, tuning);
    const SeModel model(prior, det.denoiser, det.policy);
    const auto fp = fixed_point(beta, n0, model);
    if (!std::isfinite(fp.converged_to)) return std::nullopt;
    return ser_prediction(fp.converged_to, prior);
  };
  switch (k) {
    case DetectorKind::MmseExact:
      return fixed_point_ser(DetectorKind::Gauss);
    case DetectorKind::ZfExact:
      if (beta >= 1.0) return std::nullopt;
      return ser_prediction(n0 / (1.0 - beta), prior);
    case DetectorKind::MfExact:
      return ser_prediction(n0 + beta * m.variance, prior);
    case DetectorKind::BoxCvx:
      if (beta >= 2.0) return std::nullopt;
      return fixed_point_ser(DetectorKind::BoxClip);
    default: {
      const auto det = amp_detector(k, prior, tuning);
      const SeModel model(prior, det.denoiser, det.policy);
      const auto tr = run_se(beta, n0, model, t_max);
      return ser_prediction(tr.sigma_sq.back(), prior);
    }
  }
}

}  // namespace

std::string_view detector_label(DetectorKind k) {
  for (const auto& e : kRegistry)
    if (e.kind == k) return e.label;
  return "?";
}

std::optional<DetectorKind> parse_detector(std::string_view label) {
  for (const auto& e : kRegistry)
    if (e.label == label) return e.kind;
  return std::nullopt;
}

const std::vector<DetectorKind>& all_detectors() {
  static const std::vector<DetectorKind> all = [] {
    std::vector<DetectorKind> v;
    for (const auto& e : kRegistry) v.push_back(e.kind);
    return v;
  }();
  return all;
}

bool is_amp_detector(DetectorKind k) {
  switch (k) {
    case DetectorKind::Lama:
    case DetectorKind::Gauss:
    case DetectorKind::GaussZf:
    case DetectorKind::GaussMf:
    case DetectorKind::Hypercube:
    case DetectorKind::BoxClip:
      return true;
    default:
      return false;
  }
}

AmpDetector make_amp_detector(DetectorKind k, const Constellation& prior, TuningMode tuning) {
  return amp_detector(k, prior, tuning);
}

AmpDetector make_amp_detector(DetectorKind k, const RealConstellation& prior, TuningMode tuning) {
  return amp_detector(k, prior, tuning);
}

std::optional<double> se_ser_prediction(DetectorKind k, const Constellation& prior, double beta,
                                        double n0, int t_max, TuningMode tuning) {
  return prediction(k, prior, beta, n0, t_max, tuning);
}

std::optional<double> se_ser_prediction(DetectorKind k, const RealConstellation& prior,
                                        double beta, double n0, int t_max, TuningMode tuning) {
  return prediction(k, prior, beta, n0, t_max, tuning);
}

// ---------------------------------------------------------------------------
// Sweeps

double noise_variance_for_snr(double snr_db, double beta, double energy) {
  return beta * energy / std::pow(10.0, snr_db / 10.0);
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MLAMA_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

template <class T>
MimoInstanceT<T> make_instance(int mt, int mr, const BasicConstellation<T>& c, double n0,
                               std::uint64_t seed) {
  return generate<T>(mt, mr, c, n0, seed);
}

template <class T>
std::pair<std::uint64_t, bool> count_errors(DetectorKind k, const MimoInstanceT<T>& inst,
                                            const BasicConstellation<T>& prior,
                                            const std::vector<std::optional<AmpDetector>>& amp,
                                            std::size_t slot, const SweepConfig& cfg) {
  std::vector<std::size_t> decisions;
  bool flagged = false;
  if (is_amp_detector(k)) {
    AmpOptions opt;
    opt.t_max = cfg.t_max;
    opt.store_vectors = false;
    const auto tr = run_amp(inst, amp[slot]->denoiser, amp[slot]->policy, prior, opt);
    decisions = tr.decisions;
    flagged = tr.tuning_flagged;
  } else {
    DetectionT<T> det;
    switch (k) {
      case DetectorKind::MmseExact: det = mmse_exact(inst, prior); break;
      case DetectorKind::ZfExact: det = zf_exact(inst, prior); break;
      case DetectorKind::MfExact: det = mf_exact(inst, prior); break;
      case DetectorKind::BoxCvx: det = box_detector(inst, prior, cfg.box_max_iters, cfg.box_tol); break;
      default: throw std::logic_error("unhandled detector");
    }
    decisions = std::move(det.decisions);
    flagged = det.flagged;
  }
  std::uint64_t errors = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i)
    if (decisions[i] != inst.index[i]) ++errors;
  return {errors, flagged};
}

template <class T>
SerResult sweep(const SweepConfig& cfg, const BasicConstellation<T>& prior) {
  if (cfg.trials < 1) throw std::invalid_argument("ser_sweep: trials must be >= 1");
  if (cfg.snr_db.empty()) throw std::invalid_argument("ser_sweep: empty SNR grid");
  if (cfg.detectors.empty()) throw std::invalid_argument("ser_sweep: no detectors");
  if (cfg.mt < 1 || cfg.mr < 1) throw std::invalid_argument("ser_sweep: MT and MR must be >= 1");

  SerResult res;
  res.beta = static_cast<double>(cfg.mt) / cfg.mr;
  res.energy = prior.moments().energy;
  res.constellation = prior.label();
  res.real_mode = std::is_same_v<T, double>;

  std::vector<std::optional<AmpDetector>> amp;
  for (auto k : cfg.detectors)
    amp.push_back(is_amp_detector(k) ? std::optional(amp_detector(k, prior, cfg.tuning))
                                     : std::nullopt);

  const int threads = resolve_threads(cfg.threads);
  const std::size_t nd = cfg.detectors.size();
  for (std::size_t si = 0; si < cfg.snr_db.size(); ++si) {
    const double n0 = noise_variance_for_snr(cfg.snr_db[si], res.beta, res.energy);
    std::vector<std::uint64_t> errors(nd * cfg.trials, 0), flags(nd * cfg.trials, 0);
    parallel_for(static_cast<std::size_t>(cfg.trials), threads, [&](std::size_t trial) {
      const auto inst = make_instance<T>(cfg.mt, cfg.mr, prior, n0, derive_seed(cfg.seed, si, trial));
      for (std::size_t d = 0; d < nd; ++d) {
        const auto [e, f] = count_errors(cfg.detectors[d], inst, prior, amp, d, cfg);
        errors[d * cfg.trials + trial] = e;
        flags[d * cfg.trials + trial] = f ? 1 : 0;
      }
    });
    for (std::size_t d = 0; d < nd; ++d) {
      SerRow row;
      row.detector = std::string(detector_label(cfg.detectors[d]));
      row.snr_db = cfg.snr_db[si];
      row.n0 = n0;
      row.trials = static_cast<std::uint64_t>(cfg.trials);
      row.symbols = row.trials * static_cast<std::uint64_t>(cfg.mt);
      for (int t = 0; t < cfg.trials; ++t) {
        row.errors += errors[d * cfg.trials + t];
        row.flagged += flags[d * cfg.trials + t];
      }
      row.ser = static_cast<double>(row.errors) / static_cast<double>(row.symbols);
      const auto ci = wilson_interval(row.errors, row.symbols);
      row.ci_low = ci.low;
      row.ci_high = ci.high;
      if (cfg.se_prediction)
        row.se_prediction = prediction(cfg.detectors[d], prior, res.beta, n0, cfg.t_max, cfg.tuning);
      res.rows.push_back(std::move(row));
    }
  }
  return res;
}

template <class T>
DecouplingReport decoupling(int mt, int mr, const BasicConstellation<T>& prior, double n0,
                            const Denoiser& d, const TuningPolicy& policy, int t_max, int trials,
                            std::uint64_t seed, int threads) {
  if (trials < 1) throw std::invalid_argument("decoupling_check: trials must be >= 1");
  const double beta = static_cast<double>(mt) / mr;
  const SeModel model(prior, d, policy);
  const auto se = run_se(beta, n0, model, t_max);

  const std::size_t steps = static_cast<std::size_t>(t_max) + 1;
  std::vector<double> sig(trials * steps, 0.0), zerr(trials * steps, 0.0);
  parallel_for(static_cast<std::size_t>(trials), resolve_threads(threads), [&](std::size_t trial) {
    const auto inst = make_instance<T>(mt, mr, prior, n0, derive_seed(seed, 0, trial));
    AmpOptions opt;
    opt.t_max = t_max;
    const auto tr = run_amp(inst, d, policy, prior, opt);
    for (std::size_t t = 0; t < steps; ++t) {
      sig[trial * steps + t] = tr.sigma_hat_sq[t];
      const Vec<T> z = tr.s[t] + inst.H.adjoint() * tr.r[t];
      zerr[trial * steps + t] = (z - inst.s0).squaredNorm() / static_cast<double>(mt);
    }
  });

  DecouplingReport rep;
  rep.se_sigma_sq = se.sigma_sq;
  for (std::size_t t = 0; t < steps; ++t) {
    double a = 0.0, b = 0.0;
    for (int k = 0; k < trials; ++k) {
      a += sig[k * steps + t];
      b += zerr[k * steps + t];
    }
    a /= trials;
    b /= trials;
    rep.sigma_hat_sq.push_back(a);
    rep.z_error_var.push_back(b);
    rep.dev_sigma_hat.push_back(std::abs(a - se.sigma_sq[t]) / se.sigma_sq[t]);
    rep.dev_z_error.push_back(std::abs(b - se.sigma_sq[t]) / se.sigma_sq[t]);
    rep.max_dev_sigma_hat = std::max(rep.max_dev_sigma_hat, rep.dev_sigma_hat.back());
    rep.max_dev_z_error = std::max(rep.max_dev_z_error, rep.dev_z_error.back());
  }
  return rep;
}

}  // namespace

SerResult ser_sweep(const SweepConfig& config) {
  return std::visit([&](const auto& prior) { return sweep(config, prior); }, config.prior);
}

DecouplingReport decoupling_check(int mt, int mr, const Constellation& prior, double n0,
                                  const Denoiser& d, const TuningPolicy& policy, int t_max,
                                  int trials, std::uint64_t seed, int threads) {
  return decoupling(mt, mr, prior, n0, d, policy, t_max, trials, seed, threads);
}

DecouplingReport decoupling_check(int mt, int mr, const RealConstellation& prior, double n0,
                                  const Denoiser& d, const TuningPolicy& policy, int t_max,
                                  int trials, std::uint64_t seed, int threads) {
  return decoupling(mt, mr, prior, n0, d, policy, t_max, trials, seed, threads);
}

}  // namespace mlama
