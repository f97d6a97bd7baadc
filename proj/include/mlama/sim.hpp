#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mlama/amp.hpp"
#include "mlama/constellation.hpp"
#include "mlama/mimo_instance.hpp"
#include "mlama/state_evolution.hpp"

namespace mlama {

/// Counter-based seed for trial `trial` at SNR index `snr_index`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t snr_index, std::uint64_t trial);

/// H i.i.d. CN(0, 1/MR), s0 drawn from `c`, n i.i.d. CN(0, N0).
MimoInstance gen_instance(int mt, int mr, const Constellation& c, double n0, std::uint64_t seed);
/// Real-valued system: H i.i.d. N(0, 1/MR), n i.i.d. N(0, N0).
RealMimoInstance gen_real_instance(int mt, int mr, const RealConstellation& c, double n0,
                                   std::uint64_t seed);

template <class T>
struct DetectionT {
  Vec<T> soft;
  std::vector<std::size_t> decisions;
  Vec<T> sliced;
  bool flagged = false;  ///< singular system / solver did not converge
  int iterations = 0;
  double objective = 0.0;
};

/// Per-stream unbiased linear MMSE estimate (HᴴH + N0/Es I)⁻¹ Hᴴ y, sliced.
template <class T>
DetectionT<T> mmse_exact(const MimoInstanceT<T>& inst, const BasicConstellation<T>& c);
/// Least-squares (pseudo-inverse) estimate; requires MT <= MR.
template <class T>
DetectionT<T> zf_exact(const MimoInstanceT<T>& inst, const BasicConstellation<T>& c);
/// Hᴴ y, sliced.
template <class T>
DetectionT<T> mf_exact(const MimoInstanceT<T>& inst, const BasicConstellation<T>& c);

/// argmin ||y - H s||  s.t. every real dimension of s lies in [-1, 1],
/// solved by accelerated projected gradient with adaptive restart, then
/// sliced onto `c` (QPSK or BPSK).
template <class T>
DetectionT<T> box_detector(const MimoInstanceT<T>& inst, const BasicConstellation<T>& c,
                           int max_iters = 5000, double tol = 1e-12);

struct WilsonInterval {
  double low;
  double high;
};
WilsonInterval wilson_interval(std::uint64_t successes, std::uint64_t n, double z = 1.959963984540054);

// ---------------------------------------------------------------------------
// Detector registry

enum class DetectorKind {
  Lama,
  Gauss,
  GaussZf,
  GaussMf,
  Hypercube,
  BoxClip,
  MmseExact,
  ZfExact,
  MfExact,
  BoxCvx,
};

std::string_view detector_label(DetectorKind k);
std::optional<DetectorKind> parse_detector(std::string_view label);
const std::vector<DetectorKind>& all_detectors();
bool is_amp_detector(DetectorKind k);

struct AmpDetector {
  Denoiser denoiser;
  TuningPolicy policy;
};

/// Denoiser and tuning behind an AMP detector label. `tuning` applies to
/// gauss and hypercube (Optimal or Matched); lama always uses tau = sigma_hat^2.
AmpDetector make_amp_detector(DetectorKind k, const Constellation& prior,
                              TuningMode tuning = TuningMode::Optimal);
AmpDetector make_amp_detector(DetectorKind k, const RealConstellation& prior,
                              TuningMode tuning = TuningMode::Optimal);

/// Large-system SER for a detector after t_max AMP iterations (fixed point
/// for the exact baselines); nullopt when no prediction exists.
std::optional<double> se_ser_prediction(DetectorKind k, const Constellation& prior, double beta,
                                        double n0, int t_max,
                                        TuningMode tuning = TuningMode::Optimal);
std::optional<double> se_ser_prediction(DetectorKind k, const RealConstellation& prior,
                                        double beta, double n0, int t_max,
                                        TuningMode tuning = TuningMode::Optimal);

// ---------------------------------------------------------------------------
// Sweeps

using Prior = std::variant<Constellation, RealConstellation>;

struct SweepConfig {
  int mt = 64;
  int mr = 128;
  Prior prior = make_qam(4);
  std::vector<DetectorKind> detectors;
  TuningMode tuning = TuningMode::Optimal;
  int t_max = 10;
  std::vector<double> snr_db;
  int trials = 1000;
  std::uint64_t seed = 1;
  int threads = 0;  ///< 0: MLAMA_THREADS or hardware concurrency
  int box_max_iters = 5000;
  double box_tol = 1e-12;
  bool se_prediction = true;
};

struct SerRow {
  std::string detector;
  double snr_db = 0.0;
  double n0 = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t symbols = 0;
  std::uint64_t errors = 0;
  double ser = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::optional<double> se_prediction;
  std::uint64_t flagged = 0;  ///< trials where the detector raised a warning
};

struct SerResult {
  std::vector<SerRow> rows;  ///< SNR-major, detectors in config order
  double beta = 0.0;
  double energy = 0.0;
  std::string constellation;
  bool real_mode = false;
};

/// Receive SNR convention: snr_linear = beta Es / N0.
double noise_variance_for_snr(double snr_db, double beta, double energy);

SerResult ser_sweep(const SweepConfig& config);

/// Worker count: explicit value, else MLAMA_THREADS, else hardware concurrency.
int resolve_threads(int requested);

// ---------------------------------------------------------------------------
// Decoupling

struct DecouplingReport {
  std::vector<double> se_sigma_sq;     ///< t = 1 .. T+1
  std::vector<double> sigma_hat_sq;    ///< trial average of ||r^t||^2 / MR
  std::vector<double> z_error_var;     ///< trial average of mean |z^t - s0|^2
  std::vector<double> dev_sigma_hat;   ///< relative deviation from SE
  std::vector<double> dev_z_error;
  double max_dev_sigma_hat = 0.0;
  double max_dev_z_error = 0.0;
};

DecouplingReport decoupling_check(int mt, int mr, const Constellation& prior, double n0,
                                  const Denoiser& d, const TuningPolicy& policy, int t_max,
                                  int trials, std::uint64_t seed, int threads = 0);
DecouplingReport decoupling_check(int mt, int mr, const RealConstellation& prior, double n0,
                                  const Denoiser& d, const TuningPolicy& policy, int t_max,
                                  int trials, std::uint64_t seed, int threads = 0);

}  // namespace mlama
