// Acceptance suite: one PASS/FAIL line per criterion, details indented below.
//
//   acceptance            run every criterion
//   acceptance 1 4 7      run a subset
//
// Exit status is 0 only if every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mlama/amp.hpp"
#include "mlama/constellation.hpp"
#include "mlama/denoiser.hpp"
#include "mlama/sim.hpp"
#include "mlama/special.hpp"
#include "mlama/state_evolution.hpp"

using namespace mlama;

namespace {

// Pinned tolerances and workloads.
constexpr double kMrtTol = 1e-3;
constexpr double kQuadTol = 1e-7;
constexpr int kQuadPoints = 50;
constexpr double kIdentityTol = 1e-10;
constexpr double kBoxFixedPointTol = 1e-8;
constexpr double kGaussRootTol = 1e-7;
constexpr double kLinearTol = 1e-12;

constexpr int kDecouplingMt = 512;
constexpr int kDecouplingMr = 1024;
constexpr double kDecouplingN0 = 0.1;  // 10 dB receive SNR for QPSK at beta = 0.5
constexpr int kDecouplingTrials = 200;
constexpr double kDecouplingTol = 0.05;

constexpr int kFigMt = 64;
constexpr int kFigMr = 128;
constexpr int kFigTrials = 1563;  // 1563 * 64 >= 1e5 symbols per SNR point
constexpr double kFigGapTol = 1.5;
constexpr double kFigTarget = 1e-3;

constexpr int kEquivMt = 256;
constexpr int kEquivMr = 512;
constexpr int kEquivTrials = 400;  // 400 * 256 >= 1e5 symbols per SNR point

struct Outcome {
  bool pass = true;
  std::vector<std::string> lines;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back((ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { lines.push_back("     " + what); }
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return v;
}

Constellation unit_qpsk() {
  const double a = 1.0 / std::numbers::sqrt2;
  return Constellation({{a, a}, {a, -a}, {-a, a}, {-a, -a}}, {0.25, 0.25, 0.25, 0.25}, "QPSK1");
}

bool intervals_overlap(double lo1, double hi1, double lo2, double hi2) {
  return lo1 <= hi2 && lo2 <= hi1;
}

/// SNR where log10(SER) crosses log10(target), interpolated linearly
/// between the first bracketing pair of grid points.
std::optional<double> crossing(const std::vector<double>& snr, const std::vector<double>& ser,
                               double target) {
  for (std::size_t i = 0; i + 1 < snr.size(); ++i) {
    if (ser[i] >= target && ser[i + 1] < target) {
      if (ser[i + 1] <= 0.0) return snr[i + 1];
      const double a = std::log10(ser[i]), b = std::log10(ser[i + 1]), t = std::log10(target);
      return snr[i] + (snr[i + 1] - snr[i]) * (a - t) / (a - b);
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

Outcome mrt_values() {
  Outcome o;
  const double qpsk = mrt(SeModel(make_qam(4), Denoiser::boxclip(1.0), TuningPolicy::limit_zero()));
  const double q16 = mrt(SeModel(make_qam(16), Denoiser::boxclip(3.0), TuningPolicy::limit_zero()));
  const double gauss =
      mrt(SeModel(make_qam(4), Denoiser::gaussian(2.0), TuningPolicy::optimal()));
  o.require(std::abs(qpsk - 2.0) <= kMrtTol, fmt("boxclip QPSK   mrt = %.6f (target 2)", qpsk));
  o.require(std::abs(q16 - 4.0 / 3.0) <= kMrtTol,
            fmt("boxclip 16QAM  mrt = %.6f (target 4/3)", q16));
  o.require(std::abs(gauss - 1.0) <= kMrtTol, fmt("gauss optimal  mrt = %.6f (target 1)", gauss));
  return o;
}

Outcome quadrature_vs_closed_forms() {
  Outcome o;
  const auto grid = log_grid(1e-3, 10.0, kQuadPoints);
  for (int m : {2, 4}) {
    const auto box = Denoiser::boxclip(m - 1.0);
    double worst_pam = 0.0, worst_qam = 0.0;
    for (double s2 : grid) {
      worst_pam = std::max(worst_pam,
                           std::abs(psi_numeric(s2, 0.0, make_pam(m), box) - psi_pam_closed(s2, m)));
      worst_qam = std::max(worst_qam, std::abs(psi_numeric(s2, 0.0, make_qam(m * m), box) -
                                               psi_qam_closed(s2, m)));
    }
    o.require(worst_pam < kQuadTol, fmt("M=%d PAM  max |numeric - closed| = %.3e", m, worst_pam));
    o.require(worst_qam < kQuadTol, fmt("M=%d QAM  max |numeric - closed| = %.3e", m, worst_qam));
  }
  o.note(fmt("%d sigma^2 points log-spaced on [1e-3, 10]", kQuadPoints));
  return o;
}

Outcome box_relaxation_identity() {
  Outcome o;
  double worst = 0.0;
  for (double t2 : log_grid(1e-3, 10.0, 400))
    worst = std::max(worst, std::abs(box_relaxation_psi(t2) - psi_pam_closed(t2, 2)));
  o.require(worst <= kIdentityTol,
            fmt("max |Psi_box(tau^2) - Psi_PAM2(tau^2)| over 400 points = %.3e", worst));
  const SeModel bpsk(make_pam(2), Denoiser::boxclip(1.0), TuningPolicy::limit_zero());
  for (double beta : {0.5, 1.0, 1.5}) {
    for (double n0 : {0.01, 0.1, 1.0}) {
      const auto b = box_relaxation_tau(beta, n0);
      const double fp = fixed_point(beta, n0, bpsk).converged_to;
      o.require(std::abs(b.tau_sq - fp) <= kBoxFixedPointTol,
                fmt("beta=%.1f N0=%-5g tau*^2=%.12f fixed point=%.12f diff=%.2e", beta, n0,
                    b.tau_sq, fp, std::abs(b.tau_sq - fp)));
    }
  }
  return o;
}

Outcome linear_fixed_points() {
  Outcome o;
  const auto q1 = unit_qpsk();
  const SeModel gauss(q1, Denoiser::gaussian(1.0), TuningPolicy::optimal());
  const SeModel zf(q1, Denoiser::gaussian(1.0), TuningPolicy::limit_zero());
  const SeModel mf(q1, Denoiser::gaussian(1.0), TuningPolicy::limit_infinity());
  // Reference example: positive root of x^2 + 0.4 x - 0.1.
  const double example = (-0.4 + std::sqrt(0.56)) / 2.0;
  const auto ex = run_se(0.5, 0.1, gauss, 100);
  o.require(std::abs(ex.sigma_sq.back() - example) <= kGaussRootTol,
            fmt("beta=0.5 N0=0.1 run_se -> %.10f (root %.10f)", ex.sigma_sq.back(), example));
  double worst_gauss = 0.0, worst_zf = 0.0, worst_mf = 0.0;
  for (double beta : {0.25, 0.5, 0.75}) {
    for (double n0 : {0.01, 0.1, 1.0}) {
      // sigma^2 = N0 + beta sigma^2 / (1 + sigma^2) with Es = 1.
      const double b = (1.0 - beta) - n0;
      const double root = 0.5 * (-b + std::sqrt(b * b + 4.0 * n0));
      const auto tr = run_se(beta, n0, gauss, 400);
      worst_gauss = std::max(worst_gauss, std::abs(tr.sigma_sq.back() - root));
      worst_zf =
          std::max(worst_zf, std::abs(fixed_point(beta, n0, zf).converged_to - n0 / (1.0 - beta)));
      worst_mf = std::max(worst_mf, std::abs(fixed_point(beta, n0, mf).converged_to - (n0 + beta)));
    }
  }
  o.require(worst_gauss <= kGaussRootTol,
            fmt("gauss: max |run_se - quadratic root| over 9 (beta, N0) = %.3e", worst_gauss));
  o.require(worst_zf <= kLinearTol, fmt("zf:    max |fixed point - N0/(1-beta)| = %.3e", worst_zf));
  o.require(worst_mf <= kLinearTol, fmt("mf:    max |fixed point - (N0+beta Var)| = %.3e", worst_mf));
  return o;
}

Outcome decoupling() {
  Outcome o;
  const auto q = make_qam(4);
  const int threads = resolve_threads(0);
  o.note(fmt("MT=%d MR=%d QPSK N0=%g trials=%d t<=10 threads=%d", kDecouplingMt, kDecouplingMr,
             kDecouplingN0, kDecouplingTrials, threads));
  std::uint64_t seed = 101;
  for (auto kind : {DetectorKind::Lama, DetectorKind::Gauss, DetectorKind::Hypercube,
                    DetectorKind::BoxClip}) {
    const auto det = make_amp_detector(kind, q);
    const auto rep = decoupling_check(kDecouplingMt, kDecouplingMr, q, kDecouplingN0, det.denoiser,
                                      det.policy, 10, kDecouplingTrials, seed++, threads);
    // sigma_hat^2 at t = 1 .. 10 (the last entry, t = 11, is outside the range).
    double worst = 0.0;
    int worst_t = 0;
    for (int t = 0; t < 10; ++t) {
      if (rep.dev_sigma_hat[t] > worst) {
        worst = rep.dev_sigma_hat[t];
        worst_t = t + 1;
      }
    }
    o.require(worst <= kDecouplingTol,
              fmt("%-9s max rel dev %.4f at t=%d  (SE %.5f -> %.5f)",
                  std::string(detector_label(kind)).c_str(), worst, worst_t, rep.se_sigma_sq[0],
                  rep.se_sigma_sq[9]));
  }
  return o;
}

Outcome ser_curves() {
  Outcome o;
  SweepConfig cfg;
  cfg.mt = kFigMt;
  cfg.mr = kFigMr;
  cfg.prior = make_qam(4);
  cfg.detectors = {DetectorKind::Lama, DetectorKind::Gauss, DetectorKind::BoxClip,
                   DetectorKind::MmseExact};
  cfg.t_max = 10;
  for (double s = 4.0; s <= 11.0; s += 1.0) cfg.snr_db.push_back(s);
  cfg.trials = kFigTrials;
  cfg.seed = 2024;
  cfg.threads = resolve_threads(0);
  const auto res = ser_sweep(cfg);

  const std::size_t nd = cfg.detectors.size();
  std::vector<double> lama, box;
  o.note(fmt("128x64 QPSK, %d trials (%d symbols) per SNR point", kFigTrials, kFigTrials * kFigMt));
  o.note("snr  lama        gauss       boxclip     mmse-exact");
  bool all_overlap = true;
  for (std::size_t i = 0; i < cfg.snr_db.size(); ++i) {
    const auto& rl = res.rows[i * nd + 0];
    const auto& rg = res.rows[i * nd + 1];
    const auto& rb = res.rows[i * nd + 2];
    const auto& rm = res.rows[i * nd + 3];
    lama.push_back(rl.ser);
    box.push_back(rb.ser);
    const bool ov = intervals_overlap(rg.ci_low, rg.ci_high, rm.ci_low, rm.ci_high);
    all_overlap = all_overlap && ov;
    o.note(fmt("%4.1f %.4e  %.4e  %.4e  %.4e%s", cfg.snr_db[i], rl.ser, rg.ser, rb.ser, rm.ser,
               ov ? "" : "  (gauss/mmse CIs disjoint)"));
  }
  o.require(all_overlap, "(a) gauss and mmse-exact 95% CIs overlap at every SNR point");
  const auto cl = crossing(cfg.snr_db, lama, kFigTarget);
  const auto cb = crossing(cfg.snr_db, box, kFigTarget);
  if (!cl || !cb) {
    o.require(false, "(b) SER = 1e-3 not bracketed by the SNR grid");
  } else {
    o.require(*cb - *cl <= kFigGapTol,
              fmt("(b) SER=1e-3 at lama %.3f dB, boxclip %.3f dB, gap %.3f dB (limit %.1f)", *cl,
                  *cb, *cb - *cl, kFigGapTol));
  }
  return o;
}

Outcome box_equivalence() {
  Outcome o;
  SweepConfig cfg;
  cfg.mt = kEquivMt;
  cfg.mr = kEquivMr;
  cfg.prior = make_pam(2);
  cfg.detectors = {DetectorKind::BoxCvx, DetectorKind::BoxClip};
  cfg.t_max = 10;
  cfg.snr_db = {2.0, 3.0, 4.0, 5.0, 6.0, 7.0};
  cfg.trials = kEquivTrials;
  cfg.seed = 77;
  cfg.threads = resolve_threads(0);
  const auto res = ser_sweep(cfg);
  const double beta = static_cast<double>(kEquivMt) / kEquivMr;
  o.note(fmt("real BPSK, MT=%d MR=%d, %d trials per SNR point", kEquivMt, kEquivMr, kEquivTrials));
  o.note("snr  Q(1/tau*)   box-cvx [95% CI]               boxclip [95% CI]");
  for (std::size_t i = 0; i < cfg.snr_db.size(); ++i) {
    const auto& rc = res.rows[2 * i];
    const auto& ra = res.rows[2 * i + 1];
    const double pred = q_function(1.0 / box_relaxation_tau(beta, rc.n0).tau);
    const bool ok = intervals_overlap(rc.ci_low, rc.ci_high, ra.ci_low, ra.ci_high) &&
                    rc.ci_low <= pred && pred <= rc.ci_high && ra.ci_low <= pred &&
                    pred <= ra.ci_high;
    o.require(ok, fmt("%4.1f %.4e  %.4e [%.4e, %.4e]  %.4e [%.4e, %.4e]%s", cfg.snr_db[i], pred,
                      rc.ser, rc.ci_low, rc.ci_high, ra.ser, ra.ci_low, ra.ci_high,
                      rc.flagged ? fmt("  (%llu box solves flagged)",
                                       static_cast<unsigned long long>(rc.flagged)).c_str()
                                 : ""));
  }
  return o;
}

Outcome property_suites() {
  Outcome o;
  std::mt19937_64 rng(5);

  {  // Derivatives against central differences, complex calls.
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    const std::vector<Denoiser> ds{Denoiser::gaussian(2.0), Denoiser::hypercube(1.0),
                                   Denoiser::hypercube(3.0), Denoiser::discrete(make_qam(4)),
                                   Denoiser::discrete(make_qam(16))};
    double worst = 0.0;
    for (const auto& d : ds) {
      for (double tau : {1e-3, 0.1, 1.0, 10.0}) {
        const double h = 1e-4 * std::min(1.0, tau);
        for (int k = 0; k < 100; ++k) {
          const cdouble z{u(rng), u(rng)};
          const double dr =
              (d(z + cdouble(h, 0), tau).real() - d(z - cdouble(h, 0), tau).real()) / (2.0 * h);
          const double di =
              (d(z + cdouble(0, h), tau).imag() - d(z - cdouble(0, h), tau).imag()) / (2.0 * h);
          const double an = d.derivative(z, tau);
          worst = std::max(worst, std::abs(0.5 * (dr + di) - an) / std::max(1e-2, std::abs(an)));
        }
      }
    }
    o.require(worst <= 1e-4, fmt("derivative vs central difference: worst scaled error %.2e", worst));
  }

  {  // Hypercube -> clip away from the box edge, and the exact edge gap.
    const double tau = 1e-8;
    double worst = 0.0;
    for (int k = -300; k <= 300; ++k) {
      const double x = 0.01 * k + 0.003;
      if (std::abs(std::abs(x) - 1.0) < 1e-3) continue;
      const cdouble z{x, -0.7 * x};
      worst = std::max(worst, std::abs(f_hypercube(z, tau, 1.0) - f_boxclip(z, 1.0)));
    }
    const double edge = 1.0 - f_hypercube({1.0, 0.0}, tau, 1.0).real();
    const double expected = std::sqrt(tau / std::numbers::pi);
    o.require(worst <= 1e-5 && std::abs(edge / expected - 1.0) < 1e-6,
              fmt("hypercube -> clip at tau=1e-8: off-edge max gap %.2e, edge gap %.4e "
                  "(sqrt(tau/pi) = %.4e)",
                  worst, edge, expected));
  }

  {  // Odd symmetry and hull containment.
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    const std::vector<Denoiser> ds{Denoiser::gaussian(2.0), Denoiser::hypercube(1.0),
                                   Denoiser::boxclip(3.0), Denoiser::discrete(make_qam(4)),
                                   Denoiser::discrete(make_qam(16))};
    bool ok = true;
    for (const auto& d : ds) {
      const double a = d.kind() == DenoiserKind::Discrete ? d.scalar_constellation()->alpha()
                                                          : d.alpha();
      for (double tau : {1e-4, 0.3, 5.0}) {
        for (int k = 0; k < 200; ++k) {
          const cdouble z{u(rng), u(rng)};
          const cdouble f = d(z, tau);
          ok = ok && std::abs(d(-z, tau) + f) < 1e-12;
          if (d.kind() != DenoiserKind::Gaussian)
            ok = ok && std::abs(f.real()) <= a + 1e-12 && std::abs(f.imag()) <= a + 1e-12;
        }
      }
    }
    o.require(ok, "odd symmetry and hull containment over 5 denoisers x 3 tau x 200 points");
  }

  {  // Psi* nondecreasing and the SE trace nonincreasing under optimal tuning.
    const auto q4 = make_qam(4);
    const auto q16 = make_qam(16);
    const std::vector<SeModel> models{
        SeModel(q4, Denoiser::gaussian(2.0), TuningPolicy::optimal()),
        SeModel(q16, Denoiser::gaussian(10.0), TuningPolicy::optimal()),
        SeModel(q4, Denoiser::hypercube(1.0), TuningPolicy::optimal()),
        SeModel(q16, Denoiser::boxclip(3.0), TuningPolicy::optimal()),
    };
    bool ok = true;
    for (const auto& m : models) {
      double prev = 0.0;
      for (double s2 : log_grid(1e-4, 1e2, 25)) {
        const double v = m.psi_star(s2).value;
        ok = ok && v >= prev - 1e-9;
        prev = v;
      }
      const auto tr = run_se(0.5, 0.05, m, 15);
      for (std::size_t t = 1; t < tr.sigma_sq.size(); ++t)
        ok = ok && tr.sigma_sq[t] <= tr.sigma_sq[t - 1] * (1.0 + 1e-9);
    }
    o.require(ok, "optimal tuning: Psi* nondecreasing and SE traces nonincreasing (4 models)");
  }

  {  // Real and complex recovery thresholds coincide for separable QAM.
    double worst = 0.0;
    for (int m : {2, 4, 8}) {
      const SeModel cplx(make_qam(m * m), Denoiser::boxclip(m - 1.0), TuningPolicy::limit_zero());
      const SeModel real(make_pam(m), Denoiser::boxclip(m - 1.0), TuningPolicy::limit_zero());
      worst = std::max(worst, std::abs(mrt(cplx) - mrt(real)));
    }
    o.require(worst < 1e-6, fmt("mrt(M^2-QAM) = mrt(M-PAM) for M = 2, 4, 8: max diff %.2e", worst));
  }

  {  // Deterministic reruns, independent of the worker count.
    SweepConfig cfg;
    cfg.mt = 16;
    cfg.mr = 32;
    cfg.prior = make_qam(16);
    cfg.detectors = {DetectorKind::Lama, DetectorKind::Gauss, DetectorKind::BoxClip,
                     DetectorKind::MmseExact};
    cfg.snr_db = {5.0, 15.0};
    cfg.trials = 40;
    cfg.seed = 9;
    cfg.threads = 1;
    const auto a = ser_sweep(cfg);
    cfg.threads = 3;
    const auto b = ser_sweep(cfg);
    bool same = a.rows.size() == b.rows.size();
    for (std::size_t i = 0; same && i < a.rows.size(); ++i)
      same = a.rows[i].errors == b.rows[i].errors && a.rows[i].ser == b.rows[i].ser;
    const auto inst1 = gen_instance(32, 64, make_qam(4), 0.1, 42);
    const auto inst2 = gen_instance(32, 64, make_qam(4), 0.1, 42);
    const auto det = make_amp_detector(DetectorKind::Hypercube, make_qam(4));
    const auto t1 = run_amp(inst1, det.denoiser, det.policy, make_qam(4));
    const auto t2 = run_amp(inst2, det.denoiser, det.policy, make_qam(4));
    same = same && inst1.H == inst2.H && inst1.y == inst2.y && t1.z_final == t2.z_final &&
           t1.sigma_hat_sq == t2.sigma_hat_sq;
    o.require(same, "deterministic reruns: sweeps with 1 and 3 workers and repeated AMP runs agree");
  }
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "minimum recovery thresholds", mrt_values},
      {2, "quadrature vs closed-form clip MSE", quadrature_vs_closed_forms},
      {3, "box-relaxation identity and fixed points", box_relaxation_identity},
      {4, "gaussian, ZF and MF fixed points", linear_fixed_points},
      {5, "decoupled variance tracks state evolution", decoupling},
      {6, "128x64 QPSK SER curves", ser_curves},
      {7, "box relaxation vs boxclip AMP vs Q(1/tau*)", box_equivalence},
      {8, "property suites", property_suites},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end())
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %d %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", c.id, c.name, secs);
    for (const auto& l : out.lines) std::printf("       %s\n", l.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
