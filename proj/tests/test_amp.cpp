#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mlama/amp.hpp"
#include "mlama/sim.hpp"
#include "mlama/special.hpp"

using namespace mlama;

namespace {

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return v;
}

}  // namespace

TEST_CASE("initial state") {
  const auto q = make_qam(4);
  const auto inst = gen_instance(4, 8, q, 0.1, 1);
  const auto st = init_state(inst, q);
  CHECK(st.s.cwiseAbs().maxCoeff() == 0.0);
  CHECK((st.r - inst.y).norm() == 0.0);

  const RealConstellation biased({-1.0, 1.0}, {0.25, 0.75}, "biased");
  const auto ri = gen_real_instance(5, 10, biased, 0.1, 2);
  const auto rs = init_state(ri, biased);
  for (Eigen::Index i = 0; i < rs.s.size(); ++i) CHECK(rs.s[i] == 0.5);
  CHECK((rs.r - (ri.y - ri.H * Vec<double>::Constant(5, 0.5))).norm() < 1e-14);

  auto zero = inst;
  zero.y.setZero();
  CHECK(init_state(zero, q).r.norm() == 0.0);

  auto bad = inst;
  bad.y.resize(3);
  CHECK_THROWS_AS(init_state(bad, q), std::invalid_argument);
}

TEST_CASE("decoupled variance estimate") {
  CHECK(estimate_decoupled_variance<cdouble>(Vec<cdouble>::Zero(6), 6) == 0.0);
  Vec<cdouble> r(4);
  r << cdouble(1, 0), cdouble(0, 1), cdouble(-1, 0), cdouble(0, -1);
  CHECK(estimate_decoupled_variance<cdouble>(r, 4) == 1.0);

  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  Vec<cdouble> big(4096);
  for (auto& v : big) v = {n(rng), n(rng)};  // CN(0, 2)
  CHECK(std::abs(estimate_decoupled_variance<cdouble>(big, 4096) - 2.0) < 0.1);
  CHECK_THROWS_AS(estimate_decoupled_variance<cdouble>(r, 0), std::invalid_argument);
}

TEST_CASE("tuning rules") {
  const auto q = make_qam(4);
  CHECK(tune_tau(0.3, Denoiser::gaussian(2.0), q, TuningPolicy::optimal()).tau ==
        doctest::Approx(0.3).epsilon(1e-15));
  CHECK(tune_tau(0.3, Denoiser::discrete(q), q, TuningPolicy::optimal()).tau ==
        doctest::Approx(0.3).epsilon(1e-4 / 0.3));
  CHECK(tune_tau(0.3, Denoiser::discrete(q), q, TuningPolicy::matched()).tau == 0.3);
  CHECK(tune_tau(0.3, Denoiser::hypercube(1.0), q, TuningPolicy::fixed(0.7)).tau == 0.7);
  CHECK(tune_tau(0.3, Denoiser::gaussian(2.0), q, TuningPolicy::limit_infinity()).tau ==
        std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(tune_tau(-0.1, Denoiser::gaussian(2.0), q, TuningPolicy::optimal()),
                  std::invalid_argument);
}

TEST_CASE("hypercube tuning against an exhaustive grid") {
  const auto bpsk = make_pam(2);
  const auto d = Denoiser::hypercube(1.0);
  const double s2 = 0.25;
  const auto tuned = tune_tau(s2, d, bpsk, TuningPolicy::optimal());
  CHECK_FALSE(tuned.flagged);
  const SeModel m(bpsk, d, TuningPolicy::optimal());
  double best = std::numeric_limits<double>::infinity(), best_tau = 0.0;
  for (double g : log_grid(1e-6, 1e2, 2000)) {
    const double v = m.psi(s2, g);
    if (v < best) best = v, best_tau = g;
  }
  CHECK(tuned.objective <= best + 1e-12);
  CHECK(std::abs(std::log(tuned.tau / best_tau)) < 0.01);
}

TEST_CASE("noiseless identity channel with the clip") {
  const auto q = make_qam(4);
  MimoInstance inst;
  inst.H = Mat<cdouble>::Identity(4, 4);
  inst.s0.resize(4);
  inst.s0 << cdouble(1, 1), cdouble(-1, 1), cdouble(1, -1), cdouble(-1, -1);
  inst.y = inst.s0;
  const auto d = Denoiser::boxclip(1.0);
  const auto step = amp_step(init_state(inst, q), inst, d, 0.0);
  CHECK((step.next.s - inst.s0).norm() == 0.0);
  // Every entry of z sits on the box edge, where the derivative is 1, so the
  // Onsager term carries r^1 = y over unchanged.
  CHECK(step.divergence == 1.0);
  CHECK((step.next.r - inst.s0).norm() == 0.0);
  // Next step: z = 2 s0 lies outside the box, the divergence vanishes and
  // the residual is exactly zero.
  const auto step2 = amp_step(step.next, inst, d, 0.0);
  CHECK((step2.next.s - inst.s0).norm() == 0.0);
  CHECK(step2.next.r.norm() == 0.0);
}

TEST_CASE("gaussian onsager term is input independent") {
  const auto q = make_qam(4);
  const auto inst = gen_instance(16, 32, q, 0.5, 3);
  const auto d = Denoiser::gaussian(2.0);
  auto st = init_state(inst, q);
  for (double tau : {0.1, 1.0, 5.0}) {
    const auto step = amp_step(st, inst, d, tau);
    CHECK(step.divergence == doctest::Approx(2.0 / (2.0 + tau)).epsilon(1e-15));
    st = step.next;
  }
}

TEST_CASE("one step equals a direct transcription of the update") {
  const auto q = make_qam(4);
  const auto inst = gen_instance(4, 8, q, 0.3, 2024);
  const auto d = Denoiser::discrete(q);
  const double tau = 0.4;
  const auto st = init_state(inst, q);
  const auto step = amp_step(st, inst, d, tau);

  // Plain loops, posterior mean and its derivative from the definition.
  const int mt = 4, mr = 8;
  std::vector<cdouble> z(mt), s(mt);
  double div = 0.0;
  for (int j = 0; j < mt; ++j) {
    cdouble acc = st.s[j];
    for (int i = 0; i < mr; ++i) acc += std::conj(inst.H(i, j)) * st.r[i];
    z[j] = acc;
    double wsum = 0.0;
    cdouble m1 = 0.0;
    double m2 = 0.0;
    for (const auto& a : q.symbols()) {
      const double w = std::exp(-std::norm(acc - a) / tau);
      wsum += w;
      m1 += w * a;
      m2 += w * std::norm(a);
    }
    s[j] = m1 / wsum;
    div += (m2 / wsum - std::norm(s[j])) / tau;
  }
  div /= mt;
  CHECK(step.divergence == doctest::Approx(div).epsilon(1e-13));
  for (int j = 0; j < mt; ++j) {
    CHECK(std::abs(step.z[j] - z[j]) < 1e-13);
    CHECK(std::abs(step.next.s[j] - s[j]) < 1e-13);
  }
  for (int i = 0; i < mr; ++i) {
    cdouble hs = 0.0;
    for (int j = 0; j < mt; ++j) hs += inst.H(i, j) * s[j];
    const cdouble r = inst.y[i] - hs + 0.5 * div * st.r[i];
    CHECK(std::abs(step.next.r[i] - r) < 1e-13);
  }
}

TEST_CASE("non-finite state is reported") {
  const auto q = make_qam(4);
  auto inst = gen_instance(4, 8, q, 0.1, 5);
  inst.y[0] = cdouble(std::numeric_limits<double>::quiet_NaN(), 0.0);
  CHECK_THROWS_AS(run_amp(inst, Denoiser::gaussian(2.0), TuningPolicy::matched(), q),
                  NumericalError);
}

TEST_CASE("trace shape and invariants") {
  const auto q = make_qam(4);
  const auto inst = gen_instance(32, 64, q, 0.2, 8);
  AmpOptions opt;
  opt.t_max = 7;
  const auto tr = run_amp(inst, Denoiser::hypercube(1.0), TuningPolicy::optimal(), q, opt);
  CHECK(tr.iterations == 7);
  CHECK(tr.s.size() == 8);
  CHECK(tr.r.size() == 8);
  CHECK(tr.sigma_hat_sq.size() == 8);
  CHECK(tr.tau.size() == 7);
  CHECK(tr.divergence.size() == 7);
  for (const auto& v : tr.s) CHECK(v.size() == 32);
  for (const auto& v : tr.r) CHECK(v.size() == 64);
  for (double v : tr.sigma_hat_sq) CHECK(v >= 0.0);
  CHECK(tr.decisions.size() == 32);
  CHECK_THROWS_AS(run_amp(inst, Denoiser::gaussian(2.0), TuningPolicy::optimal(), q,
                          AmpOptions{0, true, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("high SNR detection is error free") {
  const auto q = make_qam(4);
  const double n0 = noise_variance_for_snr(20.0, 0.5, 2.0);
  int clean = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = gen_instance(64, 128, q, n0, derive_seed(4, 0, trial));
    const auto tr = run_amp(inst, Denoiser::discrete(q), TuningPolicy::matched(), q);
    clean += tr.decisions == inst.index;
  }
  CHECK(clean >= 19);
}

TEST_CASE("very low SNR approaches random guessing") {
  const auto q = make_qam(4);
  std::uint64_t errors = 0, total = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = gen_instance(64, 128, q, 1e6, derive_seed(6, 0, trial));
    const auto tr = run_amp(inst, Denoiser::discrete(q), TuningPolicy::matched(), q);
    for (std::size_t i = 0; i < inst.index.size(); ++i) errors += tr.decisions[i] != inst.index[i];
    total += inst.index.size();
  }
  CHECK(static_cast<double>(errors) / total == doctest::Approx(0.75).epsilon(0.05 / 0.75));
}

TEST_CASE("runs are bit-identical") {
  const auto q = make_qam(16);
  const auto a = gen_instance(16, 32, q, 0.5, 77);
  const auto b = gen_instance(16, 32, q, 0.5, 77);
  CHECK(a.H == b.H);
  CHECK(a.y == b.y);
  const auto ta = run_amp(a, Denoiser::hypercube(3.0), TuningPolicy::optimal(), q);
  const auto tb = run_amp(b, Denoiser::hypercube(3.0), TuningPolicy::optimal(), q);
  CHECK(ta.sigma_hat_sq == tb.sigma_hat_sq);
  CHECK(ta.tau == tb.tau);
  CHECK(ta.z_final == tb.z_final);
}

TEST_CASE("matched lama follows the unmismatched state evolution") {
  const auto q = make_qam(4);
  const int mt = 256, mr = 512, trials = 20, t_max = 6;
  const double n0 = 0.3;
  const auto d = Denoiser::discrete(q);
  const auto rep = decoupling_check(mt, mr, q, n0, d, TuningPolicy::matched(), t_max, trials, 12, 1);
  for (std::size_t t = 0; t < rep.dev_sigma_hat.size(); ++t) {
    INFO("t=", t + 1);
    CHECK(rep.dev_sigma_hat[t] < 0.05);
  }
}

TEST_CASE("real-valued mode") {
  const auto bpsk = make_pam(2);
  const auto inst = gen_real_instance(64, 128, bpsk, 0.01, 31);
  const auto tr = run_amp(inst, Denoiser::boxclip(1.0), TuningPolicy::limit_zero(), bpsk);
  CHECK(tr.decisions == inst.index);
  CHECK_THROWS_AS(run_amp(inst, Denoiser::gaussian(1.0), TuningPolicy::optimal(), bpsk),
                  std::invalid_argument);
  CHECK_NOTHROW(run_amp(inst, Denoiser::gaussian(1.0, Field::Real), TuningPolicy::optimal(), bpsk));
}
