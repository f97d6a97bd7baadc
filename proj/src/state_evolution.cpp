#include "mlama/state_evolution.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "mlama/special.hpp"

namespace mlama {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGoldenRatio = 0.6180339887498949;

// Standard-normal integration range; the Gaussian mass outside is < 1e-23.
constexpr double kQuadratureRange = 10.0;

bool is_boxclip_like(const Denoiser& d, const TuningPolicy& t) {
  return d.kind() == DenoiserKind::BoxClip ||
         (d.kind() == DenoiserKind::Hypercube && t.mode == TuningMode::Fixed &&
          t.fixed_tau == 0.0);
}

// M such that the alphabet is equally likely M-PAM on the odd-integer grid, else 0.
int pam_order(const RealConstellation& c) {
  const int m = static_cast<int>(c.size());
  if (m < 2 || m % 2 != 0) return 0;
  const auto ref = make_pam(m);
  for (int i = 0; i < m; ++i) {
    if (std::abs(c.symbols()[i] - ref.symbols()[i]) > 1e-12) return 0;
    if (std::abs(c.probabilities()[i] - ref.probabilities()[i]) > 1e-12) return 0;
  }
  return m;
}

template <int Points, class F>
double integrate_panels(const std::vector<double>& edges, F&& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    acc += boost::math::quadrature::gauss<double, Points>::integrate(f, edges[i], edges[i + 1]);
  return acc;
}

// Panel edges for integrating against phi(z) on [-L, L]: unit panels, split
// at every breakpoint, with geometric grading towards breakpoints whose
// transition is narrower than a panel.
std::vector<double> panel_edges(const std::vector<double>& breakpoints_z, double width_z) {
  std::vector<double> edges;
  const double lim = kQuadratureRange;
  for (int k = -static_cast<int>(lim); k <= static_cast<int>(lim); ++k) edges.push_back(k);
  for (double zb : breakpoints_z) {
    if (zb <= -lim || zb >= lim) continue;
    edges.push_back(zb);
    if (width_z > 0.0 && width_z < 1.0) {
      for (double h = width_z / 4.0; h < 1.0; h *= 2.0) {
        if (zb - h > -lim) edges.push_back(zb - h);
        if (zb + h < lim) edges.push_back(zb + h);
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](double a, double b) { return std::abs(a - b) < 1e-14; }),
              edges.end());
  return edges;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tuning

TuningPolicy TuningPolicy::limit_infinity() { return fixed(kInf); }

std::string TuningPolicy::label() const {
  switch (mode) {
    case TuningMode::Optimal: return "optimal";
    case TuningMode::Matched: return "matched";
    case TuningMode::Fixed:
      if (fixed_tau == 0.0) return "fixed:0";
      if (std::isinf(fixed_tau)) return "fixed:inf";
      return "fixed:" + std::to_string(fixed_tau);
  }
  return "?";
}

void validate_policy(const TuningPolicy& policy, const Denoiser& d) {
  if (policy.mode != TuningMode::Fixed) return;
  if (!(policy.fixed_tau >= 0.0))
    throw std::invalid_argument("tuning: fixed tau must be >= 0");
  const bool marker = policy.fixed_tau == 0.0 || std::isinf(policy.fixed_tau);
  if (marker && d.kind() == DenoiserKind::Discrete)
    throw std::invalid_argument("tuning: tau -> 0 / tau -> inf limits are only defined for "
                                "gauss, hypercube and boxclip denoisers");
}

TuneResult minimize_tau(const std::function<double(double)>& objective, double scale) {
  if (!(scale > 0.0)) return {0.0, objective(0.0), false};
  constexpr int kGrid = 40;
  const double lo = std::log(1e-6 * scale);
  const double hi = std::log(1e3 * scale);
  std::vector<double> u(kGrid), val(kGrid);
  int best = 0;
  for (int i = 0; i < kGrid; ++i) {
    u[i] = lo + (hi - lo) * i / (kGrid - 1);
    val[i] = objective(std::exp(u[i]));
    if (val[i] < val[best]) best = i;
  }
  if (best == 0 || best == kGrid - 1) return {std::exp(u[best]), val[best], true};

  double a = u[best - 1], b = u[best + 1];
  double c = b - kGoldenRatio * (b - a), d = a + kGoldenRatio * (b - a);
  double fc = objective(std::exp(c)), fd = objective(std::exp(d));
  while (b - a > 1e-6) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kGoldenRatio * (b - a);
      fc = objective(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kGoldenRatio * (b - a);
      fd = objective(std::exp(d));
    }
  }
  const double tau = std::exp(0.5 * (a + b));
  const double f = objective(tau);
  if (f <= val[best]) return {tau, f, false};
  return {std::exp(u[best]), val[best], false};
}

// ---------------------------------------------------------------------------
// SeModel

SeModel::SeModel(Constellation prior, Denoiser denoiser, TuningPolicy tuning)
    : real_system_(false),
      scalar_prior_(real_decompose(prior)),
      prior_label_(prior.label()),
      denoiser_(std::move(denoiser)),
      tuning_(tuning),
      energy_(prior.moments().energy),
      variance_(prior.moments().variance),
      noise_scale_(0.5),
      tau_scale_(0.5),
      mse_scale_(2.0) {
  if (denoiser_.field() != Field::Complex)
    throw std::invalid_argument("SeModel: complex prior needs a complex-field denoiser");
  if (!denoiser_.has_scalar_form())
    throw std::invalid_argument("SeModel: denoiser has no per-dimension form");
  validate_policy(tuning_, denoiser_);
}

SeModel::SeModel(RealConstellation prior, Denoiser denoiser, TuningPolicy tuning)
    : real_system_(true),
      scalar_prior_(prior),
      prior_label_(prior.label()),
      denoiser_(std::move(denoiser)),
      tuning_(tuning),
      energy_(prior.moments().energy),
      variance_(prior.moments().variance),
      noise_scale_(1.0),
      tau_scale_(1.0),
      mse_scale_(1.0) {
  if (denoiser_.field() != Field::Real &&
      (denoiser_.kind() == DenoiserKind::Discrete || denoiser_.kind() == DenoiserKind::Gaussian))
    throw std::invalid_argument("SeModel: real prior needs a real-field denoiser");
  validate_policy(tuning_, denoiser_);
}

double SeModel::quadrature(double sigma_sq, double gamma_sq, bool doubled) const {
  const double sd = std::sqrt(sigma_sq * noise_scale_);
  const double var = gamma_sq * tau_scale_;
  const auto& sym = scalar_prior_.symbols();
  const auto& prob = scalar_prior_.probabilities();
  const auto breakpoints = denoiser_.scalar_breakpoints();
  const double width = denoiser_.transition_width(var);

  double total = 0.0;
  for (std::size_t i = 0; i < sym.size(); ++i) {
    if (prob[i] == 0.0) continue;
    const double s = sym[i];
    if (sd == 0.0) {
      const double e = denoiser_.scalar(s, var) - s;
      total += prob[i] * e * e;
      continue;
    }
    std::vector<double> bz;
    for (double bp : breakpoints) bz.push_back((bp - s) / sd);
    const auto edges = panel_edges(bz, width / sd);
    auto integrand = [&](double z) {
      const double e = denoiser_.scalar(s + sd * z, var) - s;
      return e * e * normal_pdf(z);
    };
    total += prob[i] * (doubled ? integrate_panels<30>(edges, integrand)
                                : integrate_panels<15>(edges, integrand));
  }
  return mse_scale_ * total;
}

double SeModel::psi(double sigma_sq, double gamma_sq) const {
  if (!(sigma_sq >= 0.0)) throw std::invalid_argument("psi: sigma^2 must be >= 0");
  if (!(gamma_sq >= 0.0)) throw std::invalid_argument("psi: gamma^2 must be >= 0");
  if (denoiser_.kind() == DenoiserKind::Gaussian) {
    // F = c z is linear, so the MSE is (1-c)^2 E|S|^2 + c^2 sigma^2 exactly.
    const double c = std::isinf(gamma_sq) ? 0.0
                                          : denoiser_.energy() / (denoiser_.energy() + gamma_sq);
    return (1.0 - c) * (1.0 - c) * energy_ + c * c * sigma_sq;
  }
  return quadrature(sigma_sq, gamma_sq, false);
}

QuadratureCheck SeModel::psi_checked(double sigma_sq, double gamma_sq) const {
  QuadratureCheck out;
  out.value = psi(sigma_sq, gamma_sq);
  out.doubled = denoiser_.kind() == DenoiserKind::Gaussian ? out.value
                                                            : quadrature(sigma_sq, gamma_sq, true);
  out.converged = std::abs(out.value - out.doubled) <= 1e-7;
  return out;
}

PsiStar SeModel::psi_star(double sigma_sq) const {
  switch (tuning_.mode) {
    case TuningMode::Fixed:
      return {psi(sigma_sq, tuning_.fixed_tau), tuning_.fixed_tau, false};
    case TuningMode::Matched:
      return {psi(sigma_sq, sigma_sq), sigma_sq, false};
    case TuningMode::Optimal:
      break;
  }
  if (denoiser_.kind() == DenoiserKind::Gaussian) {
    // argmin of (1-c)^2 Es + c^2 sigma^2 is c = Es / (Es + sigma^2).
    const double g = sigma_sq * denoiser_.energy() / energy_;
    return {psi(sigma_sq, g), g, false};
  }
  if (denoiser_.kind() == DenoiserKind::BoxClip) return {psi(sigma_sq, 0.0), 0.0, false};
  if (sigma_sq == 0.0) return {psi(0.0, 0.0), 0.0, false};
  const auto r = minimize_tau([&](double g) { return psi(sigma_sq, g); }, sigma_sq);
  return {r.objective, r.tau, r.flagged};
}

bool SeModel::boxclip_closed_form() const {
  if (!is_boxclip_like(denoiser_, tuning_)) return false;
  const int m = pam_order(scalar_prior_);
  return m > 0 && denoiser_.alpha() == static_cast<double>(m - 1);
}

double SeModel::psi_star_derivative(double sigma_sq) const {
  if (denoiser_.kind() == DenoiserKind::Gaussian) {
    if (tuning_.mode == TuningMode::Optimal) {
      const double r = energy_ / (energy_ + sigma_sq);
      return r * r;
    }
    const double g = tuning_.mode == TuningMode::Matched ? sigma_sq : tuning_.fixed_tau;
    if (tuning_.mode == TuningMode::Fixed) {
      const double c = std::isinf(g) ? 0.0 : denoiser_.energy() / (denoiser_.energy() + g);
      return c * c;
    }
  }
  if (boxclip_closed_form()) {
    const int m = pam_order(scalar_prior_);
    return real_system_ ? psi_pam_closed_derivative(sigma_sq, m)
                        : psi_qam_closed_derivative(sigma_sq, m);
  }
  const double h = 1e-4 * sigma_sq;
  if (tuning_.mode == TuningMode::Optimal) {
    // Envelope theorem: d/dsigma^2 of min_gamma Psi equals the partial at gamma*.
    const double g = psi_star(sigma_sq).gamma_sq;
    return (psi(sigma_sq + h, g) - psi(sigma_sq - h, g)) / (2.0 * h);
  }
  return (psi_star(sigma_sq + h).value - psi_star(sigma_sq - h).value) / (2.0 * h);
}

double psi_numeric(double sigma_sq, double gamma_sq, const Constellation& prior,
                   const Denoiser& d) {
  return SeModel(prior, d, TuningPolicy::fixed(gamma_sq)).psi(sigma_sq, gamma_sq);
}

double psi_numeric(double sigma_sq, double gamma_sq, const RealConstellation& prior,
                   const Denoiser& d) {
  return SeModel(prior, d, TuningPolicy::fixed(gamma_sq)).psi(sigma_sq, gamma_sq);
}

// ---------------------------------------------------------------------------
// Closed forms

double psi_pam_closed(double sigma_sq, int m) {
  if (m < 2 || m % 2 != 0) throw std::invalid_argument("psi_pam_closed: M must be even");
  if (!(sigma_sq >= 0.0)) throw std::invalid_argument("psi_pam_closed: sigma^2 must be >= 0");
  if (sigma_sq == 0.0) return 0.0;
  const double sigma = std::sqrt(sigma_sq);
  const double alpha = m - 1.0;
  const double c = sigma / std::sqrt(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (int k = 1; k <= m / 2; ++k) {
    const double lo = alpha - (2.0 * k - 1.0);
    const double up = alpha + (2.0 * k - 1.0);
    acc += sigma_sq + (lo * lo - sigma_sq) * q_function(lo / sigma) +
           (up * up - sigma_sq) * q_function(up / sigma) -
           c * lo * std::exp(-lo * lo / (2.0 * sigma_sq)) -
           c * up * std::exp(-up * up / (2.0 * sigma_sq));
  }
  return 2.0 * acc / m;
}

double psi_pam_closed_derivative(double sigma_sq, int m) {
  if (m < 2 || m % 2 != 0) throw std::invalid_argument("psi_pam_closed: M must be even");
  const double alpha = m - 1.0;
  double acc = 0.0;
  if (sigma_sq == 0.0) {
    // Interior points contribute 1, the outermost one 1/2.
    return 1.0 - 1.0 / m;
  }
  const double sigma = std::sqrt(sigma_sq);
  for (int k = 1; k <= m / 2; ++k) {
    const double lo = (alpha - (2.0 * k - 1.0)) / sigma;
    const double up = (alpha + (2.0 * k - 1.0)) / sigma;
    acc += 1.0 - q_function(lo) - q_function(up) - lo * normal_pdf(lo) - up * normal_pdf(up);
  }
  return 2.0 * acc / m;
}

double psi_qam_closed(double sigma_sq, int m) { return 2.0 * psi_pam_closed(sigma_sq / 2.0, m); }

double psi_qam_closed_derivative(double sigma_sq, int m) {
  return psi_pam_closed_derivative(sigma_sq / 2.0, m);
}

double box_relaxation_psi(double tau_sq) {
  if (tau_sq == 0.0) return 0.0;
  const double tau = std::sqrt(tau_sq);
  return 0.5 * tau_sq - 2.0 * tau / std::sqrt(2.0 * std::numbers::pi) * std::exp(-2.0 / tau_sq) +
         q_function(2.0 / tau) * (4.0 - tau_sq);
}

// ---------------------------------------------------------------------------
// Recursion and fixed points

SeStep se_step(double sigma_sq, double beta, double n0, const SeModel& model) {
  if (!(sigma_sq >= 0.0) || !(beta >= 0.0) || !(n0 >= 0.0))
    throw std::invalid_argument("se_step: parameters must be nonnegative");
  const auto ps = model.psi_star(sigma_sq);
  return {n0 + beta * ps.value, ps.gamma_sq, ps.flagged};
}

SeTrace run_se(double beta, double n0, const SeModel& model, int t_max) {
  if (t_max < 1) throw std::invalid_argument("run_se: t_max must be >= 1");
  if (!(beta >= 0.0) || !(n0 >= 0.0))
    throw std::invalid_argument("run_se: beta and N0 must be nonnegative");
  SeTrace tr;
  tr.beta = beta;
  tr.n0 = n0;
  tr.prior_label = model.prior_label();
  tr.denoiser_label = model.denoiser().label();
  tr.sigma_sq.push_back(n0 + beta * model.prior_variance());
  for (int t = 0; t < t_max; ++t) {
    const auto step = se_step(tr.sigma_sq.back(), beta, n0, model);
    tr.sigma_sq.push_back(step.sigma_sq_next);
    tr.gamma_sq.push_back(step.gamma_sq);
    tr.flagged = tr.flagged || step.flagged;
  }
  return tr;
}

FixedPointReport fixed_point(double beta, double n0, const SeModel& model) {
  if (!(beta >= 0.0) || !(n0 >= 0.0))
    throw std::invalid_argument("fixed_point: beta and N0 must be nonnegative");
  auto gap = [&](double x) { return n0 + beta * model.psi_star(x).value - x; };
  FixedPointReport rep;
  const double start = n0 + beta * model.prior_variance();

  if (beta == 0.0) {
    rep.solutions = {n0};
    rep.converged_to = n0;
    rep.unique = true;
    return rep;
  }

  if (n0 == 0.0) rep.solutions.push_back(0.0);
  const double lo = n0 > 0.0 ? n0 : 1e-12 * std::max(start, 1.0);
  double hi = std::max(start, lo * 2.0);
  while (gap(hi) > 0.0 && hi < 1e12) hi *= 2.0;

  constexpr int kGrid = 2000;
  std::vector<double> x(kGrid), g(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    x[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (kGrid - 1));
    g[i] = gap(x[i]);
  }
  for (int i = 0; i + 1 < kGrid; ++i) {
    if (g[i] == 0.0) {
      rep.solutions.push_back(x[i]);
      continue;
    }
    if ((g[i] > 0.0) == (g[i + 1] > 0.0) || g[i + 1] == 0.0) continue;
    double a = x[i], b = x[i + 1];
    const bool a_pos = g[i] > 0.0;
    for (int it = 0; it < 200 && (b - a) > 1e-12 * b; ++it) {
      const double mid = 0.5 * (a + b);
      const double gm = gap(mid);
      if (gm == 0.0) {
        a = b = mid;
        break;
      }
      if ((gm > 0.0) == a_pos)
        a = mid;
      else
        b = mid;
    }
    rep.solutions.push_back(0.5 * (a + b));
  }
  if (g[kGrid - 1] == 0.0) rep.solutions.push_back(x[kGrid - 1]);
  std::sort(rep.solutions.begin(), rep.solutions.end());

  const bool has_positive = std::any_of(rep.solutions.begin(), rep.solutions.end(),
                                        [](double s) { return s > 0.0; });
  if (rep.solutions.empty() || (n0 > 0.0 && !has_positive)) {
    rep.warning = true;
    double s = start;
    for (int it = 0; it < 100000; ++it) {
      const double next = n0 + beta * model.psi_star(s).value;
      if (!std::isfinite(next) || next > 1e15) {
        s = kInf;
        break;
      }
      if (std::abs(next - s) <= 1e-14 * std::max(1.0, s)) {
        s = next;
        break;
      }
      s = next;
    }
    rep.converged_to = s;
    rep.unique = false;
    return rep;
  }

  // The SE map is monotone, so from sigma_1^2 it moves towards the nearest
  // root in the direction of the gap's sign.
  if (gap(start) >= 0.0) {
    auto it = std::lower_bound(rep.solutions.begin(), rep.solutions.end(), start);
    rep.converged_to = it != rep.solutions.end() ? *it : rep.solutions.back();
  } else {
    auto it = std::upper_bound(rep.solutions.begin(), rep.solutions.end(), start);
    rep.converged_to = it != rep.solutions.begin() ? *(it - 1) : rep.solutions.front();
  }
  rep.unique = rep.solutions.size() == 1;
  return rep;
}

double mrt(const SeModel& model) {
  constexpr int kGrid = 600;
  const double lo = std::log(1e-8), hi = std::log(1e3);
  double best = -kInf;
  for (int i = 0; i < kGrid; ++i) {
    const double s = std::exp(lo + (hi - lo) * i / (kGrid - 1));
    best = std::max(best, model.psi_star_derivative(s));
  }
  if (!(best > 0.0)) return kInf;
  return 1.0 / best;
}

// ---------------------------------------------------------------------------
// Box relaxation (real BPSK)

double box_relaxation_objective(double tau, double beta, double n0) {
  const double a = 2.0 / tau;
  // int_a^inf (x - a)^2 phi(x) dx
  const double tail = (1.0 + a * a) * q_function(a) - a * normal_pdf(a);
  return 0.5 * tau * (1.0 / beta - 0.5) + n0 / (2.0 * beta * tau) + 0.5 * tau * tail;
}

namespace {

double box_relaxation_slope(double tau, double beta, double n0) {
  const double a = 2.0 / tau;
  const double q = q_function(a);
  return 0.5 * (1.0 / beta - 0.5) - n0 / (2.0 * beta * tau * tau) +
         0.5 * (q - a * a * q + a * normal_pdf(a));
}

}  // namespace

BoxRelaxation box_relaxation_tau(double beta, double n0) {
  if (!(beta > 0.0) || !(beta < 2.0))
    throw std::invalid_argument("box_relaxation_tau: requires 0 < beta < 2");
  if (!(n0 >= 0.0)) throw std::invalid_argument("box_relaxation_tau: N0 must be >= 0");

  constexpr int kGrid = 400;
  const double lo = std::log(1e-8), hi = std::log(1e4);
  std::vector<double> u(kGrid), val(kGrid);
  int best = 0;
  for (int i = 0; i < kGrid; ++i) {
    u[i] = lo + (hi - lo) * i / (kGrid - 1);
    val[i] = box_relaxation_objective(std::exp(u[i]), beta, n0);
    if (val[i] < val[best]) best = i;
  }
  if (best == kGrid - 1) throw NumericalError("box_relaxation_tau: minimiser not bracketed");

  BoxRelaxation out;
  if (best == 0) {
    out.tau = std::exp(u[0]);
  } else {
    // Golden section on log(tau), then bisection on the analytic g'(tau).
    double a = u[best - 1], b = u[best + 1];
    double c = b - kGoldenRatio * (b - a), d = a + kGoldenRatio * (b - a);
    auto g = [&](double v) { return box_relaxation_objective(std::exp(v), beta, n0); };
    double fc = g(c), fd = g(d);
    for (int it = 0; it < 60; ++it) {
      if (fc < fd) {
        b = d, d = c, fd = fc;
        c = b - kGoldenRatio * (b - a);
        fc = g(c);
      } else {
        a = c, c = d, fc = fd;
        d = a + kGoldenRatio * (b - a);
        fd = g(d);
      }
    }
    double l = std::exp(u[best - 1]), r = std::exp(u[best + 1]);
    if (box_relaxation_slope(l, beta, n0) < 0.0 && box_relaxation_slope(r, beta, n0) > 0.0) {
      for (int it = 0; it < 200 && r - l > 1e-15 * r; ++it) {
        const double mid = 0.5 * (l + r);
        (box_relaxation_slope(mid, beta, n0) < 0.0 ? l : r) = mid;
      }
      out.tau = 0.5 * (l + r);
    } else {
      out.tau = std::exp(0.5 * (a + b));
    }
  }
  out.tau_sq = out.tau * out.tau;
  out.objective = box_relaxation_objective(out.tau, beta, n0);
  out.stationarity_residual = std::abs(out.tau_sq - n0 - beta * box_relaxation_psi(out.tau_sq));
  return out;
}

// ---------------------------------------------------------------------------
// Symbol error prediction

double ser_prediction(double sigma_sq, const RealConstellation& c) {
  if (!(sigma_sq >= 0.0)) throw std::invalid_argument("ser_prediction: sigma^2 must be >= 0");
  if (sigma_sq == 0.0) return 0.0;
  const double sd = std::sqrt(sigma_sq);
  const auto& s = c.symbols();
  const auto& p = c.probabilities();
  double err = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double e = 0.0;
    if (i > 0) e += q_function((s[i] - s[i - 1]) / (2.0 * sd));
    if (i + 1 < s.size()) e += q_function((s[i + 1] - s[i]) / (2.0 * sd));
    err += p[i] * e;
  }
  return err;
}

double ser_prediction(double sigma_sq, const Constellation& c) {
  const auto per_dim = ser_prediction(sigma_sq / 2.0, real_decompose(c));
  return 1.0 - (1.0 - per_dim) * (1.0 - per_dim);
}

}  // namespace mlama
