#include "mlama/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "mlama/special.hpp"

namespace mlama {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_tau(double tau, const char* who) {
  if (!(tau >= 0.0)) throw std::invalid_argument(std::string(who) + ": tau must be >= 0");
}

double clip(double x, double alpha) { return std::clamp(x, -alpha, alpha); }

// Boundary |x| = alpha counts as inside.
double inside(double x, double alpha) { return std::abs(x) <= alpha ? 1.0 : 0.0; }

}  // namespace

// ---------------------------------------------------------------------------
// Scalar posteriors

namespace scalar {

Posterior hypercube(double x, double var, double alpha) {
  if (var == 0.0) return {clip(x, alpha), inside(x, alpha)};
  if (std::isinf(var)) return {0.0, 0.0};

  // Work with s >= 0; the posterior mean is odd in x.
  const double sign = x < 0.0 ? -1.0 : 1.0;
  const double s = std::abs(x);
  const double sd = std::sqrt(var);
  const double a = (s + alpha) / sd;
  const double b = (s - alpha) / sd;
  // phi(a) = phi(b) * w with w = exp(-delta), delta = (a^2 - b^2) / 2.
  const double delta = 2.0 * s * alpha / var;
  const double w = std::exp(-delta);
  const double one_minus_w = -std::expm1(-delta);

  // zs = (Phi(a) - Phi(b)) / phi(b), evaluated without forming either tail.
  double zs;
  if (b > 3.0) {
    zs = 0.5 * std::sqrt(2.0 * std::numbers::pi) *
         (erfcx(b / std::numbers::sqrt2) - w * erfcx(a / std::numbers::sqrt2));
  } else {
    const double z = b >= 0.0
                         ? 0.5 * (std::erfc(b / std::numbers::sqrt2) -
                                  std::erfc(a / std::numbers::sqrt2))
                         : 0.5 * (std::erf(a / std::numbers::sqrt2) -
                                  std::erf(b / std::numbers::sqrt2));
    zs = z / normal_pdf(b);
  }
  if (!(zs > 0.0) || std::isnan(zs)) return {sign * clip(s, alpha), inside(s, alpha)};

  const double r1 = -one_minus_w / zs;     // (phi(a) - phi(b)) / Z
  const double r2 = (b - a * w) / zs;      // (b phi(b) - a phi(a)) / Z
  const double mean = std::min(s + sd * r1, alpha);
  const double deriv = std::clamp(1.0 + r2 - r1 * r1, 0.0, 1.0);
  return {sign * std::max(mean, -alpha), deriv};
}

Posterior discrete(double x, double var, const RealConstellation& c) {
  const auto& sym = c.symbols();
  const auto& prob = c.probabilities();
  if (var == 0.0) return {sym[c.nearest(x)], 0.0};
  if (std::isinf(var)) return {c.moments().mean, 0.0};

  double max_log = -kInf;
  std::vector<double> logw(sym.size(), -kInf);
  for (std::size_t i = 0; i < sym.size(); ++i) {
    if (prob[i] <= 0.0) continue;
    logw[i] = std::log(prob[i]) - (x - sym[i]) * (x - sym[i]) / (2.0 * var);
    max_log = std::max(max_log, logw[i]);
  }
  double norm = 0.0, first = 0.0;
  for (std::size_t i = 0; i < sym.size(); ++i) {
    const double w = std::exp(logw[i] - max_log);
    norm += w;
    first += w * sym[i];
  }
  const double mean = first / norm;
  double second = 0.0;
  for (std::size_t i = 0; i < sym.size(); ++i) {
    const double d = sym[i] - mean;
    second += std::exp(logw[i] - max_log) * d * d;
  }
  return {mean, (second / norm) / var};
}

}  // namespace scalar

// ---------------------------------------------------------------------------
// Named posterior-mean functions

cdouble f_discrete(cdouble z, double tau, const Constellation& c) {
  if (!(tau >= 0.0)) throw std::invalid_argument("f_discrete: tau must be >= 0");
  const auto& sym = c.symbols();
  const auto& prob = c.probabilities();
  if (tau == 0.0) return sym[c.nearest(z)];
  if (std::isinf(tau)) return c.moments().mean;
  // Softmax over log p(a) - |z - a|^2 / tau.
  double max_log = -kInf;
  std::vector<double> logw(sym.size(), -kInf);
  for (std::size_t i = 0; i < sym.size(); ++i) {
    if (prob[i] <= 0.0) continue;
    logw[i] = std::log(prob[i]) - std::norm(z - sym[i]) / tau;
    max_log = std::max(max_log, logw[i]);
  }
  double norm = 0.0;
  cdouble acc{};
  for (std::size_t i = 0; i < sym.size(); ++i) {
    const double w = std::exp(logw[i] - max_log);
    norm += w;
    acc += w * sym[i];
  }
  return acc / norm;
}

double f_discrete(double x, double var, const RealConstellation& c) {
  if (!(var >= 0.0)) throw std::invalid_argument("f_discrete: tau must be >= 0");
  return scalar::discrete(x, var, c).mean;
}

cdouble f_gaussian(cdouble z, double tau, double energy) {
  check_tau(tau, "f_gaussian");
  if (!(energy > 0.0)) throw std::invalid_argument("f_gaussian: energy must be > 0");
  if (std::isinf(tau)) return {0.0, 0.0};
  return (energy / (energy + tau)) * z;
}

cdouble f_hypercube(cdouble z, double tau, double alpha) {
  if (!(tau > 0.0))
    throw std::invalid_argument("f_hypercube: tau must be > 0 (use f_boxclip for the limit)");
  if (!(alpha > 0.0)) throw std::invalid_argument("f_hypercube: alpha must be > 0");
  return {scalar::hypercube(z.real(), tau / 2.0, alpha).mean,
          scalar::hypercube(z.imag(), tau / 2.0, alpha).mean};
}

cdouble f_boxclip(cdouble z, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("f_boxclip: alpha must be > 0");
  return {clip(z.real(), alpha), clip(z.imag(), alpha)};
}

// ---------------------------------------------------------------------------
// Denoiser

Denoiser Denoiser::discrete(Constellation c) {
  Denoiser d(DenoiserKind::Discrete, Field::Complex);
  if (c.separable()) d.real_ = real_decompose(c);
  d.energy_ = c.moments().energy;
  d.complex_ = std::move(c);
  return d;
}

Denoiser Denoiser::discrete(RealConstellation c) {
  Denoiser d(DenoiserKind::Discrete, Field::Real);
  d.energy_ = c.moments().energy;
  d.real_ = std::move(c);
  return d;
}

Denoiser Denoiser::gaussian(double energy, Field field) {
  if (!(energy > 0.0)) throw std::invalid_argument("gaussian denoiser: energy must be > 0");
  Denoiser d(DenoiserKind::Gaussian, field);
  d.energy_ = energy;
  return d;
}

Denoiser Denoiser::hypercube(double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("hypercube denoiser: alpha must be > 0");
  Denoiser d(DenoiserKind::Hypercube, Field::Complex);
  d.alpha_ = alpha;
  return d;
}

Denoiser Denoiser::boxclip(double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("boxclip denoiser: alpha must be > 0");
  Denoiser d(DenoiserKind::BoxClip, Field::Complex);
  d.alpha_ = alpha;
  return d;
}

std::string Denoiser::label() const {
  switch (kind_) {
    case DenoiserKind::Discrete: return "lama";
    case DenoiserKind::Gaussian: return "gauss";
    case DenoiserKind::Hypercube: return "hypercube";
    case DenoiserKind::BoxClip: return "boxclip";
  }
  return "?";
}

void Denoiser::require_real_call() const {
  if (field_ == Field::Complex &&
      (kind_ == DenoiserKind::Discrete || kind_ == DenoiserKind::Gaussian))
    throw std::invalid_argument("denoiser '" + label() +
                                "' was built for a complex system; construct it with a real "
                                "alphabet/field for real-valued use");
}

cdouble Denoiser::operator()(cdouble z, double tau) const {
  check_tau(tau, "denoiser");
  switch (kind_) {
    case DenoiserKind::Discrete:
      if (!complex_) throw std::invalid_argument("discrete denoiser has no complex alphabet");
      return f_discrete(z, tau, *complex_);
    case DenoiserKind::Gaussian:
      return f_gaussian(z, tau, energy_);
    case DenoiserKind::Hypercube:
      if (tau == 0.0) return f_boxclip(z, alpha_);
      if (std::isinf(tau)) return {0.0, 0.0};
      return f_hypercube(z, tau, alpha_);
    case DenoiserKind::BoxClip:
      return f_boxclip(z, alpha_);
  }
  return {};
}

double Denoiser::derivative(cdouble z, double tau) const {
  check_tau(tau, "denoiser");
  switch (kind_) {
    case DenoiserKind::Discrete: {
      if (!complex_) throw std::invalid_argument("discrete denoiser has no complex alphabet");
      if (tau == 0.0 || std::isinf(tau)) return 0.0;
      // Each real partial equals Var_post(component) / (tau / 2).
      const cdouble mean = f_discrete(z, tau, *complex_);
      const auto& sym = complex_->symbols();
      const auto& prob = complex_->probabilities();
      double max_log = -kInf;
      std::vector<double> logw(sym.size(), -kInf);
      for (std::size_t i = 0; i < sym.size(); ++i) {
        if (prob[i] <= 0.0) continue;
        logw[i] = std::log(prob[i]) - std::norm(z - sym[i]) / tau;
        max_log = std::max(max_log, logw[i]);
      }
      double norm = 0.0, spread = 0.0;
      for (std::size_t i = 0; i < sym.size(); ++i) {
        const double w = std::exp(logw[i] - max_log);
        norm += w;
        spread += w * std::norm(sym[i] - mean);
      }
      return (spread / norm) / tau;
    }
    case DenoiserKind::Gaussian:
      return std::isinf(tau) ? 0.0 : energy_ / (energy_ + tau);
    case DenoiserKind::Hypercube:
    case DenoiserKind::BoxClip: {
      const double var = kind_ == DenoiserKind::BoxClip ? 0.0 : tau / 2.0;
      return 0.5 * (scalar::hypercube(z.real(), var, alpha_).derivative +
                    scalar::hypercube(z.imag(), var, alpha_).derivative);
    }
  }
  return 0.0;
}

double Denoiser::operator()(double x, double tau) const {
  check_tau(tau, "denoiser");
  require_real_call();
  return scalar(x, tau);
}

double Denoiser::derivative(double x, double tau) const {
  check_tau(tau, "denoiser");
  require_real_call();
  return scalar_derivative(x, tau);
}

bool Denoiser::has_scalar_form() const {
  return kind_ != DenoiserKind::Discrete || real_.has_value();
}

double Denoiser::scalar(double x, double var) const {
  switch (kind_) {
    case DenoiserKind::Discrete:
      if (!real_)
        throw std::invalid_argument("discrete denoiser over a non-separable alphabet has no "
                                    "per-dimension form");
      return scalar::discrete(x, var, *real_).mean;
    case DenoiserKind::Gaussian: {
      if (std::isinf(var)) return 0.0;
      const double e = field_ == Field::Complex ? energy_ / 2.0 : energy_;
      return e / (e + var) * x;
    }
    case DenoiserKind::Hypercube:
      return scalar::hypercube(x, var, alpha_).mean;
    case DenoiserKind::BoxClip:
      return clip(x, alpha_);
  }
  return 0.0;
}

double Denoiser::scalar_derivative(double x, double var) const {
  switch (kind_) {
    case DenoiserKind::Discrete:
      if (!real_)
        throw std::invalid_argument("discrete denoiser over a non-separable alphabet has no "
                                    "per-dimension form");
      return scalar::discrete(x, var, *real_).derivative;
    case DenoiserKind::Gaussian: {
      if (std::isinf(var)) return 0.0;
      const double e = field_ == Field::Complex ? energy_ / 2.0 : energy_;
      return e / (e + var);
    }
    case DenoiserKind::Hypercube:
      return scalar::hypercube(x, var, alpha_).derivative;
    case DenoiserKind::BoxClip:
      return inside(x, alpha_);
  }
  return 0.0;
}

std::vector<double> Denoiser::scalar_breakpoints() const {
  switch (kind_) {
    case DenoiserKind::Hypercube:
    case DenoiserKind::BoxClip:
      return {-alpha_, alpha_};
    case DenoiserKind::Discrete: {
      std::vector<double> out;
      if (!real_) return out;
      const auto& s = real_->symbols();
      for (std::size_t i = 0; i + 1 < s.size(); ++i) out.push_back(0.5 * (s[i] + s[i + 1]));
      return out;
    }
    case DenoiserKind::Gaussian:
      return {};
  }
  return {};
}

double Denoiser::transition_width(double var) const {
  if (std::isinf(var)) return kInf;
  switch (kind_) {
    case DenoiserKind::Hypercube:
      return std::sqrt(var);
    case DenoiserKind::Discrete: {
      if (!real_ || real_->size() < 2) return 0.0;
      const auto& s = real_->symbols();
      double spacing = kInf;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) spacing = std::min(spacing, s[i + 1] - s[i]);
      return var / spacing;
    }
    default:
      return 0.0;
  }
}

// ---------------------------------------------------------------------------

double divergence(const Denoiser& d, std::span<const cdouble> z, double tau) {
  if (z.empty()) throw std::invalid_argument("divergence: empty input");
  double acc = 0.0;
  for (const auto& v : z) acc += d.derivative(v, tau);
  return acc / static_cast<double>(z.size());
}

double divergence(const Denoiser& d, std::span<const double> z, double tau) {
  if (z.empty()) throw std::invalid_argument("divergence: empty input");
  double acc = 0.0;
  for (double v : z) acc += d.derivative(v, tau);
  return acc / static_cast<double>(z.size());
}

}  // namespace mlama
