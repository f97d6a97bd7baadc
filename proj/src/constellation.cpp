#include "mlama/constellation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace mlama {
namespace {

constexpr double kProbabilityTolerance = 1e-12;
constexpr double kSeparabilityTolerance = 1e-10;
constexpr double kCoordinateTolerance = 1e-9;

bool canonical_less(double a, double b) { return a < b; }
bool canonical_less(const cdouble& a, const cdouble& b) {
  if (a.real() != b.real()) return a.real() < b.real();
  return a.imag() < b.imag();
}

double distance_sq(double a, double b) { return (a - b) * (a - b); }
double distance_sq(const cdouble& a, const cdouble& b) { return std::norm(a - b); }

// Groups coordinates that agree within kCoordinateTolerance and sums their mass.
std::map<double, double> marginal(const std::vector<double>& coords,
                                  const std::vector<double>& probs) {
  std::map<double, double> out;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& kv) {
      return std::abs(kv.first - coords[i]) < kCoordinateTolerance;
    });
    if (it == out.end())
      out.emplace(coords[i], probs[i]);
    else
      it->second += probs[i];
  }
  return out;
}

double lookup(const std::map<double, double>& m, double x) {
  for (const auto& [k, v] : m)
    if (std::abs(k - x) < kCoordinateTolerance) return v;
  return 0.0;
}

}  // namespace

template <class T>
BasicConstellation<T>::BasicConstellation(std::vector<T> symbols,
                                          std::vector<double> probabilities,
                                          std::string label)
    : label_(std::move(label)) {
  if (symbols.empty()) throw std::invalid_argument("constellation: empty symbol set");
  if (symbols.size() != probabilities.size())
    throw std::invalid_argument("constellation: symbols/probabilities size mismatch");
  double total = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw std::invalid_argument("constellation: probabilities must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance)
    throw std::invalid_argument("constellation: probabilities must sum to 1");

  std::vector<std::size_t> order(symbols.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return canonical_less(symbols[a], symbols[b]);
  });
  symbols_.reserve(order.size());
  probabilities_.reserve(order.size());
  for (std::size_t i : order) {
    symbols_.push_back(symbols[i]);
    probabilities_.push_back(probabilities[i]);
  }
  for (std::size_t i = 0; i < symbols_.size(); ++i)
    for (std::size_t j = i + 1; j < symbols_.size(); ++j)
      if (symbols_[i] == symbols_[j])
        throw std::invalid_argument("constellation: symbols must be distinct");
}

template <class T>
Moments<T> BasicConstellation<T>::moments() const {
  Moments<T> m;
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    m.mean += probabilities_[i] * symbols_[i];
    m.energy += probabilities_[i] * distance_sq(symbols_[i], T{});
  }
  m.variance = m.energy - distance_sq(m.mean, T{});
  return m;
}

template <class T>
std::size_t BasicConstellation<T>::nearest(T z) const {
  std::size_t best = 0;
  double best_d = distance_sq(z, symbols_[0]);
  for (std::size_t i = 1; i < symbols_.size(); ++i) {
    const double d = distance_sq(z, symbols_[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

template <class T>
double BasicConstellation<T>::alpha() const
  requires std::is_same_v<T, double>
{
  double a = 0.0;
  for (double s : symbols_) a = std::max(a, std::abs(s));
  return a;
}

template <class T>
bool BasicConstellation<T>::is_real_valued() const {
  if constexpr (std::is_same_v<T, double>) {
    return true;
  } else {
    return std::all_of(symbols_.begin(), symbols_.end(),
                       [](const cdouble& s) { return s.imag() == 0.0; });
  }
}

template <class T>
bool BasicConstellation<T>::separable() const
  requires std::is_same_v<T, cdouble>
{
  std::vector<double> re, im;
  for (const auto& s : symbols_) {
    re.push_back(s.real());
    im.push_back(s.imag());
  }
  const auto pr = marginal(re, probabilities_);
  const auto pi = marginal(im, probabilities_);
  if (pr.size() != pi.size()) return false;
  for (const auto& [a, p] : pr)
    if (std::abs(lookup(pi, a) - p) > kSeparabilityTolerance) return false;
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const double joint = probabilities_[i];
    const double product = lookup(pr, re[i]) * lookup(pi, im[i]);
    if (std::abs(joint - product) > kSeparabilityTolerance) return false;
  }
  return true;
}

template class BasicConstellation<double>;
template class BasicConstellation<cdouble>;

RealConstellation make_pam(int points) {
  if (points < 2 || points % 2 != 0)
    throw std::invalid_argument("make_pam: size must be even and >= 2, got " +
                                std::to_string(points));
  std::vector<double> symbols;
  for (int k = -points / 2 + 1; k <= points / 2; ++k) symbols.push_back(2.0 * k - 1.0);
  std::vector<double> probs(symbols.size(), 1.0 / points);
  return RealConstellation(std::move(symbols), std::move(probs),
                           std::to_string(points) + "PAM");
}

Constellation make_qam(int points) {
  const int m = static_cast<int>(std::lround(std::sqrt(static_cast<double>(points))));
  if (points != 4 && points != 16 && points != 64 && points != 256)
    throw std::invalid_argument("make_qam: size must be one of 4, 16, 64, 256 (square of an "
                                "even integer), got " +
                                std::to_string(points));
  const auto pam = make_pam(m);
  std::vector<cdouble> symbols;
  for (double a : pam.symbols())
    for (double b : pam.symbols()) symbols.emplace_back(a, b);
  std::vector<double> probs(symbols.size(), 1.0 / points);
  return Constellation(std::move(symbols), std::move(probs),
                       points == 4 ? std::string("QPSK") : std::to_string(points) + "QAM");
}

Constellation make_psk(int points) {
  if (points < 2) throw std::invalid_argument("make_psk: need at least 2 points");
  std::vector<cdouble> symbols;
  for (int k = 0; k < points; ++k)
    symbols.push_back(std::polar(1.0, 2.0 * std::numbers::pi * k / points));
  // Snap round-off so that e.g. cos(pi/2) is exactly zero.
  for (auto& s : symbols) {
    if (std::abs(s.real()) < 1e-15) s.real(0.0);
    if (std::abs(s.imag()) < 1e-15) s.imag(0.0);
  }
  std::vector<double> probs(symbols.size(), 1.0 / points);
  return Constellation(std::move(symbols), std::move(probs), std::to_string(points) + "PSK");
}

Constellation make_bpsk() {
  return Constellation({cdouble(-1.0, 0.0), cdouble(1.0, 0.0)}, {0.5, 0.5}, "BPSK");
}

RealConstellation real_decompose(const Constellation& c) {
  if (!c.separable())
    throw std::invalid_argument("real_decompose: constellation '" + c.label() +
                                "' is not separable");
  std::vector<double> re;
  for (const auto& s : c.symbols()) re.push_back(s.real());
  const auto pr = marginal(re, c.probabilities());
  std::vector<double> symbols, probs;
  for (const auto& [a, p] : pr) {
    symbols.push_back(a);
    probs.push_back(p);
  }
  // Marginals were accumulated in floating point; renormalise exactly.
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (double& p : probs) p /= total;
  return RealConstellation(std::move(symbols), std::move(probs), c.label() + "-re");
}

}  // namespace mlama
