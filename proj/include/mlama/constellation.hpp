#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <type_traits>
#include <vector>

namespace mlama {

using cdouble = std::complex<double>;

template <class T>
struct Moments {
  T mean{};
  double energy = 0.0;    ///< E[|S|^2]
  double variance = 0.0;  ///< energy - |mean|^2
};

/// Finite transmit alphabet with a probability mass function.
///
/// Symbols are stored in canonical order (ascending for real alphabets,
/// lexicographic by real then imaginary part for complex ones), so index
/// based tie-breaking in `nearest` is deterministic. Instances are
/// immutable once constructed.
template <class T>
class BasicConstellation {
  static_assert(std::is_same_v<T, double> || std::is_same_v<T, cdouble>);

 public:
  using value_type = T;

  BasicConstellation(std::vector<T> symbols, std::vector<double> probabilities,
                     std::string label);

  const std::vector<T>& symbols() const { return symbols_; }
  const std::vector<double>& probabilities() const { return probabilities_; }
  const std::string& label() const { return label_; }
  std::size_t size() const { return symbols_.size(); }

  Moments<T> moments() const;

  /// Index of the closest symbol; ties go to the lowest canonical index.
  std::size_t nearest(T z) const;

  /// Largest |symbol| (per-dimension half-width for real alphabets).
  double alpha() const
    requires std::is_same_v<T, double>;

  /// p(a + ib) = p(a) p(b) with identical real and imaginary marginals.
  bool separable() const
    requires std::is_same_v<T, cdouble>;

  bool is_real_valued() const;

 private:
  std::vector<T> symbols_;
  std::vector<double> probabilities_;
  std::string label_;
};

using Constellation = BasicConstellation<cdouble>;
using RealConstellation = BasicConstellation<double>;

/// Square M^2-QAM on the odd-integer grid, equally likely symbols.
Constellation make_qam(int points);

/// M-PAM {2k-1 : k = -M/2+1 .. M/2}, equally likely symbols.
RealConstellation make_pam(int points);

/// Unit-circle M-PSK (used as a non-separable reference alphabet).
Constellation make_psk(int points);

/// BPSK embedded in the complex plane, {-1, +1}.
Constellation make_bpsk();

/// Per-dimension real alphabet of a separable complex constellation.
/// Throws std::invalid_argument when the joint table does not factor.
RealConstellation real_decompose(const Constellation& c);

template <class T>
Moments<T> moments(const BasicConstellation<T>& c) {
  return c.moments();
}

}  // namespace mlama
