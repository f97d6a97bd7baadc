#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "mlama/constellation.hpp"

namespace mlama {

template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// One channel use y = H s0 + n. T = cdouble for complex systems and
/// double for the real-valued mode.
template <class T>
struct MimoInstanceT {
  Mat<T> H;                        ///< MR x MT
  Vec<T> y;                        ///< MR
  Vec<T> s0;                       ///< MT transmitted symbols
  std::vector<std::size_t> index;  ///< constellation index of each s0 entry
  double n0 = 0.0;

  Eigen::Index mt() const { return H.cols(); }
  Eigen::Index mr() const { return H.rows(); }
  double beta() const { return static_cast<double>(mt()) / static_cast<double>(mr()); }
};

using MimoInstance = MimoInstanceT<cdouble>;
using RealMimoInstance = MimoInstanceT<double>;

template <class T>
using PriorFor = BasicConstellation<T>;

}  // namespace mlama
