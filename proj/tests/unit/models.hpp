#pragma once

#include "bayesmech/gaussian.hpp"

namespace models {

// Tridiagonal 3×3 precision with a scalar blanket.
inline bayesmech::Matrix example_precision() {
  bayesmech::Matrix p(3, 3);
  p << 2, 1, 0, 1, 2, 1, 0, 1, 2;
  return p;
}

inline bayesmech::PrecisionModel example_model() {
  return bayesmech::build_model(example_precision(), bayesmech::Partition(1, 1, 1));
}

// Solenoidal coupling between external and internal states.
inline bayesmech::Matrix solenoidal_q() {
  bayesmech::Matrix q(3, 3);
  q << 0, 0, 1, 0, 0, 0, -1, 0, 0;
  return q;
}

inline bayesmech::Matrix solenoidal_drift() {
  bayesmech::Matrix b(3, 3);
  b << 1, 1.5, 2, 0.5, 1, 0.5, -2, -0.5, 1;
  return -b;
}

}  // namespace models
