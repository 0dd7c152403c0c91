#pragma once

#include <cstddef>

namespace ldm4ts {

// C[M,N] (+)= op(A) * op(B), row-major, no aliasing. op(A) is [M,K]; with
// trans_a the stored A is [K,M]. op(B) is [K,N]; with trans_b stored B is [N,K].
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool trans_a, bool trans_b, bool accumulate);

}  // namespace ldm4ts
