#pragma once

#include <cmath>
#include <cstddef>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define KDST_HAVE_AVX2_SINCOS 1
#endif

namespace kdst::numkit {

namespace detail {

// Cody-Waite split of pi/2 and minimax polynomials on [-pi/4, pi/4].
// Max abs error ~7e-8 for |x| up to a few hundred; plenty below the 1e-5/1e-6
// tolerances used on trig-dependent values in this codebase.
inline constexpr float kTwoOverPi = 0.63661977236758134308f;
inline constexpr float kPio2Hi = 1.57079625129699707031f;
inline constexpr float kPio2Mid = 7.54978941586159635335e-8f;
inline constexpr float kPio2Lo = 5.39030252995776476554e-15f;

// Scalar fallback (vector tails, non-AVX2 builds): double-precision libm.
// The polynomial reduction lives only in the AVX2 body, where FMA keeps the
// Cody-Waite steps exact regardless of compiler flags.
inline void sincos_scalar(float x, float* s, float* c) {
  *s = static_cast<float>(std::sin(static_cast<double>(x)));
  *c = static_cast<float>(std::cos(static_cast<double>(x)));
}

}  // namespace detail

// Writes sin(x[i]) and cos(x[i]) for i in [0, n). The hot path of every
// Fourier feature evaluation; vectorized because libm sincosf dominates
// full-graph student inference otherwise.
inline void sincos_block(const float* x, float* s, float* c, std::size_t n) {
  std::size_t i = 0;
#ifdef KDST_HAVE_AVX2_SINCOS
  const __m256 two_over_pi = _mm256_set1_ps(detail::kTwoOverPi);
  const __m256 pio2_hi = _mm256_set1_ps(detail::kPio2Hi);
  const __m256 pio2_mid = _mm256_set1_ps(detail::kPio2Mid);
  const __m256 pio2_lo = _mm256_set1_ps(detail::kPio2Lo);
  for (; i + 8 <= n; i += 8) {
    const __m256 xi = _mm256_loadu_ps(x + i);
    const __m256 q =
        _mm256_round_ps(_mm256_mul_ps(xi, two_over_pi), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    const __m256i iq = _mm256_cvtps_epi32(q);
    __m256 r = _mm256_fnmadd_ps(q, pio2_hi, xi);
    r = _mm256_fnmadd_ps(q, pio2_mid, r);
    r = _mm256_fnmadd_ps(q, pio2_lo, r);
    const __m256 r2 = _mm256_mul_ps(r, r);
    __m256 sp = _mm256_set1_ps(-1.9515295891e-4f);
    sp = _mm256_fmadd_ps(sp, r2, _mm256_set1_ps(8.3321608736e-3f));
    sp = _mm256_fmadd_ps(sp, r2, _mm256_set1_ps(-1.6666654611e-1f));
    const __m256 sr = _mm256_fmadd_ps(_mm256_mul_ps(r, r2), sp, r);
    __m256 cp = _mm256_set1_ps(2.443315711809948e-5f);
    cp = _mm256_fmadd_ps(cp, r2, _mm256_set1_ps(-1.388731625493765e-3f));
    cp = _mm256_fmadd_ps(cp, r2, _mm256_set1_ps(4.166664568298827e-2f));
    const __m256 cr = _mm256_fmadd_ps(_mm256_mul_ps(r2, r2), cp,
                                      _mm256_fnmadd_ps(_mm256_set1_ps(0.5f), r2, _mm256_set1_ps(1.0f)));
    const __m256i q1 = _mm256_and_si256(iq, _mm256_set1_epi32(1));
    const __m256 swap = _mm256_castsi256_ps(_mm256_cmpeq_epi32(q1, _mm256_set1_epi32(1)));
    __m256 sv = _mm256_blendv_ps(sr, cr, swap);
    __m256 cv = _mm256_blendv_ps(cr, sr, swap);
    // sign(sin) flips on quadrants 2,3; sign(cos) on quadrants 1,2.
    const __m256 sneg =
        _mm256_castsi256_ps(_mm256_slli_epi32(_mm256_and_si256(iq, _mm256_set1_epi32(2)), 30));
    const __m256i iqp = _mm256_add_epi32(iq, _mm256_set1_epi32(1));
    const __m256 cneg =
        _mm256_castsi256_ps(_mm256_slli_epi32(_mm256_and_si256(iqp, _mm256_set1_epi32(2)), 30));
    sv = _mm256_xor_ps(sv, sneg);
    cv = _mm256_xor_ps(cv, cneg);
    _mm256_storeu_ps(s + i, sv);
    _mm256_storeu_ps(c + i, cv);
  }
#endif
  for (; i < n; ++i) detail::sincos_scalar(x[i], s + i, c + i);
}

// 64-bit reference path: plain libm, used by the double-precision tensor
// instantiation that backs finite-difference oracles.
inline void sincos_block(const double* x, double* s, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = std::sin(x[i]);
    c[i] = std::cos(x[i]);
  }
}

}  // namespace kdst::numkit
