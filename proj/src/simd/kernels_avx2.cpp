// Built with -mavx2 -mfma; only reached after a runtime CPU check.

#include <cmath>

#include "variants.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace senseflow::simd::detail {

namespace {

inline double hsum(__m256d v)
{
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline __m256d vabs(__m256d v) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v); }

double dot_avx2(const double* a, const double* b, std::size_t n)
{
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    if (i + 4 <= n) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        i += 4;
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double weighted_abs_diff_avx2(const double* a, const double* b, const double* w, std::size_t n)
{
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d diff = vabs(_mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), diff, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += w[i] * std::abs(a[i] - b[i]);
    return s;
}

void correlate_row_avx2(const double* in, double* out, std::size_t n_out, const double* taps, std::size_t n_taps)
{
    std::size_t i = 0;
    for (; i + 4 <= n_out; i += 4) {
        __m256d acc = _mm256_setzero_pd();
        for (std::size_t k = 0; k < n_taps; ++k) {
            acc = _mm256_fmadd_pd(_mm256_set1_pd(taps[k]), _mm256_loadu_pd(in + i + k), acc);
        }
        _mm256_storeu_pd(out + i, acc);
    }
    for (; i < n_out; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < n_taps; ++k) s += taps[k] * in[i + k];
        out[i] = s;
    }
}

struct Lanes {
    __m256d hessian[21];
    __m256d gradient[6];
    __m256d cost, weighted_abs, weight_sum, used;
};

inline void accumulate4(const RigidModel& m, __m256d px, __m256d py, __m256d pz, __m256d tx, __m256d ty,
                        __m256d lane_on, Lanes& acc)
{
    const auto& R = m.rotation;
    const auto& t = m.translation;
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d half = _mm256_set1_pd(0.5);
    const __m256d zero = _mm256_setzero_pd();

    const __m256d X = _mm256_fmadd_pd(_mm256_set1_pd(R[0]), px,
                                      _mm256_fmadd_pd(_mm256_set1_pd(R[1]), py,
                                                      _mm256_fmadd_pd(_mm256_set1_pd(R[2]), pz, _mm256_set1_pd(t[0]))));
    const __m256d Y = _mm256_fmadd_pd(_mm256_set1_pd(R[3]), px,
                                      _mm256_fmadd_pd(_mm256_set1_pd(R[4]), py,
                                                      _mm256_fmadd_pd(_mm256_set1_pd(R[5]), pz, _mm256_set1_pd(t[1]))));
    __m256d Z = _mm256_fmadd_pd(_mm256_set1_pd(R[6]), px,
                                _mm256_fmadd_pd(_mm256_set1_pd(R[7]), py,
                                                _mm256_fmadd_pd(_mm256_set1_pd(R[8]), pz, _mm256_set1_pd(t[2]))));
    const __m256d front = _mm256_and_pd(_mm256_cmp_pd(Z, zero, _CMP_GT_OQ), lane_on);
    Z = _mm256_blendv_pd(one, Z, front);

    const __m256d d = _mm256_div_pd(one, Z);
    const __m256d u = _mm256_mul_pd(X, d);
    const __m256d v = _mm256_mul_pd(Y, d);
    const __m256d fx = _mm256_set1_pd(m.fx);
    const __m256d fy = _mm256_set1_pd(m.fy);
    const __m256d rx = _mm256_sub_pd(tx, _mm256_fmadd_pd(fx, u, _mm256_set1_pd(m.cx)));
    const __m256d ry = _mm256_sub_pd(ty, _mm256_fmadd_pd(fy, v, _mm256_set1_pd(m.cy)));
    const __m256d norm = _mm256_sqrt_pd(_mm256_fmadd_pd(rx, rx, _mm256_mul_pd(ry, ry)));

    __m256d w = one;
    __m256d cost = _mm256_mul_pd(half, _mm256_mul_pd(norm, norm));
    if (m.robust) {
        const __m256d delta = _mm256_set1_pd(m.huber_delta);
        const __m256d outer = _mm256_cmp_pd(norm, delta, _CMP_GT_OQ);
        const __m256d safe_norm = _mm256_blendv_pd(one, norm, outer);
        w = _mm256_blendv_pd(one, _mm256_div_pd(delta, safe_norm), outer);
        const __m256d lin = _mm256_mul_pd(delta, _mm256_fnmadd_pd(half, delta, norm));
        cost = _mm256_blendv_pd(cost, lin, outer);
    }
    w = _mm256_and_pd(w, front);
    cost = _mm256_and_pd(cost, front);

    const __m256d uv = _mm256_mul_pd(u, v);
    const __m256d a[6] = {
        _mm256_mul_pd(_mm256_sub_pd(zero, fx), uv),
        _mm256_mul_pd(fx, _mm256_fmadd_pd(u, u, one)),
        _mm256_mul_pd(_mm256_sub_pd(zero, fx), v),
        _mm256_mul_pd(fx, d),
        zero,
        _mm256_mul_pd(_mm256_sub_pd(zero, fx), _mm256_mul_pd(u, d)),
    };
    const __m256d b[6] = {
        _mm256_mul_pd(_mm256_sub_pd(zero, fy), _mm256_fmadd_pd(v, v, one)),
        _mm256_mul_pd(fy, uv),
        _mm256_mul_pd(fy, u),
        zero,
        _mm256_mul_pd(fy, d),
        _mm256_mul_pd(_mm256_sub_pd(zero, fy), _mm256_mul_pd(v, d)),
    };

    int k = 0;
    for (int r = 0; r < 6; ++r) {
        const __m256d wa = _mm256_mul_pd(w, a[r]);
        const __m256d wb = _mm256_mul_pd(w, b[r]);
        for (int c = r; c < 6; ++c) {
            acc.hessian[k] = _mm256_fmadd_pd(wa, a[c], _mm256_fmadd_pd(wb, b[c], acc.hessian[k]));
            ++k;
        }
        acc.gradient[r] = _mm256_fmadd_pd(wa, rx, _mm256_fmadd_pd(wb, ry, acc.gradient[r]));
    }
    acc.cost = _mm256_add_pd(acc.cost, cost);
    acc.weighted_abs = _mm256_fmadd_pd(w, norm, acc.weighted_abs);
    acc.weight_sum = _mm256_add_pd(acc.weight_sum, w);
    acc.used = _mm256_add_pd(acc.used, _mm256_and_pd(one, front));
}

void normal_equations_avx2(const RigidPoints& pts, const RigidModel& m, NormalSums& sums)
{
    Lanes acc;
    for (auto& h : acc.hessian) h = _mm256_setzero_pd();
    for (auto& g : acc.gradient) g = _mm256_setzero_pd();
    acc.cost = acc.weighted_abs = acc.weight_sum = acc.used = _mm256_setzero_pd();

    const __m256d all = _mm256_castsi256_pd(_mm256_set1_epi64x(-1));
    std::size_t i = 0;
    for (; i + 4 <= pts.count; i += 4) {
        accumulate4(m, _mm256_loadu_pd(pts.px + i), _mm256_loadu_pd(pts.py + i), _mm256_loadu_pd(pts.pz + i),
                    _mm256_loadu_pd(pts.tx + i), _mm256_loadu_pd(pts.ty + i), all, acc);
    }
    if (i < pts.count) {
        alignas(32) double buf[5][4] = {};
        alignas(32) long long on[4] = {};
        for (std::size_t j = 0; i + j < pts.count; ++j) {
            buf[0][j] = pts.px[i + j];
            buf[1][j] = pts.py[i + j];
            buf[2][j] = pts.pz[i + j];
            buf[3][j] = pts.tx[i + j];
            buf[4][j] = pts.ty[i + j];
            on[j] = -1;
        }
        // Inactive lanes still get Z = 1 so nothing divides by zero.
        for (std::size_t j = pts.count - i; j < 4; ++j) buf[2][j] = 1.0;
        accumulate4(m, _mm256_load_pd(buf[0]), _mm256_load_pd(buf[1]), _mm256_load_pd(buf[2]),
                    _mm256_load_pd(buf[3]), _mm256_load_pd(buf[4]),
                    _mm256_castsi256_pd(_mm256_load_si256(reinterpret_cast<const __m256i*>(on))), acc);
    }

    for (int k = 0; k < 21; ++k) sums.hessian[k] += hsum(acc.hessian[k]);
    for (int r = 0; r < 6; ++r) sums.gradient[r] += hsum(acc.gradient[r]);
    sums.cost += hsum(acc.cost);
    sums.weighted_abs += hsum(acc.weighted_abs);
    sums.weight_sum += hsum(acc.weight_sum);
    sums.used += hsum(acc.used);
}

} // namespace

const KernelTable* avx2_table()
{
    static const KernelTable table{Isa::Avx2, dot_avx2, weighted_abs_diff_avx2, correlate_row_avx2,
                                   normal_equations_avx2};
    return &table;
}

} // namespace senseflow::simd::detail

#else

namespace senseflow::simd::detail {
const KernelTable* avx2_table() { return nullptr; }
} // namespace senseflow::simd::detail

#endif
