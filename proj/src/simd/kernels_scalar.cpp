#include <cmath>

#include "senseflow/simd/kernels.hpp"

namespace senseflow::simd {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double weighted_abs_diff_scalar(const double* a, const double* b, const double* w, std::size_t n)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * std::abs(a[i] - b[i]);
    return s;
}

void correlate_row_scalar(const double* in, double* out, std::size_t n_out, const double* taps, std::size_t n_taps)
{
    for (std::size_t i = 0; i < n_out; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < n_taps; ++k) s += taps[k] * in[i + k];
        out[i] = s;
    }
}

void normal_equations_scalar(const RigidPoints& pts, const RigidModel& m, NormalSums& sums)
{
    const auto& R = m.rotation;
    const auto& t = m.translation;
    const double delta = m.huber_delta;
    for (std::size_t i = 0; i < pts.count; ++i) {
        const double X = R[0] * pts.px[i] + R[1] * pts.py[i] + R[2] * pts.pz[i] + t[0];
        const double Y = R[3] * pts.px[i] + R[4] * pts.py[i] + R[5] * pts.pz[i] + t[1];
        const double Z = R[6] * pts.px[i] + R[7] * pts.py[i] + R[8] * pts.pz[i] + t[2];
        if (!(Z > 0.0)) continue;
        const double d = 1.0 / Z;
        const double u = X * d;
        const double v = Y * d;
        const double rx = pts.tx[i] - (m.fx * u + m.cx);
        const double ry = pts.ty[i] - (m.fy * v + m.cy);
        const double norm = std::sqrt(rx * rx + ry * ry);

        double w = 1.0;
        double cost = 0.5 * norm * norm;
        if (m.robust && norm > delta) {
            w = delta / norm;
            cost = delta * (norm - 0.5 * delta);
        }

        const double a[6] = {-m.fx * u * v, m.fx * (1.0 + u * u), -m.fx * v, m.fx * d, 0.0, -m.fx * u * d};
        const double b[6] = {-m.fy * (1.0 + v * v), m.fy * u * v, m.fy * u, 0.0, m.fy * d, -m.fy * v * d};

        int k = 0;
        for (int r = 0; r < 6; ++r) {
            const double wa = w * a[r];
            const double wb = w * b[r];
            for (int c = r; c < 6; ++c) sums.hessian[k++] += wa * a[c] + wb * b[c];
            sums.gradient[r] += wa * rx + wb * ry;
        }
        sums.cost += cost;
        sums.weighted_abs += w * norm;
        sums.weight_sum += w;
        sums.used += 1.0;
    }
}

} // namespace

NormalSums& NormalSums::operator+=(const NormalSums& o)
{
    for (std::size_t i = 0; i < hessian.size(); ++i) hessian[i] += o.hessian[i];
    for (std::size_t i = 0; i < gradient.size(); ++i) gradient[i] += o.gradient[i];
    cost += o.cost;
    weighted_abs += o.weighted_abs;
    weight_sum += o.weight_sum;
    used += o.used;
    return *this;
}

const KernelTable& scalar_kernels()
{
    static const KernelTable table{Isa::Scalar, dot_scalar, weighted_abs_diff_scalar, correlate_row_scalar,
                                   normal_equations_scalar};
    return table;
}

} // namespace senseflow::simd
