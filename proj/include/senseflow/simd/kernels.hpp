#pragma once

// Data-parallel inner loops. Every kernel has a portable scalar reference and,
// on x86-64, an AVX2+FMA variant chosen at runtime. The variants agree to
// rounding (summation order differs), which tests/unit/test_simd.cpp checks.

#include <array>
#include <cstddef>

namespace senseflow::simd {

enum class Isa { Scalar, Avx2 };

const char* isa_name(Isa isa);
bool isa_supported(Isa isa);

// Best supported ISA unless SENSEFLOW_ISA=scalar or set_isa() says otherwise.
Isa active_isa();
void set_isa(Isa isa); // throws senseflow::Error if unsupported
void reset_isa();

// Masked static pixels for one Gauss-Newton linearization, structure of arrays.
// (px, py, pz) is the frame-1 3D point; (tx, ty) = x + F(x) is where the
// observed flow puts it in frame 2.
struct RigidPoints {
    const double* px = nullptr;
    const double* py = nullptr;
    const double* pz = nullptr;
    const double* tx = nullptr;
    const double* ty = nullptr;
    std::size_t count = 0;
};

struct RigidModel {
    std::array<double, 9> rotation{}; // row-major
    std::array<double, 3> translation{};
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    double huber_delta = 1.345;
    bool robust = true;
};

// Sums of the Huber-weighted normal equations, with the Jacobian taken with
// respect to a perturbation applied after the transform (left perturbation).
// hessian holds the upper triangle of J^T W J row by row.
struct NormalSums {
    std::array<double, 21> hessian{};
    std::array<double, 6> gradient{}; // J^T W r
    double cost = 0.0;                 // sum of Huber (or 0.5 r^2) penalties
    double weighted_abs = 0.0;         // sum of w |r|
    double weight_sum = 0.0;
    double used = 0.0;                 // points in front of the camera

    NormalSums& operator+=(const NormalSums& o);
};

struct KernelTable {
    Isa isa;
    double (*dot)(const double* a, const double* b, std::size_t n);
    // sum_i w_i |a_i - b_i|
    double (*weighted_abs_diff)(const double* a, const double* b, const double* w, std::size_t n);
    // out[i] = sum_k taps[k] * in[i + k], i < n_out
    void (*correlate_row)(const double* in, double* out, std::size_t n_out, const double* taps, std::size_t n_taps);
    void (*normal_equations)(const RigidPoints& pts, const RigidModel& model, NormalSums& sums);
};

const KernelTable& scalar_kernels();
// nullptr when the variant is not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels();

const KernelTable& kernels();

} // namespace senseflow::simd
