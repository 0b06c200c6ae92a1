#pragma once

#include "senseflow/simd/kernels.hpp"

namespace senseflow::simd::detail {

// Defined in kernels_avx2.cpp; nullptr on targets without the variant.
const KernelTable* avx2_table();

} // namespace senseflow::simd::detail
