#pragma once

#include <vector>

#include "senseflow/dense_map.hpp"

namespace senseflow {

// How values change units when a map is downsampled.
enum class MapKind {
    Intensity, // images, occlusion, posteriors: plain averaging
    Motion,    // flow, disparity: averaged then scaled by 0.5 per level
};

// Level 0 is `m`; each further level is a 2x2 average pool. Odd sizes round
// up and the missing taps are left out of the average.
std::vector<DenseMap> build_pyramid(const DenseMap& m, int levels, MapKind kind = MapKind::Intensity);

// Sparse variant: a coarse pixel averages its valid children only and is
// valid when at least one child is.
struct MaskedPyramid {
    std::vector<DenseMap> maps;
    std::vector<ValidityMask> valid;
};
MaskedPyramid build_masked_pyramid(const DenseMap& m, const ValidityMask& valid, int levels,
                                   MapKind kind = MapKind::Intensity);

// One pooling step, exposed for tests.
DenseMap downsample(const DenseMap& m, MapKind kind);

} // namespace senseflow
