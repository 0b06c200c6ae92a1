#pragma once

#include "senseflow/dense_map.hpp"

namespace senseflow {

enum class SearchDims { OneD, TwoD };

// Matching scores over a (2k+1) or (2k+1)^2 displacement window.
// Channel (dy + k) * (2k + 1) + (dx + k) holds displacement (dx, dy) in 2D;
// channel dx + k in 1D.
struct CostVolume {
    DenseMap scores;
    int radius = 0;
    SearchDims dims = SearchDims::TwoD;

    static int channel_count(int radius, SearchDims dims);
};

// score(p, d) = <f1(p), f2(p + d)> / C, zero when p + d falls outside.
CostVolume correlation_2d(const DenseMap& f1, const DenseMap& f2, int radius);
CostVolume correlation_1d(const DenseMap& left, const DenseMap& right, int radius);

} // namespace senseflow
