#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "airway/volume.hpp"

namespace airway {

struct OtsuResult {
    double threshold;
    Volume mask;  // 1 where intensity <= threshold (air is the low class in CT)
};

// Between-class variance maximization over a 256-bin histogram spanning [min, max].
// Ties break toward the lower threshold. Throws on a constant volume.
OtsuResult otsu_threshold(const Volume& vol);

struct Components {
    std::vector<std::int32_t> labels;   // per voxel, 0 = background, 1..count components
    std::vector<std::int64_t> sizes;    // sizes[k] = voxel count of label k+1
    int count = 0;
};

// connectivity must be 6 or 26. Labels are canonical: components numbered by the
// linear index of their first voxel in scan order.
Components connected_components(const Volume& mask, int connectivity);

// The 26-connected component with the largest intersection with the top 10% z-slab
// (highest z indices). Throws "no trachea candidate" when no component reaches the slab.
Volume main_trachea(const Volume& mask);

// Output dims = ceil(dim/2); each output voxel is the max over its 2x2x2 input
// block, truncated at borders.
Volume maxpool_stride2(const Volume& vol);

// Stride-1 max filter with a 3x3x3 window, zero padded.
Volume dilate26(const Volume& mask);

// Tiles the volume with stride = cube - overlap (last tile clamped to the border),
// runs the predictor per tile and averages scores where tiles overlap.
Volume sliding_window_apply(const Volume& vol, std::array<int, 3> cube,
                            std::array<int, 3> overlap,
                            const std::function<Volume(const Volume&)>& predictor);

}  // namespace airway
