#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "lvseg/volume.hpp"

namespace lvseg {

// Binary morphology and component analysis. Structuring elements are 2D
// disks (slices are much thicker than in-plane voxels), component analysis
// is 3D.

struct DiskElement {
    int radius_px = 0;
    std::vector<std::pair<int, int>> offsets;  // (dx, dy) with dx^2+dy^2 <= radius_px^2
};

// Builds the disk from a physical radius. In-plane spacing must be isotropic
// within 1%; the pixel radius is round(radius_mm / x_mm).
DiskElement make_disk(double radius_mm, const Spacing& spacing);
DiskElement make_disk_px(int radius_px);

// Per-slice 2D erosion: a voxel survives iff every offset lands on a true
// voxel of the same slice. Out-of-bounds counts as background, so objects
// shrink at the grid border.
BinaryMask erode_slicewise(const BinaryMask& m, const DiskElement& se);

enum class Connectivity { six, twenty_six };

struct LabeledComponents {
    int nx = 0, ny = 0, nz = 0;
    std::vector<std::int32_t> labels;             // 0 = background, 1..count = components
    std::int32_t count = 0;
    std::vector<std::size_t> sizes;               // indexed by label, [0] unused
    std::vector<std::array<double, 3>> centroids_mm;  // indexed by label, [0] unused

    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(ny) * k);
    }
};

LabeledComponents connected_components(const BinaryMask& m, Connectivity conn);

// Extracts one labeled component as a mask.
BinaryMask component_mask(const LabeledComponents& cc, const BinaryMask& grid_like, std::int32_t label);

// Sets every complement region that does not touch the grid border
// (6-connectivity on the complement) to true. Extensive and idempotent.
BinaryMask fill_holes(const BinaryMask& m);

// Mean of true-voxel centers in mm; voxel (i,j,k) has center ((i+0.5)x, ...).
std::array<double, 3> centroid_mm(const BinaryMask& m);

}  // namespace lvseg
