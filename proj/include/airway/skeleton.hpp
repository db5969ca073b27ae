#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "airway/volume.hpp"

namespace airway {

using VoxelCoord = std::array<int, 3>;  // (x, y, z)

// Thins a binary mask to a unit-wide centerline. Iterative boundary peeling that
// deletes only simple voxels (foreground stays 26-connected, background stays
// 6-connected within the 3^3 neighborhood), sweeping the 6 face directions per
// pass until a fixed point; candidates are processed in increasing
// distance-to-background order so the residue tracks the medial axis.
// Endpoints (exactly one foreground neighbor) are never removed.
Volume skeletonize(const Volume& mask);

enum class PointType { End, Edge, Division };

struct PointInfo {
    PointType type;
    int neighbor_count;  // foreground skeleton voxels in the 26-neighborhood
};

// Keyed by linear voxel index. N=1 -> End, N=2 -> Edge, N>=3 -> Division.
// Isolated voxels (N=0) classify as End, degenerate.
using PointClassMap = std::map<std::int64_t, PointInfo>;

PointClassMap classify_points(const Volume& skel);

struct SegmentSet {
    std::vector<std::vector<VoxelCoord>> segments;   // ordered chains of edge/end voxels
    std::vector<std::vector<VoxelCoord>> junctions;  // 26-connected division-point clusters
    std::vector<std::pair<int, int>> adjacency;      // segment pairs sharing a junction, i < j
};

// Segments are maximal 26-connected chains of Edge/End voxels, ordered from the
// endpoint with the lexicographically smaller (z, y, x). Two segments are adjacent
// iff both touch (Chebyshev <= 1) the same junction cluster.
SegmentSet extract_segments(const Volume& skel, const PointClassMap& classes);

// Optional spur filter: drops segments with fewer than min_len voxels. min_len = 0
// keeps everything.
void prune_short_segments(SegmentSet& set, int min_len);

}  // namespace airway
