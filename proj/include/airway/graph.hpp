#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "airway/skeleton.hpp"
#include "airway/volume.hpp"

namespace airway {

constexpr int kPointK = 10;        // subsampled voxels per segment
constexpr int kFeatureChannels = 24;
constexpr int kNumClasses = 19;    // 18 segmental bronchi + "other"

struct GraphNode {
    int id = 0;
    std::optional<int> label;                    // class id, absent at inference
    std::vector<std::array<double, 3>> chain;    // raw (possibly transformed) voxel coords
    std::vector<double> point_feat;              // 3*K, bounding-box normalized
    std::vector<double> voxel_feat;              // C*K, channels contiguous per sample
};

struct AirwayGraph {
    std::vector<GraphNode> nodes;
    std::vector<std::pair<int, int>> edges;  // undirected, i < j, no duplicates
    int point_k = kPointK;
    int channels = kFeatureChannels;
};

// Indices round(i*(len-1)/(K-1)) for i = 0..K-1; repeats when len < K.
std::vector<int> subsample_indices(int len, int k);

// Bounding-box normalized coordinates of K subsampled chain voxels, concatenated
// (x,y,z) per sample in chain order. A degenerate axis of extent 0 maps to 0.5.
std::vector<double> point_feature(const std::vector<std::array<double, 3>>& chain, int k = kPointK);

// C-channel descriptor vectors read at the same K subsampled positions.
std::vector<double> voxel_feature(const std::vector<VoxelCoord>& chain,
                                  const FeatureVolume& feats, int k = kPointK);

// One node per segment, edges from the segment adjacency.
AirwayGraph build_graph(const SegmentSet& segments, const FeatureVolume& feats,
                        const std::optional<std::vector<int>>& labels, int k = kPointK);

struct AugmentParams {
    double max_rot_deg = 10.0;   // per-axis rotation bound
    double scale_lo = 0.9;
    double scale_hi = 1.1;
    double elastic_sigma = 1.5;  // displacement amplitude in voxels
};

// Transforms raw chain coordinates (affine then elastic) and recomputes point
// features. Voxel features, labels and topology are untouched. Deterministic per seed.
AirwayGraph augment(const AirwayGraph& graph, std::uint64_t seed,
                    const AugmentParams& params = {});

// Graph JSON: {nodes:[{id, label?, chain, point_feat, voxel_feat}], edges:[[i,j]...]}.
// Floats are written with 9 significant digits.
std::string graph_to_json(const AirwayGraph& graph);
AirwayGraph graph_from_json(const std::string& text);
void save_graph(const AirwayGraph& graph, const std::filesystem::path& path);
AirwayGraph load_graph(const std::filesystem::path& path);

// Segment-set JSON: {segments:[{id, chain}], junctions:[[...]], adjacency:[[i,j]...]}
// with integer coordinate triples.
std::string segment_set_to_json(const SegmentSet& set);
void save_segment_set(const SegmentSet& set, const std::filesystem::path& path);

}  // namespace airway
