#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "airway/graph.hpp"
#include "airway/skeleton.hpp"
#include "airway/volume.hpp"

namespace airway {

struct SynthParams {
    int depth = 4;              // generations including the root; <= 5 at 64^3
    int branching = 2;
    double radius_decay = 0.7;
    double root_radius = 3.0;   // voxels
    int nx = 64, ny = 64, nz = 64;
    double root_length = 22.0;
    double length_decay = 0.72;
    double tilt_jitter_deg = 8.0;     // polar-angle jitter per branch
    double azimuth_jitter_deg = 20.0; // stays inside the assigned quadrant
    // CT-like intensities. Child branches are brightened (partial-volume style)
    // so a global Otsu isolates the root lumen the way it isolates a real trachea.
    // Sigmas are kept tight: the airway occupies <1% of the volume, and Otsu only
    // prefers the rare dark class over splitting the tissue noise when the noise
    // spread is small against the air/tissue contrast.
    double trachea_air_mean = -900.0, trachea_air_sigma = 20.0;
    double branch_air_mean = -180.0, branch_air_sigma = 15.0;
    double tissue_mean = -100.0, tissue_sigma = 15.0;
    int channels = kFeatureChannels;
};

struct BranchRecord {
    int id = 0;
    int parent = -1;
    int generation = 0;
    int child_index = 0;
    int class_id = 0;
    std::array<double, 3> start{}, end{};
    double radius = 0.0;
    bool truncated = false;                // clipped at the volume border
    std::vector<VoxelCoord> centerline;    // rasterized axis voxels
};

struct SyntheticCase {
    std::uint64_t seed = 0;
    SynthParams params;
    Volume ct;
    Volume gt_mask;
    std::vector<BranchRecord> branches;
    FeatureVolume descriptor_feats;  // analytic stand-in for a learned feature volume
};

// Deterministic per seed. Tubes are capsules around straight branch axes; branches
// that would exit the volume are truncated at the border and flagged.
SyntheticCase generate_case(std::uint64_t seed, const SynthParams& params = {});

// Per-voxel owning branch (-1 = background); overlaps go to the lowest branch id,
// so junction voxels carry the parent's generation. Recomputable from the records.
std::vector<std::int32_t> branch_voxel_map(const std::vector<BranchRecord>& branches,
                                           int nx, int ny, int nz);

// Fixed labeling rule: generation 0 -> the "other" class (18); otherwise
// (generation-1)*4 + quadrant of the branch direction's (x,y) signs, capped at 17.
int class_of_branch(int generation, const std::array<double, 3>& direction);

// Majority vote of the nearest branch centerline over each segment chain.
std::vector<int> label_segments(const SegmentSet& segments,
                                const std::vector<BranchRecord>& branches);

// Full per-case pipeline: skeletonize the ground-truth mask, split into segments,
// attach truth labels and build the featured graph.
AirwayGraph case_to_graph(const SyntheticCase& c, int k = kPointK, int min_segment_len = 0);

struct CaseRef {
    int index;
    std::uint64_t seed;
};

struct DatasetPlan {
    std::vector<CaseRef> train;
    std::vector<CaseRef> test;
};

// Deterministic disjoint split; per-case seeds derive from the master seed.
DatasetPlan plan_dataset(int n_cases, std::uint64_t seed, double train_fraction = 0.7);

// Case directory: ct.json/.raw, mask.json/.raw, feats.json/.raw, truth.json.
void save_case(const SyntheticCase& c, const std::filesystem::path& dir);
SyntheticCase load_case(const std::filesystem::path& dir);

}  // namespace airway
