#include "airway/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "airway/rng.hpp"

namespace airway {

using nlohmann::json;

namespace {

constexpr double kPi = 3.141592653589793;

std::array<double, 3> normalized(std::array<double, 3> v) {
    double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n == 0.0) return {0.0, 0.0, -1.0};
    return {v[0] / n, v[1] / n, v[2] / n};
}

// Distance from point p to segment [a, b]; also reports the parameter t in [0,1].
double point_segment_distance(const std::array<double, 3>& p, const std::array<double, 3>& a,
                              const std::array<double, 3>& b, double* t_out = nullptr) {
    std::array<double, 3> ab{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    std::array<double, 3> ap{p[0] - a[0], p[1] - a[1], p[2] - a[2]};
    double len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    double t = len2 == 0.0 ? 0.0
                           : std::clamp((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2,
                                        0.0, 1.0);
    if (t_out) *t_out = t;
    double dx = ap[0] - t * ab[0], dy = ap[1] - t * ab[1], dz = ap[2] - t * ab[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::vector<VoxelCoord> rasterize_segment(const std::array<double, 3>& a,
                                          const std::array<double, 3>& b) {
    double len = std::sqrt((b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1]) +
                           (b[2] - a[2]) * (b[2] - a[2]));
    int steps = std::max(1, static_cast<int>(std::ceil(len / 0.4)));
    std::vector<VoxelCoord> voxels;
    for (int s = 0; s <= steps; ++s) {
        double t = static_cast<double>(s) / steps;
        VoxelCoord v{static_cast<int>(std::llround(a[0] + t * (b[0] - a[0]))),
                     static_cast<int>(std::llround(a[1] + t * (b[1] - a[1]))),
                     static_cast<int>(std::llround(a[2] + t * (b[2] - a[2])))};
        if (voxels.empty() || voxels.back() != v) voxels.push_back(v);
    }
    return voxels;
}

}  // namespace

int class_of_branch(int generation, const std::array<double, 3>& direction) {
    if (generation == 0) return kNumClasses - 1;  // trachea -> "other"
    int quadrant = (direction[0] > 0.0 ? 1 : 0) + (direction[1] > 0.0 ? 2 : 0);
    return std::min(kNumClasses - 2, (generation - 1) * 4 + quadrant);
}

std::vector<std::int32_t> branch_voxel_map(const std::vector<BranchRecord>& branches,
                                           int nx, int ny, int nz) {
    std::vector<std::int32_t> map(static_cast<std::size_t>(nx) * ny * nz, -1);
    auto index = [&](int x, int y, int z) {
        return x + static_cast<std::int64_t>(nx) * (y + static_cast<std::int64_t>(ny) * z);
    };
    for (const auto& rec : branches) {
        int x0 = std::max(0, static_cast<int>(std::floor(std::min(rec.start[0], rec.end[0]) - rec.radius - 1)));
        int x1 = std::min(nx - 1, static_cast<int>(std::ceil(std::max(rec.start[0], rec.end[0]) + rec.radius + 1)));
        int y0 = std::max(0, static_cast<int>(std::floor(std::min(rec.start[1], rec.end[1]) - rec.radius - 1)));
        int y1 = std::min(ny - 1, static_cast<int>(std::ceil(std::max(rec.start[1], rec.end[1]) + rec.radius + 1)));
        int z0 = std::max(0, static_cast<int>(std::floor(std::min(rec.start[2], rec.end[2]) - rec.radius - 1)));
        int z1 = std::min(nz - 1, static_cast<int>(std::ceil(std::max(rec.start[2], rec.end[2]) + rec.radius + 1)));
        for (int z = z0; z <= z1; ++z)
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    std::array<double, 3> p{static_cast<double>(x), static_cast<double>(y),
                                            static_cast<double>(z)};
                    if (point_segment_distance(p, rec.start, rec.end) > rec.radius) continue;
                    if (map[index(x, y, z)] < 0) map[index(x, y, z)] = rec.id;
                }
    }
    return map;
}

SyntheticCase generate_case(std::uint64_t seed, const SynthParams& params) {
    if (params.depth < 1 || params.depth > 5)
        throw std::invalid_argument("generate_case: depth must be in [1,5]");
    if (params.branching < 1 || params.branching > 3)
        throw std::invalid_argument("generate_case: branching must be in [1,3]");

    SyntheticCase c;
    c.seed = seed;
    c.params = params;

    Rng grow_rng(Rng::derive(seed, 1));

    // Grow the tree breadth-first. Tilt angles are taken from the world vertical so
    // every branch keeps growing downward; azimuths stay inside an assigned quadrant
    // so the (x,y) direction signs, and with them the class labels, are stable.
    struct Pending {
        int parent;
        int child_index;
        int generation;
    };
    std::vector<Pending> todo{{-1, 0, 0}};
    const double margin = 2.0;
    while (!todo.empty()) {
        Pending p = todo.front();
        todo.erase(todo.begin());

        BranchRecord rec;
        rec.id = static_cast<int>(c.branches.size());
        rec.parent = p.parent;
        rec.generation = p.generation;
        rec.child_index = p.child_index;
        rec.radius = params.root_radius * std::pow(params.radius_decay, p.generation);
        double length = params.root_length * std::pow(params.length_decay, p.generation);

        std::array<double, 3> dir;
        if (p.generation == 0) {
            rec.start = {params.nx / 2.0 + grow_rng.uniform(-1.5, 1.5),
                         params.ny / 2.0 + grow_rng.uniform(-1.5, 1.5),
                         params.nz - 3.0};
            dir = normalized({grow_rng.uniform(-0.05, 0.05), grow_rng.uniform(-0.05, 0.05), -1.0});
        } else {
            rec.start = c.branches[p.parent].end;
            double tilt = (14.0 + 9.0 * p.generation +
                           grow_rng.uniform(-params.tilt_jitter_deg, params.tilt_jitter_deg)) *
                          kPi / 180.0;
            int quadrant = (2 * p.child_index + p.generation + p.parent) % 4;
            double azimuth = (45.0 + 90.0 * quadrant +
                              grow_rng.uniform(-params.azimuth_jitter_deg,
                                               params.azimuth_jitter_deg)) *
                             kPi / 180.0;
            dir = {std::sin(tilt) * std::cos(azimuth), std::sin(tilt) * std::sin(azimuth),
                   -std::cos(tilt)};
        }

        rec.end = {rec.start[0] + dir[0] * length, rec.start[1] + dir[1] * length,
                   rec.start[2] + dir[2] * length};
        // Truncate at the border, leaving a small margin.
        double t_max = 1.0;
        for (int a = 0; a < 3; ++a) {
            double lim_lo = margin, lim_hi = (a == 0 ? params.nx : a == 1 ? params.ny : params.nz) - 1 - margin;
            double delta = rec.end[a] - rec.start[a];
            if (delta > 0 && rec.end[a] > lim_hi)
                t_max = std::min(t_max, (lim_hi - rec.start[a]) / delta);
            if (delta < 0 && rec.end[a] < lim_lo)
                t_max = std::min(t_max, (lim_lo - rec.start[a]) / delta);
        }
        if (t_max < 1.0) {
            rec.truncated = true;
            for (int a = 0; a < 3; ++a)
                rec.end[a] = rec.start[a] + (rec.end[a] - rec.start[a]) * t_max;
        }

        rec.class_id = class_of_branch(rec.generation, dir);
        rec.centerline = rasterize_segment(rec.start, rec.end);
        c.branches.push_back(rec);

        if (p.generation + 1 < params.depth)
            for (int k = 0; k < params.branching; ++k)
                todo.push_back({rec.id, k, p.generation + 1});
    }

    // Paint the mask and a per-voxel branch map; earlier (lower-generation) branches
    // win overlaps, so junction voxels belong to the parent.
    std::vector<std::int32_t> branch_of =
        branch_voxel_map(c.branches, params.nx, params.ny, params.nz);
    c.gt_mask = Volume(params.nx, params.ny, params.nz);
    for (std::size_t i = 0; i < c.gt_mask.size(); ++i)
        c.gt_mask.data[i] = branch_of[i] >= 0 ? 1.0 : 0.0;

    // CT intensities: tissue noise everywhere, air values in the lumen. The root
    // stays dark; child branches are brightened the way thin bronchi are in real CT.
    c.ct = Volume(params.nx, params.ny, params.nz);
    Rng noise_rng(Rng::derive(seed, 2));
    for (std::size_t i = 0; i < c.ct.size(); ++i) {
        double n = noise_rng.normal();
        double value;
        if (branch_of[i] < 0)
            value = params.tissue_mean + params.tissue_sigma * n;
        else if (c.branches[branch_of[i]].generation == 0)
            value = params.trachea_air_mean + params.trachea_air_sigma * n;
        else
            value = params.branch_air_mean + params.branch_air_sigma * n;
        // Round through f32 so saved cases reload bit-exactly.
        c.ct.data[i] = static_cast<float>(value);
    }

    // Analytic descriptor volume: local radius, tangent, depth-to-root, occupancy,
    // tiled to the requested channel count.
    c.descriptor_feats = FeatureVolume(params.nx, params.ny, params.nz, params.channels);
    for (int z = 0; z < params.nz; ++z)
        for (int y = 0; y < params.ny; ++y)
            for (int x = 0; x < params.nx; ++x) {
                std::int64_t i = c.gt_mask.index(x, y, z);
                if (c.gt_mask.data[i] == 0.0) continue;
                std::array<double, 3> p{static_cast<double>(x), static_cast<double>(y),
                                        static_cast<double>(z)};
                int best = -1;
                double best_dist = 0.0, best_t = 0.0;
                for (const auto& rec : c.branches) {
                    double t;
                    double d = point_segment_distance(p, rec.start, rec.end, &t) / std::max(rec.radius, 0.5);
                    if (best < 0 || d < best_dist) {
                        best = rec.id;
                        best_dist = d;
                        best_t = t;
                    }
                }
                const auto& rec = c.branches[best];
                std::array<double, 3> tangent = normalized(
                    {rec.end[0] - rec.start[0], rec.end[1] - rec.start[1], rec.end[2] - rec.start[2]});
                const double base[6] = {rec.radius / params.root_radius,
                                        tangent[0],
                                        tangent[1],
                                        tangent[2],
                                        (rec.generation + best_t) / params.depth,
                                        1.0};
                for (int ch = 0; ch < params.channels; ++ch)
                    c.descriptor_feats.at(x, y, z, ch) = static_cast<float>(base[ch % 6]);
            }

    return c;
}

std::vector<int> label_segments(const SegmentSet& segments,
                                const std::vector<BranchRecord>& branches) {
    std::vector<int> labels;
    labels.reserve(segments.segments.size());
    for (const auto& chain : segments.segments) {
        std::vector<std::int64_t> votes(branches.size(), 0);
        for (const auto& v : chain) {
            int best = -1;
            std::int64_t best_d2 = 0;
            for (const auto& rec : branches)
                for (const auto& cv : rec.centerline) {
                    std::int64_t dx = v[0] - cv[0], dy = v[1] - cv[1], dz = v[2] - cv[2];
                    std::int64_t d2 = dx * dx + dy * dy + dz * dz;
                    if (best < 0 || d2 < best_d2) {
                        best = rec.id;
                        best_d2 = d2;
                    }
                }
            if (best >= 0) votes[best]++;
        }
        int winner = 0;
        for (std::size_t b = 1; b < votes.size(); ++b)
            if (votes[b] > votes[winner]) winner = static_cast<int>(b);
        labels.push_back(branches[winner].class_id);
    }
    return labels;
}

AirwayGraph case_to_graph(const SyntheticCase& c, int k, int min_segment_len) {
    Volume skel = skeletonize(c.gt_mask);
    PointClassMap classes = classify_points(skel);
    SegmentSet segments = extract_segments(skel, classes);
    prune_short_segments(segments, min_segment_len);
    std::vector<int> labels = label_segments(segments, c.branches);
    return build_graph(segments, c.descriptor_feats, labels, k);
}

DatasetPlan plan_dataset(int n_cases, std::uint64_t seed, double train_fraction) {
    if (n_cases < 2) throw std::invalid_argument("plan_dataset: need at least 2 cases");
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw std::invalid_argument("plan_dataset: train fraction must be in (0,1)");
    int n_train = static_cast<int>(std::llround(n_cases * train_fraction));
    n_train = std::clamp(n_train, 1, n_cases - 1);
    DatasetPlan plan;
    for (int i = 0; i < n_cases; ++i) {
        CaseRef ref{i, Rng::derive(seed, 0xca5e0000ULL + static_cast<std::uint64_t>(i))};
        (i < n_train ? plan.train : plan.test).push_back(ref);
    }
    return plan;
}

void save_case(const SyntheticCase& c, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_volume(c.ct, dir / "ct.json", RawDtype::f32);
    save_volume(c.gt_mask, dir / "mask.json", RawDtype::u8);
    save_feature_volume(c.descriptor_feats, dir / "feats.json");

    json truth;
    truth["seed"] = c.seed;
    truth["params"] = {{"depth", c.params.depth},
                       {"branching", c.params.branching},
                       {"radius_decay", c.params.radius_decay},
                       {"root_radius", c.params.root_radius},
                       {"dims", {c.params.nx, c.params.ny, c.params.nz}}};
    truth["branches"] = json::array();
    for (const auto& rec : c.branches) {
        json b;
        b["id"] = rec.id;
        b["parent"] = rec.parent;
        b["generation"] = rec.generation;
        b["child_index"] = rec.child_index;
        b["class_id"] = rec.class_id;
        b["start"] = {rec.start[0], rec.start[1], rec.start[2]};
        b["end"] = {rec.end[0], rec.end[1], rec.end[2]};
        b["radius"] = rec.radius;
        b["truncated"] = rec.truncated;
        json cl = json::array();
        for (const auto& v : rec.centerline) cl.push_back({v[0], v[1], v[2]});
        b["centerline"] = std::move(cl);
        truth["branches"].push_back(std::move(b));
    }
    std::ofstream out(dir / "truth.json");
    if (!out) throw std::runtime_error("cannot open for writing: " + (dir / "truth.json").string());
    out << truth.dump(1) << "\n";
}

SyntheticCase load_case(const std::filesystem::path& dir) {
    SyntheticCase c;
    c.ct = load_volume(dir / "ct.json");
    c.gt_mask = load_volume(dir / "mask.json");
    c.descriptor_feats = load_feature_volume(dir / "feats.json");

    std::ifstream in(dir / "truth.json");
    if (!in) throw std::runtime_error("cannot open: " + (dir / "truth.json").string());
    json truth;
    try {
        in >> truth;
    } catch (const json::exception& e) {
        throw std::runtime_error("truth json: parse error: " + std::string(e.what()));
    }
    auto need = [&](const json& j, const char* field) -> const json& {
        if (!j.contains(field))
            throw std::runtime_error(std::string("truth json: missing field '") + field + "'");
        return j[field];
    };
    c.seed = need(truth, "seed").get<std::uint64_t>();
    const json& jp = need(truth, "params");
    c.params.depth = need(jp, "depth").get<int>();
    c.params.branching = need(jp, "branching").get<int>();
    c.params.radius_decay = need(jp, "radius_decay").get<double>();
    c.params.root_radius = need(jp, "root_radius").get<double>();
    c.params.nx = need(jp, "dims")[0].get<int>();
    c.params.ny = need(jp, "dims")[1].get<int>();
    c.params.nz = need(jp, "dims")[2].get<int>();
    for (const json& b : need(truth, "branches")) {
        BranchRecord rec;
        rec.id = need(b, "id").get<int>();
        rec.parent = need(b, "parent").get<int>();
        rec.generation = need(b, "generation").get<int>();
        rec.child_index = need(b, "child_index").get<int>();
        rec.class_id = need(b, "class_id").get<int>();
        for (int a = 0; a < 3; ++a) {
            rec.start[a] = need(b, "start")[a].get<double>();
            rec.end[a] = need(b, "end")[a].get<double>();
        }
        rec.radius = need(b, "radius").get<double>();
        rec.truncated = need(b, "truncated").get<bool>();
        for (const json& v : need(b, "centerline"))
            rec.centerline.push_back({v[0].get<int>(), v[1].get<int>(), v[2].get<int>()});
        c.branches.push_back(std::move(rec));
    }
    return c;
}

}  // namespace airway
