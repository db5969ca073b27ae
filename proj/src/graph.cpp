#include "airway/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "airway/rng.hpp"

namespace airway {

using nlohmann::json;

std::vector<int> subsample_indices(int len, int k) {
    if (len < 1) throw std::invalid_argument("subsample_indices: empty chain");
    if (k < 1) throw std::invalid_argument("subsample_indices: k must be >= 1");
    std::vector<int> idx(k);
    if (k == 1) return idx;  // single sample at the chain head
    for (int i = 0; i < k; ++i)
        idx[i] = static_cast<int>(
            std::llround(static_cast<double>(i) * (len - 1) / (k - 1)));
    return idx;
}

std::vector<double> point_feature(const std::vector<std::array<double, 3>>& chain, int k) {
    if (chain.empty()) throw std::invalid_argument("point_feature: empty chain");

    std::array<double, 3> lo = chain[0], hi = chain[0];
    for (const auto& p : chain)
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }

    const auto idx = subsample_indices(static_cast<int>(chain.size()), k);
    std::vector<double> feat;
    feat.reserve(3 * k);
    for (int i : idx)
        for (int a = 0; a < 3; ++a) {
            double extent = hi[a] - lo[a];
            feat.push_back(extent == 0.0 ? 0.5 : (chain[i][a] - lo[a]) / extent);
        }
    return feat;
}

std::vector<double> voxel_feature(const std::vector<VoxelCoord>& chain,
                                  const FeatureVolume& feats, int k) {
    if (chain.empty()) throw std::invalid_argument("voxel_feature: empty chain");
    const auto idx = subsample_indices(static_cast<int>(chain.size()), k);
    std::vector<double> feat;
    feat.reserve(static_cast<std::size_t>(feats.channels) * k);
    for (int i : idx) {
        const auto& v = chain[i];
        if (!feats.in_bounds(v[0], v[1], v[2]))
            throw std::out_of_range("voxel_feature: chain voxel outside the feature volume");
        for (int c = 0; c < feats.channels; ++c)
            feat.push_back(feats.at(v[0], v[1], v[2], c));
    }
    return feat;
}

AirwayGraph build_graph(const SegmentSet& segments, const FeatureVolume& feats,
                        const std::optional<std::vector<int>>& labels, int k) {
    if (labels && labels->size() != segments.segments.size())
        throw std::invalid_argument("build_graph: label list length mismatch");

    AirwayGraph g;
    g.point_k = k;
    g.channels = feats.channels;
    g.nodes.reserve(segments.segments.size());
    for (std::size_t i = 0; i < segments.segments.size(); ++i) {
        GraphNode node;
        node.id = static_cast<int>(i);
        if (labels) node.label = (*labels)[i];
        node.chain.reserve(segments.segments[i].size());
        for (const auto& v : segments.segments[i])
            node.chain.push_back({static_cast<double>(v[0]), static_cast<double>(v[1]),
                                  static_cast<double>(v[2])});
        node.point_feat = point_feature(node.chain, k);
        node.voxel_feat = voxel_feature(segments.segments[i], feats, k);
        g.nodes.push_back(std::move(node));
    }
    g.edges = segments.adjacency;
    return g;
}

AirwayGraph augment(const AirwayGraph& graph, std::uint64_t seed, const AugmentParams& params) {
    Rng rng(Rng::derive(seed, 0x617567));
    constexpr double deg = 3.141592653589793 / 180.0;

    const double rx = rng.uniform(-params.max_rot_deg, params.max_rot_deg) * deg;
    const double ry = rng.uniform(-params.max_rot_deg, params.max_rot_deg) * deg;
    const double rz = rng.uniform(-params.max_rot_deg, params.max_rot_deg) * deg;
    const double scale = rng.uniform(params.scale_lo, params.scale_hi);
    const bool affine_active = rx != 0.0 || ry != 0.0 || rz != 0.0 || scale != 1.0;

    // Rz * Ry * Rx rotation about the centroid of all chain voxels.
    double rot[3][3];
    {
        const double cx = std::cos(rx), sx = std::sin(rx);
        const double cy = std::cos(ry), sy = std::sin(ry);
        const double cz = std::cos(rz), sz = std::sin(rz);
        rot[0][0] = cz * cy;
        rot[0][1] = cz * sy * sx - sz * cx;
        rot[0][2] = cz * sy * cx + sz * sx;
        rot[1][0] = sz * cy;
        rot[1][1] = sz * sy * sx + cz * cx;
        rot[1][2] = sz * sy * cx - cz * sx;
        rot[2][0] = -sy;
        rot[2][1] = cy * sx;
        rot[2][2] = cy * cx;
    }

    std::array<double, 3> centroid{};
    std::size_t n_pts = 0;
    for (const auto& node : graph.nodes)
        for (const auto& p : node.chain) {
            for (int a = 0; a < 3; ++a) centroid[a] += p[a];
            ++n_pts;
        }
    if (n_pts > 0)
        for (int a = 0; a < 3; ++a) centroid[a] /= static_cast<double>(n_pts);

    // Smooth trigonometric displacement field, three low-frequency components per axis.
    struct Wave {
        std::array<double, 3> k;
        double phase, amp;
    };
    std::array<std::vector<Wave>, 3> waves;
    const bool elastic_active = params.elastic_sigma != 0.0;
    if (elastic_active)
        for (int a = 0; a < 3; ++a)
            for (int m = 0; m < 3; ++m) {
                Wave w;
                for (int b = 0; b < 3; ++b)
                    w.k[b] = rng.uniform(-1.0, 1.0) * (2.0 * 3.141592653589793 / 32.0);
                w.phase = rng.uniform(0.0, 2.0 * 3.141592653589793);
                w.amp = params.elastic_sigma * rng.normal() / std::sqrt(3.0);
                waves[a].push_back(w);
            }

    AirwayGraph out = graph;
    for (auto& node : out.nodes) {
        for (auto& p : node.chain) {
            if (affine_active) {
                std::array<double, 3> q{p[0] - centroid[0], p[1] - centroid[1],
                                        p[2] - centroid[2]};
                std::array<double, 3> r{};
                for (int a = 0; a < 3; ++a)
                    r[a] = rot[a][0] * q[0] + rot[a][1] * q[1] + rot[a][2] * q[2];
                for (int a = 0; a < 3; ++a) p[a] = r[a] * scale + centroid[a];
            }
            if (elastic_active) {
                std::array<double, 3> disp{};
                for (int a = 0; a < 3; ++a)
                    for (const Wave& w : waves[a])
                        disp[a] += w.amp * std::sin(w.k[0] * p[0] + w.k[1] * p[1] +
                                                    w.k[2] * p[2] + w.phase);
                for (int a = 0; a < 3; ++a) p[a] += disp[a];
            }
        }
        node.point_feat = point_feature(node.chain, out.point_k);
    }
    return out;
}

namespace {

// 9 significant digits; enough for 1e-7 round trips, stable across runs.
double sig9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::strtod(buf, nullptr);
}

json chain_to_json(const std::vector<std::array<double, 3>>& chain) {
    json arr = json::array();
    for (const auto& p : chain) {
        json triple = json::array();
        for (int a = 0; a < 3; ++a) {
            double r = sig9(p[a]);
            if (r == std::floor(r) && std::abs(r) < 1e15)
                triple.push_back(static_cast<std::int64_t>(r));
            else
                triple.push_back(r);
        }
        arr.push_back(std::move(triple));
    }
    return arr;
}

json floats_to_json(const std::vector<double>& v) {
    json arr = json::array();
    for (double x : v) arr.push_back(sig9(x));
    return arr;
}

[[noreturn]] void graph_field_error(const std::string& field) {
    throw std::runtime_error("graph json: missing or invalid field '" + field + "'");
}

}  // namespace

std::string graph_to_json(const AirwayGraph& graph) {
    json j;
    j["point_k"] = graph.point_k;
    j["channels"] = graph.channels;
    j["nodes"] = json::array();
    for (const auto& node : graph.nodes) {
        json n;
        n["id"] = node.id;
        if (node.label) n["label"] = *node.label;
        n["chain"] = chain_to_json(node.chain);
        n["point_feat"] = floats_to_json(node.point_feat);
        n["voxel_feat"] = floats_to_json(node.voxel_feat);
        j["nodes"].push_back(std::move(n));
    }
    j["edges"] = json::array();
    for (auto [a, b] : graph.edges) j["edges"].push_back({a, b});
    return j.dump(1);
}

AirwayGraph graph_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("graph json: parse error: ") + e.what());
    }
    AirwayGraph g;
    if (j.contains("point_k")) {
        if (!j["point_k"].is_number_integer()) graph_field_error("point_k");
        g.point_k = j["point_k"].get<int>();
    }
    if (j.contains("channels")) {
        if (!j["channels"].is_number_integer()) graph_field_error("channels");
        g.channels = j["channels"].get<int>();
    }
    if (!j.contains("nodes") || !j["nodes"].is_array()) graph_field_error("nodes");
    for (std::size_t i = 0; i < j["nodes"].size(); ++i) {
        const json& n = j["nodes"][i];
        const std::string ctx = "nodes[" + std::to_string(i) + "]";
        GraphNode node;
        if (!n.contains("id") || !n["id"].is_number_integer()) graph_field_error(ctx + ".id");
        node.id = n["id"].get<int>();
        if (n.contains("label")) {
            if (!n["label"].is_number_integer()) graph_field_error(ctx + ".label");
            node.label = n["label"].get<int>();
        }
        if (!n.contains("chain") || !n["chain"].is_array() || n["chain"].empty())
            graph_field_error(ctx + ".chain");
        for (const json& t : n["chain"]) {
            if (!t.is_array() || t.size() != 3 || !t[0].is_number())
                graph_field_error(ctx + ".chain");
            node.chain.push_back({t[0].get<double>(), t[1].get<double>(), t[2].get<double>()});
        }
        if (!n.contains("point_feat") || !n["point_feat"].is_array())
            graph_field_error(ctx + ".point_feat");
        for (const json& v : n["point_feat"]) {
            if (!v.is_number()) graph_field_error(ctx + ".point_feat");
            node.point_feat.push_back(v.get<double>());
        }
        if (!n.contains("voxel_feat") || !n["voxel_feat"].is_array())
            graph_field_error(ctx + ".voxel_feat");
        for (const json& v : n["voxel_feat"]) {
            if (!v.is_number()) graph_field_error(ctx + ".voxel_feat");
            node.voxel_feat.push_back(v.get<double>());
        }
        g.nodes.push_back(std::move(node));
    }
    if (!j.contains("edges") || !j["edges"].is_array()) graph_field_error("edges");
    for (const json& e : j["edges"]) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
            !e[1].is_number_integer())
            graph_field_error("edges");
        int a = e[0].get<int>(), b = e[1].get<int>();
        if (a < 0 || b < 0 || a >= static_cast<int>(g.nodes.size()) ||
            b >= static_cast<int>(g.nodes.size()) || a == b)
            graph_field_error("edges");
        g.edges.emplace_back(a, b);
    }
    return g;
}

void save_graph(const AirwayGraph& graph, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << graph_to_json(graph) << "\n";
}

AirwayGraph load_graph(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return graph_from_json(text);
}

std::string segment_set_to_json(const SegmentSet& set) {
    json j;
    j["segments"] = json::array();
    for (std::size_t i = 0; i < set.segments.size(); ++i) {
        json s;
        s["id"] = i;
        json chain = json::array();
        for (const auto& v : set.segments[i]) chain.push_back({v[0], v[1], v[2]});
        s["chain"] = std::move(chain);
        j["segments"].push_back(std::move(s));
    }
    j["junctions"] = json::array();
    for (const auto& cluster : set.junctions) {
        json c = json::array();
        for (const auto& v : cluster) c.push_back({v[0], v[1], v[2]});
        j["junctions"].push_back(std::move(c));
    }
    j["adjacency"] = json::array();
    for (auto [a, b] : set.adjacency) j["adjacency"].push_back({a, b});
    return j.dump(1);
}

void save_segment_set(const SegmentSet& set, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << segment_set_to_json(set) << "\n";
}

}  // namespace airway
