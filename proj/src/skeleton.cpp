#include "airway/skeleton.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <deque>
#include <stdexcept>

namespace airway {

namespace {

struct Grid {
    int nx, ny, nz;
    std::vector<std::uint8_t> fg;

    std::int64_t index(int x, int y, int z) const {
        return x + static_cast<std::int64_t>(nx) * (y + static_cast<std::int64_t>(ny) * z);
    }
    bool in_bounds(int x, int y, int z) const {
        return x >= 0 && x < nx && y >= 0 && y < ny && z >= 0 && z < nz;
    }
    bool at(int x, int y, int z) const {
        return in_bounds(x, y, z) && fg[index(x, y, z)] != 0;
    }
};

int count_neighbors26(const Grid& g, int x, int y, int z) {
    int n = 0;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (!dx && !dy && !dz) continue;
                n += g.at(x + dx, y + dy, z + dz);
            }
    return n;
}

// Local cube index for offsets in [-1,1]^3.
inline int cube_idx(int dx, int dy, int dz) { return (dx + 1) + 3 * ((dy + 1) + 3 * (dz + 1)); }

// A voxel is simple for (26,6) connectivity iff the foreground of its punctured
// 3^3 neighborhood is one 26-connected set and the background of its
// 18-neighborhood is one 6-connected set touching a face neighbor.
bool is_simple(const Grid& g, int x, int y, int z) {
    bool cube[27];
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                cube[cube_idx(dx, dy, dz)] = g.at(x + dx, y + dy, z + dz);

    // Foreground condition: exactly one 26-component among the 26 neighbors.
    int first_fg = -1;
    for (int i = 0; i < 27; ++i)
        if (i != 13 && cube[i]) {
            first_fg = i;
            break;
        }
    if (first_fg < 0) return false;  // isolated voxel
    {
        bool seen[27] = {};
        int stack[27], top = 0;
        stack[top++] = first_fg;
        seen[first_fg] = true;
        while (top) {
            int cur = stack[--top];
            int cx = cur % 3, cy = (cur / 3) % 3, cz = cur / 9;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        int nx = cx + dx, ny = cy + dy, nz = cz + dz;
                        if (nx < 0 || nx > 2 || ny < 0 || ny > 2 || nz < 0 || nz > 2) continue;
                        int ni = nx + 3 * (ny + 3 * nz);
                        if (ni == 13 || seen[ni] || !cube[ni]) continue;
                        seen[ni] = true;
                        stack[top++] = ni;
                    }
        }
        for (int i = 0; i < 27; ++i)
            if (i != 13 && cube[i] && !seen[i]) return false;
    }

    // Background condition: one 6-component of background within the
    // 18-neighborhood, reached from a face neighbor.
    static const int face[6] = {cube_idx(-1, 0, 0), cube_idx(1, 0, 0), cube_idx(0, -1, 0),
                                cube_idx(0, 1, 0),  cube_idx(0, 0, -1), cube_idx(0, 0, 1)};
    auto in_n18 = [](int i) {
        int ax = std::abs(i % 3 - 1), ay = std::abs((i / 3) % 3 - 1), az = std::abs(i / 9 - 1);
        return (ax + ay + az) >= 1 && (ax + ay + az) <= 2;
    };
    int first_bg_face = -1;
    for (int f : face)
        if (!cube[f]) {
            first_bg_face = f;
            break;
        }
    if (first_bg_face < 0) return false;  // interior voxel
    bool seen[27] = {};
    int stack[27], top = 0;
    stack[top++] = first_bg_face;
    seen[first_bg_face] = true;
    while (top) {
        int cur = stack[--top];
        int cx = cur % 3, cy = (cur / 3) % 3, cz = cur / 9;
        static const int d6[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0},
                                     {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
        for (const auto& d : d6) {
            int nx = cx + d[0], ny = cy + d[1], nz = cz + d[2];
            if (nx < 0 || nx > 2 || ny < 0 || ny > 2 || nz < 0 || nz > 2) continue;
            int ni = nx + 3 * (ny + 3 * nz);
            if (ni == 13 || seen[ni] || cube[ni] || !in_n18(ni)) continue;
            seen[ni] = true;
            stack[top++] = ni;
        }
    }
    for (int f : face)
        if (!cube[f] && !seen[f]) return false;
    return true;
}

std::vector<std::int32_t> background_distance(const Grid& g) {
    // 6-connected BFS distance to background; the volume border counts as background.
    std::vector<std::int32_t> dist(g.fg.size(), 0);
    std::deque<std::int64_t> queue;
    for (int z = 0; z < g.nz; ++z)
        for (int y = 0; y < g.ny; ++y)
            for (int x = 0; x < g.nx; ++x) {
                std::int64_t i = g.index(x, y, z);
                if (!g.fg[i]) continue;
                bool border = false;
                static const int d6[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0},
                                             {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
                for (const auto& d : d6)
                    if (!g.at(x + d[0], y + d[1], z + d[2])) {
                        border = true;
                        break;
                    }
                if (border) {
                    dist[i] = 1;
                    queue.push_back(i);
                }
            }
    while (!queue.empty()) {
        std::int64_t cur = queue.front();
        queue.pop_front();
        int x = static_cast<int>(cur % g.nx);
        int y = static_cast<int>((cur / g.nx) % g.ny);
        int z = static_cast<int>(cur / (static_cast<std::int64_t>(g.nx) * g.ny));
        static const int d6[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0},
                                     {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
        for (const auto& d : d6) {
            int nx = x + d[0], ny = y + d[1], nz = z + d[2];
            if (!g.at(nx, ny, nz)) continue;
            std::int64_t ni = g.index(nx, ny, nz);
            if (dist[ni] == 0) {
                dist[ni] = dist[cur] + 1;
                queue.push_back(ni);
            }
        }
    }
    return dist;
}

}  // namespace

Volume skeletonize(const Volume& mask) {
    if (!mask.is_binary()) throw std::invalid_argument("skeletonize: mask must be binary");
    if (mask.count_nonzero() == 0) throw std::invalid_argument("skeletonize: mask is empty");

    Grid g{mask.nx, mask.ny, mask.nz, {}};
    g.fg.resize(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) g.fg[i] = mask.data[i] != 0.0;

    const auto dist = background_distance(g);

    static const int dirs[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0},
                                   {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
    // Candidate lists for all six directions are frozen at the start of each pass,
    // so a pass peels at most one boundary shell; an oblique tip voxel that borders
    // several directions at once cannot be chewed repeatedly within one pass.
    std::array<std::vector<std::pair<std::int32_t, std::int64_t>>, 6> candidates;
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto& c : candidates) c.clear();
        for (int z = 0; z < g.nz; ++z)
            for (int y = 0; y < g.ny; ++y)
                for (int x = 0; x < g.nx; ++x) {
                    std::int64_t i = g.index(x, y, z);
                    if (!g.fg[i]) continue;
                    for (int d = 0; d < 6; ++d)
                        if (!g.at(x + dirs[d][0], y + dirs[d][1], z + dirs[d][2]))
                            candidates[d].emplace_back(dist[i], i);
                }
        for (auto& c : candidates) std::sort(c.begin(), c.end());
        for (int d = 0; d < 6; ++d) {
            for (const auto& [dd, i] : candidates[d]) {
                if (!g.fg[i]) continue;
                int x = static_cast<int>(i % g.nx);
                int y = static_cast<int>((i / g.nx) % g.ny);
                int z = static_cast<int>(i / (static_cast<std::int64_t>(g.nx) * g.ny));
                // Still a border voxel of this direction?
                if (g.at(x + dirs[d][0], y + dirs[d][1], z + dirs[d][2])) continue;
                int n = count_neighbors26(g, x, y, z);
                if (n == 1) continue;  // line end
                if (n == 2 && dist[i] == 1) {
                    // A two-neighbor voxel of an originally unit-thin structure is a
                    // curve tip; deleting those unzips thin branches rung by rung.
                    // Tips with deeper tissue nearby are surface remnants of thicker
                    // tubes and stay deletable.
                    std::int32_t deepest = 0;
                    for (int dz = -2; dz <= 2; ++dz)
                        for (int dy = -2; dy <= 2; ++dy)
                            for (int dx = -2; dx <= 2; ++dx) {
                                if (!dx && !dy && !dz) continue;
                                if (g.at(x + dx, y + dy, z + dz))
                                    deepest = std::max(
                                        deepest, dist[g.index(x + dx, y + dy, z + dz)]);
                            }
                    if (deepest <= 1) continue;
                }
                if (!is_simple(g, x, y, z)) continue;
                g.fg[i] = 0;
                changed = true;
            }
        }
    }

    // Residue must contain no fully-foreground 2x2x2 block.
    bool thick = true;
    while (thick) {
        thick = false;
        for (int z = 0; z + 1 < g.nz && !thick; ++z)
            for (int y = 0; y + 1 < g.ny && !thick; ++y)
                for (int x = 0; x + 1 < g.nx && !thick; ++x) {
                    bool full = true;
                    for (int dz = 0; dz < 2 && full; ++dz)
                        for (int dy = 0; dy < 2 && full; ++dy)
                            for (int dx = 0; dx < 2; ++dx)
                                if (!g.at(x + dx, y + dy, z + dz)) {
                                    full = false;
                                    break;
                                }
                    if (!full) continue;
                    for (int dz = 0; dz < 2 && !thick; ++dz)
                        for (int dy = 0; dy < 2 && !thick; ++dy)
                            for (int dx = 0; dx < 2 && !thick; ++dx) {
                                int vx = x + dx, vy = y + dy, vz = z + dz;
                                if (count_neighbors26(g, vx, vy, vz) > 2 &&
                                    is_simple(g, vx, vy, vz)) {
                                    g.fg[g.index(vx, vy, vz)] = 0;
                                    thick = true;  // rescan from the top
                                }
                            }
                }
    }

    Volume out(mask.nx, mask.ny, mask.nz);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = g.fg[i] ? 1.0 : 0.0;
    return out;
}

PointClassMap classify_points(const Volume& skel) {
    if (!skel.is_binary()) throw std::invalid_argument("classify_points: mask must be binary");
    Grid g{skel.nx, skel.ny, skel.nz, {}};
    g.fg.resize(skel.size());
    for (std::size_t i = 0; i < skel.size(); ++i) g.fg[i] = skel.data[i] != 0.0;

    PointClassMap map;
    for (int z = 0; z < g.nz; ++z)
        for (int y = 0; y < g.ny; ++y)
            for (int x = 0; x < g.nx; ++x) {
                std::int64_t i = g.index(x, y, z);
                if (!g.fg[i]) continue;
                int n = count_neighbors26(g, x, y, z);
                PointType t = n >= 3 ? PointType::Division : (n == 2 ? PointType::Edge : PointType::End);
                map.emplace(i, PointInfo{t, n});
            }
    return map;
}

namespace {

VoxelCoord coord_of(std::int64_t i, const Volume& v) {
    return {static_cast<int>(i % v.nx), static_cast<int>((i / v.nx) % v.ny),
            static_cast<int>(i / (static_cast<std::int64_t>(v.nx) * v.ny))};
}

}  // namespace

SegmentSet extract_segments(const Volume& skel, const PointClassMap& classes) {
    SegmentSet set;
    const std::int64_t nxy = static_cast<std::int64_t>(skel.nx) * skel.ny;

    auto is_class = [&](std::int64_t i, bool division) {
        auto it = classes.find(i);
        if (it == classes.end()) return false;
        return (it->second.type == PointType::Division) == division;
    };
    auto neighbors_of = [&](std::int64_t i, bool division, std::vector<std::int64_t>& out) {
        out.clear();
        auto [x, y, z] = coord_of(i, skel);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!dx && !dy && !dz) continue;
                    int nx = x + dx, ny = y + dy, nz = z + dz;
                    if (!skel.in_bounds(nx, ny, nz)) continue;
                    std::int64_t ni = nx + static_cast<std::int64_t>(skel.nx) * ny + nxy * nz;
                    if (is_class(ni, division)) out.push_back(ni);
                }
        std::sort(out.begin(), out.end());
    };

    // Junction clusters: 26-connected components of division voxels, in scan order.
    std::vector<std::int32_t> cluster_of(skel.size(), -1);
    std::vector<std::int64_t> stack, nbrs;
    for (const auto& [i, info] : classes) {
        if (info.type != PointType::Division || cluster_of[i] >= 0) continue;
        int cluster = static_cast<int>(set.junctions.size());
        set.junctions.emplace_back();
        stack.assign(1, i);
        cluster_of[i] = cluster;
        while (!stack.empty()) {
            std::int64_t cur = stack.back();
            stack.pop_back();
            set.junctions[cluster].push_back(coord_of(cur, skel));
            neighbors_of(cur, true, nbrs);
            for (std::int64_t n : nbrs)
                if (cluster_of[n] < 0) {
                    cluster_of[n] = cluster;
                    stack.push_back(n);
                }
        }
        std::sort(set.junctions[cluster].begin(), set.junctions[cluster].end(),
                  [](const VoxelCoord& a, const VoxelCoord& b) {
                      return std::tie(a[2], a[1], a[0]) < std::tie(b[2], b[1], b[0]);
                  });
    }

    // Chain voxels: everything that is not a division point.
    std::vector<std::uint8_t> visited(skel.size(), 0);
    auto walk_pick = [&](std::int64_t from, const std::vector<std::int64_t>& cand) {
        // Prefer face steps over diagonal ones, then the smaller index.
        auto [fx, fy, fz] = coord_of(from, skel);
        std::int64_t best = -1;
        int best_rank = 99;
        for (std::int64_t c : cand) {
            if (visited[c]) continue;
            auto [cx, cy, cz] = coord_of(c, skel);
            int rank = std::abs(cx - fx) + std::abs(cy - fy) + std::abs(cz - fz);
            if (rank < best_rank) {
                best_rank = rank;
                best = c;
            }
        }
        return best;
    };

    for (const auto& [start_i, info] : classes) {
        if (info.type == PointType::Division || visited[start_i]) continue;

        // Collect this 26-component of edge/end voxels.
        std::vector<std::int64_t> component;
        stack.assign(1, start_i);
        visited[start_i] = 1;
        while (!stack.empty()) {
            std::int64_t cur = stack.back();
            stack.pop_back();
            component.push_back(cur);
            neighbors_of(cur, false, nbrs);
            for (std::int64_t n : nbrs)
                if (!visited[n]) {
                    visited[n] = 1;
                    stack.push_back(n);
                }
        }
        std::sort(component.begin(), component.end());

        // Induced degree inside the component decides endpoints.
        std::vector<std::int64_t> endpoints;
        for (std::int64_t v : component) {
            neighbors_of(v, false, nbrs);
            if (nbrs.size() <= 1) endpoints.push_back(v);
        }

        // Reuse the visited array as the walk marker.
        for (std::int64_t v : component) visited[v] = 0;

        while (true) {
            std::int64_t begin = -1;
            for (std::int64_t e : endpoints)
                if (!visited[e]) {
                    begin = e;
                    break;
                }
            if (begin < 0)
                for (std::int64_t v : component)
                    if (!visited[v]) {
                        begin = v;
                        break;
                    }
            if (begin < 0) break;

            std::vector<VoxelCoord> chain;
            std::int64_t cur = begin;
            visited[cur] = 1;
            chain.push_back(coord_of(cur, skel));
            while (true) {
                neighbors_of(cur, false, nbrs);
                std::int64_t next = walk_pick(cur, nbrs);
                if (next < 0) break;
                visited[next] = 1;
                chain.push_back(coord_of(next, skel));
                cur = next;
            }
            // Orient from the lexicographically smaller (z,y,x) endpoint.
            const VoxelCoord& a = chain.front();
            const VoxelCoord& b = chain.back();
            if (std::tie(b[2], b[1], b[0]) < std::tie(a[2], a[1], a[0]))
                std::reverse(chain.begin(), chain.end());
            set.segments.push_back(std::move(chain));
        }
    }

    // Sort segments by their first voxel for a canonical order.
    std::sort(set.segments.begin(), set.segments.end(),
              [](const std::vector<VoxelCoord>& a, const std::vector<VoxelCoord>& b) {
                  return std::tie(a[0][2], a[0][1], a[0][0]) < std::tie(b[0][2], b[0][1], b[0][0]);
              });

    // Adjacency via shared junction clusters.
    std::vector<std::vector<int>> touching(set.junctions.size());
    for (std::size_t s = 0; s < set.segments.size(); ++s) {
        std::vector<std::int32_t> seen_clusters;
        for (const auto& v : set.segments[s]) {
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        int nx = v[0] + dx, ny = v[1] + dy, nz = v[2] + dz;
                        if (!skel.in_bounds(nx, ny, nz)) continue;
                        std::int32_t c = cluster_of[skel.index(nx, ny, nz)];
                        if (c >= 0 &&
                            std::find(seen_clusters.begin(), seen_clusters.end(), c) ==
                                seen_clusters.end())
                            seen_clusters.push_back(c);
                    }
        }
        for (std::int32_t c : seen_clusters) touching[c].push_back(static_cast<int>(s));
    }
    for (auto& segs : touching) {
        std::sort(segs.begin(), segs.end());
        for (std::size_t i = 0; i < segs.size(); ++i)
            for (std::size_t j = i + 1; j < segs.size(); ++j)
                set.adjacency.emplace_back(segs[i], segs[j]);
    }
    std::sort(set.adjacency.begin(), set.adjacency.end());
    set.adjacency.erase(std::unique(set.adjacency.begin(), set.adjacency.end()),
                        set.adjacency.end());
    return set;
}

void prune_short_segments(SegmentSet& set, int min_len) {
    if (min_len <= 0) return;
    std::vector<int> remap(set.segments.size(), -1);
    std::vector<std::vector<VoxelCoord>> kept;
    for (std::size_t i = 0; i < set.segments.size(); ++i)
        if (static_cast<int>(set.segments[i].size()) >= min_len) {
            remap[i] = static_cast<int>(kept.size());
            kept.push_back(std::move(set.segments[i]));
        }
    set.segments = std::move(kept);
    std::vector<std::pair<int, int>> adj;
    for (auto [a, b] : set.adjacency)
        if (remap[a] >= 0 && remap[b] >= 0) adj.emplace_back(remap[a], remap[b]);
    set.adjacency = std::move(adj);
}

}  // namespace airway
