#include "airway/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace airway {

namespace {

void require_binary(const Volume& mask, const char* op) {
    if (!mask.is_binary())
        throw std::invalid_argument(std::string(op) + ": mask must be binary");
}

// 6- and 26-neighborhood offsets, fixed order for deterministic scans.
const std::array<std::array<int, 3>, 6> kFaceOffsets = {{
    {-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1},
}};

std::vector<std::array<int, 3>> all_offsets_26() {
    std::vector<std::array<int, 3>> offs;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                if (dx || dy || dz) offs.push_back({dx, dy, dz});
    return offs;
}

}  // namespace

OtsuResult otsu_threshold(const Volume& vol) {
    if (vol.size() == 0) throw std::invalid_argument("otsu_threshold: empty volume");
    double lo = vol.data[0], hi = vol.data[0];
    for (double v : vol.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == hi) throw std::runtime_error("degenerate histogram");

    constexpr int kBins = 256;
    const double width = (hi - lo) / kBins;
    std::array<std::int64_t, kBins> hist{};
    for (double v : vol.data) {
        int b = static_cast<int>((v - lo) / width);
        hist[std::clamp(b, 0, kBins - 1)]++;
    }

    // Between-class variance sweep; class 0 = bins [0..t]. With well-separated
    // modes the maximum is a plateau spanning the empty gap, so the split is the
    // plateau midpoint, rounded toward the lower threshold.
    const double total = static_cast<double>(vol.size());
    double sum_all = 0.0;
    for (int b = 0; b < kBins; ++b) sum_all += b * static_cast<double>(hist[b]);

    double best_var = -1.0;
    int best_first = 0, best_last = 0;
    double w0 = 0.0, sum0 = 0.0;
    for (int t = 0; t < kBins - 1; ++t) {
        w0 += static_cast<double>(hist[t]);
        sum0 += t * static_cast<double>(hist[t]);
        double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        double mu0 = sum0 / w0;
        double mu1 = (sum_all - sum0) / w1;
        double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_first = best_last = t;
        } else if (var == best_var) {
            best_last = t;
        }
    }
    const int best_t = best_first + (best_last - best_first) / 2;

    OtsuResult res;
    res.threshold = lo + width * (best_t + 1);
    res.mask = Volume(vol.nx, vol.ny, vol.nz);
    for (std::size_t i = 0; i < vol.size(); ++i)
        res.mask.data[i] = vol.data[i] <= res.threshold ? 1.0 : 0.0;
    return res;
}

Components connected_components(const Volume& mask, int connectivity) {
    require_binary(mask, "connected_components");
    if (connectivity != 6 && connectivity != 26)
        throw std::invalid_argument("connected_components: connectivity must be 6 or 26");

    static const auto offs26 = all_offsets_26();
    const auto* offs = connectivity == 6
                           ? kFaceOffsets.data()
                           : offs26.data();
    const int n_offs = connectivity == 6 ? 6 : 26;

    Components comp;
    comp.labels.assign(mask.size(), 0);
    std::vector<std::int64_t> stack;
    for (int z = 0; z < mask.nz; ++z)
        for (int y = 0; y < mask.ny; ++y)
            for (int x = 0; x < mask.nx; ++x) {
                std::int64_t i = mask.index(x, y, z);
                if (mask.data[i] == 0.0 || comp.labels[i] != 0) continue;
                int label = ++comp.count;
                std::int64_t size = 0;
                comp.labels[i] = label;
                stack.push_back(i);
                while (!stack.empty()) {
                    std::int64_t cur = stack.back();
                    stack.pop_back();
                    ++size;
                    int cx = static_cast<int>(cur % mask.nx);
                    int cy = static_cast<int>((cur / mask.nx) % mask.ny);
                    int cz = static_cast<int>(cur / (static_cast<std::int64_t>(mask.nx) * mask.ny));
                    for (int k = 0; k < n_offs; ++k) {
                        int nx = cx + offs[k][0], ny = cy + offs[k][1], nz = cz + offs[k][2];
                        if (!mask.in_bounds(nx, ny, nz)) continue;
                        std::int64_t ni = mask.index(nx, ny, nz);
                        if (mask.data[ni] != 0.0 && comp.labels[ni] == 0) {
                            comp.labels[ni] = label;
                            stack.push_back(ni);
                        }
                    }
                }
                comp.sizes.push_back(size);
            }
    return comp;
}

Volume main_trachea(const Volume& mask) {
    require_binary(mask, "main_trachea");
    Components comp = connected_components(mask, 26);
    if (comp.count == 0) throw std::runtime_error("no trachea candidate");

    // Top slab = highest 10% of z slices (at least one).
    int slab = std::max(1, static_cast<int>(std::ceil(mask.nz * 0.1)));
    int z0 = mask.nz - slab;
    std::vector<std::int64_t> slab_hits(comp.count + 1, 0);
    for (int z = z0; z < mask.nz; ++z)
        for (int y = 0; y < mask.ny; ++y)
            for (int x = 0; x < mask.nx; ++x) {
                int lab = comp.labels[mask.index(x, y, z)];
                if (lab > 0) slab_hits[lab]++;
            }

    int best = 0;
    for (int lab = 1; lab <= comp.count; ++lab)
        if (slab_hits[lab] > (best == 0 ? 0 : slab_hits[best])) best = lab;
    if (best == 0) throw std::runtime_error("no trachea candidate");

    Volume out(mask.nx, mask.ny, mask.nz);
    for (std::size_t i = 0; i < mask.size(); ++i)
        out.data[i] = comp.labels[i] == best ? 1.0 : 0.0;
    return out;
}

Volume maxpool_stride2(const Volume& vol) {
    Volume out((vol.nx + 1) / 2, (vol.ny + 1) / 2, (vol.nz + 1) / 2);
    for (int z = 0; z < out.nz; ++z)
        for (int y = 0; y < out.ny; ++y)
            for (int x = 0; x < out.nx; ++x) {
                double m = -std::numeric_limits<double>::infinity();
                for (int dz = 0; dz < 2; ++dz)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            int sx = 2 * x + dx, sy = 2 * y + dy, sz = 2 * z + dz;
                            if (vol.in_bounds(sx, sy, sz)) m = std::max(m, vol.at(sx, sy, sz));
                        }
                out.at(x, y, z) = m;
            }
    return out;
}

Volume dilate26(const Volume& mask) {
    require_binary(mask, "dilate26");
    Volume out(mask.nx, mask.ny, mask.nz);
    for (int z = 0; z < mask.nz; ++z)
        for (int y = 0; y < mask.ny; ++y)
            for (int x = 0; x < mask.nx; ++x) {
                double m = 0.0;
                for (int dz = -1; dz <= 1 && m == 0.0; ++dz)
                    for (int dy = -1; dy <= 1 && m == 0.0; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            int sx = x + dx, sy = y + dy, sz = z + dz;
                            if (mask.in_bounds(sx, sy, sz) && mask.at(sx, sy, sz) != 0.0) {
                                m = 1.0;
                                break;
                            }
                        }
                out.at(x, y, z) = m;
            }
    return out;
}

namespace {

std::vector<int> tile_origins(int dim, int cube, int stride) {
    std::vector<int> origins;
    for (int o = 0;; o += stride) {
        if (o + cube >= dim) {
            origins.push_back(dim - cube);
            break;
        }
        origins.push_back(o);
    }
    return origins;
}

}  // namespace

Volume sliding_window_apply(const Volume& vol, std::array<int, 3> cube,
                            std::array<int, 3> overlap,
                            const std::function<Volume(const Volume&)>& predictor) {
    for (int a = 0; a < 3; ++a) {
        int dim = a == 0 ? vol.nx : a == 1 ? vol.ny : vol.nz;
        if (cube[a] <= 0 || cube[a] > dim)
            throw std::invalid_argument("sliding_window_apply: cube must fit the volume");
        if (overlap[a] < 0 || overlap[a] >= cube[a])
            throw std::invalid_argument("sliding_window_apply: overlap must be < cube");
    }

    auto ox = tile_origins(vol.nx, cube[0], cube[0] - overlap[0]);
    auto oy = tile_origins(vol.ny, cube[1], cube[1] - overlap[1]);
    auto oz = tile_origins(vol.nz, cube[2], cube[2] - overlap[2]);

    Volume sum(vol.nx, vol.ny, vol.nz);
    Volume count(vol.nx, vol.ny, vol.nz);
    Volume tile(cube[0], cube[1], cube[2]);

    for (int tz : oz)
        for (int ty : oy)
            for (int tx : ox) {
                for (int z = 0; z < cube[2]; ++z)
                    for (int y = 0; y < cube[1]; ++y)
                        for (int x = 0; x < cube[0]; ++x)
                            tile.at(x, y, z) = vol.at(tx + x, ty + y, tz + z);
                Volume scores = predictor(tile);
                if (scores.nx != cube[0] || scores.ny != cube[1] || scores.nz != cube[2])
                    throw std::runtime_error(
                        "sliding_window_apply: predictor output dims != cube dims");
                for (int z = 0; z < cube[2]; ++z)
                    for (int y = 0; y < cube[1]; ++y)
                        for (int x = 0; x < cube[0]; ++x) {
                            sum.at(tx + x, ty + y, tz + z) += scores.at(x, y, z);
                            count.at(tx + x, ty + y, tz + z) += 1.0;
                        }
            }

    for (std::size_t i = 0; i < sum.size(); ++i) sum.data[i] /= count.data[i];
    return sum;
}

}  // namespace airway
