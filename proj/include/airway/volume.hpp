#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace airway {

// Dense 3D scalar grid, row-major with x fastest: index = x + nx*(y + ny*z).
// Carries CT intensities, probabilities and {0,1} masks alike.
struct Volume {
    int nx = 0, ny = 0, nz = 0;
    std::vector<double> data;

    Volume() = default;
    Volume(int nx_, int ny_, int nz_, double fill = 0.0)
        : nx(nx_), ny(ny_), nz(nz_),
          data(static_cast<std::size_t>(nx_) * ny_ * nz_, fill) {}

    std::size_t size() const { return data.size(); }

    std::int64_t index(int x, int y, int z) const {
        return x + static_cast<std::int64_t>(nx) * (y + static_cast<std::int64_t>(ny) * z);
    }

    double& at(int x, int y, int z) { return data[index(x, y, z)]; }
    double at(int x, int y, int z) const { return data[index(x, y, z)]; }

    bool in_bounds(int x, int y, int z) const {
        return x >= 0 && x < nx && y >= 0 && y < ny && z >= 0 && z < nz;
    }

    bool same_dims(const Volume& o) const { return nx == o.nx && ny == o.ny && nz == o.nz; }

    bool is_binary() const {
        for (double v : data)
            if (v != 0.0 && v != 1.0) return false;
        return true;
    }

    std::int64_t count_nonzero() const {
        std::int64_t n = 0;
        for (double v : data) n += (v != 0.0);
        return n;
    }
};

// Per-voxel feature vectors, C channels. Channel fastest:
// index = c + C*(x + nx*(y + ny*z)). Stored as float, matching the f32 file format.
struct FeatureVolume {
    int nx = 0, ny = 0, nz = 0, channels = 0;
    std::vector<float> data;

    FeatureVolume() = default;
    FeatureVolume(int nx_, int ny_, int nz_, int c)
        : nx(nx_), ny(ny_), nz(nz_), channels(c),
          data(static_cast<std::size_t>(c) * nx_ * ny_ * nz_, 0.0f) {}

    std::int64_t index(int x, int y, int z, int c) const {
        return c + static_cast<std::int64_t>(channels) *
                       (x + static_cast<std::int64_t>(nx) * (y + static_cast<std::int64_t>(ny) * z));
    }

    float& at(int x, int y, int z, int c) { return data[index(x, y, z, c)]; }
    float at(int x, int y, int z, int c) const { return data[index(x, y, z, c)]; }

    bool in_bounds(int x, int y, int z) const {
        return x >= 0 && x < nx && y >= 0 && y < ny && z >= 0 && z < nz;
    }
};

enum class RawDtype { f32, u8 };

// File format: <stem>.json header {dims:[nx,ny,nz], dtype:"f32"|"u8", channels:int}
// plus sibling <stem>.raw of little-endian values, x fastest (channel fastest when C > 1).
void save_volume(const Volume& vol, const std::filesystem::path& json_path, RawDtype dtype);
Volume load_volume(const std::filesystem::path& json_path);

void save_feature_volume(const FeatureVolume& vol, const std::filesystem::path& json_path);
FeatureVolume load_feature_volume(const std::filesystem::path& json_path);

}  // namespace airway
