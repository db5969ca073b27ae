#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "airway/rng.hpp"
#include "airway/volume.hpp"

namespace testsup {

// Independent random masks/volumes for oracle comparisons.
inline airway::Volume random_mask(int nx, int ny, int nz, double p, std::uint64_t seed) {
    airway::Volume v(nx, ny, nz);
    airway::Rng rng(seed);
    for (auto& x : v.data) x = rng.uniform() < p ? 1.0 : 0.0;
    return v;
}

inline airway::Volume random_probs(int nx, int ny, int nz, std::uint64_t seed) {
    airway::Volume v(nx, ny, nz);
    airway::Rng rng(seed);
    for (auto& x : v.data) x = rng.uniform();
    return v;
}

// Central finite difference of a scalar function at x, step h.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double a, double b) {
    double m = std::max(std::abs(a), std::abs(b));
    if (m < 1e-8) return 0.0;  // below the finite-difference noise floor
    return std::abs(a - b) / m;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("airway_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace testsup
