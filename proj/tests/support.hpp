#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "objclear/raster.hpp"
#include "objclear/rng.hpp"

namespace testing {

inline objclear::Mask random_mask(objclear::Rng& rng, int h, int w, double p = 0.3) {
    objclear::Mask m(h, w);
    for (double& v : m.values()) v = rng.bernoulli(p) ? 1.0 : 0.0;
    return m;
}

inline objclear::Image random_image(objclear::Rng& rng, int h, int w) {
    objclear::Image img(h, w);
    for (double& v : img.values()) v = rng.uniform();
    return img;
}

inline double max_abs_diff(const objclear::Raster& a, const objclear::Raster& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

/// mask a is contained in mask b
inline bool subset(const objclear::Mask& a, const objclear::Mask& b) {
    for (std::size_t i = 0; i < a.values().size(); ++i)
        if (a.values()[i] > 0.5 && b.values()[i] < 0.5) return false;
    return true;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("objclear_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
