#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "voxelseg/volume.hpp"

namespace voxelseg {

/// Swept-sphere along a quadratic Bezier curve; control points are
/// fractions of the brain bounding box, radius in voxels.
struct TubeSpec {
    std::array<std::array<double, 3>, 3> control;   // p0, p1, p2
    double radius = 3.0;
};

struct PhantomConfig {
    std::array<int, 3> dims{64, 64, 64};
    std::array<double, 3> brain_semi_axes{0.42, 0.40, 0.38};  // fractions of dims
    // Left tube sweeps mostly along y, right tube mostly along z, so oriented
    // local texture distinguishes the two classes.
    TubeSpec left{{{{0.50, 0.32, 0.30}, {0.44, 0.50, 0.62}, {0.52, 0.66, 0.40}}}, 3.0};
    TubeSpec right{{{{0.70, 0.48, 0.25}, {0.64, 0.55, 0.50}, {0.72, 0.50, 0.75}}}, 3.3};
    double noise_stddev = 0.35;
    double brain_level = 0.5;
    double hippo_level = 0.85;
    uint64_t seed = 42;
    int min_hippo_voxels = 400;
    int max_hippo_voxels = 3000;
};

/// Deterministic per seed. Labels follow the geometry exactly; tissue
/// intensities get Gaussian noise floored at a small positive value,
/// background stays 0 so the brain bounding box is exact at threshold 0.
std::pair<Volume, LabelVolume> generate_phantom(const PhantomConfig& config);

/// Writes `count` phantoms (seed, seed+1, ...) as paired
/// <stem>.img.vvol / <stem>.lbl.vvol plus manifest.json with a 60/20/20
/// train/val/test split by image.
void write_phantom_dataset(const std::string& dir, int count, const PhantomConfig& base);

struct DatasetEntry {
    std::string stem;
    std::string split;   // "train" | "val" | "test"
};

std::vector<DatasetEntry> read_dataset_manifest(const std::string& dir);

} // namespace voxelseg
