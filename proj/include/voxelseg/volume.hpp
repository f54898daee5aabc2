#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace voxelseg {

/// 3D intensity grid, x fastest: index = x + X*(y + Y*z).
struct Volume {
    std::array<int, 3> dims{0, 0, 0};
    std::vector<float> voxels;

    static Volume zeros(std::array<int, 3> dims);
    int index(int x, int y, int z) const { return x + dims[0] * (y + dims[1] * z); }
    float at(int x, int y, int z) const { return voxels[static_cast<size_t>(index(x, y, z))]; }
    float& at(int x, int y, int z) { return voxels[static_cast<size_t>(index(x, y, z))]; }
    long long count() const {
        return static_cast<long long>(dims[0]) * dims[1] * dims[2];
    }
};

/// Per-voxel class grid: 0 negative, 1 left, 2 right. Same layout as Volume.
struct LabelVolume {
    std::array<int, 3> dims{0, 0, 0};
    std::vector<uint8_t> labels;

    static LabelVolume zeros(std::array<int, 3> dims);
    int index(int x, int y, int z) const { return x + dims[0] * (y + dims[1] * z); }
    uint8_t at(int x, int y, int z) const { return labels[static_cast<size_t>(index(x, y, z))]; }
    uint8_t& at(int x, int y, int z) { return labels[static_cast<size_t>(index(x, y, z))]; }
};

/// Normalized-coordinate box, lo/hi fractions per axis in [0,1], lo < hi.
struct MaskBox {
    std::array<double, 3> lo{0.39, 0.27, 0.19};
    std::array<double, 3> hi{0.84, 0.70, 0.83};
};

/// Half-open integer voxel ranges per axis.
struct MaskRanges {
    std::array<int, 3> lo{0, 0, 0};
    std::array<int, 3> hi{0, 0, 0};

    bool contains(int x, int y, int z) const {
        return x >= lo[0] && x < hi[0] && y >= lo[1] && y < hi[1] && z >= lo[2] && z < hi[2];
    }
};

struct CropResult {
    Volume volume;
    std::array<int, 3> offset;
};

/// Tightest box containing all voxels with intensity > threshold.
CropResult crop_to_bounding_box(const Volume& v, float threshold = 0.0f);

/// crop applied to a label grid with a known box.
LabelVolume crop_labels(const LabelVolume& lv, std::array<int, 3> offset, std::array<int, 3> dims);

/// Per axis: [floor(lo*dim), ceil(hi*dim)) clamped to [0, dim).
MaskRanges mask_voxel_range(std::array<int, 3> dims, const MaskBox& box);

struct Blob {
    uint8_t cls = 0;
    std::vector<int> voxels;                 // linear indices, ascending
    std::array<double, 3> centroid{0, 0, 0};
    int size() const { return static_cast<int>(voxels.size()); }
};

/// Maximal 6-connected same-class regions, ordered by minimum linear index.
std::vector<Blob> connected_components(const LabelVolume& lv);

/// Blob cleanup: small positive blobs go negative; small negative blobs
/// are relabeled to whichever hippocampus centroid (computed from the
/// input labeling) is nearer. All relabeling is simultaneous.
LabelVolume postprocess(const LabelVolume& lv, int min_blob = 500);

struct SegmentationMetrics {
    long long false_pos = 0;   // predicted positive, truth negative
    long long false_neg = 0;   // predicted negative, truth positive
    long long left_right_confusions = 0;
    std::array<std::array<long long, 3>, 3> confusion{};  // [truth][predicted]
    double precision = 0.0;
    double recall = 0.0;
};

SegmentationMetrics segmentation_metrics(const LabelVolume& predicted, const LabelVolume& truth);

// --- VVOL1 file format -------------------------------------------------------
// magic "VVOL1" (5 bytes) + u8 dtype (0 = f32 intensity, 1 = u8 labels)
// + three LE u32 dims + payload, x fastest.

void write_volume(const std::string& path, const Volume& v);
void write_labels(const std::string& path, const LabelVolume& lv);
Volume read_volume(const std::string& path);
LabelVolume read_labels(const std::string& path);

} // namespace voxelseg
