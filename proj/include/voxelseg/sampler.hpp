#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "voxelseg/tensor.hpp"
#include "voxelseg/volume.hpp"

namespace voxelseg {

enum class PatchKind { Stacked2D, TriPlanar, Full3D };

struct PatchFormat {
    PatchKind kind = PatchKind::Stacked2D;
    int size = 24;    // s
    int stack = 3;    // stacked-2d layer count, odd

    void validate() const;
};

PatchKind patch_kind_from_string(const std::string& s);
std::string to_string(PatchKind k);

struct PatchSample {
    std::vector<Tensor> tensors;   // 1 tensor (stacked/3d) or 3 (tri-planar)
    int target = 0;                // {0,1,2}
    std::array<int, 3> voxel{0, 0, 0};
};

/// Zero mean, unit variance in place (variance floored at 1e-8).
void standardize_patch(Tensor& patch);

/// Patch tensors around `voxel`. Stacked2D: [n,s,s] axial slices; TriPlanar:
/// three [1,s,s] (x-y, x-z, y-z); Full3D: [1,s,s,s]. The center voxel sits
/// at index s/2 per axis (left-biased for even s). With clamp_borders the
/// read clamps to the nearest in-volume voxel instead of throwing.
std::vector<Tensor> extract(const Volume& v, std::array<int, 3> voxel,
                            const PatchFormat& fmt, bool clamp_borders = false);

/// True iff the clipped 5x5x5 box around `voxel` holds >= 2 classes.
bool is_edge_voxel(const LabelVolume& lv, std::array<int, 3> voxel);

/// Class-balanced draw: count/2 edge, count/4 positive, count/4 negative,
/// rejection-sampled uniformly over the mask. Patches that would exceed
/// volume bounds are rejected and redrawn.
std::vector<PatchSample> draw_samples(const Volume& v, const LabelVolume& lv,
                                      const MaskRanges& mask, int count,
                                      const PatchFormat& fmt, std::mt19937_64& rng,
                                      bool standardize = true,
                                      long long max_rejections = 1000000);

// --- VPAT1 patch-set dump ----------------------------------------------------

void write_patch_set(const std::string& path, const PatchFormat& fmt,
                     const std::vector<PatchSample>& samples);
std::pair<PatchFormat, std::vector<PatchSample>> read_patch_set(const std::string& path);

} // namespace voxelseg
