#include "voxelseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace voxelseg {

static void check_dims(std::array<int, 3> dims) {
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
        throw std::invalid_argument("volume dims must be positive");
}

Volume Volume::zeros(std::array<int, 3> dims) {
    check_dims(dims);
    Volume v;
    v.dims = dims;
    v.voxels.assign(static_cast<size_t>(dims[0]) * dims[1] * dims[2], 0.0f);
    return v;
}

LabelVolume LabelVolume::zeros(std::array<int, 3> dims) {
    check_dims(dims);
    LabelVolume lv;
    lv.dims = dims;
    lv.labels.assign(static_cast<size_t>(dims[0]) * dims[1] * dims[2], 0);
    return lv;
}

CropResult crop_to_bounding_box(const Volume& v, float threshold) {
    std::array<int, 3> lo{v.dims[0], v.dims[1], v.dims[2]};
    std::array<int, 3> hi{-1, -1, -1};
    for (int z = 0; z < v.dims[2]; ++z)
        for (int y = 0; y < v.dims[1]; ++y)
            for (int x = 0; x < v.dims[0]; ++x)
                if (v.at(x, y, z) > threshold) {
                    lo[0] = std::min(lo[0], x); hi[0] = std::max(hi[0], x);
                    lo[1] = std::min(lo[1], y); hi[1] = std::max(hi[1], y);
                    lo[2] = std::min(lo[2], z); hi[2] = std::max(hi[2], z);
                }
    if (hi[0] < 0) throw std::runtime_error("crop_to_bounding_box: no voxel above threshold");
    CropResult r;
    r.offset = lo;
    r.volume = Volume::zeros({hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1});
    for (int z = 0; z < r.volume.dims[2]; ++z)
        for (int y = 0; y < r.volume.dims[1]; ++y)
            for (int x = 0; x < r.volume.dims[0]; ++x)
                r.volume.at(x, y, z) = v.at(x + lo[0], y + lo[1], z + lo[2]);
    return r;
}

LabelVolume crop_labels(const LabelVolume& lv, std::array<int, 3> offset, std::array<int, 3> dims) {
    LabelVolume out = LabelVolume::zeros(dims);
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x)
                out.at(x, y, z) = lv.at(x + offset[0], y + offset[1], z + offset[2]);
    return out;
}

MaskRanges mask_voxel_range(std::array<int, 3> dims, const MaskBox& box) {
    check_dims(dims);
    MaskRanges r;
    for (int a = 0; a < 3; ++a) {
        if (!(box.lo[a] >= 0.0 && box.lo[a] < box.hi[a] && box.hi[a] <= 1.0))
            throw std::invalid_argument("mask box fractions must satisfy 0 <= lo < hi <= 1");
        r.lo[a] = std::clamp(static_cast<int>(std::floor(box.lo[a] * dims[a])), 0, dims[a]);
        r.hi[a] = std::clamp(static_cast<int>(std::ceil(box.hi[a] * dims[a])), 0, dims[a]);
    }
    return r;
}

std::vector<Blob> connected_components(const LabelVolume& lv) {
    const int X = lv.dims[0], Y = lv.dims[1], Z = lv.dims[2];
    const size_t n = lv.labels.size();
    std::vector<uint8_t> seen(n, 0);
    std::vector<Blob> blobs;
    std::vector<int> stack;
    for (size_t start = 0; start < n; ++start) {
        if (seen[start]) continue;
        const uint8_t cls = lv.labels[start];
        Blob blob;
        blob.cls = cls;
        stack.assign(1, static_cast<int>(start));
        seen[start] = 1;
        double cx = 0, cy = 0, cz = 0;
        while (!stack.empty()) {
            const int idx = stack.back();
            stack.pop_back();
            blob.voxels.push_back(idx);
            const int x = idx % X;
            const int y = (idx / X) % Y;
            const int z = idx / (X * Y);
            cx += x; cy += y; cz += z;
            auto visit = [&](int nx, int ny, int nz) {
                if (nx < 0 || nx >= X || ny < 0 || ny >= Y || nz < 0 || nz >= Z) return;
                const int nidx = nx + X * (ny + Y * nz);
                if (!seen[nidx] && lv.labels[static_cast<size_t>(nidx)] == cls) {
                    seen[nidx] = 1;
                    stack.push_back(nidx);
                }
            };
            visit(x - 1, y, z); visit(x + 1, y, z);
            visit(x, y - 1, z); visit(x, y + 1, z);
            visit(x, y, z - 1); visit(x, y, z + 1);
        }
        std::sort(blob.voxels.begin(), blob.voxels.end());
        const double s = static_cast<double>(blob.voxels.size());
        blob.centroid = {cx / s, cy / s, cz / s};
        blobs.push_back(std::move(blob));
    }
    // DFS visits regions in order of their minimum linear index already,
    // since scanning starts at unvisited minima; keep the guarantee explicit.
    std::sort(blobs.begin(), blobs.end(),
              [](const Blob& a, const Blob& b) { return a.voxels.front() < b.voxels.front(); });
    return blobs;
}

LabelVolume postprocess(const LabelVolume& lv, int min_blob) {
    if (min_blob < 1) throw std::invalid_argument("min_blob must be >= 1");
    const int X = lv.dims[0], Y = lv.dims[1];

    // class centroids from the input labeling
    std::array<double, 3> cleft{0, 0, 0}, cright{0, 0, 0};
    long long nleft = 0, nright = 0;
    for (size_t i = 0; i < lv.labels.size(); ++i) {
        const uint8_t c = lv.labels[i];
        if (c == 0) continue;
        const int x = static_cast<int>(i) % X;
        const int y = (static_cast<int>(i) / X) % Y;
        const int z = static_cast<int>(i) / (X * Y);
        if (c == 1) { cleft[0] += x; cleft[1] += y; cleft[2] += z; ++nleft; }
        else { cright[0] += x; cright[1] += y; cright[2] += z; ++nright; }
    }
    if (nleft > 0) for (auto& v : cleft) v /= static_cast<double>(nleft);
    if (nright > 0) for (auto& v : cright) v /= static_cast<double>(nright);

    LabelVolume out = lv;
    for (const Blob& blob : connected_components(lv)) {
        if (blob.size() >= min_blob) continue;
        if (blob.cls != 0) {
            for (int idx : blob.voxels) out.labels[static_cast<size_t>(idx)] = 0;
            continue;
        }
        if (nleft == 0 && nright == 0) continue;  // no centroid defined
        auto dist2 = [&](const std::array<double, 3>& c) {
            double d = 0;
            for (int a = 0; a < 3; ++a) {
                const double r = blob.centroid[a] - c[a];
                d += r * r;
            }
            return d;
        };
        uint8_t target;
        if (nleft == 0) target = 2;
        else if (nright == 0) target = 1;
        else target = dist2(cleft) <= dist2(cright) ? 1 : 2;
        for (int idx : blob.voxels) out.labels[static_cast<size_t>(idx)] = target;
    }
    return out;
}

SegmentationMetrics segmentation_metrics(const LabelVolume& predicted, const LabelVolume& truth) {
    if (predicted.dims != truth.dims)
        throw std::invalid_argument("segmentation_metrics: dims mismatch");
    SegmentationMetrics m;
    long long tp = 0;
    for (size_t i = 0; i < truth.labels.size(); ++i) {
        const uint8_t p = predicted.labels[i];
        const uint8_t t = truth.labels[i];
        m.confusion[t][p]++;
        if (p != 0 && t == 0) m.false_pos++;
        if (p == 0 && t != 0) m.false_neg++;
        if (p != 0 && t != 0) {
            tp++;
            if (p != t) m.left_right_confusions++;
        }
    }
    m.precision = tp + m.false_pos > 0 ? static_cast<double>(tp) / static_cast<double>(tp + m.false_pos) : 0.0;
    m.recall = tp + m.false_neg > 0 ? static_cast<double>(tp) / static_cast<double>(tp + m.false_neg) : 0.0;
    return m;
}

// ---------------------------------------------------------------------------
// VVOL1

static constexpr char kVolMagic[5] = {'V', 'V', 'O', 'L', '1'};

static void write_header(std::ofstream& f, uint8_t dtype, std::array<int, 3> dims) {
    f.write(kVolMagic, 5);
    f.write(reinterpret_cast<const char*>(&dtype), 1);
    for (int a = 0; a < 3; ++a) {
        const uint32_t d = static_cast<uint32_t>(dims[a]);
        f.write(reinterpret_cast<const char*>(&d), 4);
    }
}

static std::array<int, 3> read_header(std::ifstream& f, const std::string& path, uint8_t expect_dtype) {
    char magic[5];
    f.read(magic, 5);
    if (!f || std::memcmp(magic, kVolMagic, 5) != 0)
        throw std::runtime_error("not a VVOL1 file: " + path);
    uint8_t dtype = 0;
    f.read(reinterpret_cast<char*>(&dtype), 1);
    if (dtype != expect_dtype)
        throw std::runtime_error("unexpected VVOL1 dtype in " + path);
    std::array<int, 3> dims{};
    for (int a = 0; a < 3; ++a) {
        uint32_t d = 0;
        f.read(reinterpret_cast<char*>(&d), 4);
        dims[a] = static_cast<int>(d);
    }
    if (!f) throw std::runtime_error("truncated VVOL1 header: " + path);
    return dims;
}

void write_volume(const std::string& path, const Volume& v) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    write_header(f, 0, v.dims);
    f.write(reinterpret_cast<const char*>(v.voxels.data()),
            static_cast<std::streamsize>(v.voxels.size() * sizeof(float)));
    if (!f) throw std::runtime_error("write failed: " + path);
}

void write_labels(const std::string& path, const LabelVolume& lv) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    write_header(f, 1, lv.dims);
    f.write(reinterpret_cast<const char*>(lv.labels.data()),
            static_cast<std::streamsize>(lv.labels.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

Volume read_volume(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open volume file: " + path);
    Volume v = Volume::zeros(read_header(f, path, 0));
    f.read(reinterpret_cast<char*>(v.voxels.data()),
           static_cast<std::streamsize>(v.voxels.size() * sizeof(float)));
    if (!f) throw std::runtime_error("truncated VVOL1 payload: " + path);
    return v;
}

LabelVolume read_labels(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open label file: " + path);
    LabelVolume lv = LabelVolume::zeros(read_header(f, path, 1));
    f.read(reinterpret_cast<char*>(lv.labels.data()),
           static_cast<std::streamsize>(lv.labels.size()));
    if (!f) throw std::runtime_error("truncated VVOL1 payload: " + path);
    return lv;
}

} // namespace voxelseg
