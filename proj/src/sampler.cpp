#include "voxelseg/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace voxelseg {

void PatchFormat::validate() const {
    if (size < 1) throw std::invalid_argument("patch size must be >= 1");
    if (kind == PatchKind::Stacked2D && (stack < 1 || stack % 2 == 0))
        throw std::invalid_argument("stacked-2d layer count must be odd and >= 1");
}

PatchKind patch_kind_from_string(const std::string& s) {
    if (s == "stacked2d") return PatchKind::Stacked2D;
    if (s == "triplanar") return PatchKind::TriPlanar;
    if (s == "3d") return PatchKind::Full3D;
    throw std::invalid_argument("unknown patch format: " + s + " (expected stacked2d|triplanar|3d)");
}

std::string to_string(PatchKind k) {
    switch (k) {
        case PatchKind::Stacked2D: return "stacked2d";
        case PatchKind::TriPlanar: return "triplanar";
        case PatchKind::Full3D: return "3d";
    }
    return "";
}

void standardize_patch(Tensor& patch) {
    double mean = 0.0;
    for (int i = 0; i < patch.size(); ++i) mean += patch[i];
    mean /= patch.size();
    double var = 0.0;
    for (int i = 0; i < patch.size(); ++i) {
        const double d = patch[i] - mean;
        var += d * d;
    }
    var = std::max(var / patch.size(), 1e-8);
    const double inv = 1.0 / std::sqrt(var);
    for (int i = 0; i < patch.size(); ++i) patch[i] = (patch[i] - mean) * inv;
}

namespace {

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

double read_voxel(const Volume& v, int x, int y, int z, bool clamp) {
    if (clamp) {
        x = clampi(x, 0, v.dims[0] - 1);
        y = clampi(y, 0, v.dims[1] - 1);
        z = clampi(z, 0, v.dims[2] - 1);
    }
    return static_cast<double>(v.at(x, y, z));
}

void check_fit(const Volume& v, std::array<int, 3> voxel, const std::array<int, 3>& lo,
               const std::array<int, 3>& hi) {
    for (int a = 0; a < 3; ++a)
        if (voxel[a] + lo[a] < 0 || voxel[a] + hi[a] >= v.dims[a])
            throw std::out_of_range("patch exceeds volume bounds at voxel (" +
                                    std::to_string(voxel[0]) + "," + std::to_string(voxel[1]) +
                                    "," + std::to_string(voxel[2]) + ")");
}

} // namespace

std::vector<Tensor> extract(const Volume& v, std::array<int, 3> voxel,
                            const PatchFormat& fmt, bool clamp_borders) {
    fmt.validate();
    const int s = fmt.size;
    const int off = s / 2;  // center voxel at index s/2, left-biased for even s
    std::vector<Tensor> out;
    if (fmt.kind == PatchKind::Stacked2D) {
        const int n = fmt.stack;
        const int zoff = n / 2;
        if (!clamp_borders)
            check_fit(v, voxel, {-off, -off, -zoff}, {s - 1 - off, s - 1 - off, n - 1 - zoff});
        Tensor t = Tensor::zeros({n, s, s});
        int i = 0;
        for (int c = 0; c < n; ++c) {
            const int z = voxel[2] - zoff + c;
            for (int py = 0; py < s; ++py)
                for (int px = 0; px < s; ++px)
                    t[i++] = read_voxel(v, voxel[0] - off + px, voxel[1] - off + py, z, clamp_borders);
        }
        out.push_back(std::move(t));
    } else if (fmt.kind == PatchKind::TriPlanar) {
        if (!clamp_borders)
            check_fit(v, voxel, {-off, -off, -off}, {s - 1 - off, s - 1 - off, s - 1 - off});
        // x-y, x-z, y-z planes through the voxel
        Tensor xy = Tensor::zeros({1, s, s});
        Tensor xz = Tensor::zeros({1, s, s});
        Tensor yz = Tensor::zeros({1, s, s});
        int i = 0;
        for (int py = 0; py < s; ++py)
            for (int px = 0; px < s; ++px)
                xy[i++] = read_voxel(v, voxel[0] - off + px, voxel[1] - off + py, voxel[2], clamp_borders);
        i = 0;
        for (int pz = 0; pz < s; ++pz)
            for (int px = 0; px < s; ++px)
                xz[i++] = read_voxel(v, voxel[0] - off + px, voxel[1], voxel[2] - off + pz, clamp_borders);
        i = 0;
        for (int pz = 0; pz < s; ++pz)
            for (int py = 0; py < s; ++py)
                yz[i++] = read_voxel(v, voxel[0], voxel[1] - off + py, voxel[2] - off + pz, clamp_borders);
        out.push_back(std::move(xy));
        out.push_back(std::move(xz));
        out.push_back(std::move(yz));
    } else {
        if (!clamp_borders)
            check_fit(v, voxel, {-off, -off, -off}, {s - 1 - off, s - 1 - off, s - 1 - off});
        Tensor t = Tensor::zeros({1, s, s, s});
        int i = 0;
        for (int pz = 0; pz < s; ++pz)
            for (int py = 0; py < s; ++py)
                for (int px = 0; px < s; ++px)
                    t[i++] = read_voxel(v, voxel[0] - off + px, voxel[1] - off + py,
                                        voxel[2] - off + pz, clamp_borders);
        out.push_back(std::move(t));
    }
    return out;
}

bool is_edge_voxel(const LabelVolume& lv, std::array<int, 3> voxel) {
    const int x0 = std::max(voxel[0] - 2, 0), x1 = std::min(voxel[0] + 2, lv.dims[0] - 1);
    const int y0 = std::max(voxel[1] - 2, 0), y1 = std::min(voxel[1] + 2, lv.dims[1] - 1);
    const int z0 = std::max(voxel[2] - 2, 0), z1 = std::min(voxel[2] + 2, lv.dims[2] - 1);
    const uint8_t first = lv.at(x0, y0, z0);
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (lv.at(x, y, z) != first) return true;
    return false;
}

namespace {

bool patch_fits(const Volume& v, std::array<int, 3> voxel, const PatchFormat& fmt) {
    const int s = fmt.size;
    const int off = s / 2;
    const int zoff = fmt.kind == PatchKind::Stacked2D ? fmt.stack / 2 : off;
    const int zspan = fmt.kind == PatchKind::Stacked2D ? fmt.stack : s;
    return voxel[0] - off >= 0 && voxel[0] - off + s <= v.dims[0] &&
           voxel[1] - off >= 0 && voxel[1] - off + s <= v.dims[1] &&
           voxel[2] - zoff >= 0 && voxel[2] - zoff + zspan <= v.dims[2];
}

} // namespace

std::vector<PatchSample> draw_samples(const Volume& v, const LabelVolume& lv,
                                      const MaskRanges& mask, int count,
                                      const PatchFormat& fmt, std::mt19937_64& rng,
                                      bool standardize, long long max_rejections) {
    if (v.dims != lv.dims) throw std::invalid_argument("draw_samples: volume/label dims mismatch");
    if (count % 4 != 0) throw std::invalid_argument("draw_samples: count must be divisible by 4");
    for (int a = 0; a < 3; ++a)
        if (mask.hi[a] <= mask.lo[a]) throw std::invalid_argument("draw_samples: empty mask range");

    auto draw_voxel = [&](auto&& predicate, const char* category) {
        for (long long tries = 0; tries < max_rejections; ++tries) {
            std::array<int, 3> p;
            for (int a = 0; a < 3; ++a)
                p[a] = mask.lo[a] +
                       static_cast<int>(rng() % static_cast<uint64_t>(mask.hi[a] - mask.lo[a]));
            if (!predicate(p)) continue;
            if (!patch_fits(v, p, fmt)) continue;
            return p;
        }
        throw std::runtime_error(std::string("draw_samples: could not satisfy category '") +
                                 category + "' within rejection budget");
    };

    auto is_pos = [&](std::array<int, 3> p) { return lv.at(p[0], p[1], p[2]) != 0; };
    auto is_neg = [&](std::array<int, 3> p) { return lv.at(p[0], p[1], p[2]) == 0; };
    auto is_edge = [&](std::array<int, 3> p) { return is_edge_voxel(lv, p); };

    std::vector<PatchSample> samples;
    samples.reserve(static_cast<size_t>(count));
    auto emit = [&](std::array<int, 3> p) {
        PatchSample s;
        s.voxel = p;
        s.target = lv.at(p[0], p[1], p[2]);
        s.tensors = extract(v, p, fmt, false);
        if (standardize)
            for (auto& t : s.tensors) standardize_patch(t);
        samples.push_back(std::move(s));
    };
    for (int i = 0; i < count / 2; ++i) emit(draw_voxel(is_edge, "edge"));
    for (int i = 0; i < count / 4; ++i) emit(draw_voxel(is_pos, "positive"));
    for (int i = 0; i < count / 4; ++i) emit(draw_voxel(is_neg, "negative"));
    return samples;
}

// ---------------------------------------------------------------------------
// VPAT1

static constexpr char kPatMagic[5] = {'V', 'P', 'A', 'T', '1'};

void write_patch_set(const std::string& path, const PatchFormat& fmt,
                     const std::vector<PatchSample>& samples) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(kPatMagic, 5);
    const uint8_t kind = static_cast<uint8_t>(fmt.kind);
    const uint32_t size = static_cast<uint32_t>(fmt.size);
    const uint32_t stack = static_cast<uint32_t>(fmt.stack);
    const uint32_t n = static_cast<uint32_t>(samples.size());
    f.write(reinterpret_cast<const char*>(&kind), 1);
    f.write(reinterpret_cast<const char*>(&size), 4);
    f.write(reinterpret_cast<const char*>(&stack), 4);
    f.write(reinterpret_cast<const char*>(&n), 4);
    for (const auto& s : samples) {
        for (const auto& t : s.tensors)
            f.write(reinterpret_cast<const char*>(t.data()),
                    static_cast<std::streamsize>(t.size() * sizeof(double)));
        const uint8_t target = static_cast<uint8_t>(s.target);
        f.write(reinterpret_cast<const char*>(&target), 1);
        for (int a = 0; a < 3; ++a) {
            const uint32_t c = static_cast<uint32_t>(s.voxel[a]);
            f.write(reinterpret_cast<const char*>(&c), 4);
        }
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::pair<PatchFormat, std::vector<PatchSample>> read_patch_set(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open patch set: " + path);
    char magic[5];
    f.read(magic, 5);
    if (!f || std::memcmp(magic, kPatMagic, 5) != 0)
        throw std::runtime_error("not a VPAT1 file: " + path);
    uint8_t kind = 0;
    uint32_t size = 0, stack = 0, n = 0;
    f.read(reinterpret_cast<char*>(&kind), 1);
    f.read(reinterpret_cast<char*>(&size), 4);
    f.read(reinterpret_cast<char*>(&stack), 4);
    f.read(reinterpret_cast<char*>(&n), 4);
    if (!f) throw std::runtime_error("truncated VPAT1 header: " + path);
    PatchFormat fmt;
    fmt.kind = static_cast<PatchKind>(kind);
    fmt.size = static_cast<int>(size);
    fmt.stack = static_cast<int>(stack);
    fmt.validate();
    const int s = fmt.size;
    std::vector<PatchSample> samples(n);
    for (auto& sample : samples) {
        std::vector<std::vector<int>> shapes;
        if (fmt.kind == PatchKind::Stacked2D) shapes = {{fmt.stack, s, s}};
        else if (fmt.kind == PatchKind::TriPlanar) shapes = {{1, s, s}, {1, s, s}, {1, s, s}};
        else shapes = {{1, s, s, s}};
        for (auto& shape : shapes) {
            std::vector<double> vals(static_cast<size_t>(shape_product(shape)));
            f.read(reinterpret_cast<char*>(vals.data()),
                   static_cast<std::streamsize>(vals.size() * sizeof(double)));
            sample.tensors.push_back(Tensor::from_values(shape, std::move(vals)));
        }
        uint8_t target = 0;
        f.read(reinterpret_cast<char*>(&target), 1);
        sample.target = target;
        for (int a = 0; a < 3; ++a) {
            uint32_t c = 0;
            f.read(reinterpret_cast<char*>(&c), 4);
            sample.voxel[a] = static_cast<int>(c);
        }
    }
    if (!f) throw std::runtime_error("truncated VPAT1 payload: " + path);
    return {fmt, std::move(samples)};
}

} // namespace voxelseg
