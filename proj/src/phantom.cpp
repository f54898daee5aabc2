#include "voxelseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace voxelseg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Vec3 {
    double x, y, z;
};

Vec3 bezier(const std::array<std::array<double, 3>, 3>& p, double t) {
    const double a = (1 - t) * (1 - t), b = 2 * (1 - t) * t, c = t * t;
    return {a * p[0][0] + b * p[1][0] + c * p[2][0],
            a * p[0][1] + b * p[1][1] + c * p[2][1],
            a * p[0][2] + b * p[1][2] + c * p[2][2]};
}

double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

// Box-Muller; deterministic from the raw engine stream.
double gaussian(std::mt19937_64& rng) {
    double u1 = unit_uniform(rng);
    while (u1 <= 0.0) u1 = unit_uniform(rng);
    const double u2 = unit_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

} // namespace

std::pair<Volume, LabelVolume> generate_phantom(const PhantomConfig& cfg) {
    const auto [X, Y, Z] = cfg.dims;
    Volume vol = Volume::zeros(cfg.dims);
    LabelVolume lab = LabelVolume::zeros(cfg.dims);

    const double cx = (X - 1) / 2.0, cy = (Y - 1) / 2.0, cz = (Z - 1) / 2.0;
    const double ax = cfg.brain_semi_axes[0] * X;
    const double ay = cfg.brain_semi_axes[1] * Y;
    const double az = cfg.brain_semi_axes[2] * Z;

    // Analytic brain bounding box; tube control fractions refer to it.
    const double bx0 = cx - ax, by0 = cy - ay, bz0 = cz - az;
    const double bw = 2 * ax, bh = 2 * ay, bd = 2 * az;

    auto curve_points = [&](const TubeSpec& tube) {
        std::vector<Vec3> pts;
        const int n = 256;
        pts.reserve(n + 1);
        for (int i = 0; i <= n; ++i) {
            Vec3 f = bezier(tube.control, static_cast<double>(i) / n);
            pts.push_back({bx0 + f.x * bw, by0 + f.y * bh, bz0 + f.z * bd});
        }
        return pts;
    };
    const std::vector<Vec3> left_pts = curve_points(cfg.left);
    const std::vector<Vec3> right_pts = curve_points(cfg.right);

    auto min_dist2 = [](const std::vector<Vec3>& pts, double x, double y, double z) {
        double best = 1e300;
        for (const auto& p : pts) {
            const double dx = x - p.x, dy = y - p.y, dz = z - p.z;
            const double d = dx * dx + dy * dy + dz * dz;
            if (d < best) best = d;
        }
        return best;
    };

    auto paint_tube = [&](const std::vector<Vec3>& pts, double radius, uint8_t cls) {
        double lox = 1e300, loy = 1e300, loz = 1e300, hix = -1e300, hiy = -1e300, hiz = -1e300;
        for (const auto& p : pts) {
            lox = std::min(lox, p.x); hix = std::max(hix, p.x);
            loy = std::min(loy, p.y); hiy = std::max(hiy, p.y);
            loz = std::min(loz, p.z); hiz = std::max(hiz, p.z);
        }
        const int x0 = std::max(0, static_cast<int>(std::floor(lox - radius)));
        const int x1 = std::min(X - 1, static_cast<int>(std::ceil(hix + radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(loy - radius)));
        const int y1 = std::min(Y - 1, static_cast<int>(std::ceil(hiy + radius)));
        const int z0 = std::max(0, static_cast<int>(std::floor(loz - radius)));
        const int z1 = std::min(Z - 1, static_cast<int>(std::ceil(hiz + radius)));
        const double r2 = radius * radius;
        for (int z = z0; z <= z1; ++z)
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    if (min_dist2(pts, x, y, z) <= r2) lab.at(x, y, z) = cls;
    };
    paint_tube(left_pts, cfg.left.radius, 1);
    paint_tube(right_pts, cfg.right.radius, 2);

    // intensities: deterministic scan order, noise on tissue voxels only
    std::mt19937_64 rng(cfg.seed);
    for (int z = 0; z < Z; ++z)
        for (int y = 0; y < Y; ++y)
            for (int x = 0; x < X; ++x) {
                const double ex = (x - cx) / ax, ey = (y - cy) / ay, ez = (z - cz) / az;
                const bool in_brain = ex * ex + ey * ey + ez * ez <= 1.0;
                const uint8_t cls = lab.at(x, y, z);
                if (!in_brain && cls == 0) continue;
                const double level = cls != 0 ? cfg.hippo_level : cfg.brain_level;
                const double noise = cfg.noise_stddev > 0.0 ? cfg.noise_stddev * gaussian(rng) : 0.0;
                // floor keeps tissue strictly positive so the brain bounding
                // box stays exact at threshold 0
                vol.at(x, y, z) = static_cast<float>(std::max(level + noise, 1e-3));
            }

    // geometry sanity: counts, left-of-right, positives inside the mask
    long long nleft = 0, nright = 0;
    double lsum = 0, rsum = 0;
    for (int z = 0; z < Z; ++z)
        for (int y = 0; y < Y; ++y)
            for (int x = 0; x < X; ++x) {
                const uint8_t c = lab.at(x, y, z);
                if (c == 1) { ++nleft; lsum += x; }
                if (c == 2) { ++nright; rsum += x; }
            }
    if (nleft < cfg.min_hippo_voxels || nleft > cfg.max_hippo_voxels ||
        nright < cfg.min_hippo_voxels || nright > cfg.max_hippo_voxels)
        throw std::runtime_error("phantom geometry outside hippocampus voxel-count band (left " +
                                 std::to_string(nleft) + ", right " + std::to_string(nright) + ")");
    if (!(lsum / nleft < rsum / nright))
        throw std::runtime_error("phantom geometry: left centroid not left of right centroid");

    CropResult crop = crop_to_bounding_box(vol, 0.0f);
    MaskRanges mask = mask_voxel_range(crop.volume.dims, MaskBox{});
    for (int z = 0; z < Z; ++z)
        for (int y = 0; y < Y; ++y)
            for (int x = 0; x < X; ++x) {
                if (lab.at(x, y, z) == 0) continue;
                if (!mask.contains(x - crop.offset[0], y - crop.offset[1], z - crop.offset[2]))
                    throw std::runtime_error("phantom geometry: positive voxel outside mask box");
            }

    return {std::move(vol), std::move(lab)};
}

void write_phantom_dataset(const std::string& dir, int count, const PhantomConfig& base) {
    if (count < 1) throw std::invalid_argument("dataset needs at least one image");
    fs::create_directories(dir);
    const int n_train = std::max(1, static_cast<int>(std::lround(count * 0.6)));
    const int n_val = std::max(count >= 2 ? 1 : 0, static_cast<int>(std::lround(count * 0.2)));
    json images = json::array();
    for (int i = 0; i < count; ++i) {
        PhantomConfig cfg = base;
        cfg.seed = base.seed + static_cast<uint64_t>(i);
        auto [vol, lab] = generate_phantom(cfg);
        char stem[32];
        std::snprintf(stem, sizeof stem, "phantom_%03d", i);
        write_volume(dir + "/" + stem + ".img.vvol", vol);
        write_labels(dir + "/" + stem + ".lbl.vvol", lab);
        const char* split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
        images.push_back({{"stem", stem}, {"split", split}, {"seed", cfg.seed}});
    }
    json manifest{{"version", 1}, {"images", images}};
    std::ofstream f(dir + "/manifest.json");
    if (!f) throw std::runtime_error("cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

std::vector<DatasetEntry> read_dataset_manifest(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw std::runtime_error("cannot open dataset manifest: " + dir + "/manifest.json");
    json manifest = json::parse(f);
    std::vector<DatasetEntry> entries;
    for (const auto& img : manifest.at("images"))
        entries.push_back({img.at("stem"), img.at("split")});
    return entries;
}

} // namespace voxelseg
