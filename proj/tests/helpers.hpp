#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "voxelseg/tensor.hpp"
#include "voxelseg/volume.hpp"

namespace testutil {

inline double unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * unit(rng);
}

inline int randint(std::mt19937_64& rng, int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

inline voxelseg::Tensor random_tensor(std::mt19937_64& rng, std::vector<int> shape,
                                      double lo = -1.0, double hi = 1.0) {
    voxelseg::Tensor t = voxelseg::Tensor::zeros(std::move(shape));
    for (int i = 0; i < t.size(); ++i) t[i] = uniform(rng, lo, hi);
    return t;
}

inline voxelseg::LabelVolume random_labels(std::mt19937_64& rng, std::array<int, 3> dims,
                                           int num_classes = 3) {
    voxelseg::LabelVolume lv = voxelseg::LabelVolume::zeros(dims);
    for (auto& l : lv.labels) l = static_cast<uint8_t>(rng() % static_cast<uint64_t>(num_classes));
    return lv;
}

} // namespace testutil
