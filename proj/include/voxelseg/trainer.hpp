#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "voxelseg/nn.hpp"
#include "voxelseg/optim.hpp"
#include "voxelseg/phantom.hpp"
#include "voxelseg/sampler.hpp"
#include "voxelseg/volume.hpp"

namespace voxelseg {

struct TrainConfig {
    PatchFormat format;
    int batch_size = 50;
    double learning_rate = 0.01;
    double desk_scale = 0.25;        // fraction of the full-scale patch counts
    int train_patches = 0;           // 0 -> 24000 * desk_scale
    int val_patches = 0;             // 0 ->  8000 * desk_scale
    int test_patches = 0;            // 0 ->  8000 * desk_scale
    double improvement = 0.01;       // relative validation improvement threshold
    uint64_t seed = 42;
    OptimConfig optim;
    double dropout_rate = -1.0;      // < 0 disables dropout (pipeline default)
    int extra_dense = 0;             // additional 1000-node hidden layers
    bool standardize = true;
    int min_blob = 500;
    long long max_iterations = 0;    // 0 = unlimited (safety knob only)
    int threads = 1;

    int effective_train() const { return round4(train_patches > 0 ? train_patches : scale(24000)); }
    int effective_val() const { return round4(val_patches > 0 ? val_patches : scale(8000)); }
    int effective_test() const { return round4(test_patches > 0 ? test_patches : scale(8000)); }

private:
    int scale(int n) const { return static_cast<int>(n * desk_scale); }
    static int round4(int n) { return std::max(4, (n / 4) * 4); }
};

struct PreparedImage {
    std::string stem;
    Volume vol;            // cropped
    LabelVolume lab;       // cropped
    MaskRanges mask;       // in cropped coordinates
    std::array<int, 3> offset;
    std::array<int, 3> orig_dims;
};

struct Dataset {
    std::vector<PreparedImage> train, val, test;
};

PreparedImage prepare_image(const std::string& stem, const Volume& vol, const LabelVolume& lab);
Dataset load_dataset(const std::string& dir);

/// The two-conv + 1000-dense + softmax presets. `dropout_rate >= 0` inserts
/// a Dropout layer after each hidden dense layer; `extra_dense` appends
/// additional 1000-node hidden layers.
NetworkSpec build_architecture(const PatchFormat& fmt, int extra_dense = 0,
                               double dropout_rate = -1.0);

/// Validation-driven stopping: the termination iteration starts at one
/// validation period; every accepted relative improvement moves it to twice
/// the current iteration. The first observation (the untrained baseline)
/// only seeds the best score.
struct EarlyStop {
    double improvement;
    long long termination;
    double best = 0.0;
    bool seeded = false;

    EarlyStop(double improvement, long long period)
        : improvement(improvement), termination(period) {}

    /// Returns true when `score` is accepted as an improvement.
    bool observe(long long iter, double score) {
        if (!seeded) {
            best = score;
            seeded = true;
            return false;
        }
        if (score < (1.0 - improvement) * best) {
            best = score;
            termination = 2 * iter;
            return true;
        }
        return false;
    }

    bool should_stop(long long iter) const { return iter >= termination; }
};

struct HistoryRow {
    long long iteration;
    double train_loss;
    double val_error;      // validation score (mean cross-entropy)
    long long timestamp_ms;
};

struct RunReport {
    double best_val_score = 0.0;     // mean cross-entropy at best checkpoint
    double best_val_error = 0.0;     // misclassification rate at best checkpoint
    double test_error = 0.0;         // patch misclassification rate
    long long false_pos = 0;         // whole-image, after post-processing
    long long false_neg = 0;
    long long iterations = 0;
    double wall_seconds = 0.0;
    double iters_per_minute = 0.0;
};

struct TrainResult {
    NetworkSpec spec;
    std::vector<double> params;      // best-validation checkpoint (raw weights)
    RunReport report;                // test/FP/FN filled by evaluate_run
    std::vector<HistoryRow> history;
};

/// Patch samples for each image of a split, class-balanced per image.
std::vector<PatchSample> draw_split_samples(const std::vector<PreparedImage>& images,
                                            int count, const PatchFormat& fmt,
                                            uint64_t seed, bool standardize);

TrainResult train(const TrainConfig& cfg, const Dataset& ds);

/// Mean cross-entropy and misclassification rate over a patch set.
struct PatchEval { double mean_ce; double error_rate; };
PatchEval evaluate_patches(const NetworkSpec& spec, const std::vector<double>& params,
                           const std::vector<PatchSample>& samples);

/// Classifies every mask voxel of the (uncropped) volume; voxels outside
/// the mask stay 0. Out-of-bounds patch reads clamp to the volume edge.
LabelVolume label_image(const NetworkSpec& spec, const std::vector<double>& params,
                        const PatchFormat& fmt, const Volume& original,
                        bool standardize = true, int threads = 1);

/// Fills test_error and post-processed FP/FN (on the first test image)
/// into result.report.
void evaluate_run(TrainResult& result, const TrainConfig& cfg, const Dataset& ds);

void write_report_text(const std::string& path, const RunReport& r);
void write_report_json(const std::string& path, const RunReport& r);
void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history);

} // namespace voxelseg
