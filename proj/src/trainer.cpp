#include "voxelseg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace voxelseg {

using nlohmann::json;

PreparedImage prepare_image(const std::string& stem, const Volume& vol, const LabelVolume& lab) {
    if (vol.dims != lab.dims)
        throw std::invalid_argument("image/label dims mismatch for " + stem);
    PreparedImage img;
    img.stem = stem;
    img.orig_dims = vol.dims;
    CropResult crop = crop_to_bounding_box(vol, 0.0f);
    img.offset = crop.offset;
    img.lab = crop_labels(lab, crop.offset, crop.volume.dims);
    img.vol = std::move(crop.volume);
    img.mask = mask_voxel_range(img.vol.dims, MaskBox{});
    return img;
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    for (const auto& e : read_dataset_manifest(dir)) {
        Volume vol = read_volume(dir + "/" + e.stem + ".img.vvol");
        LabelVolume lab = read_labels(dir + "/" + e.stem + ".lbl.vvol");
        PreparedImage img = prepare_image(e.stem, vol, lab);
        if (e.split == "train") ds.train.push_back(std::move(img));
        else if (e.split == "val") ds.val.push_back(std::move(img));
        else if (e.split == "test") ds.test.push_back(std::move(img));
        else throw std::runtime_error("unknown split '" + e.split + "' for " + e.stem);
    }
    return ds;
}

NetworkSpec build_architecture(const PatchFormat& fmt, int extra_dense, double dropout_rate) {
    fmt.validate();
    const int s = fmt.size;
    if (s < 9)
        throw std::invalid_argument("patch size must be >= 9 for two valid 5-wide convolutions");
    const ActivationSpec relu{Activation::Relu};
    const ActivationSpec softmax{Activation::Softmax};
    const int c2 = s - 8;  // two valid 5-kernel convolutions: s -> s-4 -> s-8

    NetworkSpec spec;
    int flat = 0;
    if (fmt.kind == PatchKind::Stacked2D) {
        spec.layers.push_back({Conv2DSpec{fmt.stack, 20, 5, 5, relu}});
        spec.layers.push_back({Conv2DSpec{20, 50, 5, 5, relu}});
        spec.layers.push_back({FlattenSpec{}});
        flat = 50 * c2 * c2;
    } else if (fmt.kind == PatchKind::TriPlanar) {
        ParallelSpec par;
        for (int b = 0; b < 3; ++b) {
            std::vector<LayerSpec> tower;
            tower.push_back({Conv2DSpec{1, 20, 5, 5, relu}});
            tower.push_back({Conv2DSpec{20, 50, 5, 5, relu}});
            tower.push_back({FlattenSpec{}});
            par.branches.push_back(std::move(tower));
        }
        spec.layers.push_back({std::move(par)});
        flat = 3 * 50 * c2 * c2;
    } else {
        spec.layers.push_back({Conv3DSpec{1, 20, 5, 5, 5, relu}});
        spec.layers.push_back({Conv3DSpec{20, 50, 5, 5, 5, relu}});
        spec.layers.push_back({FlattenSpec{}});
        flat = 50 * c2 * c2 * c2;
    }
    int in = flat;
    for (int i = 0; i < 1 + extra_dense; ++i) {
        spec.layers.push_back({DenseSpec{in, 1000, relu}});
        if (dropout_rate >= 0.0) spec.layers.push_back({DropoutSpec{dropout_rate}});
        in = 1000;
    }
    spec.layers.push_back({DenseSpec{in, 3, softmax}});
    spec.loss = LossKind::CrossEntropySoftmax;
    return spec;
}

std::vector<PatchSample> draw_split_samples(const std::vector<PreparedImage>& images,
                                            int count, const PatchFormat& fmt,
                                            uint64_t seed, bool standardize) {
    if (images.empty()) throw std::invalid_argument("split has no images");
    if (count % 4 != 0) throw std::invalid_argument("patch count must be divisible by 4");
    const int n = static_cast<int>(images.size());
    const int quads = count / 4;
    std::vector<PatchSample> all;
    all.reserve(static_cast<size_t>(count));
    std::mt19937_64 rng(seed);
    for (int i = 0; i < n; ++i) {
        const int q = quads / n + (i < quads % n ? 1 : 0);
        if (q == 0) continue;
        auto s = draw_samples(images[i].vol, images[i].lab, images[i].mask, 4 * q, fmt, rng,
                              standardize);
        for (auto& ps : s) all.push_back(std::move(ps));
    }
    return all;
}

PatchEval evaluate_patches(const NetworkSpec& spec, const std::vector<double>& params,
                           const std::vector<PatchSample>& samples) {
    double ce = 0.0;
    long long wrong = 0;
    for (const auto& s : samples) {
        Tensor out = forward(spec, params, s.tensors, false, nullptr);
        ce += loss_value_class(LossKind::CrossEntropySoftmax, out, s.target);
        int arg = 0;
        for (int i = 1; i < out.size(); ++i)
            if (out[i] > out[arg]) arg = i;
        if (arg != s.target) ++wrong;
    }
    const double n = static_cast<double>(samples.size());
    return {ce / n, static_cast<double>(wrong) / n};
}

static long long now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

TrainResult train(const TrainConfig& cfg, const Dataset& ds) {
    if (ds.train.empty() || ds.val.empty())
        throw std::invalid_argument("train/val splits must be non-empty");
    if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (cfg.improvement <= 0.0) throw std::invalid_argument("improvement threshold must be > 0");

    TrainResult result;
    result.spec = build_architecture(cfg.format, cfg.extra_dense, cfg.dropout_rate);

    OptimConfig optim = cfg.optim;
    optim.learning_rate = cfg.learning_rate;
    optim.validate();
    const bool full_batch = optim.algorithm == OptimAlgo::Rprop;

    auto train_samples = draw_split_samples(ds.train, cfg.effective_train(), cfg.format,
                                            cfg.seed * 7919 + 1, cfg.standardize);
    auto val_samples = draw_split_samples(ds.val, cfg.effective_val(), cfg.format,
                                          cfg.seed * 7919 + 2, cfg.standardize);

    std::vector<double> params = init_params(result.spec, cfg.seed);
    const auto bias = bias_mask(result.spec);
    OptimState state = OptimState::init(optim, params.size());
    std::mt19937_64 shuffle_rng(cfg.seed * 7919 + 3);
    std::mt19937_64 dropout_rng(cfg.seed * 7919 + 4);

    const int n_train = static_cast<int>(train_samples.size());
    const int batch = full_batch ? n_train : cfg.batch_size;
    const long long period = (n_train + batch - 1) / batch;  // iterations per pass

    auto validate_now = [&]() {
        if (cfg.dropout_rate >= 0.0) {
            auto scaled = scale_weights_for_inference(result.spec, params);
            return evaluate_patches(result.spec, scaled, val_samples);
        }
        return evaluate_patches(result.spec, params, val_samples);
    };

    const long long t0 = now_ms();
    PatchEval baseline = validate_now();
    result.report.best_val_score = baseline.mean_ce;
    result.report.best_val_error = baseline.error_rate;
    std::vector<double> best_params = params;
    result.history.push_back({0, 0.0, baseline.mean_ce, now_ms() - t0});

    EarlyStop stop(cfg.improvement, period);
    stop.observe(0, baseline.mean_ce);
    long long iter = 0;
    std::vector<int> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad(params.size());

    bool done = false;
    while (!done) {
        // one pass over the training patch set, in shuffled order
        if (!full_batch) std::shuffle(order.begin(), order.end(), shuffle_rng);
        double pass_loss = 0.0;
        long long pass_batches = 0;
        for (int start = 0; start < n_train; start += batch) {
            const int bsz = std::min(batch, n_train - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (int j = 0; j < bsz; ++j) {
                const auto& s = train_samples[static_cast<size_t>(order[static_cast<size_t>(start + j)])];
                Tape tape;
                Tensor out = forward(result.spec, params, s.tensors,
                                     cfg.dropout_rate >= 0.0, &dropout_rng, &tape);
                batch_loss += loss_value_class(LossKind::CrossEntropySoftmax, out, s.target);
                auto g = backward(result.spec, params, tape,
                                  ce_softmax_preact_grad(out, s.target), true);
                for (size_t k = 0; k < grad.size(); ++k) grad[k] += g[k];
            }
            for (auto& g : grad) g /= bsz;
            batch_loss /= bsz;
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("training diverged: non-finite loss at iteration " +
                                         std::to_string(iter));
            add_reg_grad(optim.reg, optim.lambda, params, bias, grad);
            if (optim.algorithm == OptimAlgo::Rprop) rprop_step(params, grad, optim, state);
            else sgd_step(params, grad, optim, state);
            ++iter;
            pass_loss += batch_loss;
            ++pass_batches;
            if (cfg.max_iterations > 0 && iter >= cfg.max_iterations) break;
        }

        PatchEval val = validate_now();
        result.history.push_back({iter, pass_loss / pass_batches, val.mean_ce, now_ms() - t0});
        if (stop.observe(iter, val.mean_ce)) {
            best_params = params;
            result.report.best_val_score = val.mean_ce;
            result.report.best_val_error = val.error_rate;
        }
        if (stop.should_stop(iter)) done = true;
        if (cfg.max_iterations > 0 && iter >= cfg.max_iterations) done = true;
    }

    result.params = std::move(best_params);
    result.report.iterations = iter;
    result.report.wall_seconds = static_cast<double>(now_ms() - t0) / 1000.0;
    result.report.iters_per_minute =
        result.report.wall_seconds > 0.0
            ? static_cast<double>(iter) * 60.0 / result.report.wall_seconds
            : 0.0;
    return result;
}

LabelVolume label_image(const NetworkSpec& spec, const std::vector<double>& params,
                        const PatchFormat& fmt, const Volume& original,
                        bool standardize, int threads) {
    CropResult crop = crop_to_bounding_box(original, 0.0f);
    const MaskRanges mask = mask_voxel_range(crop.volume.dims, MaskBox{});
    LabelVolume out = LabelVolume::zeros(original.dims);

    auto classify_slab = [&](int z_lo, int z_hi) {
        for (int z = z_lo; z < z_hi; ++z)
            for (int y = mask.lo[1]; y < mask.hi[1]; ++y)
                for (int x = mask.lo[0]; x < mask.hi[0]; ++x) {
                    auto tensors = extract(crop.volume, {x, y, z}, fmt, true);
                    if (standardize)
                        for (auto& t : tensors) standardize_patch(t);
                    Tensor p = forward(spec, params, tensors, false, nullptr);
                    int arg = 0;
                    for (int i = 1; i < p.size(); ++i)
                        if (p[i] > p[arg]) arg = i;
                    out.at(x + crop.offset[0], y + crop.offset[1], z + crop.offset[2]) =
                        static_cast<uint8_t>(arg);
                }
    };

    const int z_lo = mask.lo[2], z_hi = mask.hi[2];
    const int n = std::max(1, std::min(threads, z_hi - z_lo));
    if (n == 1) {
        classify_slab(z_lo, z_hi);
    } else {
        std::vector<std::thread> workers;
        const int span = (z_hi - z_lo + n - 1) / n;
        for (int t = 0; t < n; ++t) {
            const int lo = z_lo + t * span;
            const int hi = std::min(z_hi, lo + span);
            if (lo < hi) workers.emplace_back(classify_slab, lo, hi);
        }
        for (auto& w : workers) w.join();
    }
    return out;
}

void evaluate_run(TrainResult& result, const TrainConfig& cfg, const Dataset& ds) {
    if (ds.test.empty()) throw std::invalid_argument("test split is empty");
    std::vector<double> infer_params =
        cfg.dropout_rate >= 0.0 ? scale_weights_for_inference(result.spec, result.params)
                                : result.params;
    auto test_samples = draw_split_samples(ds.test, cfg.effective_test(), cfg.format,
                                           cfg.seed * 7919 + 5, cfg.standardize);
    result.report.test_error = evaluate_patches(result.spec, infer_params, test_samples).error_rate;

    const PreparedImage& img = ds.test.front();
    // reconstruct the uncropped volume/labels for whole-image scoring
    Volume full = Volume::zeros(img.orig_dims);
    LabelVolume truth = LabelVolume::zeros(img.orig_dims);
    for (int z = 0; z < img.vol.dims[2]; ++z)
        for (int y = 0; y < img.vol.dims[1]; ++y)
            for (int x = 0; x < img.vol.dims[0]; ++x) {
                full.at(x + img.offset[0], y + img.offset[1], z + img.offset[2]) = img.vol.at(x, y, z);
                truth.at(x + img.offset[0], y + img.offset[1], z + img.offset[2]) = img.lab.at(x, y, z);
            }
    LabelVolume predicted = label_image(result.spec, infer_params, cfg.format, full,
                                        cfg.standardize, cfg.threads);
    LabelVolume cleaned = postprocess(predicted, cfg.min_blob);
    SegmentationMetrics m = segmentation_metrics(cleaned, truth);
    result.report.false_pos = m.false_pos;
    result.report.false_neg = m.false_neg;
}

void write_report_text(const std::string& path, const RunReport& r) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write report: " + path);
    f << "best_val_score=" << r.best_val_score << "\n"
      << "best_val_error=" << r.best_val_error << "\n"
      << "test_error=" << r.test_error << "\n"
      << "false_pos=" << r.false_pos << "\n"
      << "false_neg=" << r.false_neg << "\n"
      << "iterations=" << r.iterations << "\n"
      << "wall_seconds=" << r.wall_seconds << "\n"
      << "iters_per_minute=" << r.iters_per_minute << "\n";
}

void write_report_json(const std::string& path, const RunReport& r) {
    json j{{"best_val_score", r.best_val_score}, {"best_val_error", r.best_val_error},
           {"test_error", r.test_error},         {"false_pos", r.false_pos},
           {"false_neg", r.false_neg},           {"iterations", r.iterations},
           {"wall_seconds", r.wall_seconds},     {"iters_per_minute", r.iters_per_minute}};
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write report: " + path);
    f << j.dump(2) << "\n";
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write history: " + path);
    f << "iteration,train_loss,val_error,timestamp_ms\n";
    for (const auto& h : history)
        f << h.iteration << "," << h.train_loss << "," << h.val_error << "," << h.timestamp_ms
          << "\n";
}

} // namespace voxelseg
