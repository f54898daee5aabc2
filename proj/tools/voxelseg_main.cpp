// voxelseg: patch-based 3D volumetric segmentation pipeline on synthetic
// phantom volumes. Subcommands cover dataset generation, sampling,
// training, whole-image labeling, evaluation, gradient checking, and
// throughput benchmarking.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "voxelseg/nn.hpp"
#include "voxelseg/optim.hpp"
#include "voxelseg/phantom.hpp"
#include "voxelseg/sampler.hpp"
#include "voxelseg/trainer.hpp"
#include "voxelseg/volume.hpp"

namespace {

using namespace voxelseg;

std::array<int, 3> parse_dims(const std::string& s) {
    std::array<int, 3> dims{};
    char sep1 = 0, sep2 = 0;
    std::istringstream is(s);
    if (!(is >> dims[0] >> sep1 >> dims[1] >> sep2 >> dims[2]) || sep1 != ',' || sep2 != ',')
        throw CLI::ValidationError("--dims expects X,Y,Z");
    return dims;
}

int default_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("VOXELSEG_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

PatchFormat make_format(const std::string& name, int patch_size, int stack) {
    PatchFormat fmt;
    fmt.kind = patch_kind_from_string(name);
    fmt.size = patch_size;
    fmt.stack = stack;
    fmt.validate();
    return fmt;
}

int default_patch_size(const std::string& format) {
    // desk-scale defaults; full3d kept smaller so runs stay desktop-sized
    return format == "3d" ? 11 : 12;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"patch-based volumetric segmentation experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    uint64_t seed = 42;
    app.add_option("--seed", seed, "global RNG seed")->capture_default_str();

    // phantom
    auto* cmd_phantom = app.add_subcommand("phantom", "generate a synthetic phantom dataset");
    std::string ph_out = "data";
    int ph_count = 20;
    std::string ph_dims = "64,64,64";
    cmd_phantom->add_option("--out", ph_out, "output directory")->capture_default_str();
    cmd_phantom->add_option("--count", ph_count, "number of images")->capture_default_str();
    cmd_phantom->add_option("--dims", ph_dims, "volume dims X,Y,Z")->capture_default_str();

    // shared train/sample/gradcheck flags
    std::string format = "stacked2d";
    int patch_size = 0;  // 0 -> per-format default
    int stack = 3;

    auto add_format_flags = [&](CLI::App* cmd) {
        cmd->add_option("--format", format, "patch format: stacked2d|triplanar|3d")
            ->capture_default_str();
        cmd->add_option("--patch-size", patch_size, "patch side length (default 12, 3d: 11)");
        cmd->add_option("--stack", stack, "stacked2d layer count (odd)")->capture_default_str();
    };

    // sample
    auto* cmd_sample = app.add_subcommand("sample", "draw a class-balanced patch set");
    std::string sm_data = "data", sm_out = "patches.vpat";
    int sm_count = 1000;
    cmd_sample->add_option("--data", sm_data, "dataset directory")->capture_default_str();
    add_format_flags(cmd_sample);
    cmd_sample->add_option("--count", sm_count, "patch count (divisible by 4)")->capture_default_str();
    cmd_sample->add_option("--out", sm_out, "output VPAT1 file")->capture_default_str();

    // train
    auto* cmd_train = app.add_subcommand("train", "train a network on a phantom dataset");
    std::string tr_data = "data", tr_out = "model.vsegnet";
    int tr_batch = 50;
    double tr_lr = 0.01;
    std::string tr_reg = "none";
    double tr_lambda = 0.0;
    std::string tr_optimizer = "sgd";
    double tr_dropout = -1.0;
    int tr_extra_dense = 0;
    double tr_desk_scale = 0.25;
    int tr_threads = 0;
    cmd_train->add_option("--data", tr_data, "dataset directory")->capture_default_str();
    add_format_flags(cmd_train);
    cmd_train->add_option("--batch-size", tr_batch, "minibatch size")->capture_default_str();
    cmd_train->add_option("--lr", tr_lr, "learning rate")->capture_default_str();
    cmd_train->add_option("--reg", tr_reg, "regularization: none|l1|l2")->capture_default_str();
    cmd_train->add_option("--lambda", tr_lambda, "regularization strength")->capture_default_str();
    cmd_train->add_option("--optimizer", tr_optimizer, "sgd|momentum|rprop")->capture_default_str();
    cmd_train->add_option("--dropout", tr_dropout, "dropout rate on dense layers (<0 disables)")
        ->capture_default_str();
    cmd_train->add_option("--extra-dense", tr_extra_dense, "extra 1000-node hidden layers")
        ->capture_default_str();
    cmd_train->add_option("--desk-scale", tr_desk_scale, "patch-count scale factor")
        ->capture_default_str();
    cmd_train->add_option("--threads", tr_threads, "labeling threads (env VOXELSEG_THREADS)");
    cmd_train->add_option("--out", tr_out, "output model file")->capture_default_str();

    // label
    auto* cmd_label = app.add_subcommand("label", "label a volume with a trained model");
    std::string lb_model = "model.vsegnet", lb_image, lb_out = "labels.lbl.vvol";
    int lb_min_blob = 500;
    int lb_threads = 0;
    cmd_label->add_option("--model", lb_model, "model file")->capture_default_str();
    cmd_label->add_option("--image", lb_image, "input .img.vvol")->required();
    cmd_label->add_option("--out", lb_out, "output .lbl.vvol")->capture_default_str();
    cmd_label->add_option("--min-blob", lb_min_blob, "post-processing blob threshold (voxels)")
        ->capture_default_str();
    cmd_label->add_option("--threads", lb_threads, "labeling threads (env VOXELSEG_THREADS)");

    // eval
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a trained model on the test split");
    std::string ev_model = "model.vsegnet", ev_data = "data", ev_report = "report.txt";
    int ev_threads = 0;
    double ev_desk_scale = 0.25;
    cmd_eval->add_option("--model", ev_model, "model file")->capture_default_str();
    cmd_eval->add_option("--data", ev_data, "dataset directory")->capture_default_str();
    cmd_eval->add_option("--report", ev_report, "report output file")->capture_default_str();
    cmd_eval->add_option("--desk-scale", ev_desk_scale, "patch-count scale factor")
        ->capture_default_str();
    cmd_eval->add_option("--threads", ev_threads, "labeling threads");

    // gradcheck
    auto* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    double gc_tolerance = 1e-6;
    int gc_seeds = 5;
    add_format_flags(cmd_gradcheck);
    cmd_gradcheck->add_option("--tolerance", gc_tolerance, "max relative error accepted")
        ->capture_default_str();
    cmd_gradcheck->add_option("--seeds", gc_seeds, "number of random seeds")->capture_default_str();

    // bench
    auto* cmd_bench = app.add_subcommand("bench", "measure training throughput per format");
    std::string bn_formats = "stacked2d,triplanar,3d";
    double bn_minutes = 0.2;
    std::string bn_data = "";
    cmd_bench->add_option("--formats", bn_formats, "comma-separated format list")
        ->capture_default_str();
    cmd_bench->add_option("--minutes", bn_minutes, "time budget per format")->capture_default_str();
    cmd_bench->add_option("--data", bn_data, "dataset directory (default: temporary phantoms)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*cmd_phantom) {
            PhantomConfig cfg;
            cfg.dims = parse_dims(ph_dims);
            cfg.seed = seed;
            write_phantom_dataset(ph_out, ph_count, cfg);
            std::cout << "wrote " << ph_count << " phantoms to " << ph_out << "\n";
            return 0;
        }

        if (patch_size == 0) patch_size = default_patch_size(format);

        if (*cmd_sample) {
            PatchFormat fmt = make_format(format, patch_size, stack);
            Dataset ds = load_dataset(sm_data);
            std::vector<PreparedImage> all;
            for (auto& v : ds.train) all.push_back(std::move(v));
            auto samples = draw_split_samples(all, sm_count, fmt, seed, true);
            write_patch_set(sm_out, fmt, samples);
            std::cout << "wrote " << samples.size() << " patches to " << sm_out << "\n";
            return 0;
        }

        if (*cmd_train) {
            TrainConfig cfg;
            cfg.format = make_format(format, patch_size, stack);
            cfg.batch_size = tr_batch;
            cfg.learning_rate = tr_lr;
            cfg.desk_scale = tr_desk_scale;
            cfg.seed = seed;
            cfg.dropout_rate = tr_dropout;
            cfg.extra_dense = tr_extra_dense;
            cfg.threads = default_threads(tr_threads);
            if (tr_reg == "l1") cfg.optim.reg = RegKind::L1;
            else if (tr_reg == "l2") cfg.optim.reg = RegKind::L2;
            else if (tr_reg != "none") throw std::runtime_error("unknown --reg: " + tr_reg);
            cfg.optim.lambda = tr_lambda;
            if (tr_optimizer == "sgd") cfg.optim.algorithm = OptimAlgo::Sgd;
            else if (tr_optimizer == "momentum") cfg.optim.algorithm = OptimAlgo::SgdMomentum;
            else if (tr_optimizer == "rprop") cfg.optim.algorithm = OptimAlgo::Rprop;
            else throw std::runtime_error("unknown --optimizer: " + tr_optimizer);

            Dataset ds = load_dataset(tr_data);
            TrainResult result = train(cfg, ds);
            evaluate_run(result, cfg, ds);

            std::vector<double> save_params =
                cfg.dropout_rate >= 0.0 ? scale_weights_for_inference(result.spec, result.params)
                                        : result.params;
            ModelMeta meta;
            meta.format = to_string(cfg.format.kind);
            meta.patch_size = cfg.format.size;
            meta.stack = cfg.format.stack;
            meta.standardize = cfg.standardize;
            meta.min_blob = cfg.min_blob;
            save_model(tr_out, result.spec, save_params, meta);
            const std::string stem =
                tr_out.size() > 8 && tr_out.substr(tr_out.size() - 8) == ".vsegnet"
                    ? tr_out.substr(0, tr_out.size() - 8)
                    : tr_out;
            write_report_text(stem + ".report.txt", result.report);
            write_report_json(stem + ".report.json", result.report);
            write_history_csv(stem + ".history.csv", result.history);
            std::cout << "iterations=" << result.report.iterations
                      << " best_val_score=" << result.report.best_val_score
                      << " test_error=" << result.report.test_error
                      << " false_pos=" << result.report.false_pos
                      << " false_neg=" << result.report.false_neg << "\n";
            return 0;
        }

        if (*cmd_label) {
            LoadedModel model = load_model(lb_model);
            PatchFormat fmt = make_format(model.meta.format, model.meta.patch_size, model.meta.stack);
            Volume vol = read_volume(lb_image);
            LabelVolume lv = label_image(model.spec, model.params, fmt, vol,
                                         model.meta.standardize, default_threads(lb_threads));
            write_labels(lb_out, postprocess(lv, lb_min_blob));
            std::cout << "wrote " << lb_out << "\n";
            return 0;
        }

        if (*cmd_eval) {
            LoadedModel model = load_model(ev_model);
            TrainConfig cfg;
            cfg.format = make_format(model.meta.format, model.meta.patch_size, model.meta.stack);
            cfg.desk_scale = ev_desk_scale;
            cfg.seed = seed;
            cfg.standardize = model.meta.standardize;
            cfg.min_blob = model.meta.min_blob;
            cfg.threads = default_threads(ev_threads);
            Dataset ds = load_dataset(ev_data);
            TrainResult result;
            result.spec = model.spec;
            result.params = model.params;
            evaluate_run(result, cfg, ds);
            write_report_text(ev_report, result.report);
            std::cout << "test_error=" << result.report.test_error
                      << " false_pos=" << result.report.false_pos
                      << " false_neg=" << result.report.false_neg << "\n";
            return 0;
        }

        if (*cmd_gradcheck) {
            PatchFormat fmt = make_format(format, patch_size, stack);
            NetworkSpec spec = build_architecture(fmt);
            double worst = 0.0;
            for (int s = 0; s < gc_seeds; ++s) {
                const uint64_t sd = seed + static_cast<uint64_t>(s);
                auto params = init_params(spec, sd);
                std::mt19937_64 rng(sd * 31 + 7);
                std::vector<GradCheckSample> batch;
                for (int b = 0; b < 2; ++b) {
                    GradCheckSample gs;
                    const int nin = fmt.kind == PatchKind::TriPlanar ? 3 : 1;
                    for (int i = 0; i < nin; ++i) {
                        std::vector<int> shape;
                        if (fmt.kind == PatchKind::Stacked2D) shape = {fmt.stack, fmt.size, fmt.size};
                        else if (fmt.kind == PatchKind::TriPlanar) shape = {1, fmt.size, fmt.size};
                        else shape = {1, fmt.size, fmt.size, fmt.size};
                        Tensor t = Tensor::zeros(shape);
                        for (int k = 0; k < t.size(); ++k)
                            t[k] = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0) * 2.0 - 1.0;
                        gs.inputs.push_back(std::move(t));
                    }
                    gs.target_class = static_cast<int>(rng() % 3);
                    batch.push_back(std::move(gs));
                }
                worst = std::max(worst, gradient_check(spec, params, batch, 1e-5, 40, sd));
            }
            std::cout << "max relative error: " << worst << " (tolerance " << gc_tolerance << ")\n";
            return worst < gc_tolerance ? 0 : 2;
        }

        if (*cmd_bench) {
            std::string data_dir = bn_data;
            std::filesystem::path tmp;
            if (data_dir.empty()) {
                tmp = std::filesystem::temp_directory_path() / "voxelseg_bench";
                PhantomConfig pcfg;
                pcfg.seed = seed;
                write_phantom_dataset(tmp.string(), 4, pcfg);
                data_dir = tmp.string();
            }
            Dataset ds = load_dataset(data_dir);
            std::vector<PreparedImage> pool;
            for (auto& v : ds.train) pool.push_back(std::move(v));
            for (auto& v : ds.val) pool.push_back(std::move(v));
            for (auto& v : ds.test) pool.push_back(std::move(v));

            std::istringstream fl(bn_formats);
            std::string name;
            while (std::getline(fl, name, ',')) {
                PatchFormat fmt = make_format(name, default_patch_size(name), 3);
                NetworkSpec spec = build_architecture(fmt);
                auto params = init_params(spec, seed);
                std::mt19937_64 rng(seed);
                auto samples = draw_split_samples(pool, 400, fmt, seed, true);
                OptimConfig ocfg;
                OptimState state = OptimState::init(ocfg, params.size());
                std::vector<double> grad(params.size());
                const auto t0 = std::chrono::steady_clock::now();
                const double budget = bn_minutes * 60.0;
                long long iters = 0;
                size_t cursor = 0;
                while (true) {
                    std::fill(grad.begin(), grad.end(), 0.0);
                    for (int j = 0; j < 50; ++j) {
                        const auto& s = samples[cursor++ % samples.size()];
                        Tape tape;
                        Tensor out = forward(spec, params, s.tensors, false, nullptr, &tape);
                        auto g = backward(spec, params, tape,
                                          ce_softmax_preact_grad(out, s.target), true);
                        for (size_t k = 0; k < grad.size(); ++k) grad[k] += g[k];
                    }
                    for (auto& g : grad) g /= 50.0;
                    sgd_step(params, grad, ocfg, state);
                    ++iters;
                    const double elapsed =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                    if (elapsed >= budget) {
                        std::cout << name << ": " << (iters * 60.0 / elapsed)
                                  << " iterations/minute\n";
                        break;
                    }
                }
            }
            if (!tmp.empty()) std::filesystem::remove_all(tmp);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
