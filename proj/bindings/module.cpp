// Python bindings for the main pipeline operations.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "voxelseg/nn.hpp"
#include "voxelseg/optim.hpp"
#include "voxelseg/phantom.hpp"
#include "voxelseg/sampler.hpp"
#include "voxelseg/trainer.hpp"
#include "voxelseg/volume.hpp"

namespace py = pybind11;
using namespace voxelseg;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = static_cast<int>(a.shape(i));
    std::vector<double> values(a.data(), a.data() + a.size());
    return Tensor::from_values(shape, std::move(values));
}

py::array_t<double> tensor_to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::copy(t.data(), t.data() + t.size(), a.mutable_data());
    return a;
}

Volume volume_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3) throw std::invalid_argument("volume array must be 3-d (z, y, x)");
    Volume v = Volume::zeros({static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1)),
                              static_cast<int>(a.shape(0))});
    std::copy(a.data(), a.data() + a.size(), v.voxels.begin());
    return v;
}

py::array_t<float> volume_to_array(const Volume& v) {
    py::array_t<float> a({v.dims[2], v.dims[1], v.dims[0]});
    std::copy(v.voxels.begin(), v.voxels.end(), a.mutable_data());
    return a;
}

LabelVolume labels_from_array(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3) throw std::invalid_argument("label array must be 3-d (z, y, x)");
    LabelVolume lv = LabelVolume::zeros({static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1)),
                                         static_cast<int>(a.shape(0))});
    std::copy(a.data(), a.data() + a.size(), lv.labels.begin());
    return lv;
}

py::array_t<uint8_t> labels_to_array(const LabelVolume& lv) {
    py::array_t<uint8_t> a({lv.dims[2], lv.dims[1], lv.dims[0]});
    std::copy(lv.labels.begin(), lv.labels.end(), a.mutable_data());
    return a;
}

} // namespace

PYBIND11_MODULE(_voxelseg, m) {
    m.doc() = "patch-based volumetric segmentation core";

    m.def("matmul", [](py::array_t<double> a, py::array_t<double> b) {
        return tensor_to_array(matmul(tensor_from_array(a), tensor_from_array(b)));
    });
    m.def("conv2d_valid", [](py::array_t<double> input, py::array_t<double> kernels,
                             py::array_t<double> bias) {
        return tensor_to_array(conv2d_valid(tensor_from_array(input), tensor_from_array(kernels),
                                            tensor_from_array(bias)));
    });
    m.def("conv3d_valid", [](py::array_t<double> input, py::array_t<double> kernels,
                             py::array_t<double> bias) {
        return tensor_to_array(conv3d_valid(tensor_from_array(input), tensor_from_array(kernels),
                                            tensor_from_array(bias)));
    });
    m.def("maxpool2d", [](py::array_t<double> input, int ph, int pw) {
        auto r = maxpool2d(tensor_from_array(input), ph, pw);
        return py::make_tuple(tensor_to_array(r.output), r.argmax);
    });

    m.def(
        "generate_phantom",
        [](std::array<int, 3> dims, uint64_t seed) {
            PhantomConfig cfg;
            cfg.dims = dims;
            cfg.seed = seed;
            auto [vol, lab] = generate_phantom(cfg);
            return py::make_tuple(volume_to_array(vol), labels_to_array(lab));
        },
        py::arg("dims") = std::array<int, 3>{64, 64, 64}, py::arg("seed") = 42);

    m.def(
        "postprocess",
        [](py::array_t<uint8_t> labels, int min_blob) {
            return labels_to_array(postprocess(labels_from_array(labels), min_blob));
        },
        py::arg("labels"), py::arg("min_blob") = 500);

    m.def("connected_component_count", [](py::array_t<uint8_t> labels) {
        return connected_components(labels_from_array(labels)).size();
    });

    m.def("segmentation_metrics", [](py::array_t<uint8_t> predicted, py::array_t<uint8_t> truth) {
        SegmentationMetrics r =
            segmentation_metrics(labels_from_array(predicted), labels_from_array(truth));
        py::dict d;
        d["false_pos"] = r.false_pos;
        d["false_neg"] = r.false_neg;
        d["left_right_confusions"] = r.left_right_confusions;
        d["precision"] = r.precision;
        d["recall"] = r.recall;
        return d;
    });

    m.def(
        "extract_patch",
        [](py::array_t<float> volume, std::array<int, 3> voxel, const std::string& format,
           int patch_size, int stack, bool clamp_borders) {
            PatchFormat fmt{patch_kind_from_string(format), patch_size, stack};
            Volume v = volume_from_array(volume);
            auto tensors = extract(v, voxel, fmt, clamp_borders);
            py::list out;
            for (const auto& t : tensors) out.append(tensor_to_array(t));
            return out;
        },
        py::arg("volume"), py::arg("voxel"), py::arg("format"), py::arg("patch_size") = 12,
        py::arg("stack") = 3, py::arg("clamp_borders") = false);

    m.def(
        "gradient_check_preset",
        [](const std::string& format, int patch_size, int stack, uint64_t seed) {
            PatchFormat fmt{patch_kind_from_string(format), patch_size, stack};
            NetworkSpec spec = build_architecture(fmt);
            auto params = init_params(spec, seed);
            std::mt19937_64 rng(seed * 31 + 7);
            std::vector<GradCheckSample> batch(1);
            const int nin = fmt.kind == PatchKind::TriPlanar ? 3 : 1;
            for (int i = 0; i < nin; ++i) {
                std::vector<int> shape;
                if (fmt.kind == PatchKind::Stacked2D) shape = {fmt.stack, fmt.size, fmt.size};
                else if (fmt.kind == PatchKind::TriPlanar) shape = {1, fmt.size, fmt.size};
                else shape = {1, fmt.size, fmt.size, fmt.size};
                Tensor t = Tensor::zeros(shape);
                for (int k = 0; k < t.size(); ++k)
                    t[k] = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0) * 2.0 - 1.0;
                batch[0].inputs.push_back(std::move(t));
            }
            batch[0].target_class = static_cast<int>(rng() % 3);
            return gradient_check(spec, params, batch, 1e-5, 20, seed);
        },
        py::arg("format"), py::arg("patch_size") = 12, py::arg("stack") = 3, py::arg("seed") = 42);
}
