// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "cmc/cmc_layer.hpp"
#include "cmc/conv.hpp"
#include "cmc/cost_model.hpp"
#include "cmc/experiment.hpp"
#include "cmc/metrics.hpp"
#include "cmc/tasks.hpp"

namespace py = pybind11;
using namespace cmc;

namespace {

using Arr = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor4<double> tensor_from_numpy(const Arr& a, const char* who) {
    if (a.ndim() == 3) {
        Tensor4<double> t(1, static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                          static_cast<int>(a.shape(2)));
        std::copy_n(a.data(), t.size(), t.data.begin());
        return t;
    }
    if (a.ndim() == 4) {
        Tensor4<double> t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                          static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3)));
        std::copy_n(a.data(), t.size(), t.data.begin());
        return t;
    }
    throw ShapeError(std::string(who) + ": expected a (C,H,W) or (B,C,H,W) array");
}

py::array_t<double> tensor_to_numpy(const Tensor4<double>& t, bool squeeze_batch) {
    if (squeeze_batch && t.batch == 1) {
        py::array_t<double> a({t.channels, t.height, t.width});
        std::copy_n(t.data.data(), t.size(), a.mutable_data());
        return a;
    }
    py::array_t<double> a({t.batch, t.channels, t.height, t.width});
    std::copy_n(t.data.data(), t.size(), a.mutable_data());
    return a;
}

Kernel<double> kernel_from_numpy(const Arr& a) {
    if (a.ndim() != 4 || a.shape(2) != a.shape(3))
        throw ShapeError("kernel: expected a (k_out,k_in,n,n) array");
    Kernel<double> k(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                     static_cast<int>(a.shape(2)));
    std::copy_n(a.data(), k.size(), k.data.begin());
    return k;
}

py::array_t<double> kernel_to_numpy(const Kernel<double>& k) {
    py::array_t<double> a({k.k_out, k.k_in, k.n, k.n});
    std::copy_n(k.data.data(), k.size(), a.mutable_data());
    return a;
}

ConvBackend backend_from_name(const std::string& name) {
    if (name == "naive") return ConvBackend::naive;
    if (name == "im2col") return ConvBackend::im2col;
    throw Error("unknown conv backend '" + name + "'");
}

py::dict bench_report_to_dict(const BenchReport& r) {
    py::dict d;
    d["label"] = r.label;
    d["trainable_params"] = r.trainable_params;
    d["kernel_params"] = r.kernel_params;
    d["trainable_ratio"] = r.trainable_ratio;
    d["kernel_ratio"] = r.kernel_ratio;
    d["conv_gmac"] = r.conv_gmac;
    d["conv_macs_ratio"] = r.conv_macs_ratio;
    d["estimation_macs"] = r.estimation_macs;
    d["workset_mb"] = r.workset_mb;
    d["median_ms"] = r.median_ms;
    return d;
}

LayerCostModel cost_model_from_args(int k_in, int k_out, int n, int height, int width,
                                    const std::string& strategy, int type1_kernel,
                                    int type2_extra, int cmc_t, int cmc_base_t) {
    LayerCostModel m;
    m.k_in = k_in;
    m.k_out = k_out;
    m.n = n;
    m.height = height;
    m.width = width;
    m.type1_kernel = type1_kernel;
    m.type2_extra = type2_extra;
    m.cmc_t = cmc_t;
    m.cmc_base_t = cmc_base_t;
    if (strategy == "plain")
        m.strategy = Strategy::plain;
    else if (strategy == "type1")
        m.strategy = Strategy::type1;
    else if (strategy == "type2")
        m.strategy = Strategy::type2;
    else if (strategy == "cmc")
        m.strategy = Strategy::cmc;
    else
        throw Error("unknown strategy '" + strategy + "'");
    return m;
}

Degradation degradation_from_kwargs(const std::string& kind, const py::kwargs& kw) {
    nlohmann::json j;
    j["kind"] = kind;
    for (const auto& item : kw) {
        const std::string key = py::cast<std::string>(item.first);
        j[key] = py::cast<double>(item.second);
    }
    // reuse the config-schema validation
    nlohmann::json cfg;
    cfg["tasks"] = nlohmann::json::array();
    cfg["tasks"].push_back({{"degradation", j}});
    return parse_config(cfg).tasks[0].degradation;
}

py::dict report_to_dict(const SequenceReport& rep) {
    py::dict out;
    py::list matrix;
    for (const ReportEntry& e : rep.matrix) {
        py::dict d;
        d["task_id"] = e.task_id;
        d["after_task"] = e.after_task;
        d["psnr"] = e.psnr;
        d["ssim"] = e.ssim;
        matrix.append(d);
    }
    out["matrix"] = matrix;
    py::list tasks;
    for (const TaskResult& t : rep.tasks) {
        py::dict d;
        d["task_id"] = t.task_id;
        d["name"] = t.name;
        d["identity_psnr"] = t.identity_psnr;
        d["final_psnr"] = t.final_psnr();
        d["first_epoch_psnr"] = t.first_epoch_psnr();
        py::list epochs;
        for (const EpochMetrics& e : t.epochs) {
            py::dict ed;
            ed["epoch"] = e.epoch;
            ed["lr"] = e.lr;
            ed["loss"] = e.mean_loss;
            ed["eval_psnr"] = e.eval_psnr;
            ed["eval_ssim"] = e.eval_ssim;
            epochs.append(ed);
        }
        d["epochs"] = epochs;
        tasks.append(d);
    }
    out["tasks"] = tasks;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Continual-memory convolution: estimated kernels over a masked shared "
              "weight matrix, with the sequential training harness.";

    py::register_exception<CapacityExhausted>(m, "CapacityExhaustedError", PyExc_RuntimeError);
    py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def(
        "conv2d_forward",
        [](const Arr& input, const Arr& kernel, py::object bias, const std::string& backend) {
            const Tensor4<double> x = tensor_from_numpy(input, "conv2d_forward");
            const Kernel<double> k = kernel_from_numpy(kernel);
            std::vector<double> b;
            if (!bias.is_none()) b = py::cast<std::vector<double>>(bias);
            return tensor_to_numpy(
                conv2d_forward<double>(x, k, b, backend_from_name(backend)),
                input.ndim() == 3);
        },
        py::arg("input"), py::arg("kernel"), py::arg("bias") = py::none(),
        py::arg("backend") = "im2col",
        "Stride-1 same-padded cross-correlation; input (C,H,W) or (B,C,H,W).");

    m.def(
        "conv2d_backward",
        [](const Arr& input, const Arr& kernel, const Arr& grad_output,
           const std::string& backend) {
            const Tensor4<double> x = tensor_from_numpy(input, "conv2d_backward");
            const Kernel<double> k = kernel_from_numpy(kernel);
            const Tensor4<double> g = tensor_from_numpy(grad_output, "conv2d_backward");
            const ConvGrads<double> grads =
                conv2d_backward(x, k, g, true, backend_from_name(backend));
            return py::make_tuple(tensor_to_numpy(grads.input, input.ndim() == 3),
                                  kernel_to_numpy(grads.kernel), grads.bias);
        },
        py::arg("input"), py::arg("kernel"), py::arg("grad_output"),
        py::arg("backend") = "im2col",
        "Returns (grad_input, grad_kernel, grad_bias), the exact adjoints of the forward.");

    m.def(
        "psnr",
        [](const Arr& a, const Arr& b) {
            return psnr(tensor_from_numpy(a, "psnr"), tensor_from_numpy(b, "psnr"));
        },
        py::arg("a"), py::arg("b"), "PSNR in dB on [0,1] images (100 dB cap).");
    m.def(
        "ssim",
        [](const Arr& a, const Arr& b) {
            return ssim(tensor_from_numpy(a, "ssim"), tensor_from_numpy(b, "ssim"));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "degrade",
        [](const Arr& clean, const std::string& kind, std::uint64_t seed, bool eval_mode,
           const py::kwargs& kw) {
            return tensor_to_numpy(degrade(tensor_from_numpy(clean, "degrade"),
                                           degradation_from_kwargs(kind, kw), seed, eval_mode),
                                   clean.ndim() == 3);
        },
        py::arg("clean"), py::arg("kind"), py::arg("seed") = 0, py::arg("eval_mode") = false,
        "Apply gaussian_noise / gaussian_blur / block_artifact / rain_streaks; "
        "extra keyword arguments set the generator parameters.");

    m.def(
        "make_clean_images",
        [](std::uint64_t seed, int image_size, int count) {
            CleanImageSource<double> src(seed, image_size, count);
            py::list out;
            for (int i = 0; i < count; ++i) out.append(tensor_to_numpy(src.image(i), true));
            return out;
        },
        py::arg("seed"), py::arg("image_size") = 64, py::arg("count") = 8,
        "Deterministic procedural clean images in [0,1], shaped (3,H,W).");

    py::class_<CmcLayer<double>>(m, "CmcLayer",
                                 "A convolution layer whose kernel is a task vector times a "
                                 "masked shared memory matrix.")
        .def(py::init<std::string, int, int, int, int>(), py::arg("name"), py::arg("k_in"),
             py::arg("k_out"), py::arg("kernel_size"), py::arg("capacity"))
        .def_property_readonly("name", &CmcLayer<double>::name)
        .def_property_readonly("capacity", &CmcLayer<double>::capacity)
        .def_property_readonly("kernel_params", &CmcLayer<double>::kernel_params)
        .def_property_readonly("frozen_through", &CmcLayer<double>::frozen_through)
        .def_property_readonly("free_count", &CmcLayer<double>::free_count)
        .def_property_readonly("trainable_params", &CmcLayer<double>::trainable_params)
        .def(
            "allocate_mask",
            [](CmcLayer<double>& self, int task_id, double fraction, std::uint64_t seed) {
                return self.allocate_mask(task_id, fraction, seed).bits.popcount();
            },
            py::arg("task_id"), py::arg("fraction"), py::arg("seed"),
            "Sample a disjoint random mask; returns the number of selected entries.")
        .def("init_task", &CmcLayer<double>::init_task, py::arg("task_id"),
             py::arg("knowledge_sharing"), py::arg("seed"))
        .def("freeze_task", &CmcLayer<double>::freeze_task, py::arg("task_id"))
        .def("expand_capacity", &CmcLayer<double>::expand_capacity, py::arg("extra_rows"))
        .def(
            "estimate_kernel",
            [](const CmcLayer<double>& self, int task_id) {
                return kernel_to_numpy(self.estimate_kernel(task_id));
            },
            py::arg("task_id"))
        .def(
            "forward",
            [](const CmcLayer<double>& self, const Arr& input, int task_id) {
                return tensor_to_numpy(self.forward(tensor_from_numpy(input, "forward"), task_id),
                                       input.ndim() == 3);
            },
            py::arg("input"), py::arg("task_id"))
        .def("mask_popcount",
             [](const CmcLayer<double>& self, int task_id) {
                 return self.mask(task_id).bits.popcount();
             })
        .def("task_vector", [](const CmcLayer<double>& self, int task_id) {
            return self.task_vector(task_id).values;
        });

    m.def(
        "model_cost",
        [](int k_in, int k_out, int n, int height, int width, const std::string& strategy,
           int type1_kernel, int type2_extra, int cmc_t, int cmc_base_t) {
            return bench_report_to_dict(model_cost(cost_model_from_args(
                k_in, k_out, n, height, width, strategy, type1_kernel, type2_extra, cmc_t,
                cmc_base_t)));
        },
        py::arg("k_in") = 64, py::arg("k_out") = 64, py::arg("n") = 3, py::arg("height") = 1000,
        py::arg("width") = 1000, py::arg("strategy") = "plain", py::arg("type1_kernel") = 6,
        py::arg("type2_extra") = 1, py::arg("cmc_t") = 5, py::arg("cmc_base_t") = 5,
        "Closed-form parameter/MAC/working-set accounting for one layer.");

    m.def(
        "bench_forward",
        [](int k_in, int k_out, int n, int height, int width, const std::string& strategy,
           int type1_kernel, int type2_extra, int cmc_t, int cmc_base_t, int repeats,
           int spatial) {
            return bench_report_to_dict(
                bench_forward(cost_model_from_args(k_in, k_out, n, height, width, strategy,
                                                   type1_kernel, type2_extra, cmc_t, cmc_base_t),
                              repeats, spatial));
        },
        py::arg("k_in") = 64, py::arg("k_out") = 64, py::arg("n") = 3, py::arg("height") = 1000,
        py::arg("width") = 1000, py::arg("strategy") = "plain", py::arg("type1_kernel") = 6,
        py::arg("type2_extra") = 1, py::arg("cmc_t") = 5, py::arg("cmc_base_t") = 5,
        py::arg("repeats") = 9, py::arg("spatial") = 64);

    m.def(
        "run_experiment",
        [](const std::string& config_json, py::object output_dir, py::object seed,
           bool no_sharing, const std::string& resume, int stop_after_task) {
            const ExperimentConfig cfg = parse_config(nlohmann::json::parse(config_json));
            RunOverrides ov;
            if (!output_dir.is_none()) ov.output_dir = py::cast<std::string>(output_dir);
            if (!seed.is_none()) ov.seed = py::cast<std::uint64_t>(seed);
            ov.flip_sharing = no_sharing;
            ov.resume_archive = resume;
            ov.stop_after_task = stop_after_task;
            RunSummary s;
            {
                py::gil_scoped_release release;
                s = run_experiment(cfg, ov);
            }
            py::dict out = report_to_dict(s.report);
            out["output_dir"] = s.output_dir;
            out["archive_path"] = s.archive_path;
            out["report_csv_path"] = s.report_csv_path;
            out["config_hash"] = s.config_hash;
            return out;
        },
        py::arg("config_json"), py::arg("output_dir") = py::none(), py::arg("seed") = py::none(),
        py::arg("no_sharing") = false, py::arg("resume") = std::string(),
        py::arg("stop_after_task") = 0,
        "Run a full sequential experiment from a JSON config string; returns the "
        "evaluation matrix and per-task traces.");
}
