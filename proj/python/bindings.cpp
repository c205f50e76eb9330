#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "objclear/annotator.hpp"
#include "objclear/cli.hpp"
#include "objclear/corpus.hpp"
#include "objclear/error.hpp"
#include "objclear/fusion.hpp"
#include "objclear/imaging.hpp"
#include "objclear/metrics.hpp"
#include "objclear/pipeline.hpp"
#include "objclear/synthesizer.hpp"
#include "objclear/toynet.hpp"

namespace py = pybind11;
using namespace objclear;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <class T>
T from_numpy(const Array& a, int channels) {
    if (channels == 1 && a.ndim() != 2) throw InvalidArgument("expected an (H, W) array");
    if (channels > 1 && (a.ndim() != 3 || a.shape(2) != channels))
        throw InvalidArgument("expected an (H, W, " + std::to_string(channels) + ") array");
    T out(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), out.values().begin());
    return out;
}

Image to_image(const Array& a) { return from_numpy<Image>(a, 3); }
Mask to_mask(const Array& a) { return from_numpy<Mask>(a, 1); }

Array to_numpy(const Raster& r) {
    std::vector<py::ssize_t> shape{r.height(), r.width()};
    if (r.channels() > 1) shape.push_back(r.channels());
    Array out(shape);
    std::copy(r.values().begin(), r.values().end(), out.mutable_data());
    return out;
}

py::dict asset_dict(const ForegroundAsset& a) {
    py::dict d;
    d["color"] = to_numpy(a.color);
    d["alpha"] = to_numpy(a.alpha);
    d["object_mask"] = to_numpy(a.object_mask);
    d["effect_mask"] = to_numpy(a.effect_mask);
    d["direction_bin"] = a.direction_bin;
    d["origin"] = py::make_tuple(a.origin_row, a.origin_col);
    return d;
}

ForegroundAsset asset_from(const py::dict& d) {
    ForegroundAsset a;
    a.color = to_image(d["color"].cast<Array>());
    a.alpha = AlphaMap(from_numpy<Image>(d["alpha"].cast<Array>(), 3));
    a.object_mask = to_mask(d["object_mask"].cast<Array>());
    a.effect_mask = to_mask(d["effect_mask"].cast<Array>());
    a.direction_bin = d["direction_bin"].cast<int>();
    return a;
}

}  // namespace

PYBIND11_MODULE(_objclear, m) {
    m.doc() = "Counterfactual annotation, compositing, toy object removal and metrics";

    static py::exception<Error> base(m, "ObjclearError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const InvalidArgument& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const Error& e) {
            PyErr_SetString(base.ptr(), (e.category() + ": " + e.what()).c_str());
        }
    });

    m.def("gaussian_blur", [](const Array& a, double sigma) {
        Raster r(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1);
        std::copy(a.data(), a.data() + a.size(), r.values().begin());
        return to_numpy(gaussian_blur(r, sigma));
    }, py::arg("img"), py::arg("sigma"));

    m.def("morphology", [](const Array& mask, int radius, const std::string& mode) {
        if (mode != "dilate" && mode != "erode") throw InvalidArgument("mode must be 'dilate' or 'erode'");
        return to_numpy(morphology(to_mask(mask), radius, mode == "dilate" ? MorphMode::Dilate : MorphMode::Erode));
    }, py::arg("mask"), py::arg("radius"), py::arg("mode"));

    m.def("annotate", [](const Array& input, const Array& gt, const Array& obj, double threshold, double epsilon) {
        const CounterfactualPair pair{to_image(input), to_image(gt), to_mask(obj)};
        const AnnotationSet a = annotate(pair, {threshold, epsilon, 1});
        py::dict d;
        d["object_mask"] = to_numpy(a.object_mask);
        d["effect_mask"] = to_numpy(a.effect_mask);
        d["object_effect_mask"] = to_numpy(a.object_effect_mask);
        return d;
    }, py::arg("input"), py::arg("ground_truth"), py::arg("object_mask"), py::arg("threshold") = 0.05,
       py::arg("epsilon") = 1e-6);

    m.def("extract_alpha", [](const Array& input, const Array& gt, const Array& obj, double threshold, double epsilon,
                              std::optional<int> direction_bin) {
        const CounterfactualPair pair{to_image(input), to_image(gt), to_mask(obj)};
        const AnnotationSet a = annotate(pair, {threshold, epsilon, 1});
        return asset_dict(extract_alpha(pair, a, epsilon, direction_bin));
    }, py::arg("input"), py::arg("ground_truth"), py::arg("object_mask"), py::arg("threshold") = 0.05,
       py::arg("epsilon") = 1e-6, py::arg("direction_bin") = py::none());

    m.def("estimate_shadow_direction", [](const Array& obj, const Array& eff) {
        return estimate_shadow_direction(to_mask(obj), to_mask(eff));
    });

    m.def("compose", [](const Array& background, const py::dict& asset, int row, int col, double scale) {
        const CompositeSample s = compose(BackgroundScene::from_image(to_image(background)), asset_from(asset), row, col, scale);
        py::dict d;
        d["composite"] = to_numpy(s.composite);
        d["object_mask"] = to_numpy(s.object_mask);
        d["object_effect_mask"] = to_numpy(s.object_effect_mask);
        return d;
    }, py::arg("background"), py::arg("asset"), py::arg("row"), py::arg("col"), py::arg("scale") = 1.0);

    m.def("attention_to_mask", [](const Array& slice, int out_h, int out_w, double blur_sigma, double floor) {
        return to_numpy(attention_to_mask(to_mask(slice), out_h, out_w, {blur_sigma, floor}));
    }, py::arg("slice"), py::arg("out_h"), py::arg("out_w"), py::arg("blur_sigma") = -1.0, py::arg("floor") = 0.02);

    m.def("fuse", [](const Array& original, const Array& generated, const Array& soft) {
        return to_numpy(fuse(to_image(original), to_image(generated), to_mask(soft)));
    }, py::arg("original"), py::arg("generated"), py::arg("soft_mask"));

    m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_image(a), to_image(b)); });
    m.def("psnr_bg", [](const Array& a, const Array& b, const Array& fg) {
        return psnr_bg(to_image(a), to_image(b), to_mask(fg));
    });
    m.def("mask_metrics", [](const Array& pred, const Array& gt, double threshold) {
        const MaskScores s = mask_metrics(to_mask(pred), to_mask(gt), threshold);
        return py::make_tuple(s.recall, s.precision, s.iou);
    }, py::arg("pred"), py::arg("gt"), py::arg("threshold") = 0.5);

    m.def("render_scene", [](std::uint64_t seed, std::uint64_t index) {
        const ProceduralScene s = render_scene(seed, index);
        py::dict d;
        d["input"] = to_numpy(s.pair.input);
        d["ground_truth"] = to_numpy(s.pair.ground_truth);
        d["object_mask"] = to_numpy(s.pair.object_mask);
        d["effect_mask"] = to_numpy(s.effect_mask);
        d["object_effect_mask"] = to_numpy(s.object_effect_mask);
        d["direction_bin"] = s.direction_bin;
        return d;
    }, py::arg("seed"), py::arg("index") = 0);

    m.def("mask_loss", [](const Array& slice, const Array& fg) {
        const Mask s = to_mask(slice);
        if (s.height() != toynet::kGridSide || s.width() != toynet::kGridSide)
            throw InvalidArgument("attention slice must be 8x8");
        toynet::AttentionMap a;
        for (int p = 0; p < toynet::kPositions; ++p) {
            const double v = s.values()[static_cast<std::size_t>(p)];
            a.weights[static_cast<std::size_t>(p * toynet::kTokens + toynet::kTokens - 1)] = v;
        }
        const toynet::MaskLossResult r = toynet::mask_loss(a, to_mask(fg));
        return py::make_tuple(r.value, r.degenerate);
    }, py::arg("slice"), py::arg("object_effect_mask"));

    m.def("run_demo", [](std::uint64_t seed, int train_scenes, int test_scenes, int epochs, int workers) {
        DemoOptions o;
        o.seed = seed;
        o.train_scenes = train_scenes;
        o.test_scenes = test_scenes;
        o.train.epochs = epochs;
        o.workers = workers;
        DemoResult r;
        {
            py::gil_scoped_release release;
            r = run_demo(o);
        }
        return r.report.dump(2);
    }, py::arg("seed"), py::arg("train_scenes") = 256, py::arg("test_scenes") = 50, py::arg("epochs") = 40,
       py::arg("workers") = 1);

    m.def("cli", [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        return cli::run(args);
    }, py::arg("args"));
}
