#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "nnfdet/config.hpp"
#include "nnfdet/error.hpp"
#include "nnfdet/eval.hpp"
#include "nnfdet/model_io.hpp"
#include "nnfdet/synthlab.hpp"
#include "nnfdet/trainer.hpp"

namespace py = pybind11;
using namespace nnfdet;

namespace {

using ImageArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

RgbImage to_image(const ImageArray& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("image must be an (H, W, 3) uint8 array");
    RgbImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(img.pixels.data(), a.data(), img.pixels.size());
    return img;
}

ImageArray from_image(const RgbImage& img) {
    ImageArray out({img.height, img.width, 3});
    std::memcpy(out.mutable_data(), img.pixels.data(), img.pixels.size());
    return out;
}

py::array_t<double> boxes_array(const std::vector<Box>& boxes) {
    py::array_t<double> out({static_cast<py::ssize_t>(boxes.size()), py::ssize_t{4}});
    auto v = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto r = static_cast<py::ssize_t>(i);
        v(r, 0) = boxes[i].x;
        v(r, 1) = boxes[i].y;
        v(r, 2) = boxes[i].w;
        v(r, 3) = boxes[i].h;
    }
    return out;
}

std::vector<Box> to_boxes(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.size() == 0) return {};
    if (a.ndim() != 2 || a.shape(1) < 4) throw py::value_error("boxes must be an (N, 4) array");
    std::vector<Box> out;
    auto v = a.unchecked<2>();
    for (py::ssize_t i = 0; i < a.shape(0); ++i) out.push_back({v(i, 0), v(i, 1), v(i, 2), v(i, 3)});
    return out;
}

RunConfig run_config(const std::string& preset, const std::map<std::string, std::string>& settings, std::uint64_t seed,
                     int jobs) {
    RunConfig rc = preset_config(preset);
    for (const auto& [k, v] : settings) apply_setting(rc, k, v);
    rc.seed = seed;
    rc.jobs = jobs;
    return rc;
}

std::vector<LabeledImage> labeled(const std::vector<ImageArray>& images, const std::vector<py::array_t<double>>& boxes) {
    if (images.size() != boxes.size()) throw py::value_error("images and boxes differ in length");
    std::vector<LabeledImage> out;
    for (std::size_t i = 0; i < images.size(); ++i) out.push_back({std::to_string(i), to_image(images[i]), to_boxes(boxes[i])});
    return out;
}

} // namespace

PYBIND11_MODULE(_nnfdet, m) {
    m.doc() = "Boosted pedestrian detector on aggregated channel features";

    static py::handle error_type = py::exception<Error>(m, "Error").release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error_type, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
        }
    });

    m.def("preset_names", &preset_names);
    m.attr("FEATURE_KINDS") = py::make_tuple("LocalMean", "NeighborDiff", "SIDF", "SSF");

    m.def(
        "compute_channels",
        [](const ImageArray& image) {
            const ChannelStack cs = compute_channels(to_image(image));
            py::array_t<float> out({py::ssize_t{kNumChannels}, py::ssize_t{cs.height}, py::ssize_t{cs.width}});
            for (int c = 0; c < kNumChannels; ++c)
                std::memcpy(out.mutable_data(c), cs.planes[c].data.data(), cs.planes[c].data.size() * sizeof(float));
            return out;
        },
        py::arg("image"), "Channel planes [L, U, V, G, O1..O6] as a (10, H, W) float32 array.");

    m.def(
        "gen_scene",
        [](std::uint64_t seed, int width, int height, int n_targets) {
            SynthParams p;
            p.width = width;
            p.height = height;
            p.n_targets = n_targets;
            const SynthScene s = gen_scene(seed, p);
            return py::make_tuple(from_image(s.image), boxes_array(s.boxes));
        },
        py::arg("seed"), py::arg("width") = 192, py::arg("height") = 256, py::arg("n_targets") = 2,
        "Synthetic scene: (image, boxes) with boxes as (N, 4) x, y, w, h.");

    m.def(
        "iou", [](std::array<double, 4> a, std::array<double, 4> b) { return iou({a[0], a[1], a[2], a[3]}, {b[0], b[1], b[2], b[3]}); },
        py::arg("a"), py::arg("b"));

    m.def(
        "nms",
        [](const py::array_t<double>& boxes, const std::vector<double>& scores, double overlap) {
            const auto b = to_boxes(boxes);
            if (b.size() != scores.size()) throw py::value_error("boxes and scores differ in length");
            return nms_indices(b, scores, overlap);
        },
        py::arg("boxes"), py::arg("scores"), py::arg("overlap") = 0.65, "Indices kept by greedy suppression.");

    m.def(
        "evaluate",
        [](const std::vector<std::tuple<std::string, double, double, double, double, double>>& detections,
           const std::vector<std::tuple<std::string, double, double, double, double, bool>>& ground_truth,
           double min_height) {
            std::vector<ScoredDetection> dets;
            for (const auto& [id, x, y, w, h, s] : detections) dets.push_back({id, {x, y, w, h}, s});
            std::vector<GroundTruthBox> gts;
            for (const auto& [id, x, y, w, h, ign] : ground_truth) gts.push_back({id, {x, y, w, h}, ign});
            EvalOptions opt;
            opt.min_height = min_height;
            const EvalCurve c = roc(dets, gts, {}, opt);
            py::array_t<double> curve({static_cast<py::ssize_t>(c.points.size()), py::ssize_t{3}});
            auto v = curve.mutable_unchecked<2>();
            for (std::size_t i = 0; i < c.points.size(); ++i) {
                const auto r = static_cast<py::ssize_t>(i);
                v(r, 0) = c.points[i].threshold;
                v(r, 1) = c.points[i].fppi;
                v(r, 2) = c.points[i].miss_rate;
            }
            return py::make_tuple(c.lamr, curve);
        },
        py::arg("detections"), py::arg("ground_truth"), py::arg("min_height") = 0.0,
        "detections: (image, x, y, w, h, score); ground_truth: (image, x, y, w, h, ignore). Returns (lamr, curve) with "
        "curve rows (threshold, fppi, miss_rate).");

    py::class_<BoostedModel>(m, "Model")
        .def_static("load", [](const std::string& path) { return load_model(path); }, py::arg("path"))
        .def_static("from_json", &deserialize_model, py::arg("text"))
        .def("to_json", &serialize_model)
        .def("save", [](const BoostedModel& self, const std::string& path) { save_model(path, self); }, py::arg("path"))
        .def_property_readonly("n_trees", [](const BoostedModel& self) { return self.trees.size(); })
        .def_property_readonly("pool_size", [](const BoostedModel& self) { return self.pool.size(); })
        .def("selected_by_kind", [](const BoostedModel& self) { return selected_by_kind(self); },
             "Split nodes per feature kind.")
        .def(
            "detect",
            [](const BoostedModel& self, const ImageArray& image, double threshold, int stride, bool apply_nms, bool cascade,
               int jobs) {
                DetectParams p;
                p.threshold = threshold;
                p.stride_px = stride;
                p.apply_nms = apply_nms;
                p.jobs = jobs;
                const RgbImage img = to_image(image);
                std::vector<Detection> dets;
                {
                    py::gil_scoped_release release;
                    if (cascade) {
                        dets = detect(self, img, p);
                    } else {
                        BoostedModel open = self;
                        open.disable_cascade();
                        dets = detect(open, img, p);
                    }
                }
                py::array_t<double> out({static_cast<py::ssize_t>(dets.size()), py::ssize_t{5}});
                auto v = out.mutable_unchecked<2>();
                for (std::size_t i = 0; i < dets.size(); ++i) {
                    const auto r = static_cast<py::ssize_t>(i);
                    v(r, 0) = dets[i].box.x;
                    v(r, 1) = dets[i].box.y;
                    v(r, 2) = dets[i].box.w;
                    v(r, 3) = dets[i].box.h;
                    v(r, 4) = dets[i].score;
                }
                return out;
            },
            py::arg("image"), py::arg("threshold") = 0.0, py::arg("stride") = 4, py::arg("nms") = true,
            py::arg("cascade") = true, py::arg("jobs") = 1, "Detections as an (N, 5) array of x, y, w, h, score.");

    m.def(
        "train",
        [](const std::vector<ImageArray>& images, const std::vector<py::array_t<double>>& boxes, const std::string& preset,
           const std::map<std::string, std::string>& settings, std::uint64_t seed, int jobs) {
            const RunConfig rc = run_config(preset, settings, seed, jobs);
            const auto data = labeled(images, boxes);
            py::gil_scoped_release release;
            return train_with_mining(data, data, make_setup(rc), effective_train_config(rc)).model;
        },
        py::arg("images"), py::arg("boxes"), py::arg("preset") = "nnnf-l2",
        py::arg("settings") = std::map<std::string, std::string>{}, py::arg("seed") = 1, py::arg("jobs") = 1,
        "Trains with hard-negative mining; the same images provide positives and negatives. settings uses the "
        "config-file keys, e.g. {'train.rounds': '8,32'}.");
}
