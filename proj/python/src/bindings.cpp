#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gatedseg/config.hpp"
#include "gatedseg/error.hpp"
#include "gatedseg/eval.hpp"
#include "gatedseg/gating.hpp"
#include "gatedseg/pipeline.hpp"
#include "gatedseg/regions.hpp"
#include "gatedseg/retrieval.hpp"
#include "gatedseg/stats.hpp"
#include "gatedseg/store.hpp"
#include "gatedseg/synth.hpp"
#include "gatedseg/tensor.hpp"
#include "gatedseg/uncertainty.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace gatedseg;

namespace {

template <typename T>
using CArray = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Array<T> to_array(const CArray<T>& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Array<T>(std::move(shape), std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> to_numpy(const std::vector<T>& data, const Shape& shape) {
    std::vector<py::ssize_t> dims(shape.begin(), shape.end());
    py::array_t<T> out(dims);
    std::copy(data.begin(), data.end(), out.mutable_data());
    return out;
}

py::array_t<float> map_to_numpy(const UncertaintyMap& m) { return to_numpy(m.values, {m.height, m.width}); }

py::array_t<float> probs_to_numpy(const ProbMap& p) { return to_numpy(p.values, {p.classes, p.height, p.width}); }

UncertaintyMap map_from_numpy(const CArray<float>& a, UncertaintyKind kind) {
    if (a.ndim() != 2) throw ArgumentError("expected a 2-d [H, W] map");
    UncertaintyMap m;
    m.kind = kind;
    m.height = static_cast<std::size_t>(a.shape(0));
    m.width = static_cast<std::size_t>(a.shape(1));
    m.values.assign(a.data(), a.data() + a.size());
    return m;
}

py::object json_loads(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

PipelineConfig config_from(const std::string& json_text, const std::vector<std::string>& overrides) {
    return load_config(json_text, overrides);
}

py::dict region_dict(const RegionProposal& r) {
    py::dict d;
    d["region_id"] = r.region_id;
    d["bbox"] = py::make_tuple(r.bbox.x0, r.bbox.y0, r.bbox.x1, r.bbox.y1);
    d["area"] = r.area;
    d["score"] = r.score;
    d["mask"] = to_numpy(r.mask, {static_cast<std::size_t>(r.bbox.height()), static_cast<std::size_t>(r.bbox.width())});
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Uncertainty-gated retrieval fusion for segmentation (C++ core)";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<CorruptionError>(m, "CorruptionError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());

    // ---- tensors ----
    m.def("read_npy", [](const fs::path& path) -> py::object {
        return std::visit(
            [](const auto& a) -> py::object { return to_numpy(a.data, a.shape); }, read_tensor(path));
    }, py::arg("path"));
    m.def("write_npy", [](const fs::path& path, py::array a) {
        const auto dt = a.dtype();
        if (dt.is(py::dtype::of<float>())) write_tensor(path, to_array<float>(a));
        else if (dt.is(py::dtype::of<std::int32_t>())) write_tensor(path, to_array<std::int32_t>(a));
        else if (dt.is(py::dtype::of<std::uint8_t>())) write_tensor(path, to_array<std::uint8_t>(a));
        else throw ArgumentError("write_npy supports float32, int32 and uint8");
    }, py::arg("path"), py::arg("array"));
    m.def("load_manifest", [](const fs::path& path) { return json_loads(manifest_to_json(load_manifest(path))); },
          py::arg("path"));
    m.def("validate_dataset", [](const fs::path& path) { return validate_dataset(load_manifest(path)); },
          py::arg("manifest_path"), "Loads and checks every bundle; returns the scene count.");

    // ---- uncertainty ----
    m.def("uncertainty", [](const CArray<float>& logits) {
        const auto set = compute_uncertainty(to_array<float>(logits));
        py::dict d;
        d["mean"] = probs_to_numpy(set.mean);
        d["entropy"] = map_to_numpy(set.entropy);
        d["mutual_information"] = map_to_numpy(set.mutual_information);
        d["epkl"] = map_to_numpy(set.epkl);
        return d;
    }, py::arg("logits"), "Maps from [K, C, H, W] pre-softmax ensemble logits.");

    // ---- regions ----
    m.def("connected_components", [](const CArray<std::uint8_t>& mask) {
        if (mask.ndim() != 2) throw ArgumentError("expected a 2-d mask");
        BinaryMask bm(static_cast<std::size_t>(mask.shape(0)), static_cast<std::size_t>(mask.shape(1)));
        for (py::ssize_t i = 0; i < mask.size(); ++i) bm.bits[static_cast<std::size_t>(i)] = mask.data()[i] ? 1 : 0;
        const auto cc = connected_components(bm);
        return py::make_tuple(to_numpy(cc.ids, {cc.height, cc.width}), cc.count);
    }, py::arg("mask"));
    m.def("extract_regions", [](const CArray<float>& map, double q, std::size_t min_area, const std::string& scene_id) {
        py::list out;
        for (const auto& r : extract_regions(map_from_numpy(map, UncertaintyKind::mutual_information), q, min_area, scene_id))
            out.append(region_dict(r));
        return out;
    }, py::arg("uncertainty"), py::arg("q") = kDefaultPercentile, py::arg("min_area") = kDefaultMinArea,
       py::arg("scene_id") = "scene");

    // ---- statistics and scoring ----
    m.def("percentile", [](const std::vector<double>& v, double q) { return percentile(v, q); }, py::arg("values"),
          py::arg("q"));
    m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) {
        const auto c = pearson(x, y);
        return py::make_tuple(c.r, c.p);
    }, py::arg("x"), py::arg("y"), "Returns (r, two-sided p).");
    m.def("region_iou", [](const CArray<std::int32_t>& pred, const CArray<std::int32_t>& gt, std::size_t classes,
                           std::int32_t void_label) {
        if (pred.size() != gt.size()) throw ArgumentError("pred and gt sizes differ");
        return region_iou(std::span(pred.data(), static_cast<std::size_t>(pred.size())),
                          std::span(gt.data(), static_cast<std::size_t>(gt.size())), classes, void_label);
    }, py::arg("pred"), py::arg("gt"), py::arg("class_count"), py::arg("void_label") = kVoidLabel);
    m.def("stratify", [](const std::vector<double>& mi) {
        std::vector<GateMetrics> pop(mi.size());
        for (std::size_t i = 0; i < mi.size(); ++i) pop[i].mean_mi = mi[i];
        const auto s = stratify_by_mi(pop);
        return py::make_tuple(s.cuts, s.quartile, s.counts);
    }, py::arg("mean_mi"), "Returns (cuts, quartile per entry, counts).");
    m.def("cosine_similarity", [](const std::vector<float>& a, const std::vector<float>& b) {
        return cosine_similarity(a, b);
    }, py::arg("a"), py::arg("b"));

    // ---- pipeline stages; each takes a JSON config text plus key=value overrides ----
    m.def("effective_config", [](const std::string& cfg, const std::vector<std::string>& overrides) {
        return json_loads(config_to_json(config_from(cfg, overrides)));
    }, py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{});
    m.def("synth", [](const std::string& cfg, const std::vector<std::string>& overrides, int jobs) {
        const auto c = config_from(cfg, overrides);
        py::gil_scoped_release release;
        return generate_dataset(c.synth, c.paths.data_dir, jobs).scenes.size();
    }, py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("jobs") = 1);
    m.def("build_bank", [](const std::string& cfg, const std::vector<std::string>& overrides, int jobs) {
        const auto c = config_from(cfg, overrides);
        py::gil_scoped_release release;
        const auto manifest = load_manifest(c.paths.manifest_path());
        const auto bank = build_bank_from_manifest(manifest, c, jobs);
        save_bank(bank, c.paths.bank_dir);
        return bank.entries.size();
    }, py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("jobs") = 1);
    m.def("run", [](const std::string& cfg, const std::vector<std::string>& overrides, int jobs) {
        const auto c = config_from(cfg, overrides);
        std::string records;
        {
            py::gil_scoped_release release;
            const auto manifest = load_manifest(c.paths.manifest_path());
            const auto result = run_pipeline(manifest, load_bank(c.paths.bank_dir), c, jobs);
            write_run(result, c.paths.out_dir);
            records = run_records_to_json(result.records);
        }
        return json_loads(records);
    }, py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("jobs") = 1);
    m.def("evaluate", [](const std::string& cfg, const std::vector<std::string>& overrides) {
        const auto c = config_from(cfg, overrides);
        std::string report;
        {
            py::gil_scoped_release release;
            const auto rep = evaluate(load_run_records(c.paths.out_dir));
            emit_report(rep, c.paths.out_dir);
            report = report_to_json(rep);
        }
        return json_loads(report);
    }, py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{});
}
