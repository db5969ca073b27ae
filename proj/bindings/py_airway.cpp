#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "airway/gnn.hpp"
#include "airway/graph.hpp"
#include "airway/losses.hpp"
#include "airway/metrics.hpp"
#include "airway/morphology.hpp"
#include "airway/skeleton.hpp"
#include "airway/synth.hpp"
#include "airway/volume.hpp"

namespace py = pybind11;
using namespace airway;

namespace {

// Volumes cross the boundary as float64 arrays of shape (nz, ny, nx): the C-order
// last axis matches the x-fastest memory layout.
py::array_t<double> volume_to_numpy(const Volume& v) {
    py::array_t<double> arr({v.nz, v.ny, v.nx});
    std::copy(v.data.begin(), v.data.end(), arr.mutable_data());
    return arr;
}

Volume numpy_to_volume(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 3) throw std::invalid_argument("expected a 3-d array (z, y, x)");
    Volume v(static_cast<int>(arr.shape(2)), static_cast<int>(arr.shape(1)),
             static_cast<int>(arr.shape(0)));
    std::copy(arr.data(), arr.data() + v.size(), v.data.begin());
    return v;
}

// Feature volumes are (nz, ny, nx, channels) float32.
py::array_t<float> feats_to_numpy(const FeatureVolume& f) {
    py::array_t<float> arr({f.nz, f.ny, f.nx, f.channels});
    std::copy(f.data.begin(), f.data.end(), arr.mutable_data());
    return arr;
}

FeatureVolume numpy_to_feats(
    const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 4) throw std::invalid_argument("expected a 4-d array (z, y, x, c)");
    FeatureVolume f(static_cast<int>(arr.shape(2)), static_cast<int>(arr.shape(1)),
                    static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(3)));
    std::copy(arr.data(), arr.data() + f.data.size(), f.data.begin());
    return f;
}

py::array_t<double> matrix_to_numpy(const gnn::Matrix& m) {
    py::array_t<double> arr({m.rows, m.cols});
    std::copy(m.d.begin(), m.d.end(), arr.mutable_data());
    return arr;
}

std::vector<std::array<double, 3>> numpy_to_chain(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2 || arr.shape(1) != 3)
        throw std::invalid_argument("expected an (n, 3) array of (x, y, z) coordinates");
    std::vector<std::array<double, 3>> chain(arr.shape(0));
    for (py::ssize_t i = 0; i < arr.shape(0); ++i)
        chain[i] = {arr.at(i, 0), arr.at(i, 1), arr.at(i, 2)};
    return chain;
}

std::vector<VoxelCoord> numpy_to_voxels(
    const py::array_t<int, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2 || arr.shape(1) != 3)
        throw std::invalid_argument("expected an (n, 3) array of integer voxels");
    std::vector<VoxelCoord> chain(arr.shape(0));
    for (py::ssize_t i = 0; i < arr.shape(0); ++i)
        chain[i] = {arr.at(i, 0), arr.at(i, 1), arr.at(i, 2)};
    return chain;
}

py::dict segment_set_to_dict(const SegmentSet& set) {
    py::list segments, junctions, adjacency;
    for (const auto& chain : set.segments) {
        py::array_t<int> arr({static_cast<py::ssize_t>(chain.size()), py::ssize_t(3)});
        for (std::size_t i = 0; i < chain.size(); ++i)
            for (int a = 0; a < 3; ++a) arr.mutable_at(i, a) = chain[i][a];
        segments.append(arr);
    }
    for (const auto& cluster : set.junctions) {
        py::array_t<int> arr({static_cast<py::ssize_t>(cluster.size()), py::ssize_t(3)});
        for (std::size_t i = 0; i < cluster.size(); ++i)
            for (int a = 0; a < 3; ++a) arr.mutable_at(i, a) = cluster[i][a];
        junctions.append(arr);
    }
    for (auto [a, b] : set.adjacency) adjacency.append(py::make_tuple(a, b));
    py::dict out;
    out["segments"] = segments;
    out["junctions"] = junctions;
    out["adjacency"] = adjacency;
    return out;
}

SegmentSet dict_to_segment_set(const py::dict& d) {
    SegmentSet set;
    for (const auto& item : d["segments"].cast<py::list>())
        set.segments.push_back(numpy_to_voxels(item.cast<py::array_t<int>>()));
    if (d.contains("junctions"))
        for (const auto& item : d["junctions"].cast<py::list>())
            set.junctions.push_back(numpy_to_voxels(item.cast<py::array_t<int>>()));
    if (d.contains("adjacency"))
        for (const auto& item : d["adjacency"].cast<py::list>())
            set.adjacency.push_back(item.cast<std::pair<int, int>>());
    return set;
}

gnn::TrainConfig dict_to_config(const py::dict& d) {
    gnn::TrainConfig cfg;
    for (const auto& item : d) {
        std::string key = item.first.cast<std::string>();
        if (key == "lr") cfg.lr = item.second.cast<double>();
        else if (key == "epochs") cfg.epochs = item.second.cast<int>();
        else if (key == "batch_size") cfg.batch_size = item.second.cast<int>();
        else if (key == "dropedge_p") cfg.dropedge_p = item.second.cast<double>();
        else if (key == "alpha_ncr") cfg.alpha_ncr = item.second.cast<double>();
        else if (key == "seed") cfg.seed = item.second.cast<std::uint64_t>();
        else throw std::invalid_argument("unknown config key '" + key + "'");
    }
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_airway, m) {
    m.doc() = "Airway tree analysis: volume morphology, hard-region segmentation "
              "losses, skeleton graphs and a point-voxel graph network";

    // ---- graph type ------------------------------------------------------------
    py::class_<AirwayGraph>(m, "Graph")
        .def(py::init<>())
        .def_property_readonly("n_nodes",
                               [](const AirwayGraph& g) { return g.nodes.size(); })
        .def_property_readonly("edges", [](const AirwayGraph& g) { return g.edges; })
        .def("labels",
             [](const AirwayGraph& g) {
                 py::list out;
                 for (const auto& n : g.nodes)
                     out.append(n.label ? py::cast(*n.label) : py::none());
                 return out;
             })
        .def("point_features",
             [](const AirwayGraph& g, int node) { return g.nodes.at(node).point_feat; })
        .def("voxel_features",
             [](const AirwayGraph& g, int node) { return g.nodes.at(node).voxel_feat; })
        .def("chain",
             [](const AirwayGraph& g, int node) {
                 const auto& chain = g.nodes.at(node).chain;
                 py::array_t<double> arr({static_cast<py::ssize_t>(chain.size()), py::ssize_t(3)});
                 for (std::size_t i = 0; i < chain.size(); ++i)
                     for (int a = 0; a < 3; ++a) arr.mutable_at(i, a) = chain[i][a];
                 return arr;
             })
        .def("to_json", &graph_to_json)
        .def_static("from_json", &graph_from_json);
    m.def("save_graph", &save_graph);
    m.def("load_graph", &load_graph);

    // ---- volume io ------------------------------------------------------------
    m.def("save_volume",
          [](const py::array_t<double>& vol, const std::filesystem::path& path,
             const std::string& dtype) {
              save_volume(numpy_to_volume(vol), path,
                          dtype == "u8" ? RawDtype::u8 : RawDtype::f32);
          },
          py::arg("volume"), py::arg("path"), py::arg("dtype") = "f32");
    m.def("load_volume",
          [](const std::filesystem::path& path) { return volume_to_numpy(load_volume(path)); });
    m.def("save_feature_volume", [](const py::array_t<float>& f,
                                    const std::filesystem::path& path) {
        save_feature_volume(numpy_to_feats(f), path);
    });
    m.def("load_feature_volume", [](const std::filesystem::path& path) {
        return feats_to_numpy(load_feature_volume(path));
    });

    // ---- morphology -------------------------------------------------------------
    m.def("otsu_threshold", [](const py::array_t<double>& vol) {
        OtsuResult res = otsu_threshold(numpy_to_volume(vol));
        return py::make_tuple(res.threshold, volume_to_numpy(res.mask));
    });
    m.def("connected_components",
          [](const py::array_t<double>& mask, int connectivity) {
              Volume v = numpy_to_volume(mask);
              Components comp = connected_components(v, connectivity);
              py::array_t<std::int32_t> labels({v.nz, v.ny, v.nx});
              std::copy(comp.labels.begin(), comp.labels.end(), labels.mutable_data());
              return py::make_tuple(labels, comp.sizes);
          },
          py::arg("mask"), py::arg("connectivity") = 26);
    m.def("main_trachea", [](const py::array_t<double>& mask) {
        return volume_to_numpy(main_trachea(numpy_to_volume(mask)));
    });
    m.def("maxpool_stride2", [](const py::array_t<double>& vol) {
        return volume_to_numpy(maxpool_stride2(numpy_to_volume(vol)));
    });
    m.def("dilate26", [](const py::array_t<double>& mask) {
        return volume_to_numpy(dilate26(numpy_to_volume(mask)));
    });
    m.def("sliding_window_apply",
          [](const py::array_t<double>& vol, std::array<int, 3> cube,
             std::array<int, 3> overlap, const py::function& predictor) {
              auto wrapped = [&](const Volume& tile) {
                  py::array_t<double> out =
                      predictor(volume_to_numpy(tile)).cast<py::array_t<double>>();
                  return numpy_to_volume(out);
              };
              return volume_to_numpy(
                  sliding_window_apply(numpy_to_volume(vol), cube, overlap, wrapped));
          },
          py::arg("volume"), py::arg("cube"), py::arg("overlap"), py::arg("predictor"));

    // ---- hard-region losses -------------------------------------------------------
    m.def("hard_region", [](const py::array_t<double>& gt, const py::array_t<double>& trachea) {
        return volume_to_numpy(hard_region(numpy_to_volume(gt), numpy_to_volume(trachea)));
    });
    m.def("build_pyramid", [](const py::array_t<double>& y_hr, int levels) {
        SupervisionPyramid pyr = build_pyramid(numpy_to_volume(y_hr), levels);
        py::list out;
        for (const auto& level : pyr.levels) out.append(volume_to_numpy(level));
        return out;
    });
    m.def("dice_loss", [](const py::array_t<double>& pred, const py::array_t<double>& target) {
        DiceResult res = dice_loss(numpy_to_volume(pred), numpy_to_volume(target));
        return py::make_tuple(res.loss, volume_to_numpy(res.grad));
    });
    m.def("optimize_logits_demo",
          [](const py::array_t<double>& gt, const py::array_t<double>& trachea, int levels,
             int steps, double lr) {
              LogitsDemoResult res = optimize_logits_demo(numpy_to_volume(gt),
                                                          numpy_to_volume(trachea), levels,
                                                          steps, lr);
              py::dict out;
              out["dice_trajectory"] = res.dice_trajectory;
              out["final_pred"] = volume_to_numpy(res.final_pred);
              out["total"] = res.final_report.total;
              out["dice_full"] = res.final_report.dice_full;
              out["hr_terms"] = res.final_report.hr_terms;
              return out;
          },
          py::arg("gt"), py::arg("trachea"), py::arg("levels") = 2, py::arg("steps") = 500,
          py::arg("lr") = 1.0);

    // ---- skeleton --------------------------------------------------------------------
    m.def("skeletonize", [](const py::array_t<double>& mask) {
        return volume_to_numpy(skeletonize(numpy_to_volume(mask)));
    });
    m.def("classify_points", [](const py::array_t<double>& skel) {
        Volume v = numpy_to_volume(skel);
        PointClassMap map = classify_points(v);
        py::array_t<int> coords({static_cast<py::ssize_t>(map.size()), py::ssize_t(3)});
        py::array_t<int> counts(static_cast<py::ssize_t>(map.size()));
        py::list types;
        py::ssize_t row = 0;
        for (const auto& [idx, info] : map) {
            coords.mutable_at(row, 0) = static_cast<int>(idx % v.nx);
            coords.mutable_at(row, 1) = static_cast<int>((idx / v.nx) % v.ny);
            coords.mutable_at(row, 2) =
                static_cast<int>(idx / (static_cast<std::int64_t>(v.nx) * v.ny));
            counts.mutable_at(row) = info.neighbor_count;
            types.append(info.type == PointType::End
                             ? "end"
                             : info.type == PointType::Edge ? "edge" : "division");
            ++row;
        }
        py::dict out;
        out["coords"] = coords;
        out["neighbor_counts"] = counts;
        out["types"] = types;
        return out;
    });
    m.def("extract_segments", [](const py::array_t<double>& skel) {
        Volume v = numpy_to_volume(skel);
        return segment_set_to_dict(extract_segments(v, classify_points(v)));
    });
    m.def("prune_short_segments", [](const py::dict& segments, int min_len) {
        SegmentSet set = dict_to_segment_set(segments);
        prune_short_segments(set, min_len);
        return segment_set_to_dict(set);
    });

    // ---- graph features ------------------------------------------------------------
    m.def("subsample_indices", &subsample_indices, py::arg("length"), py::arg("k"));
    m.def("point_feature",
          [](const py::array_t<double>& chain, int k) {
              return point_feature(numpy_to_chain(chain), k);
          },
          py::arg("chain"), py::arg("k") = kPointK);
    m.def("voxel_feature",
          [](const py::array_t<int>& chain, const py::array_t<float>& feats, int k) {
              return voxel_feature(numpy_to_voxels(chain), numpy_to_feats(feats), k);
          },
          py::arg("chain"), py::arg("feats"), py::arg("k") = kPointK);
    m.def("build_graph",
          [](const py::dict& segments, const py::array_t<float>& feats,
             const std::optional<std::vector<int>>& labels, int k) {
              return build_graph(dict_to_segment_set(segments), numpy_to_feats(feats), labels,
                                 k);
          },
          py::arg("segments"), py::arg("feats"), py::arg("labels") = py::none(),
          py::arg("k") = kPointK);
    m.def("augment",
          [](const AirwayGraph& g, std::uint64_t seed) { return augment(g, seed); },
          py::arg("graph"), py::arg("seed"));

    // ---- synthetic cases -------------------------------------------------------------
    py::class_<SyntheticCase>(m, "Case")
        .def_property_readonly("ct", [](const SyntheticCase& c) { return volume_to_numpy(c.ct); })
        .def_property_readonly("gt_mask",
                               [](const SyntheticCase& c) { return volume_to_numpy(c.gt_mask); })
        .def_property_readonly(
            "descriptor_feats",
            [](const SyntheticCase& c) { return feats_to_numpy(c.descriptor_feats); })
        .def_property_readonly("seed", [](const SyntheticCase& c) { return c.seed; })
        .def("branches", [](const SyntheticCase& c) {
            py::list out;
            for (const auto& b : c.branches) {
                py::dict d;
                d["id"] = b.id;
                d["parent"] = b.parent;
                d["generation"] = b.generation;
                d["class_id"] = b.class_id;
                d["start"] = b.start;
                d["end"] = b.end;
                d["radius"] = b.radius;
                d["truncated"] = b.truncated;
                py::array_t<int> cl({static_cast<py::ssize_t>(b.centerline.size()), py::ssize_t(3)});
                for (std::size_t i = 0; i < b.centerline.size(); ++i)
                    for (int a = 0; a < 3; ++a) cl.mutable_at(i, a) = b.centerline[i][a];
                d["centerline"] = cl;
                out.append(d);
            }
            return out;
        });
    m.def("generate_case",
          [](std::uint64_t seed, int depth, std::array<int, 3> dims) {
              SynthParams params;
              params.depth = depth;
              params.nx = dims[0];
              params.ny = dims[1];
              params.nz = dims[2];
              return generate_case(seed, params);
          },
          py::arg("seed"), py::arg("depth") = 4,
          py::arg("dims") = std::array<int, 3>{64, 64, 64});
    m.def("case_to_graph", &case_to_graph, py::arg("case"), py::arg("k") = kPointK,
          py::arg("min_segment_len") = 0);
    m.def("plan_dataset",
          [](int n_cases, std::uint64_t seed, double train_fraction) {
              DatasetPlan plan = plan_dataset(n_cases, seed, train_fraction);
              auto pack = [](const std::vector<CaseRef>& refs) {
                  py::list out;
                  for (const auto& r : refs) out.append(py::make_tuple(r.index, r.seed));
                  return out;
              };
              return py::make_tuple(pack(plan.train), pack(plan.test));
          },
          py::arg("n_cases"), py::arg("seed"), py::arg("train_fraction") = 0.7);
    m.def("save_case", &save_case);
    m.def("load_case", &load_case);
    m.def("label_segments", [](const py::dict& segments, const SyntheticCase& c) {
        return label_segments(dict_to_segment_set(segments), c.branches);
    });

    // ---- graph network ------------------------------------------------------------------
    py::class_<gnn::ModelParams>(m, "Model")
        .def_property_readonly("f_in", [](const gnn::ModelParams& p) { return p.f_in; })
        .def_property_readonly("hidden", [](const gnn::ModelParams& p) { return p.hidden; })
        .def_property_readonly("n_classes",
                               [](const gnn::ModelParams& p) { return p.n_classes; })
        .def_property_readonly("n_blocks", [](const gnn::ModelParams& p) { return p.n_blocks; });
    m.def("init_model", &gnn::init_params, py::arg("f_in"), py::arg("hidden") = 256,
          py::arg("n_classes") = kNumClasses, py::arg("n_blocks") = 5, py::arg("seed") = 0);
    m.def("save_model", &gnn::save_params);
    m.def("load_model", &gnn::load_params);
    m.def("forward", [](const AirwayGraph& g, const gnn::ModelParams& p) {
        return matrix_to_numpy(gnn::forward(g, p));
    });
    m.def("predict", [](const AirwayGraph& g, const gnn::ModelParams& p) {
        return gnn::predict(g, p);
    });
    m.def("train",
          [](const std::vector<AirwayGraph>& train_set, const std::vector<AirwayGraph>& val_set,
             const py::dict& config, int hidden, int n_blocks, int n_classes,
             bool point_only) {
              auto mode = point_only ? gnn::FeatureMode::PointOnly
                                     : gnn::FeatureMode::PointVoxel;
              std::vector<gnn::GraphExample> train_ex, val_ex;
              for (const auto& g : train_set) train_ex.push_back(gnn::to_example(g, mode));
              for (const auto& g : val_set) val_ex.push_back(gnn::to_example(g, mode));
              gnn::TrainResult res =
                  gnn::train(train_ex, val_ex, dict_to_config(config), hidden, n_blocks,
                             n_classes);
              py::list history;
              for (const auto& s : res.history) {
                  py::dict d;
                  d["epoch"] = s.epoch;
                  d["train_loss"] = s.train_loss;
                  d["val_acc"] = s.val_acc;
                  history.append(d);
              }
              return py::make_tuple(res.params, history);
          },
          py::arg("train_set"), py::arg("val_set"), py::arg("config") = py::dict(),
          py::arg("hidden") = 256, py::arg("n_blocks") = 5, py::arg("n_classes") = kNumClasses,
          py::arg("point_only") = false);

    // ---- metrics -----------------------------------------------------------------------
    m.def("dice_score", [](const py::array_t<double>& pred, const py::array_t<double>& gt) {
        return dice_score(numpy_to_volume(pred), numpy_to_volume(gt));
    });
    m.def("classification_metrics",
          [](const std::vector<int>& pred, const std::vector<int>& gt, int n_classes) {
              ClassMetrics m2 = classification_metrics(pred, gt, n_classes);
              py::dict out;
              out["accuracy"] = m2.accuracy;
              out["precision"] = m2.precision;
              out["recall"] = m2.recall;
              out["f1"] = m2.f1;
              return out;
          },
          py::arg("pred"), py::arg("gt"), py::arg("n_classes") = kNumClasses);

    m.attr("POINT_K") = kPointK;
    m.attr("FEATURE_CHANNELS") = kFeatureChannels;
    m.attr("NUM_CLASSES") = kNumClasses;
}
