#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "airway/gnn.hpp"
#include "airway/graph.hpp"
#include "airway/losses.hpp"
#include "airway/metrics.hpp"
#include "airway/morphology.hpp"
#include "airway/skeleton.hpp"
#include "airway/synth.hpp"
#include "airway/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

char g_fmt_buf[64];

json num9(double v) {
    std::snprintf(g_fmt_buf, sizeof(g_fmt_buf), "%.9g", v);
    return json(std::strtod(g_fmt_buf, nullptr));
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << j.dump(1) << "\n";
}

std::string case_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "case_%03d", index);
    return buf;
}

struct ManifestEntry {
    std::string dir;
    std::uint64_t seed;
};

struct Manifest {
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> train, test;
};

Manifest load_manifest(const fs::path& data_dir) {
    std::ifstream in(data_dir / "manifest.json");
    if (!in) throw std::runtime_error("cannot open: " + (data_dir / "manifest.json").string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("manifest json: parse error: " + std::string(e.what()));
    }
    Manifest m;
    if (!j.contains("seed") || !j.contains("train") || !j.contains("test"))
        throw std::runtime_error("manifest json: missing field 'seed', 'train' or 'test'");
    m.seed = j["seed"].get<std::uint64_t>();
    for (const json& e : j["train"])
        m.train.push_back({e["dir"].get<std::string>(), e["seed"].get<std::uint64_t>()});
    for (const json& e : j["test"])
        m.test.push_back({e["dir"].get<std::string>(), e["seed"].get<std::uint64_t>()});
    return m;
}

std::vector<airway::gnn::GraphExample> load_split_examples(const fs::path& data_dir,
                                                           const std::vector<ManifestEntry>& split) {
    std::vector<airway::gnn::GraphExample> examples;
    examples.reserve(split.size());
    for (const auto& entry : split) {
        airway::SyntheticCase c = airway::load_case(data_dir / entry.dir);
        airway::AirwayGraph g = airway::case_to_graph(c);
        examples.push_back(airway::gnn::to_example(g));
    }
    return examples;
}

int run_synth(int n, std::uint64_t seed, const fs::path& out_dir, int depth) {
    airway::SynthParams params;
    params.depth = depth;
    airway::DatasetPlan plan = airway::plan_dataset(n, seed);
    fs::create_directories(out_dir);

    json manifest;
    manifest["seed"] = seed;
    manifest["n_cases"] = n;
    manifest["train"] = json::array();
    manifest["test"] = json::array();
    for (const auto* split : {&plan.train, &plan.test}) {
        bool is_train = split == &plan.train;
        for (const auto& ref : *split) {
            airway::SyntheticCase c = airway::generate_case(ref.seed, params);
            std::string dir = case_dir_name(ref.index);
            airway::save_case(c, out_dir / dir);
            manifest[is_train ? "train" : "test"].push_back(
                {{"dir", dir}, {"seed", ref.seed}});
        }
    }
    write_json(manifest, out_dir / "manifest.json");
    std::cout << "wrote " << n << " cases to " << out_dir.string() << "\n";
    return 0;
}

int run_segdemo(const fs::path& case_dir, int levels, int steps, double lr,
                const fs::path& out_path) {
    airway::SyntheticCase c = airway::load_case(case_dir);
    airway::OtsuResult otsu = airway::otsu_threshold(c.ct);
    airway::Volume trachea = airway::main_trachea(otsu.mask);
    airway::LogitsDemoResult res =
        airway::optimize_logits_demo(c.gt_mask, trachea, levels, steps, lr);

    json j;
    j["dice_trajectory"] = json::array();
    for (double d : res.dice_trajectory) j["dice_trajectory"].push_back(num9(d));
    j["final"] = {{"total", num9(res.final_report.total)},
                  {"dice_full", num9(res.final_report.dice_full)},
                  {"hr_terms", json::array()}};
    for (double t : res.final_report.hr_terms) j["final"]["hr_terms"].push_back(num9(t));
    write_json(j, out_path);
    std::cout << "final dice " << res.dice_trajectory.back() << "\n";
    return 0;
}

int run_skeletonize(const fs::path& mask_path, const fs::path& out_path, int min_len) {
    airway::Volume mask = airway::load_volume(mask_path);
    airway::Volume skel = airway::skeletonize(mask);
    airway::PointClassMap classes = airway::classify_points(skel);
    airway::SegmentSet set = airway::extract_segments(skel, classes);
    airway::prune_short_segments(set, min_len);
    airway::save_segment_set(set, out_path);
    std::cout << set.segments.size() << " segments, " << set.junctions.size()
              << " junctions\n";
    return 0;
}

int run_build_graph(const fs::path& case_dir, int k, const fs::path& out_path, int min_len) {
    airway::SyntheticCase c = airway::load_case(case_dir);
    airway::AirwayGraph g = airway::case_to_graph(c, k, min_len);
    airway::save_graph(g, out_path);
    std::cout << g.nodes.size() << " nodes, " << g.edges.size() << " edges\n";
    return 0;
}

int run_augment(const fs::path& graph_path, int n, std::uint64_t seed, const fs::path& out_dir) {
    airway::AirwayGraph g = airway::load_graph(graph_path);
    fs::create_directories(out_dir);
    char name[32];
    std::snprintf(name, sizeof(name), "aug_%03d.json", 0);
    airway::save_graph(g, out_dir / name);  // the original rides along as copy 0
    for (int i = 1; i <= n; ++i) {
        airway::AirwayGraph a = airway::augment(g, airway::Rng::derive(seed, i));
        std::snprintf(name, sizeof(name), "aug_%03d.json", i);
        airway::save_graph(a, out_dir / name);
    }
    std::cout << "wrote " << (n + 1) << " graphs to " << out_dir.string() << "\n";
    return 0;
}

int run_train(const fs::path& data_dir, const fs::path& config_path, const fs::path& out_path,
              const fs::path& history_path) {
    airway::gnn::TrainConfig cfg = airway::gnn::load_train_config(config_path);
    Manifest manifest = load_manifest(data_dir);
    auto train_set = load_split_examples(data_dir, manifest.train);
    auto val_set = load_split_examples(data_dir, manifest.test);
    airway::gnn::TrainResult res = airway::gnn::train(train_set, val_set, cfg);
    airway::gnn::save_params(res.params, out_path);
    fs::path hist =
        history_path.empty() ? fs::path(out_path.string() + ".history.jsonl") : history_path;
    airway::gnn::save_history(res.history, hist);
    std::cout << "final val acc " << res.history.back().val_acc << "\n";
    return 0;
}

int run_eval(const fs::path& model_path, const fs::path& data_dir, const fs::path& out_path) {
    airway::gnn::ModelParams params = airway::gnn::load_params(model_path);
    Manifest manifest = load_manifest(data_dir);
    auto test_set = load_split_examples(data_dir, manifest.test);

    std::vector<int> pred, gt;
    for (const auto& ex : test_set) {
        airway::gnn::Matrix z = airway::gnn::forward(ex.x, ex.edges, params);
        std::vector<int> p = airway::gnn::predict(z);
        pred.insert(pred.end(), p.begin(), p.end());
        gt.insert(gt.end(), ex.labels.begin(), ex.labels.end());
    }
    airway::ClassMetrics m = airway::classification_metrics(pred, gt, params.n_classes);

    json j;
    j["accuracy"] = num9(m.accuracy);
    j["precision"] = num9(m.precision);
    j["recall"] = num9(m.recall);
    j["f1"] = num9(m.f1);
    j["n_nodes"] = pred.size();
    j["n_graphs"] = test_set.size();
    write_json(j, out_path);
    std::cout << "accuracy " << m.accuracy << " over " << pred.size() << " nodes\n";
    return 0;
}

int run_infer(const fs::path& model_path, const fs::path& graph_path, const fs::path& out_path) {
    airway::gnn::ModelParams params = airway::gnn::load_params(model_path);
    airway::AirwayGraph g = airway::load_graph(graph_path);
    airway::gnn::Matrix z = airway::gnn::forward(g, params);
    std::vector<int> labels = airway::gnn::predict(z);

    json j;
    j["labels"] = labels;
    j["logits"] = json::array();
    for (int i = 0; i < z.rows; ++i) {
        json row = json::array();
        for (int c = 0; c < z.cols; ++c) row.push_back(num9(z.at(i, c)));
        j["logits"].push_back(std::move(row));
    }
    write_json(j, out_path);
    std::cout << labels.size() << " nodes labeled\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Airway tree analysis: synthetic cases, segmentation losses, "
                 "skeleton graphs and GNN classification"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate synthetic cases and a split manifest");
    int synth_n = 10, synth_depth = 4;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    synth->add_option("--n", synth_n, "Number of cases")->required();
    synth->add_option("--seed", synth_seed, "Master seed")->required();
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--depth", synth_depth, "Tree depth (generations)");

    // segdemo
    auto* segdemo = app.add_subcommand("segdemo", "Optimize a logit volume under the "
                                                  "hard-region-aware segmentation loss");
    std::string segdemo_case, segdemo_out;
    int segdemo_levels = 2, segdemo_steps = 500;
    double segdemo_lr = 1.0;
    segdemo->add_option("--case", segdemo_case, "Case directory")->required();
    segdemo->add_option("--levels", segdemo_levels, "Supervision pyramid levels");
    segdemo->add_option("--steps", segdemo_steps, "Gradient steps");
    segdemo->add_option("--lr", segdemo_lr, "Learning rate");
    segdemo->add_option("--out", segdemo_out, "Report JSON path")->required();

    // skeletonize
    auto* skel = app.add_subcommand("skeletonize", "Thin a binary mask and split it into segments");
    std::string skel_mask, skel_out;
    int skel_min_len = 0;
    skel->add_option("--mask", skel_mask, "Mask volume header (.json)")->required();
    skel->add_option("--out", skel_out, "Segment-set JSON path")->required();
    skel->add_option("--min-segment-len", skel_min_len, "Drop segments shorter than this");

    // build-graph
    auto* bg = app.add_subcommand("build-graph", "Build the featured graph for a case");
    std::string bg_case, bg_out;
    int bg_k = 10, bg_min_len = 0;
    bg->add_option("--case", bg_case, "Case directory")->required();
    bg->add_option("--k", bg_k, "Subsampled voxels per segment");
    bg->add_option("--out", bg_out, "Graph JSON path")->required();
    bg->add_option("--min-segment-len", bg_min_len, "Drop segments shorter than this");

    // augment
    auto* aug = app.add_subcommand("augment", "Write augmented copies of a graph");
    std::string aug_graph, aug_out;
    int aug_n = 99;
    std::uint64_t aug_seed = 0;
    aug->add_option("--graph", aug_graph, "Graph JSON path")->required();
    aug->add_option("--n", aug_n, "Number of augmented copies");
    aug->add_option("--seed", aug_seed, "Seed")->required();
    aug->add_option("--out", aug_out, "Output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "Train the graph classifier");
    std::string train_data, train_cfg, train_out, train_hist;
    train->add_option("--data", train_data, "Dataset directory (with manifest.json)")->required();
    train->add_option("--config", train_cfg, "Training config (key = value lines)")->required();
    train->add_option("--out", train_out, "Model output path")->required();
    train->add_option("--history", train_hist, "History JSONL path");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a model on the test split");
    std::string eval_model, eval_data, eval_out;
    eval->add_option("--model", eval_model, "Model path")->required();
    eval->add_option("--data", eval_data, "Dataset directory")->required();
    eval->add_option("--out", eval_out, "Metrics JSON path")->required();

    // infer
    auto* infer = app.add_subcommand("infer", "Label a graph with a trained model");
    std::string infer_model, infer_graph, infer_out;
    infer->add_option("--model", infer_model, "Model path")->required();
    infer->add_option("--graph", infer_graph, "Graph JSON path")->required();
    infer->add_option("--out", infer_out, "Labels JSON path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        if (*synth) return run_synth(synth_n, synth_seed, synth_out, synth_depth);
        if (*segdemo)
            return run_segdemo(segdemo_case, segdemo_levels, segdemo_steps, segdemo_lr,
                               segdemo_out);
        if (*skel) return run_skeletonize(skel_mask, skel_out, skel_min_len);
        if (*bg) return run_build_graph(bg_case, bg_k, bg_out, bg_min_len);
        if (*aug) return run_augment(aug_graph, aug_n, aug_seed, aug_out);
        if (*train) return run_train(train_data, train_cfg, train_out, train_hist);
        if (*eval) return run_eval(eval_model, eval_data, eval_out);
        if (*infer) return run_infer(infer_model, infer_graph, infer_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
