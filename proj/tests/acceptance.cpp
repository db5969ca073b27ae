// Acceptance suite: runs every acceptance criterion at its stated tolerance and
// prints one pass/fail line per criterion. argv[1] must point at the CLI binary
// (used by the determinism criterion). Exit code = number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "airway/gnn.hpp"
#include "airway/graph.hpp"
#include "airway/losses.hpp"
#include "airway/metrics.hpp"
#include "airway/morphology.hpp"
#include "airway/rng.hpp"
#include "airway/skeleton.hpp"
#include "airway/synth.hpp"
#include "airway/volume.hpp"

namespace fs = std::filesystem;
using airway::Rng;
using airway::Volume;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double rel_err(double a, double b) {
    double m = std::max(std::abs(a), std::abs(b));
    // below the finite-difference noise floor both sides are zero
    return m < 1e-8 ? 0.0 : std::abs(a - b) / m;
}

Volume random_mask(int nx, int ny, int nz, double p, std::uint64_t seed) {
    Volume v(nx, ny, nz);
    Rng rng(seed);
    for (auto& x : v.data) x = rng.uniform() < p ? 1.0 : 0.0;
    return v;
}

Volume random_probs(int nx, int ny, int nz, std::uint64_t seed) {
    Volume v(nx, ny, nz);
    Rng rng(seed);
    for (auto& x : v.data) x = 0.02 + 0.96 * rng.uniform();
    return v;
}

struct Failure {
    std::ostringstream msg;
    bool failed = false;
    void fail(const std::string& what) {
        if (!failed) msg << what;
        failed = true;
    }
};

// ---------------------------------------------------------------------------
// 1. Gradient suite
// ---------------------------------------------------------------------------

bool criterion_gradients(std::string& detail) {
    auto t0 = Clock::now();
    Failure f;
    const double h = 1e-6;

    // dice_loss, elementwise tolerance 1e-5
    for (std::uint64_t inst = 0; inst < 10; ++inst) {
        Volume p = random_probs(6, 5, 4, 1000 + inst);
        Volume t = random_mask(6, 5, 4, 0.4, 1100 + inst);
        auto res = airway::dice_loss(p, t);
        Rng pick(1200 + inst);
        for (int k = 0; k < 20; ++k) {
            std::size_t i = pick.next_u64() % p.size();
            Volume pp = p, pm = p;
            pp.data[i] += h;
            pm.data[i] -= h;
            double fd =
                (airway::dice_loss(pp, t).loss - airway::dice_loss(pm, t).loss) / (2 * h);
            if (rel_err(fd, res.grad.data[i]) >= 1e-5) f.fail("dice_loss gradient");
        }
    }

    using namespace airway::gnn;
    auto rand_matrix = [](int r, int c, std::uint64_t seed) {
        Matrix m(r, c);
        Rng rng(seed);
        for (auto& v : m.d) v = rng.normal();
        return m;
    };
    auto rand_edges = [](int n, double p, std::uint64_t seed) {
        EdgeList e;
        Rng rng(seed);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng.uniform() < p) e.emplace_back(i, j);
        return e;
    };
    auto rand_labels = [](int n, int classes, std::uint64_t seed) {
        std::vector<int> l(n);
        Rng rng(seed);
        for (auto& v : l) v = rng.uniform_int(classes);
        return l;
    };

    // softmax_ce, ncr_loss, total_loss: elementwise losses, tolerance 1e-5
    for (std::uint64_t inst = 0; inst < 10; ++inst) {
        Matrix z = rand_matrix(6, 5, 2000 + inst);
        std::vector<int> labels = rand_labels(6, 5, 2100 + inst);
        EdgeList edges = rand_edges(6, 0.5, 2200 + inst);

        auto ce = softmax_ce(z, labels);
        auto ncr = ncr_loss(z, labels, edges);
        auto tot = total_loss(z, labels, edges, 1.0);
        for (int i = 0; i < z.rows; ++i)
            for (int c = 0; c < z.cols; ++c) {
                Matrix zp = z, zm = z;
                zp.at(i, c) += h;
                zm.at(i, c) -= h;
                double fd_ce =
                    (softmax_ce(zp, labels).loss - softmax_ce(zm, labels).loss) / (2 * h);
                if (rel_err(fd_ce, ce.dz.at(i, c)) >= 1e-5) f.fail("softmax_ce gradient");
                double fd_ncr = (ncr_loss(zp, labels, edges).loss -
                                 ncr_loss(zm, labels, edges).loss) /
                                (2 * h);
                if (rel_err(fd_ncr, ncr.dz.at(i, c)) >= 1e-5) f.fail("ncr_loss gradient");
                double fd_tot = (total_loss(zp, labels, edges, 1.0).loss -
                                 total_loss(zm, labels, edges, 1.0).loss) /
                                (2 * h);
                if (rel_err(fd_tot, tot.dz.at(i, c)) >= 1e-5) f.fail("total_loss gradient");
            }
    }

    // mean_sage and graph_norm backward, tolerance 1e-4
    for (std::uint64_t inst = 0; inst < 10; ++inst) {
        Matrix x = rand_matrix(5, 4, 3000 + inst);
        Matrix w_self = rand_matrix(4, 3, 3100 + inst);
        Matrix w_neigh = rand_matrix(4, 3, 3200 + inst);
        std::vector<double> bias(3, 0.1);
        EdgeList edges = rand_edges(5, 0.5, 3300 + inst);
        Matrix w = rand_matrix(5, 3, 3400 + inst);
        auto probe = [&](const Matrix& xx) {
            Matrix out = mean_sage(xx, edges, w_self, w_neigh, bias);
            double s = 0;
            for (std::size_t i = 0; i < out.d.size(); ++i) s += w.d[i] * out.d[i];
            return s;
        };
        MeanSageGrads g = mean_sage_backward(x, edges, w_self, w_neigh, w);
        for (std::size_t i = 0; i < x.d.size(); ++i) {
            Matrix xp = x, xm = x;
            xp.d[i] += h;
            xm.d[i] -= h;
            if (rel_err((probe(xp) - probe(xm)) / (2 * h), g.dx.d[i]) >= 1e-4)
                f.fail("mean_sage gradient");
        }

        GraphNormParams gn;
        Rng rng(3500 + inst);
        for (int c = 0; c < 4; ++c) {
            gn.gamma.push_back(rng.normal(1.0, 0.2));
            gn.beta.push_back(rng.normal(0.0, 0.2));
            gn.alpha.push_back(rng.normal(1.0, 0.3));
        }
        Matrix wg = rand_matrix(5, 4, 3600 + inst);
        auto probe_gn = [&](const Matrix& xx) {
            Matrix out = graph_norm(xx, gn);
            double s = 0;
            for (std::size_t i = 0; i < out.d.size(); ++i) s += wg.d[i] * out.d[i];
            return s;
        };
        GraphNormGrads gg = graph_norm_backward(x, gn, wg);
        for (std::size_t i = 0; i < x.d.size(); ++i) {
            Matrix xp = x, xm = x;
            xp.d[i] += h;
            xm.d[i] -= h;
            if (rel_err((probe_gn(xp) - probe_gn(xm)) / (2 * h), gg.dx.d[i]) >= 1e-4)
                f.fail("graph_norm gradient");
        }
    }

    // full backward over every parameter tensor, tolerance 1e-4, step 1e-5
    for (std::uint64_t inst = 0; inst < 10; ++inst) {
        Matrix x = rand_matrix(6, 7, 4000 + inst);
        EdgeList edges = rand_edges(6, 0.5, 4100 + inst);
        std::vector<int> labels = rand_labels(6, 5, 4200 + inst);
        ModelParams params = init_params(7, 8, 5, 3, 4300 + inst);
        ModelParams grads = zeros_like(params);
        backward(x, edges, labels, params, 1.0, 1.0, grads);
        auto loss_of = [&]() {
            return total_loss(forward(x, edges, params), labels, edges, 1.0).loss;
        };
        const double hs = 1e-5;
        Rng pick(4400 + inst);
        auto check = [&](std::vector<double>& pt, const std::vector<double>& gt) {
            for (int k = 0; k < 4; ++k) {
                std::size_t i = pick.next_u64() % pt.size();
                double keep = pt[i];
                pt[i] = keep + hs;
                double up = loss_of();
                pt[i] = keep - hs;
                double down = loss_of();
                pt[i] = keep;
                if (rel_err((up - down) / (2 * hs), gt[i]) >= 1e-4)
                    f.fail("full backward gradient");
            }
        };
        check(params.w_in.d, grads.w_in.d);
        check(params.b_in, grads.b_in);
        for (std::size_t b = 0; b < params.blocks.size(); ++b) {
            check(params.blocks[b].w_self.d, grads.blocks[b].w_self.d);
            check(params.blocks[b].w_neigh.d, grads.blocks[b].w_neigh.d);
            check(params.blocks[b].bias, grads.blocks[b].bias);
            check(params.blocks[b].norm.gamma, grads.blocks[b].norm.gamma);
            check(params.blocks[b].norm.beta, grads.blocks[b].norm.beta);
            check(params.blocks[b].norm.alpha, grads.blocks[b].norm.alpha);
        }
        check(params.w_out.d, grads.w_out.d);
        check(params.b_out, grads.b_out);
    }

    double elapsed = seconds_since(t0);
    if (elapsed >= 30.0) f.fail("runtime " + std::to_string(elapsed) + "s >= 30s");
    std::ostringstream d;
    d << "7 operations x >=10 instances, " << elapsed << "s";
    detail = f.failed ? f.msg.str() : d.str();
    return !f.failed;
}

// ---------------------------------------------------------------------------
// 2. Graph-construction oracle
// ---------------------------------------------------------------------------

bool criterion_graph_construction(std::string& detail) {
    Failure f;
    int checked_voxels = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        int nx = 6 + static_cast<int>(seed % 7);  // up to 12^3
        Volume mask = random_mask(nx, 12 - seed % 5, 8 + seed % 5, 0.22, 5000 + seed);
        if (mask.count_nonzero() == 0) mask.at(1, 1, 1) = 1.0;
        Volume skel = airway::skeletonize(mask);
        auto classes = airway::classify_points(skel);

        // Brute-force 26-neighborhood count.
        for (const auto& [idx, info] : classes) {
            int x = static_cast<int>(idx % skel.nx);
            int y = static_cast<int>((idx / skel.nx) % skel.ny);
            int z = static_cast<int>(idx / (static_cast<std::int64_t>(skel.nx) * skel.ny));
            int n = 0;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (!dx && !dy && !dz) continue;
                        if (skel.in_bounds(x + dx, y + dy, z + dz) &&
                            skel.at(x + dx, y + dy, z + dz) != 0.0)
                            ++n;
                    }
            if (info.neighbor_count != n) f.fail("classify_points vs brute force");
            auto want = n >= 3 ? airway::PointType::Division
                               : n == 2 ? airway::PointType::Edge : airway::PointType::End;
            if (info.type != want) f.fail("classify_points type rule");
            ++checked_voxels;
        }

        // Exact partition of Edge/End voxels.
        auto set = airway::extract_segments(skel, classes);
        std::set<std::int64_t> seen;
        std::size_t chain_total = 0;
        for (const auto& seg : set.segments)
            for (const auto& v : seg) {
                seen.insert(skel.index(v[0], v[1], v[2]));
                ++chain_total;
            }
        std::size_t edge_end = 0;
        for (const auto& [idx, info] : classes)
            if (info.type != airway::PointType::Division) {
                ++edge_end;
                if (!seen.count(idx)) f.fail("segment partition misses a voxel");
            }
        if (chain_total != edge_end || seen.size() != chain_total)
            f.fail("segment partition is not exact");
    }

    airway::SynthParams params;
    params.depth = 3;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        airway::SyntheticCase c = airway::generate_case(seed, params);
        Volume skel = airway::skeletonize(c.gt_mask);
        auto set = airway::extract_segments(skel, airway::classify_points(skel));
        if (set.segments.size() != 7)
            f.fail("depth-3 tree produced " + std::to_string(set.segments.size()) +
                   " segments (want 7) at seed " + std::to_string(seed));
    }
    std::ostringstream d;
    d << "50 random skeletons (" << checked_voxels << " voxels) + 20 depth-3 trees";
    detail = f.failed ? f.msg.str() : d.str();
    return !f.failed;
}

// ---------------------------------------------------------------------------
// 3. Skeleton fidelity
// ---------------------------------------------------------------------------

bool criterion_skeleton_fidelity(std::string& detail) {
    Failure f;
    double worst = 1.0;
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        airway::SyntheticCase c = airway::generate_case(seed);
        Volume skel = airway::skeletonize(c.gt_mask);

        std::vector<airway::VoxelCoord> truth, extracted;
        for (const auto& b : c.branches)
            truth.insert(truth.end(), b.centerline.begin(), b.centerline.end());
        for (int z = 0; z < skel.nz; ++z)
            for (int y = 0; y < skel.ny; ++y)
                for (int x = 0; x < skel.nx; ++x)
                    if (skel.at(x, y, z) != 0.0) extracted.push_back({x, y, z});

        auto coverage = [](const std::vector<airway::VoxelCoord>& from,
                           const std::vector<airway::VoxelCoord>& to) {
            int hit = 0;
            for (const auto& a : from) {
                bool found = false;
                for (const auto& b : to)
                    if (std::max({std::abs(a[0] - b[0]), std::abs(a[1] - b[1]),
                                  std::abs(a[2] - b[2])}) <= 1) {
                        found = true;
                        break;
                    }
                hit += found;
            }
            return static_cast<double>(hit) / static_cast<double>(from.size());
        };
        double recall = coverage(truth, extracted);
        double precision = coverage(extracted, truth);
        worst = std::min({worst, recall, precision});
        if (recall < 0.95 || precision < 0.95)
            f.fail("seed " + std::to_string(seed) + ": coverage " + std::to_string(recall) +
                   "/" + std::to_string(precision));
    }
    std::ostringstream d;
    d << "20 cases, worst per-direction coverage " << worst;
    detail = f.failed ? f.msg.str() : d.str();
    return !f.failed;
}

// ---------------------------------------------------------------------------
// 4. Loss-family demo
// ---------------------------------------------------------------------------

bool criterion_loss_demo(std::string& detail) {
    auto t0 = Clock::now();
    Failure f;
    airway::SynthParams params;
    params.nx = params.ny = params.nz = 16;
    params.depth = 2;
    params.root_radius = 2.0;
    params.root_length = 7.0;
    airway::SyntheticCase c = airway::generate_case(5, params);
    Volume trachea = airway::main_trachea(airway::otsu_threshold(c.ct).mask);
    // lr 50: plain gradient descent on the smoothed dice needs large steps before
    // the auxiliary heads saturate within the 500-step budget.
    auto res = airway::optimize_logits_demo(c.gt_mask, trachea, 2, 500, 50.0);

    if (res.dice_trajectory.back() < 0.99)
        f.fail("final dice " + std::to_string(res.dice_trajectory.back()) + " < 0.99");
    for (double term : res.final_report.hr_terms)
        if (term >= 0.05) f.fail("hr term " + std::to_string(term) + " >= 0.05");
    double elapsed = seconds_since(t0);
    if (elapsed >= 60.0) f.fail("runtime >= 60s");
    std::ostringstream d;
    d << "dice " << res.dice_trajectory.back() << ", hr terms";
    for (double term : res.final_report.hr_terms) d << " " << term;
    d << ", " << elapsed << "s";
    detail = f.failed ? f.msg.str() : d.str();
    return !f.failed;
}

// ---------------------------------------------------------------------------
// 5./6. End-to-end learning and the ablation-shape analogue
// ---------------------------------------------------------------------------

struct Benchmark {
    std::vector<airway::gnn::GraphExample> train_pv, test_pv, train_p, test_p;
};

Benchmark build_benchmark() {
    Benchmark b;
    auto plan = airway::plan_dataset(100, 0);
    for (const auto& ref : plan.train) {
        airway::SyntheticCase c = airway::generate_case(ref.seed);
        airway::AirwayGraph g = airway::case_to_graph(c);
        b.train_pv.push_back(airway::gnn::to_example(g));
        b.train_p.push_back(
            airway::gnn::to_example(g, airway::gnn::FeatureMode::PointOnly));
    }
    for (const auto& ref : plan.test) {
        airway::SyntheticCase c = airway::generate_case(ref.seed);
        airway::AirwayGraph g = airway::case_to_graph(c);
        b.test_pv.push_back(airway::gnn::to_example(g));
        b.test_p.push_back(airway::gnn::to_example(g, airway::gnn::FeatureMode::PointOnly));
    }
    return b;
}

bool criterion_end_to_end(const Benchmark& bench, std::string& detail) {
    auto t0 = Clock::now();
    Failure f;
    airway::gnn::TrainConfig cfg;  // defaults: lr 1e-3, batch 128, dropedge 0.1, alpha 1
    cfg.epochs = 200;
    cfg.seed = 0;
    auto res = airway::gnn::train(bench.train_pv, bench.test_pv, cfg);
    double best = 0.0;
    int first_hit = 0;
    for (const auto& s : res.history) {
        best = std::max(best, s.val_acc);
        if (!first_hit && s.val_acc >= 0.95) first_hit = s.epoch;
    }
    double elapsed = seconds_since(t0);
    if (best < 0.95)
        f.fail("best test accuracy " + std::to_string(best) + " < 0.95 within 200 epochs");
    if (elapsed >= 300.0) f.fail("runtime " + std::to_string(elapsed) + "s >= 5min");
    std::ostringstream d;
    d << "test acc " << res.history.back().val_acc << " at epoch 200, first >=0.95 at epoch "
      << first_hit << ", " << elapsed << "s";
    detail = f.failed ? f.msg.str() : d.str();
    return !f.failed;
}

double disagreement_rate(const std::vector<airway::gnn::GraphExample>& set,
                         const airway::gnn::ModelParams& params) {
    std::int64_t same_label_edges = 0, disagreements = 0;
    for (const auto& ex : set) {
        std::vector<int> pred =
            airway::gnn::predict(airway::gnn::forward(ex.x, ex.edges, params));
        for (auto [a, b] : ex.edges) {
            if (ex.labels[a] != ex.labels[b]) continue;
            ++same_label_edges;
            disagreements += pred[a] != pred[b];
        }
    }
    return same_label_edges == 0
               ? 0.0
               : static_cast<double>(disagreements) / static_cast<double>(same_label_edges);
}

bool criterion_ablation(const Benchmark& bench, std::string& detail) {
    Failure f;
    const int epochs = 40;
    double acc_p = 0.0, acc_pv = 0.0, dis_ncr = 0.0, dis_plain = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        airway::gnn::TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.seed = seed;

        cfg.alpha_ncr = 0.0;
        auto point_only = airway::gnn::train(bench.train_p, bench.test_p, cfg);
        acc_p += point_only.history.back().val_acc / 3.0;

        auto pv_plain = airway::gnn::train(bench.train_pv, bench.test_pv, cfg);
        acc_pv += pv_plain.history.back().val_acc / 3.0;
        dis_plain += disagreement_rate(bench.test_pv, pv_plain.params) / 3.0;

        cfg.alpha_ncr = 1.0;
        auto pv_ncr = airway::gnn::train(bench.train_pv, bench.test_pv, cfg);
        dis_ncr += disagreement_rate(bench.test_pv, pv_ncr.params) / 3.0;
    }
    if (acc_pv < acc_p - 0.01)
        f.fail("acc(point+voxel) " + std::to_string(acc_pv) + " < acc(point) " +
               std::to_string(acc_p) + " - 0.01");
    if (dis_ncr > dis_plain + 0.01)
        f.fail("NCR disagreement " + std::to_string(dis_ncr) + " > plain " +
               std::to_string(dis_plain) + " + 0.01");
    std::ostringstream d;
    d << "mean over 3 seeds: acc P " << acc_p << ", PV " << acc_pv << "; disagreement NCR "
      << dis_ncr << ", plain " << dis_plain;
    detail = f.failed ? f.msg.str() : d.str();
    return !f.failed;
}

// ---------------------------------------------------------------------------
// 7. Determinism of the CLI pipeline
// ---------------------------------------------------------------------------

bool files_identical(const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) return false;
    std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    return ca == cb;
}

bool criterion_determinism(const std::string& cli, std::string& detail) {
    Failure f;
    if (cli.empty() || !fs::exists(cli)) {
        detail = "cli binary path not provided";
        return false;
    }
    fs::path root = fs::temp_directory_path() / "airway_acceptance_determinism";
    fs::remove_all(root);

    auto run = [&](const std::string& args) {
        std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        return std::system(cmd.c_str()) == 0;
    };
    int n_files = 0;
    for (int round = 0; round < 2 && !f.failed; ++round) {
        fs::path dir = root / ("run" + std::to_string(round));
        fs::create_directories(dir);
        std::ofstream cfg(dir / "train.cfg");
        cfg << "lr = 0.002\nepochs = 20\nbatch_size = 16\ndropedge_p = 0.1\n"
               "alpha_ncr = 1.0\nseed = 3\n";
        cfg.close();
        std::string d = dir.string();
        if (!run("synth --n 8 --seed 5 --depth 3 --out " + d + "/data") ||
            !run("train --data " + d + "/data --config " + d + "/train.cfg --out " + d +
                 "/model.bin") ||
            !run("eval --model " + d + "/model.bin --data " + d + "/data --out " + d +
                 "/metrics.json") ||
            !run("build-graph --case " + d + "/data/case_007 --out " + d + "/graph.json") ||
            !run("infer --model " + d + "/model.bin --graph " + d + "/graph.json --out " + d +
                 "/labels.json"))
            f.fail("pipeline command failed in round " + std::to_string(round));
    }
    if (!f.failed) {
        for (auto it = fs::recursive_directory_iterator(root / "run0");
             it != fs::recursive_directory_iterator(); ++it) {
            if (!it->is_regular_file()) continue;
            fs::path rel = fs::relative(it->path(), root / "run0");
            ++n_files;
            if (!files_identical(it->path(), root / "run1" / rel))
                f.fail("output differs: " + rel.string());
        }
        if (n_files == 0) f.fail("no outputs produced");
    }
    fs::remove_all(root);
    std::ostringstream d;
    d << n_files << " files byte-identical across two synth->train->eval->infer runs";
    detail = f.failed ? f.msg.str() : d.str();
    return !f.failed;
}

// ---------------------------------------------------------------------------
// 8. Morphology properties
// ---------------------------------------------------------------------------

bool criterion_morphology(std::string& detail) {
    Failure f;
    for (std::uint64_t inst = 0; inst < 100; ++inst) {
        // Monotone pooling on nested masks.
        Volume a = random_mask(7, 6, 5, 0.25, 9000 + inst);
        Volume b = a;
        Rng rng(9100 + inst);
        for (auto& v : b.data)
            if (rng.uniform() < 0.15) v = 1.0;
        Volume pa = airway::maxpool_stride2(a);
        Volume pb = airway::maxpool_stride2(b);
        for (std::size_t i = 0; i < pa.size(); ++i)
            if (pa.data[i] > pb.data[i]) f.fail("pooling monotonicity");
        if (a.count_nonzero() > 0) {
            double fin = static_cast<double>(a.count_nonzero()) / a.size();
            double fout = static_cast<double>(pa.count_nonzero()) / pa.size();
            if (fout < fin) f.fail("pooling foreground fraction");
        }

        // Dilation: extensive, monotone, translation-equivariant.
        Volume da = airway::dilate26(a);
        Volume db = airway::dilate26(b);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (da.data[i] < a.data[i]) f.fail("dilation extensivity");
            if (da.data[i] > db.data[i]) f.fail("dilation monotonicity");
        }
        Volume interior(10, 10, 10);
        for (int z = 3; z < 6; ++z)
            for (int y = 3; y < 6; ++y)
                for (int x = 3; x < 6; ++x)
                    interior.at(x, y, z) = rng.uniform() < 0.4 ? 1.0 : 0.0;
        Volume shifted(10, 10, 10);
        for (int z = 0; z < 9; ++z)
            for (int y = 0; y < 9; ++y)
                for (int x = 0; x < 9; ++x)
                    if (interior.at(x, y, z) != 0.0) shifted.at(x + 1, y + 1, z + 1) = 1.0;
        Volume d1 = airway::dilate26(interior);
        Volume d2 = airway::dilate26(shifted);
        for (int z = 1; z < 9; ++z)
            for (int y = 1; y < 9; ++y)
                for (int x = 1; x < 9; ++x)
                    if (d2.at(x, y, z) != d1.at(x - 1, y - 1, z - 1))
                        f.fail("dilation translation equivariance");

        // Sliding window with the identity predictor, random layout.
        Volume v = random_probs(8, 7, 6, 9200 + inst);
        std::array<int, 3> cube{3 + static_cast<int>(inst % 5),
                                4 + static_cast<int>(inst % 4),
                                3 + static_cast<int>(inst % 3)};
        std::array<int, 3> overlap{static_cast<int>(inst % cube[0]),
                                   static_cast<int>((inst / 2) % cube[1]),
                                   static_cast<int>((inst / 3) % cube[2])};
        Volume out = airway::sliding_window_apply(
            v, cube, overlap, [](const Volume& tile) { return tile; });
        for (std::size_t i = 0; i < v.size(); ++i)
            if (std::abs(out.data[i] - v.data[i]) > 1e-12)
                f.fail("sliding-window identity invariance");
    }
    detail = f.failed ? f.msg.str() : "100 randomized instances per property";
    return !f.failed;
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli = argc > 1 ? argv[1] : "";
    int failures = 0;
    auto report = [&](int num, const char* name, bool pass, const std::string& detail) {
        std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", num, name,
                    detail.c_str());
        std::fflush(stdout);
        failures += !pass;
    };

    std::string detail;
    report(1, "gradient suite", criterion_gradients(detail), detail);
    report(2, "graph-construction oracle", criterion_graph_construction(detail), detail);
    report(3, "skeleton fidelity", criterion_skeleton_fidelity(detail), detail);
    report(4, "loss-family demo", criterion_loss_demo(detail), detail);

    Benchmark bench = build_benchmark();
    report(5, "end-to-end learning", criterion_end_to_end(bench, detail), detail);
    report(6, "ablation-shape analogue", criterion_ablation(bench, detail), detail);
    report(7, "pipeline determinism", criterion_determinism(cli, detail), detail);
    report(8, "morphology properties", criterion_morphology(detail), detail);

    if (failures)
        std::printf("%d criterion(s) failed\n", failures);
    else
        std::printf("all 8 criteria passed\n");
    return failures;
}
