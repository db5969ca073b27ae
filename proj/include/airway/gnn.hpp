#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "airway/graph.hpp"
#include "airway/rng.hpp"

namespace airway::gnn {

using EdgeList = std::vector<std::pair<int, int>>;

// Row-major double matrix; doubles throughout so gradients check against finite
// differences at tight tolerances.
struct Matrix {
    int rows = 0, cols = 0;
    std::vector<double> d;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), d(static_cast<std::size_t>(r) * c, fill) {}

    double& at(int i, int j) { return d[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return d[static_cast<std::size_t>(i) * cols + j]; }
    double* row(int i) { return d.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return d.data() + static_cast<std::size_t>(i) * cols; }
    void zero() { std::fill(d.begin(), d.end(), 0.0); }
};

// c = a * b              (optionally accumulating)
void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
// c = a^T * b
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);
// c = a * b^T
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate = false);

struct GraphNormParams {
    std::vector<double> gamma, beta, alpha;  // scale, shift, mean gate; one per feature
};

struct BlockParams {
    Matrix w_self, w_neigh;     // hidden x hidden
    std::vector<double> bias;   // hidden
    GraphNormParams norm;
};

// The input projection acts as the first of n_blocks blocks (no residual, no
// aggregation); blocks[] hold the remaining n_blocks-1 residual Conv-Norm blocks.
struct ModelParams {
    int f_in = 270, hidden = 256, n_classes = kNumClasses, n_blocks = 5;
    Matrix w_in;                     // f_in x hidden
    std::vector<double> b_in;        // hidden
    std::vector<BlockParams> blocks; // n_blocks - 1 entries
    Matrix w_out;                    // hidden x n_classes
    std::vector<double> b_out;       // n_classes
};

ModelParams init_params(int f_in, int hidden, int n_classes, int n_blocks, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& p);

// out_i = x_i*W_self + mean_{j in N(i)}(x_j)*W_neigh + bias; isolated nodes use a
// zero aggregate.
Matrix mean_sage(const Matrix& x, const EdgeList& edges, const Matrix& w_self,
                 const Matrix& w_neigh, const std::vector<double>& bias);

// Per feature f: d = x[:,f] - alpha_f * mean_f; out = gamma_f * d / sqrt(mean(d^2) + 1e-5) + beta_f.
Matrix graph_norm(const Matrix& x, const GraphNormParams& p);

struct MeanSageGrads {
    Matrix dx, dw_self, dw_neigh;
    std::vector<double> dbias;
};

// Reverse pass of mean_sage given d(loss)/d(out).
MeanSageGrads mean_sage_backward(const Matrix& x, const EdgeList& edges, const Matrix& w_self,
                                 const Matrix& w_neigh, const Matrix& dout);

struct GraphNormGrads {
    Matrix dx;
    GraphNormParams dparams;
};

// Reverse pass of graph_norm given d(loss)/d(out).
GraphNormGrads graph_norm_backward(const Matrix& x, const GraphNormParams& p,
                                   const Matrix& dout);

// ReLU(graph_norm(mean_sage(h))) plus the residual unless is_first.
Matrix conv_norm_block(const Matrix& h, const EdgeList& edges, const BlockParams& p,
                       bool is_first);

enum class FeatureMode { PointVoxel, PointOnly };

// Concatenated per-node features: point_feat (3K) then voxel_feat (C*K).
Matrix node_features(const AirwayGraph& graph, FeatureMode mode = FeatureMode::PointVoxel);

Matrix forward(const Matrix& x, const EdgeList& edges, const ModelParams& params);
Matrix forward(const AirwayGraph& graph, const ModelParams& params);

struct LossGrad {
    double loss = 0.0;
    Matrix dz;
};

// Mean over nodes of -log softmax(z_i)[y_i].
LossGrad softmax_ce(const Matrix& z, const std::vector<int>& labels);

// Sum over unordered adjacent same-label pairs of ||z_i - z_j||_2, divided by the
// total undirected edge count. Subgradient 0 where z_i == z_j.
LossGrad ncr_loss(const Matrix& z, const std::vector<int>& labels, const EdgeList& edges);

LossGrad total_loss(const Matrix& z, const std::vector<int>& labels, const EdgeList& edges,
                    double alpha_ncr);

// Each undirected edge kept independently with probability 1-p. Training only.
EdgeList dropedge(const EdgeList& edges, double p, Rng& rng);

// Accumulates d(total_loss)/d(params) * weight into grads; returns the loss.
double backward(const Matrix& x, const EdgeList& edges, const std::vector<int>& labels,
                const ModelParams& params, double alpha_ncr, double weight,
                ModelParams& grads);

struct AdamState {
    ModelParams m, v;
    std::int64_t t = 0;
};

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct TrainConfig {
    double lr = 1e-3;
    int epochs = 500;
    int batch_size = 128;     // graphs per step
    double dropedge_p = 0.1;
    double alpha_ncr = 1.0;
    std::uint64_t seed = 0;
};

// Plain key=value text, '#' comments; unknown keys are an error.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);

struct GraphExample {
    Matrix x;
    EdgeList edges;
    std::vector<int> labels;
};

GraphExample to_example(const AirwayGraph& graph, FeatureMode mode = FeatureMode::PointVoxel);

struct EpochStat {
    int epoch;
    double train_loss;  // node-weighted mean over the epoch's batches
    double val_acc;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStat> history;
};

// Mini-batches of graphs with the loss weighted by node count; DropEdge is redrawn
// per step from explicit (seed, epoch, step) counters, never applied at evaluation.
TrainResult train(const std::vector<GraphExample>& train_set,
                  const std::vector<GraphExample>& val_set, const TrainConfig& config,
                  int hidden = 256, int n_blocks = 5, int n_classes = kNumClasses);

// Argmax per node, ties toward the lower class id.
std::vector<int> predict(const Matrix& logits);
std::vector<int> predict(const AirwayGraph& graph, const ModelParams& params);

double node_accuracy(const std::vector<GraphExample>& set, const ModelParams& params);

// Binary format: "AWP1" magic, u32 f_in/hidden/n_classes/n_blocks, then the tensors
// as little-endian doubles in declaration order.
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

void save_history(const std::vector<EpochStat>& history, const std::filesystem::path& path);

}  // namespace airway::gnn
