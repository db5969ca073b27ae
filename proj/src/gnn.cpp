#include "airway/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace airway::gnn {

void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul_nn: shape mismatch");
    if (c.rows != a.rows || c.cols != b.cols) c = Matrix(a.rows, b.cols);
    else if (!accumulate) c.zero();
    for (int i = 0; i < a.rows; ++i) {
        double* crow = c.row(i);
        const double* arow = a.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: shape mismatch");
    if (c.rows != a.cols || c.cols != b.cols) c = Matrix(a.cols, b.cols);
    else if (!accumulate) c.zero();
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        const double* brow = b.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            double* crow = c.row(k);
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: shape mismatch");
    if (c.rows != a.rows || c.cols != b.rows) c = Matrix(a.rows, b.rows);
    else if (!accumulate) c.zero();
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double dot = 0.0;
            for (int k = 0; k < a.cols; ++k) dot += arow[k] * brow[k];
            crow[j] += dot;
        }
    }
}

namespace {

constexpr double kGraphNormEps = 1e-5;

struct Adjacency {
    std::vector<int> offsets;    // n+1
    std::vector<int> neighbors;  // both directions of every undirected edge
};

Adjacency build_adjacency(int n, const EdgeList& edges) {
    Adjacency adj;
    adj.offsets.assign(n + 1, 0);
    for (auto [a, b] : edges) {
        if (a < 0 || b < 0 || a >= n || b >= n)
            throw std::invalid_argument("edge references an invalid node");
        adj.offsets[a + 1]++;
        adj.offsets[b + 1]++;
    }
    for (int i = 0; i < n; ++i) adj.offsets[i + 1] += adj.offsets[i];
    adj.neighbors.resize(adj.offsets[n]);
    std::vector<int> cursor(adj.offsets.begin(), adj.offsets.end() - 1);
    for (auto [a, b] : edges) {
        adj.neighbors[cursor[a]++] = b;
        adj.neighbors[cursor[b]++] = a;
    }
    return adj;
}

// agg_i = mean of neighbor rows (zero for isolated nodes)
Matrix neighbor_mean(const Matrix& x, const Adjacency& adj) {
    Matrix agg(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        int begin = adj.offsets[i], end = adj.offsets[i + 1];
        if (begin == end) continue;
        double* out = agg.row(i);
        for (int e = begin; e < end; ++e) {
            const double* nrow = x.row(adj.neighbors[e]);
            for (int j = 0; j < x.cols; ++j) out[j] += nrow[j];
        }
        const double inv = 1.0 / (end - begin);
        for (int j = 0; j < x.cols; ++j) out[j] *= inv;
    }
    return agg;
}

// d(neighbor_mean)/dx: distribute each row i of g, scaled by 1/deg(i), to i's neighbors.
void neighbor_mean_backward(const Matrix& g, const Adjacency& adj, Matrix& dx) {
    for (int i = 0; i < g.rows; ++i) {
        int begin = adj.offsets[i], end = adj.offsets[i + 1];
        if (begin == end) continue;
        const double inv = 1.0 / (end - begin);
        const double* grow = g.row(i);
        for (int e = begin; e < end; ++e) {
            double* out = dx.row(adj.neighbors[e]);
            for (int j = 0; j < g.cols; ++j) out[j] += inv * grow[j];
        }
    }
}

void add_bias(Matrix& m, const std::vector<double>& bias) {
    if (static_cast<int>(bias.size()) != m.cols)
        throw std::invalid_argument("bias length mismatch");
    for (int i = 0; i < m.rows; ++i) {
        double* row = m.row(i);
        for (int j = 0; j < m.cols; ++j) row[j] += bias[j];
    }
}

struct NormStats {
    std::vector<double> mu, sigma;  // per feature
};

Matrix graph_norm_stats(const Matrix& x, const GraphNormParams& p, NormStats& stats) {
    const int n = x.rows, f = x.cols;
    if (static_cast<int>(p.gamma.size()) != f || static_cast<int>(p.beta.size()) != f ||
        static_cast<int>(p.alpha.size()) != f)
        throw std::invalid_argument("graph_norm: parameter length mismatch");
    stats.mu.assign(f, 0.0);
    stats.sigma.assign(f, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* row = x.row(i);
        for (int j = 0; j < f; ++j) stats.mu[j] += row[j];
    }
    for (int j = 0; j < f; ++j) stats.mu[j] /= n;

    Matrix out(n, f);
    std::vector<double> var(f, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* row = x.row(i);
        double* orow = out.row(i);
        for (int j = 0; j < f; ++j) {
            double d = row[j] - p.alpha[j] * stats.mu[j];
            orow[j] = d;  // deviation, rescaled below
            var[j] += d * d;
        }
    }
    for (int j = 0; j < f; ++j) stats.sigma[j] = std::sqrt(var[j] / n + kGraphNormEps);
    for (int i = 0; i < n; ++i) {
        double* orow = out.row(i);
        for (int j = 0; j < f; ++j) orow[j] = p.gamma[j] * orow[j] / stats.sigma[j] + p.beta[j];
    }
    return out;
}

}  // namespace

Matrix mean_sage(const Matrix& x, const EdgeList& edges, const Matrix& w_self,
                 const Matrix& w_neigh, const std::vector<double>& bias) {
    if (w_self.rows != x.cols || w_neigh.rows != x.cols || w_self.cols != w_neigh.cols)
        throw std::invalid_argument("mean_sage: shape mismatch");
    Adjacency adj = build_adjacency(x.rows, edges);
    Matrix agg = neighbor_mean(x, adj);
    Matrix out;
    matmul_nn(x, w_self, out);
    matmul_nn(agg, w_neigh, out, /*accumulate=*/true);
    add_bias(out, bias);
    return out;
}

Matrix graph_norm(const Matrix& x, const GraphNormParams& p) {
    NormStats stats;
    return graph_norm_stats(x, p, stats);
}

Matrix conv_norm_block(const Matrix& h, const EdgeList& edges, const BlockParams& p,
                       bool is_first) {
    Matrix out = graph_norm(mean_sage(h, edges, p.w_self, p.w_neigh, p.bias), p.norm);
    for (double& v : out.d) v = std::max(v, 0.0);
    if (!is_first) {
        if (out.rows != h.rows || out.cols != h.cols)
            throw std::invalid_argument("conv_norm_block: residual shape mismatch");
        for (std::size_t i = 0; i < out.d.size(); ++i) out.d[i] += h.d[i];
    }
    return out;
}

Matrix node_features(const AirwayGraph& graph, FeatureMode mode) {
    const int n = static_cast<int>(graph.nodes.size());
    if (n == 0) throw std::invalid_argument("node_features: empty graph");
    const int pf = static_cast<int>(graph.nodes[0].point_feat.size());
    const int vf = mode == FeatureMode::PointVoxel
                       ? static_cast<int>(graph.nodes[0].voxel_feat.size())
                       : 0;
    Matrix x(n, pf + vf);
    for (int i = 0; i < n; ++i) {
        const auto& node = graph.nodes[i];
        if (static_cast<int>(node.point_feat.size()) != pf ||
            (mode == FeatureMode::PointVoxel && static_cast<int>(node.voxel_feat.size()) != vf))
            throw std::invalid_argument("node_features: inconsistent feature lengths");
        double* row = x.row(i);
        std::copy(node.point_feat.begin(), node.point_feat.end(), row);
        if (vf) std::copy(node.voxel_feat.begin(), node.voxel_feat.end(), row + pf);
    }
    return x;
}

namespace {

struct ForwardCache {
    Matrix x;
    Matrix h0;                     // after input projection
    std::vector<Matrix> agg;       // per block
    std::vector<Matrix> pre_norm;  // mean_sage output
    std::vector<NormStats> stats;
    std::vector<Matrix> activated; // relu(graph_norm(...))
    std::vector<Matrix> h;         // block outputs incl. residual
    Adjacency adj;
};

Matrix forward_impl(const Matrix& x, const EdgeList& edges, const ModelParams& params,
                    ForwardCache* cache) {
    if (x.cols != params.f_in)
        throw std::invalid_argument("forward: feature length mismatch (got " +
                                    std::to_string(x.cols) + ", expected " +
                                    std::to_string(params.f_in) + ")");
    Adjacency adj = build_adjacency(x.rows, edges);

    Matrix h;
    matmul_nn(x, params.w_in, h);
    add_bias(h, params.b_in);
    if (cache) {
        cache->x = x;
        cache->h0 = h;
        cache->adj = adj;
    }

    for (const auto& block : params.blocks) {
        Matrix agg = neighbor_mean(h, adj);
        Matrix pre;
        matmul_nn(h, block.w_self, pre);
        matmul_nn(agg, block.w_neigh, pre, /*accumulate=*/true);
        add_bias(pre, block.bias);
        NormStats stats;
        Matrix act = graph_norm_stats(pre, block.norm, stats);
        for (double& v : act.d) v = std::max(v, 0.0);
        Matrix next = act;
        for (std::size_t i = 0; i < next.d.size(); ++i) next.d[i] += h.d[i];
        if (cache) {
            cache->agg.push_back(std::move(agg));
            cache->pre_norm.push_back(std::move(pre));
            cache->stats.push_back(std::move(stats));
            cache->activated.push_back(std::move(act));
            cache->h.push_back(next);
        }
        h = std::move(next);
    }

    Matrix z;
    matmul_nn(h, params.w_out, z);
    add_bias(z, params.b_out);
    return z;
}

}  // namespace

Matrix forward(const Matrix& x, const EdgeList& edges, const ModelParams& params) {
    return forward_impl(x, edges, params, nullptr);
}

Matrix forward(const AirwayGraph& graph, const ModelParams& params) {
    return forward_impl(node_features(graph), graph.edges, params, nullptr);
}

LossGrad softmax_ce(const Matrix& z, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != z.rows)
        throw std::invalid_argument("softmax_ce: label count mismatch");
    LossGrad res;
    res.dz = Matrix(z.rows, z.cols);
    const double inv_n = 1.0 / z.rows;
    for (int i = 0; i < z.rows; ++i) {
        int y = labels[i];
        if (y < 0 || y >= z.cols) throw std::invalid_argument("softmax_ce: label out of range");
        const double* row = z.row(i);
        double mx = row[0];
        for (int j = 1; j < z.cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        double* drow = res.dz.row(i);
        for (int j = 0; j < z.cols; ++j) {
            drow[j] = std::exp(row[j] - mx);
            sum += drow[j];
        }
        res.loss += -(row[y] - mx - std::log(sum)) * inv_n;
        for (int j = 0; j < z.cols; ++j) drow[j] = (drow[j] / sum - (j == y ? 1.0 : 0.0)) * inv_n;
    }
    return res;
}

LossGrad ncr_loss(const Matrix& z, const std::vector<int>& labels, const EdgeList& edges) {
    if (static_cast<int>(labels.size()) != z.rows)
        throw std::invalid_argument("ncr_loss: label count mismatch");
    LossGrad res;
    res.dz = Matrix(z.rows, z.cols);
    if (edges.empty()) return res;
    const double inv_m = 1.0 / static_cast<double>(edges.size());
    std::vector<double> diff(z.cols);
    for (auto [a, b] : edges) {
        if (labels[a] != labels[b]) continue;
        const double* za = z.row(a);
        const double* zb = z.row(b);
        double norm2 = 0.0;
        for (int j = 0; j < z.cols; ++j) {
            diff[j] = za[j] - zb[j];
            norm2 += diff[j] * diff[j];
        }
        double norm = std::sqrt(norm2);
        res.loss += norm * inv_m;
        if (norm == 0.0) continue;  // subgradient 0 at equality
        double* da = res.dz.row(a);
        double* db = res.dz.row(b);
        const double s = inv_m / norm;
        for (int j = 0; j < z.cols; ++j) {
            da[j] += s * diff[j];
            db[j] -= s * diff[j];
        }
    }
    return res;
}

LossGrad total_loss(const Matrix& z, const std::vector<int>& labels, const EdgeList& edges,
                    double alpha_ncr) {
    LossGrad ce = softmax_ce(z, labels);
    if (alpha_ncr == 0.0) return ce;
    LossGrad ncr = ncr_loss(z, labels, edges);
    ce.loss += alpha_ncr * ncr.loss;
    for (std::size_t i = 0; i < ce.dz.d.size(); ++i) ce.dz.d[i] += alpha_ncr * ncr.dz.d[i];
    return ce;
}

EdgeList dropedge(const EdgeList& edges, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropedge: p must be in [0,1)");
    if (p == 0.0) return edges;
    EdgeList kept;
    kept.reserve(edges.size());
    for (const auto& e : edges)
        if (rng.uniform() >= p) kept.push_back(e);
    return kept;
}

namespace {

void graph_norm_backward_core(const Matrix& dg, const Matrix& pre, const NormStats& stats,
                         const GraphNormParams& p, Matrix& dpre,
                         std::vector<double>& dgamma, std::vector<double>& dbeta,
                         std::vector<double>& dalpha, double weight) {
    const int n = pre.rows, f = pre.cols;
    dpre = Matrix(n, f);
    // Columnwise: d_i = x_i - alpha*mu, y_i = gamma*d_i/sigma + beta.
    for (int j = 0; j < f; ++j) {
        const double mu = stats.mu[j];
        const double sigma = stats.sigma[j];
        const double gamma = p.gamma[j];
        const double alpha = p.alpha[j];
        double sum_g = 0.0, sum_gd = 0.0;
        for (int i = 0; i < n; ++i) {
            double d = pre.at(i, j) - alpha * mu;
            double g = dg.at(i, j);
            sum_g += g;
            sum_gd += g * d;
        }
        dgamma[j] += weight * sum_gd / sigma;
        dbeta[j] += weight * sum_g;

        // dL/dd_i = gamma*(g_i/sigma - d_i*sum_gd/(n*sigma^3))
        const double c1 = gamma / sigma;
        const double c2 = gamma * sum_gd / (n * sigma * sigma * sigma);
        double sum_dd = 0.0;
        for (int i = 0; i < n; ++i) {
            double d = pre.at(i, j) - alpha * mu;
            double dd = c1 * dg.at(i, j) - c2 * d;
            dpre.at(i, j) = dd;  // direct term; mean coupling applied below
            sum_dd += dd;
        }
        dalpha[j] += weight * (-mu) * sum_dd;
        // dL/dx_i = dd_i - (alpha/n) * sum_j dd_j
        const double c3 = alpha * sum_dd / n;
        for (int i = 0; i < n; ++i) dpre.at(i, j) -= c3;
    }
}

void accumulate_colsum(const Matrix& m, std::vector<double>& out, double weight) {
    for (int i = 0; i < m.rows; ++i) {
        const double* row = m.row(i);
        for (int j = 0; j < m.cols; ++j) out[j] += weight * row[j];
    }
}

void matmul_tn_weighted(const Matrix& a, const Matrix& b, Matrix& c, double weight) {
    // c += weight * a^T * b
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        const double* brow = b.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double av = weight * arow[k];
            if (av == 0.0) continue;
            double* crow = c.row(k);
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

MeanSageGrads mean_sage_backward(const Matrix& x, const EdgeList& edges, const Matrix& w_self,
                                 const Matrix& w_neigh, const Matrix& dout) {
    Adjacency adj = build_adjacency(x.rows, edges);
    Matrix agg = neighbor_mean(x, adj);

    MeanSageGrads g;
    matmul_tn(x, dout, g.dw_self);
    matmul_tn(agg, dout, g.dw_neigh);
    g.dbias.assign(dout.cols, 0.0);
    accumulate_colsum(dout, g.dbias, 1.0);
    matmul_nt(dout, w_self, g.dx);
    Matrix dagg;
    matmul_nt(dout, w_neigh, dagg);
    neighbor_mean_backward(dagg, adj, g.dx);
    return g;
}

GraphNormGrads graph_norm_backward(const Matrix& x, const GraphNormParams& p,
                                   const Matrix& dout) {
    NormStats stats;
    graph_norm_stats(x, p, stats);
    GraphNormGrads g;
    g.dparams.gamma.assign(x.cols, 0.0);
    g.dparams.beta.assign(x.cols, 0.0);
    g.dparams.alpha.assign(x.cols, 0.0);
    graph_norm_backward_core(dout, x, stats, p, g.dx, g.dparams.gamma, g.dparams.beta,
                             g.dparams.alpha, 1.0);
    return g;
}

double backward(const Matrix& x, const EdgeList& edges, const std::vector<int>& labels,
                const ModelParams& params, double alpha_ncr, double weight,
                ModelParams& grads) {
    ForwardCache cache;
    Matrix z = forward_impl(x, edges, params, &cache);
    LossGrad lg = total_loss(z, labels, edges, alpha_ncr);

    const int n_blocks = static_cast<int>(params.blocks.size());
    const Matrix& h_last = n_blocks > 0 ? cache.h.back() : cache.h0;

    // Head.
    matmul_tn_weighted(h_last, lg.dz, grads.w_out, weight);
    accumulate_colsum(lg.dz, grads.b_out, weight);
    Matrix dh;
    matmul_nt(lg.dz, params.w_out, dh);

    Matrix dpre, dagg, scratch;
    for (int k = n_blocks - 1; k >= 0; --k) {
        const auto& block = params.blocks[k];
        auto& gblock = grads.blocks[k];
        const Matrix& h_prev = k > 0 ? cache.h[k - 1] : cache.h0;

        // Residual: dh flows to both the branch and h_prev.
        Matrix dact = dh;  // gradient into relu output
        for (std::size_t i = 0; i < dact.d.size(); ++i)
            if (cache.activated[k].d[i] <= 0.0) dact.d[i] = 0.0;

        graph_norm_backward_core(dact, cache.pre_norm[k], cache.stats[k], block.norm, dpre,
                            gblock.norm.gamma, gblock.norm.beta, gblock.norm.alpha, weight);

        matmul_tn_weighted(h_prev, dpre, gblock.w_self, weight);
        matmul_tn_weighted(cache.agg[k], dpre, gblock.w_neigh, weight);
        accumulate_colsum(dpre, gblock.bias, weight);

        // dh_prev = dpre*W_self^T + spread(dpre*W_neigh^T) + residual passthrough
        matmul_nt(dpre, block.w_self, scratch);
        matmul_nt(dpre, block.w_neigh, dagg);
        neighbor_mean_backward(dagg, cache.adj, scratch);
        for (std::size_t i = 0; i < dh.d.size(); ++i) dh.d[i] += scratch.d[i];
    }

    matmul_tn_weighted(cache.x, dh, grads.w_in, weight);
    accumulate_colsum(dh, grads.b_in, weight);
    return lg.loss;
}

ModelParams init_params(int f_in, int hidden, int n_classes, int n_blocks, std::uint64_t seed) {
    if (n_blocks < 2) throw std::invalid_argument("init_params: need at least 2 blocks");
    ModelParams p;
    p.f_in = f_in;
    p.hidden = hidden;
    p.n_classes = n_classes;
    p.n_blocks = n_blocks;

    std::uint64_t stream = 0;
    auto fill = [&](Matrix& m, int rows, int cols) {
        m = Matrix(rows, cols);
        Rng rng(Rng::derive(seed, stream++));
        const double scale = std::sqrt(2.0 / (rows + cols));
        for (double& v : m.d) v = scale * rng.normal();
    };
    fill(p.w_in, f_in, hidden);
    p.b_in.assign(hidden, 0.0);
    for (int k = 0; k + 1 < n_blocks; ++k) {
        BlockParams b;
        fill(b.w_self, hidden, hidden);
        fill(b.w_neigh, hidden, hidden);
        b.bias.assign(hidden, 0.0);
        b.norm.gamma.assign(hidden, 1.0);
        b.norm.beta.assign(hidden, 0.0);
        b.norm.alpha.assign(hidden, 1.0);
        p.blocks.push_back(std::move(b));
    }
    fill(p.w_out, hidden, n_classes);
    p.b_out.assign(n_classes, 0.0);
    return p;
}

ModelParams zeros_like(const ModelParams& p) {
    ModelParams z = p;
    z.w_in.zero();
    std::fill(z.b_in.begin(), z.b_in.end(), 0.0);
    for (auto& b : z.blocks) {
        b.w_self.zero();
        b.w_neigh.zero();
        std::fill(b.bias.begin(), b.bias.end(), 0.0);
        std::fill(b.norm.gamma.begin(), b.norm.gamma.end(), 0.0);
        std::fill(b.norm.beta.begin(), b.norm.beta.end(), 0.0);
        std::fill(b.norm.alpha.begin(), b.norm.alpha.end(), 0.0);
    }
    z.w_out.zero();
    std::fill(z.b_out.begin(), z.b_out.end(), 0.0);
    return z;
}

namespace {

// Visits every parameter tensor of a ModelParams trio in declaration order.
template <typename Fn>
void for_each_tensor(ModelParams& a, Fn&& fn) {
    fn(a.w_in.d);
    fn(a.b_in);
    for (auto& b : a.blocks) {
        fn(b.w_self.d);
        fn(b.w_neigh.d);
        fn(b.bias);
        fn(b.norm.gamma);
        fn(b.norm.beta);
        fn(b.norm.alpha);
    }
    fn(a.w_out.d);
    fn(a.b_out);
}

template <typename Fn>
void for_each_tensor3(ModelParams& a, const ModelParams& b, ModelParams& m, ModelParams& v,
                      Fn&& fn) {
    std::vector<std::vector<double>*> ta, tm, tv;
    std::vector<const std::vector<double>*> tb;
    for_each_tensor(a, [&](std::vector<double>& t) { ta.push_back(&t); });
    for_each_tensor(const_cast<ModelParams&>(b),
                    [&](std::vector<double>& t) { tb.push_back(&t); });
    for_each_tensor(m, [&](std::vector<double>& t) { tm.push_back(&t); });
    for_each_tensor(v, [&](std::vector<double>& t) { tv.push_back(&t); });
    for (std::size_t i = 0; i < ta.size(); ++i) fn(*ta[i], *tb[i], *tm[i], *tv[i]);
}

}  // namespace

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
    if (state.t == 0) {
        state.m = zeros_like(params);
        state.v = zeros_like(params);
    }
    state.t++;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for_each_tensor3(params, grads, state.m, state.v,
                     [&](std::vector<double>& p, const std::vector<double>& g,
                         std::vector<double>& m, std::vector<double>& v) {
                         for (std::size_t i = 0; i < p.size(); ++i) {
                             m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                             v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                             const double mhat = m[i] / bc1;
                             const double vhat = v[i] / bc2;
                             p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
                         }
                     });
}

TrainConfig parse_train_config(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": expected key = value");
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "lr") cfg.lr = std::stod(value);
            else if (key == "epochs") cfg.epochs = std::stoi(value);
            else if (key == "batch_size") cfg.batch_size = std::stoi(value);
            else if (key == "dropedge_p") cfg.dropedge_p = std::stod(value);
            else if (key == "alpha_ncr") cfg.alpha_ncr = std::stod(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else throw std::runtime_error("config: unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw std::runtime_error("config: invalid value for '" + key + "'");
        }
    }
    if (cfg.lr <= 0.0) throw std::runtime_error("config: lr must be > 0");
    if (cfg.dropedge_p < 0.0 || cfg.dropedge_p >= 1.0)
        throw std::runtime_error("config: dropedge_p must be in [0,1)");
    if (cfg.epochs < 1) throw std::runtime_error("config: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::runtime_error("config: batch_size must be >= 1");
    return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_train_config(text);
}

GraphExample to_example(const AirwayGraph& graph, FeatureMode mode) {
    GraphExample ex;
    ex.x = node_features(graph, mode);
    ex.edges = graph.edges;
    ex.labels.reserve(graph.nodes.size());
    for (const auto& node : graph.nodes) ex.labels.push_back(node.label.value_or(-1));
    return ex;
}

std::vector<int> predict(const Matrix& logits) {
    std::vector<int> out(logits.rows);
    for (int i = 0; i < logits.rows; ++i) {
        const double* row = logits.row(i);
        int best = 0;
        for (int j = 1; j < logits.cols; ++j)
            if (row[j] > row[best]) best = j;  // ties keep the lower id
        out[i] = best;
    }
    return out;
}

std::vector<int> predict(const AirwayGraph& graph, const ModelParams& params) {
    return predict(forward(graph, params));
}

double node_accuracy(const std::vector<GraphExample>& set, const ModelParams& params) {
    std::int64_t correct = 0, total = 0;
    for (const auto& ex : set) {
        Matrix z = forward(ex.x, ex.edges, params);
        std::vector<int> pred = predict(z);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            correct += pred[i] == ex.labels[i];
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train(const std::vector<GraphExample>& train_set,
                  const std::vector<GraphExample>& val_set, const TrainConfig& config,
                  int hidden, int n_blocks, int n_classes) {
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    const int f_in = train_set[0].x.cols;
    for (const auto& ex : train_set)
        if (ex.x.cols != f_in) throw std::invalid_argument("train: inconsistent feature dims");

    TrainResult result;
    result.params = init_params(f_in, hidden, n_classes, n_blocks, Rng::derive(config.seed, 0));
    AdamState state;
    ModelParams grads = zeros_like(result.params);

    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        // (seed, epoch) stream for the shuffle; (seed, epoch, step) streams for DropEdge
        Rng perm_rng(Rng::derive(config.seed, 0x50000000ULL + static_cast<std::uint64_t>(epoch)));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[perm_rng.uniform_int(i + 1)]);

        double epoch_loss = 0.0;
        std::int64_t epoch_nodes = 0;
        int step = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++step) {
            const std::size_t end = std::min(begin + config.batch_size, order.size());
            std::int64_t batch_nodes = 0;
            for (std::size_t i = begin; i < end; ++i)
                batch_nodes += train_set[order[i]].x.rows;

            for_each_tensor(grads, [](std::vector<double>& t) {
                std::fill(t.begin(), t.end(), 0.0);
            });
            Rng edge_rng(Rng::derive(config.seed,
                                     0xd0000000ULL + static_cast<std::uint64_t>(epoch) * 100003ULL +
                                         static_cast<std::uint64_t>(step)));
            double batch_loss = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                const auto& ex = train_set[order[i]];
                EdgeList edges = config.dropedge_p > 0.0
                                     ? dropedge(ex.edges, config.dropedge_p, edge_rng)
                                     : ex.edges;
                const double w = static_cast<double>(ex.x.rows) / static_cast<double>(batch_nodes);
                batch_loss += w * backward(ex.x, edges, ex.labels, result.params,
                                           config.alpha_ncr, w, grads);
            }
            adam_step(result.params, grads, state, config.lr);
            epoch_loss += batch_loss * static_cast<double>(batch_nodes);
            epoch_nodes += batch_nodes;
        }

        EpochStat stat;
        stat.epoch = epoch;
        stat.train_loss = epoch_loss / static_cast<double>(epoch_nodes);
        stat.val_acc = node_accuracy(val_set.empty() ? train_set : val_set, result.params);
        result.history.push_back(stat);
    }
    return result;
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("model file: truncated header");
    return v;
}

}  // namespace

void save_params(const ModelParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write("AWP1", 4);
    write_u32(out, static_cast<std::uint32_t>(params.f_in));
    write_u32(out, static_cast<std::uint32_t>(params.hidden));
    write_u32(out, static_cast<std::uint32_t>(params.n_classes));
    write_u32(out, static_cast<std::uint32_t>(params.n_blocks));
    for_each_tensor(const_cast<ModelParams&>(params), [&](std::vector<double>& t) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    });
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

ModelParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::strncmp(magic, "AWP1", 4) != 0)
        throw std::runtime_error("model file: bad magic");
    int f_in = static_cast<int>(read_u32(in));
    int hidden = static_cast<int>(read_u32(in));
    int n_classes = static_cast<int>(read_u32(in));
    int n_blocks = static_cast<int>(read_u32(in));
    if (f_in < 1 || hidden < 1 || n_classes < 1 || n_blocks < 2)
        throw std::runtime_error("model file: invalid shape header");
    ModelParams params = init_params(f_in, hidden, n_classes, n_blocks, 0);
    for_each_tensor(params, [&](std::vector<double>& t) {
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    });
    if (!in) throw std::runtime_error("model file: truncated tensors");
    return params;
}

void save_history(const std::vector<EpochStat>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    char buf[160];
    for (const auto& s : history) {
        std::snprintf(buf, sizeof(buf),
                      "{\"epoch\": %d, \"train_loss\": %.9g, \"val_acc\": %.9g}", s.epoch,
                      s.train_loss, s.val_acc);
        out << buf << "\n";
    }
}

}  // namespace airway::gnn
