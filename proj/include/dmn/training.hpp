#ifndef DMN_TRAINING_HPP
#define DMN_TRAINING_HPP

// Offline training: dataset handling, loss, hand-rolled adjoint gradient of
// the full forward pass, mini-batch SGD, and synthetic dataset generation.
//
// Loss over a batch of N_s samples:
//
//   L = 1/(2 N_s) sum_s |C_dns - DMN(C_p1, C_p2)|^2 / |C_dns|^2
//       + lambda (sum_j ReLU(z_j) - S0)^2
//
// with Frobenius norms. The regularizer pins the total-weight gauge; the
// default target is S0 = 2^(N-2).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dmn/building_block.hpp"
#include "dmn/errors.hpp"
#include "dmn/mandel.hpp"
#include "dmn/network.hpp"
#include "dmn/oracles.hpp"
#include "dmn/parallel.hpp"
#include "dmn/rng.hpp"

namespace dmn {

struct TrainingSample {
    Mat6 c_p1, c_p2, c_dns;
};

using Dataset = std::vector<TrainingSample>;

enum class GradientMode { Adjoint, FiniteDifference };

struct TrainConfig {
    double lr = 0.01;
    double lr_decay = 0.98;       // multiplicative, per epoch
    int batch_size = 16;
    int epochs = 500;
    double lambda_reg = 0.01;
    double weight_target = 0.0;   // S0; <= 0 means 2^(depth-2)
    double momentum = 0.0;
    double validation_fraction = 0.1;
    std::uint64_t seed = 0;
    GradientMode gradient_mode = GradientMode::Adjoint;
    unsigned threads = 0;         // 0: DMN_THREADS env var, then all cores
};

inline double resolve_weight_target(const TrainConfig& cfg, int depth) {
    return cfg.weight_target > 0.0 ? cfg.weight_target : std::ldexp(1.0, depth - 2);
}

inline void validate(const TrainConfig& cfg) {
    if (!(cfg.lr >= 0.0)) throw InputError("learning rate must be non-negative");
    if (!(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0)) throw InputError("lr decay must lie in (0, 1]");
    if (cfg.batch_size < 1) throw InputError("batch size must be >= 1");
    if (cfg.epochs < 0) throw InputError("epoch count must be >= 0");
    if (!(cfg.lambda_reg >= 0.0)) throw InputError("regularization coefficient must be >= 0");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw InputError("momentum must lie in [0, 1)");
    if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0))
        throw InputError("validation fraction must lie in [0, 1)");
}

struct LossBreakdown {
    double total = 0.0;
    double mean_stiff = 0.0;
    double reg = 0.0;
};

struct ParamGradient {
    std::vector<double> dz;
    std::vector<Angles> dangles;

    static ParamGradient zeros(int depth) {
        ParamGradient g;
        g.dz.assign(leaf_count(depth), 0.0);
        g.dangles.assign(block_count(depth), Angles{});
        return g;
    }
    ParamGradient& operator+=(const ParamGradient& o) {
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += o.dz[i];
        for (std::size_t i = 0; i < dangles.size(); ++i) {
            dangles[i].alpha += o.dangles[i].alpha;
            dangles[i].beta += o.dangles[i].beta;
            dangles[i].gamma += o.dangles[i].gamma;
        }
        return *this;
    }
    ParamGradient& operator*=(double s) {
        for (double& v : dz) v *= s;
        for (Angles& a : dangles) {
            a.alpha *= s;
            a.beta *= s;
            a.gamma *= s;
        }
        return *this;
    }
    double max_abs() const {
        double m = 0.0;
        for (double v : dz) m = std::max(m, std::abs(v));
        for (const Angles& a : dangles)
            m = std::max({m, std::abs(a.alpha), std::abs(a.beta), std::abs(a.gamma)});
        return m;
    }
    bool finite() const {
        for (double v : dz)
            if (!std::isfinite(v)) return false;
        for (const Angles& a : dangles)
            if (!(std::isfinite(a.alpha) && std::isfinite(a.beta) && std::isfinite(a.gamma))) return false;
        return true;
    }
};

// --- loss ------------------------------------------------------------------------

inline double sample_stiff_loss(const DmnParams& p, const TrainingSample& s, ForwardTrace& trace) {
    forward_with_trace(p, s.c_p1, s.c_p2, trace);
    const Mat6 diff = trace.root() - s.c_dns;
    const double den = frobenius(s.c_dns);
    return frob_inner(diff, diff) / (den * den);
}

inline double regularizer(const DmnParams& p, double lambda, double s0) {
    double wsum = 0.0;
    for (double z : p.z) wsum += z > 0.0 ? z : 0.0;
    const double d = wsum - s0;
    return lambda * d * d;
}

inline LossBreakdown loss(const DmnParams& p, const Dataset& batch, double lambda, double s0) {
    if (batch.empty()) throw InputError("loss requires a non-empty batch");
    LossBreakdown out;
    ForwardTrace trace;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        double l = 0.0;
        try {
            l = sample_stiff_loss(p, batch[i], trace);
        } catch (const Error& e) {
            throw Error(std::string(e.what()) + " (sample " + std::to_string(i) + ")");
        }
        out.mean_stiff += l;
    }
    out.mean_stiff /= static_cast<double>(batch.size());
    out.reg = regularizer(p, lambda, s0);
    out.total = 0.5 * out.mean_stiff + out.reg;
    return out;
}

// --- adjoint gradient ----------------------------------------------------------------

namespace detail {

// Reverse sweep through one recorded forward pass. g_seed is dL/dC_root; the
// z- and angle-gradients of that scalar are accumulated into `grad`.
inline void backward_sample(const DmnParams& p, const ForwardTrace& trace, const Mat6& g_seed, ParamGradient& grad,
                            std::vector<Mat6>& adj_out, std::vector<double>& adj_w) {
    const std::size_t nblocks = block_count(p.depth);
    adj_out.assign(nblocks, Mat6{});
    adj_w.assign((std::size_t{2} << p.depth) - 1, 0.0);
    adj_out[0] = g_seed;

    for (int layer = 1; layer <= p.depth; ++layer) {
        const std::size_t nk = std::size_t{1} << (layer - 1);
        for (std::size_t k = 1; k <= nk; ++k) {
            const std::size_t bi = node_index(layer, k);
            const BlockTrace& bt = trace.blocks[bi];
            const std::size_t child_node_l = node_index(layer + 1, 2 * k - 1);
            const std::size_t child_node_r = node_index(layer + 1, 2 * k);

            if (bt.kind == BlockTrace::Kind::Dead) continue;

            // Weight-sum rule w_parent = w_left + w_right.
            adj_w[child_node_l] += adj_w[bi];
            adj_w[child_node_r] += adj_w[bi];

            const Mat6 g = symmetrize(adj_out[bi]);

            // Rotation backward: C_out = R C_raw R^T.
            const Angles& ang = p.angles[bi];
            const auto dr = rotation_matrix_derivs(ang.alpha, ang.beta, ang.gamma);
            const Mat6 c_raw_rt = matmul(bt.c_raw, transpose(bt.r));
            const Mat6 r_c_raw = matmul(bt.r, bt.c_raw);
            for (int t = 0; t < 3; ++t) {
                const Mat6 d1 = matmul(dr[t], c_raw_rt);
                const Mat6 d2 = matmul(r_c_raw, transpose(dr[t]));
                angle_component(grad.dangles[bi], t) += frob_inner(g, d1) + frob_inner(g, d2);
            }
            const Mat6 g_raw = matmul(transpose(bt.r), matmul(g, bt.r));

            if (bt.kind == BlockTrace::Kind::PassThrough) {
                const std::size_t live_node = bt.live_child == 0 ? child_node_l : child_node_r;
                if (layer < p.depth) adj_out[live_node] += g_raw;
                continue;
            }

            // Homogenization backward. Recompute the small pieces from the
            // cached inputs; they are cheap relative to caching them all.
            const Mat6& c1 = bt.c1;
            const Mat6& c2 = bt.c2;
            const double f1 = bt.f1, f2 = bt.f2;
            const InterfaceSolve& is = bt.interface;

            Mat6 adj_c1, adj_c2, adj_dc;
            adj_c2 += g_raw;

            // M_total = dC E + dC_n S (so that C_raw = C2 + f1 M_total).
            double adj_f1 = 0.0, adj_f2 = 0.0;
            {
                Mat6 m_total;
                for (int i = 0; i < 6; ++i) {
                    for (int j = 0; j < 6; ++j) {
                        double acc = 0.0;
                        for (int t = 0; t < 3; ++t) acc += (c1(i, kNormal[t]) - c2(i, kNormal[t])) * is.srow(t, j);
                        m_total(i, j) = acc;
                    }
                    for (int jp : kInPlane) m_total(i, jp) += c1(i, jp) - c2(i, jp);
                }
                adj_f1 += frob_inner(g_raw, m_total);
            }

            // Through M_total: adj_dC gets the identity-column part and the
            // dC_n S product part; S gets (dC_n)^T G.
            std::array<double, 18> adj_s{};
            for (int i = 0; i < 6; ++i) {
                for (int jp : kInPlane) adj_dc(i, jp) += f1 * g_raw(i, jp);
                for (int t = 0; t < 3; ++t) {
                    double acc_dc = 0.0;
                    for (int j = 0; j < 6; ++j) acc_dc += g_raw(i, j) * is.srow(t, j);
                    adj_dc(i, kNormal[t]) += f1 * acc_dc;
                }
            }
            for (int t = 0; t < 3; ++t)
                for (int j = 0; j < 6; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < 6; ++i) acc += (c1(i, kNormal[t]) - c2(i, kNormal[t])) * g_raw(i, j);
                    adj_s[6 * t + j] = f1 * acc;
                }

            // S = Ainv B: adj_B = Ainv adj_S, adj_Ainv = adj_S B^T,
            // adj_A = -Ainv adj_Ainv Ainv.
            std::array<double, 18> bmat{};
            for (int t = 0; t < 3; ++t) {
                const int row = kNormal[t];
                for (int pp = 0; pp < 3; ++pp)
                    bmat[6 * t + kInPlane[pp]] = -f2 * (c1(row, kInPlane[pp]) - c2(row, kInPlane[pp]));
                for (int nn = 0; nn < 3; ++nn) bmat[6 * t + kNormal[nn]] = c2(row, kNormal[nn]);
            }
            std::array<double, 18> adj_b{};
            for (int t = 0; t < 3; ++t)
                for (int j = 0; j < 6; ++j) {
                    double acc = 0.0;
                    for (int u = 0; u < 3; ++u) acc += is.ahat_inv(t, u) * adj_s[6 * u + j];
                    adj_b[6 * t + j] = acc;
                }
            Mat3 adj_ainv{};
            for (int t = 0; t < 3; ++t)
                for (int u = 0; u < 3; ++u) {
                    double acc = 0.0;
                    for (int j = 0; j < 6; ++j) acc += adj_s[6 * t + j] * bmat[6 * u + j];
                    adj_ainv(t, u) = acc;
                }
            Mat3 adj_a{};
            for (int t = 0; t < 3; ++t)
                for (int u = 0; u < 3; ++u) {
                    double acc = 0.0;
                    for (int a = 0; a < 3; ++a)
                        for (int b = 0; b < 3; ++b) acc += is.ahat_inv(t, a) * adj_ainv(a, b) * is.ahat_inv(b, u);
                    adj_a(t, u) = -acc;
                }

            // B's in-plane columns -f2 dC, normal columns C2.
            for (int t = 0; t < 3; ++t) {
                const int row = kNormal[t];
                for (int pp = 0; pp < 3; ++pp) {
                    const int col = kInPlane[pp];
                    adj_dc(row, col) += -f2 * adj_b[6 * t + col];
                    adj_f2 += -adj_b[6 * t + col] * (c1(row, col) - c2(row, col));
                }
                for (int nn = 0; nn < 3; ++nn) adj_c2(row, kNormal[nn]) += adj_b[6 * t + kNormal[nn]];
            }

            // A = f2 C1_nn + f1 C2_nn.
            for (int t = 0; t < 3; ++t)
                for (int u = 0; u < 3; ++u) {
                    adj_c1(kNormal[t], kNormal[u]) += f2 * adj_a(t, u);
                    adj_c2(kNormal[t], kNormal[u]) += f1 * adj_a(t, u);
                    adj_f2 += adj_a(t, u) * c1(kNormal[t], kNormal[u]);
                    adj_f1 += adj_a(t, u) * c2(kNormal[t], kNormal[u]);
                }

            // dC = C1 - C2.
            adj_c1 += adj_dc;
            adj_c2 -= adj_dc;

            // Fractions f1 = w1/(w1+w2), f2 = w2/(w1+w2).
            const double w1 = trace.weights.at(layer + 1, 2 * k - 1);
            const double w2 = trace.weights.at(layer + 1, 2 * k);
            const double ssum = w1 + w2;
            adj_w[child_node_l] += (adj_f1 - adj_f2) * w2 / (ssum * ssum);
            adj_w[child_node_r] += (adj_f2 - adj_f1) * w1 / (ssum * ssum);

            if (layer < p.depth) {
                adj_out[child_node_l] += adj_c1;
                adj_out[child_node_r] += adj_c2;
            }
        }
    }

    // ReLU: dead leaves get zero gradient (subgradient at 0 taken as 0).
    const std::size_t leaves = leaf_count(p.depth);
    for (std::size_t j = 0; j < leaves; ++j) {
        if (p.z[j] > 0.0) grad.dz[j] += adj_w[node_index(p.depth + 1, j + 1)];
    }
}

} // namespace detail

// Gradient of the stiffness loss of one sample (no regularizer, no batch
// normalization); workspace objects are reused across calls.
struct GradWorkspace {
    ForwardTrace trace;
    std::vector<Mat6> adj_out;
    std::vector<double> adj_w;
};

inline double sample_gradient(const DmnParams& p, const TrainingSample& s, ParamGradient& grad, GradWorkspace& ws) {
    forward_with_trace(p, s.c_p1, s.c_p2, ws.trace);
    const double den2 = frob_inner(s.c_dns, s.c_dns);
    const Mat6 diff = ws.trace.root() - s.c_dns;
    const Mat6 g_seed = (2.0 / den2) * diff;
    detail::backward_sample(p, ws.trace, g_seed, grad, ws.adj_out, ws.adj_w);
    return frob_inner(diff, diff) / den2;
}

// Exact reverse-accumulated gradient of the total loss over a batch.
// Per-sample gradients are computed independently (optionally in parallel)
// and combined with a fixed-order pairwise tree reduction, so the result is
// bit-identical for any thread count.
inline ParamGradient gradient(const DmnParams& p, const Dataset& batch, double lambda, double s0,
                              unsigned threads = 0, LossBreakdown* loss_out = nullptr) {
    if (batch.empty()) throw InputError("gradient requires a non-empty batch");
    validate(p);
    const std::size_t n = batch.size();
    std::vector<ParamGradient> per_sample(n, ParamGradient::zeros(p.depth));
    std::vector<double> stiff(n, 0.0);
    std::vector<std::string> sample_error(n);
    parallel_for(n, threads, [&](std::size_t i) {
        thread_local GradWorkspace ws;
        try {
            stiff[i] = sample_gradient(p, batch[i], per_sample[i], ws);
        } catch (const Error& e) {
            sample_error[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < n; ++i)
        if (!sample_error[i].empty()) throw Error(sample_error[i] + " (sample " + std::to_string(i) + ")");

    // Pairwise tree reduction in fixed order.
    for (std::size_t stride = 1; stride < n; stride *= 2) {
        for (std::size_t i = 0; i + stride < n; i += 2 * stride) per_sample[i] += per_sample[i + stride];
    }
    ParamGradient g = per_sample[0];
    g *= 1.0 / (2.0 * static_cast<double>(n));

    double wsum = 0.0;
    for (double z : p.z) wsum += z > 0.0 ? z : 0.0;
    const double reg_pull = 2.0 * lambda * (wsum - s0);
    for (std::size_t j = 0; j < p.z.size(); ++j)
        if (p.z[j] > 0.0) g.dz[j] += reg_pull;

    if (loss_out) {
        double mean = 0.0;
        for (double v : stiff) mean += v;
        mean /= static_cast<double>(n);
        loss_out->mean_stiff = mean;
        loss_out->reg = lambda * (wsum - s0) * (wsum - s0);
        loss_out->total = 0.5 * mean + loss_out->reg;
    }
    return g;
}

// Central finite differences on the total loss; the self-check path for the
// adjoint (h = 1e-6 * max(1, |theta|)).
inline ParamGradient gradient_fd(const DmnParams& p, const Dataset& batch, double lambda, double s0) {
    ParamGradient g = ParamGradient::zeros(p.depth);
    auto eval = [&](const DmnParams& q) { return loss(q, batch, lambda, s0).total; };
    DmnParams q = p;
    for (std::size_t j = 0; j < p.z.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(p.z[j]));
        q.z[j] = p.z[j] + h;
        const double lp = eval(q);
        q.z[j] = p.z[j] - h;
        const double lm = eval(q);
        q.z[j] = p.z[j];
        g.dz[j] = (lp - lm) / (2.0 * h);
    }
    for (std::size_t b = 0; b < p.angles.size(); ++b) {
        for (int t = 0; t < 3; ++t) {
            const double orig = angle_component(p.angles[b], t);
            const double h = 1e-6 * std::max(1.0, std::abs(orig));
            angle_component(q.angles[b], t) = orig + h;
            const double lp = eval(q);
            angle_component(q.angles[b], t) = orig - h;
            const double lm = eval(q);
            angle_component(q.angles[b], t) = orig;
            angle_component(g.dangles[b], t) = (lp - lm) / (2.0 * h);
        }
    }
    return g;
}

// --- initialization and data generation -------------------------------------------

// z ~ U(0.4, 0.6) * (2 S0 / 2^N) so the initial weight sum is close to S0;
// angles ~ U(-pi/4, pi/4).
inline DmnParams init_params(int depth, std::uint64_t seed) {
    if (depth < 1) throw InputError("network depth must be >= 1");
    Rng rng(derive_seed(seed, 0x696e6974));
    DmnParams p;
    p.depth = depth;
    const double s0 = std::ldexp(1.0, depth - 2);
    const double scale = 2.0 * s0 / static_cast<double>(leaf_count(depth));
    p.z.resize(leaf_count(depth));
    for (double& z : p.z) z = rng.uniform(0.4, 0.6) * scale;
    p.angles.resize(block_count(depth));
    const double a = 0.78539816339744830961566084581988;  // pi/4
    for (Angles& ang : p.angles) {
        ang.alpha = rng.uniform(-a, a);
        ang.beta = rng.uniform(-a, a);
        ang.gamma = rng.uniform(-a, a);
    }
    return p;
}

enum class DatasetKind { Teacher, LaminateOracle };

struct GeneratedDataset {
    Dataset samples;
    DatasetKind kind = DatasetKind::Teacher;
    DmnParams teacher;               // teacher kind only
    oracles::LaminateSpec laminate;  // laminate kind only (phases overwritten per query)
};

// Phase pairs: isotropic, log10(E1/E2) ~ U(-2, 2) with E2 = 1, Poisson
// ratios independent U(0.2, 0.45). C_dns comes from a fixed random teacher
// network or from the brute-force laminate oracle with one random normal
// direction and fraction drawn per dataset.
inline GeneratedDataset generate_dataset(DatasetKind kind, int n_samples, int depth, std::uint64_t seed) {
    if (n_samples < 1) throw InputError("dataset needs at least one sample");
    GeneratedDataset out;
    out.kind = kind;
    if (kind == DatasetKind::Teacher) {
        out.teacher = init_params(depth, derive_seed(seed, 0x7465616368));
    } else {
        Rng geo(derive_seed(seed, 0x6c616d));
        out.laminate.f1 = geo.uniform(0.1, 0.9);
        out.laminate.f2 = 1.0 - out.laminate.f1;
        out.laminate.angles.alpha = geo.uniform(-3.14159265358979323846, 3.14159265358979323846);
        out.laminate.angles.beta = geo.uniform(-3.14159265358979323846, 3.14159265358979323846);
        out.laminate.angles.gamma = geo.uniform(-3.14159265358979323846, 3.14159265358979323846);
    }
    Rng rng(derive_seed(seed, 0x70686173));
    out.samples.reserve(static_cast<std::size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
        TrainingSample ts;
        const double contrast = std::pow(10.0, rng.uniform(-2.0, 2.0));
        const IsotropicElastic m1{contrast, rng.uniform(0.2, 0.45)};
        const IsotropicElastic m2{1.0, rng.uniform(0.2, 0.45)};
        ts.c_p1 = iso_stiffness(m1);
        ts.c_p2 = iso_stiffness(m2);
        if (kind == DatasetKind::Teacher) {
            ts.c_dns = forward(out.teacher, ts.c_p1, ts.c_p2);
        } else {
            oracles::LaminateSpec spec = out.laminate;
            spec.c1 = ts.c_p1;
            spec.c2 = ts.c_p2;
            ts.c_dns = oracles::laminate_effective_stiffness(spec);
        }
        out.samples.push_back(ts);
    }
    return out;
}

// --- the SGD loop -----------------------------------------------------------------

struct TrainReport {
    std::vector<double> train_loss;  // per-epoch mean stiffness loss (training split)
    std::vector<double> val_loss;    // per-epoch mean stiffness loss (validation split)
    std::vector<double> reg;         // regularizer value at epoch end
    std::vector<double> vf1;         // learned phase-1 volume fraction at epoch end
    std::vector<double> epoch_seconds;
    int best_epoch = -1;
    double best_val = 0.0;
    double wall_seconds = 0.0;
};

namespace detail {

inline double mean_stiff_loss(const DmnParams& p, const Dataset& data, std::vector<std::size_t> idx,
                              unsigned threads, int epoch) {
    if (idx.empty()) return 0.0;
    // Canonical summation order: the reported mean must not depend on the
    // epoch's shuffle.
    std::sort(idx.begin(), idx.end());
    std::vector<double> vals(idx.size(), 0.0);
    std::vector<std::string> errs(idx.size());
    parallel_for(idx.size(), threads, [&](std::size_t i) {
        thread_local ForwardTrace trace;
        try {
            vals[i] = sample_stiff_loss(p, data[idx[i]], trace);
        } catch (const Error& e) {
            errs[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < idx.size(); ++i)
        if (!errs[i].empty())
            throw Error(errs[i] + " (epoch " + std::to_string(epoch) + ", sample " + std::to_string(idx[i]) + ")");
    double m = 0.0;
    for (double v : vals) m += v;
    return m / static_cast<double>(vals.size());
}

} // namespace detail

// Mini-batch SGD with per-epoch multiplicative learning-rate decay and
// best-validation checkpointing. Deterministic for a given seed and
// independent of the thread count.
inline std::pair<DmnParams, TrainReport> train(const DmnParams& params0, const Dataset& dataset,
                                               const TrainConfig& cfg) {
    validate(params0);
    validate(cfg);
    if (dataset.empty()) throw InputError("training dataset is empty");
    const double s0 = resolve_weight_target(cfg, params0.depth);
    const auto t_start = std::chrono::steady_clock::now();

    // Seeded shuffle, then split train/validation.
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, 0x737173));
    rng.shuffle(order);
    std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * dataset.size()));
    if (n_val >= dataset.size()) n_val = dataset.size() - 1;
    std::vector<std::size_t> train_idx(order.begin(), order.end() - n_val);
    std::vector<std::size_t> val_idx(order.end() - n_val, order.end());

    DmnParams params = params0;
    ParamGradient velocity = ParamGradient::zeros(params.depth);
    TrainReport report;
    DmnParams best = params;
    double best_val = detail::mean_stiff_loss(params, dataset, val_idx.empty() ? train_idx : val_idx, cfg.threads, -1);
    report.best_val = best_val;
    report.best_epoch = -1;

    Dataset batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t_epoch = std::chrono::steady_clock::now();
        const double lr = cfg.lr * std::pow(cfg.lr_decay, epoch);
        rng.shuffle(train_idx);
        for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(train_idx.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(dataset[train_idx[i]]);
            LossBreakdown lb;
            ParamGradient g;
            if (cfg.gradient_mode == GradientMode::Adjoint) {
                g = gradient(params, batch, cfg.lambda_reg, s0, cfg.threads, &lb);
            } else {
                g = gradient_fd(params, batch, cfg.lambda_reg, s0);
                lb = loss(params, batch, cfg.lambda_reg, s0);
            }
            if (!std::isfinite(lb.total) || !g.finite())
                throw NonFiniteError("loss or gradient became non-finite at epoch " + std::to_string(epoch) +
                                     ", batch starting at sample " + std::to_string(start));
            if (cfg.momentum > 0.0) {
                velocity *= cfg.momentum;
                velocity += g;
            } else {
                velocity = g;
            }
            for (std::size_t j = 0; j < params.z.size(); ++j) params.z[j] -= lr * velocity.dz[j];
            for (std::size_t b = 0; b < params.angles.size(); ++b) {
                params.angles[b].alpha -= lr * velocity.dangles[b].alpha;
                params.angles[b].beta -= lr * velocity.dangles[b].beta;
                params.angles[b].gamma -= lr * velocity.dangles[b].gamma;
            }
        }

        const double train_l = detail::mean_stiff_loss(params, dataset, train_idx, cfg.threads, epoch);
        const double val_l = val_idx.empty() ? train_l : detail::mean_stiff_loss(params, dataset, val_idx, cfg.threads, epoch);
        if (!std::isfinite(train_l) || !std::isfinite(val_l))
            throw NonFiniteError("validation loss became non-finite at epoch " + std::to_string(epoch));
        report.train_loss.push_back(train_l);
        report.val_loss.push_back(val_l);
        report.reg.push_back(regularizer(params, cfg.lambda_reg, s0));
        double vf1 = 0.0;
        try {
            vf1 = phase_volume_fractions(params).first;
        } catch (const DegenerateNetworkError&) {
            vf1 = std::numeric_limits<double>::quiet_NaN();
        }
        report.vf1.push_back(vf1);
        if (val_l < best_val) {
            best_val = val_l;
            best = params;
            report.best_epoch = epoch;
            report.best_val = val_l;
        }
        report.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count());
    }

    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {cfg.epochs > 0 ? best : params, report};
}

} // namespace dmn

#endif
