#ifndef DMN_NETWORK_HPP
#define DMN_NETWORK_HPP

// Binary-tree topology and trainable parameters.
//
// A depth-N network has N layers of building blocks (2^(i-1) blocks at layer
// i, 1-based) and 2^N material leaves at conceptual layer N+1. Block (i, k)
// has children (i+1, 2k-1) and (i+1, 2k); odd leaves carry phase 1, even
// leaves phase 2. Nodes and blocks are stored flat in breadth-first order.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dmn/errors.hpp"
#include "dmn/mandel.hpp"

namespace dmn {

struct Angles {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
};

inline double& angle_component(Angles& a, int i) { return i == 0 ? a.alpha : (i == 1 ? a.beta : a.gamma); }
inline double angle_component(const Angles& a, int i) { return i == 0 ? a.alpha : (i == 1 ? a.beta : a.gamma); }

// Breadth-first index of node (layer, k), both 1-based; also the index of
// block (layer, k) for layer <= depth.
inline std::size_t node_index(int layer, std::size_t k) {
    return (std::size_t{1} << (layer - 1)) - 1 + (k - 1);
}

inline std::size_t leaf_count(int depth) { return std::size_t{1} << depth; }
inline std::size_t block_count(int depth) { return (std::size_t{1} << depth) - 1; }

// Trainable state: leaf activations z (length 2^N) and one Tait-Bryan angle
// triple per building block (length 2^N - 1, breadth-first). Treat as an
// immutable value after construction; training steps produce new instances.
struct DmnParams {
    int depth = 0;
    std::vector<double> z;
    std::vector<Angles> angles;
};

inline void validate(const DmnParams& p) {
    if (p.depth < 1) throw InputError("network depth must be >= 1");
    if (p.z.size() != leaf_count(p.depth))
        throw InputError("z length " + std::to_string(p.z.size()) + " does not match depth " +
                         std::to_string(p.depth));
    if (p.angles.size() != block_count(p.depth))
        throw InputError("angle count " + std::to_string(p.angles.size()) + " does not match depth " +
                         std::to_string(p.depth));
}

inline std::vector<double> leaf_weights(const std::vector<double>& z) {
    std::vector<double> w(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) w[i] = z[i] > 0.0 ? z[i] : 0.0;
    return w;
}

// Weights for every node, layers 1..N+1 flat breadth-first (size 2^(N+1)-1).
// Parent weights are exact sums of their children.
struct NodeWeights {
    int depth = 0;
    std::vector<double> w;

    double at(int layer, std::size_t k) const { return w[node_index(layer, k)]; }
    double root() const { return w[0]; }
};

inline NodeWeights propagate_weights(const DmnParams& p) {
    validate(p);
    NodeWeights nw;
    nw.depth = p.depth;
    nw.w.assign((std::size_t{2} << p.depth) - 1, 0.0);
    const std::size_t leaves = leaf_count(p.depth);
    for (std::size_t j = 0; j < leaves; ++j) nw.w[node_index(p.depth + 1, j + 1)] = p.z[j] > 0.0 ? p.z[j] : 0.0;
    for (int layer = p.depth; layer >= 1; --layer) {
        const std::size_t n = std::size_t{1} << (layer - 1);
        for (std::size_t k = 1; k <= n; ++k) {
            nw.w[node_index(layer, k)] = nw.w[node_index(layer + 1, 2 * k - 1)] + nw.w[node_index(layer + 1, 2 * k)];
        }
    }
    return nw;
}

// Volume fractions (f1, f2) of block (layer, k) from its children's weights.
inline std::pair<double, double> block_fractions(const NodeWeights& nw, int layer, std::size_t k) {
    const double w1 = nw.at(layer + 1, 2 * k - 1);
    const double w2 = nw.at(layer + 1, 2 * k);
    const double s = w1 + w2;
    if (!(s > 0.0))
        throw ZeroBlockError("block (" + std::to_string(layer) + "," + std::to_string(k) +
                             ") has zero total weight; prune it");
    return {w1 / s, w2 / s};
}

// (vf1, vf2): volume fractions carried by odd (phase 1) and even (phase 2)
// leaves.
inline std::pair<double, double> phase_volume_fractions(const DmnParams& p) {
    validate(p);
    double odd = 0.0, total = 0.0;
    for (std::size_t j = 0; j < p.z.size(); ++j) {
        const double w = p.z[j] > 0.0 ? p.z[j] : 0.0;
        total += w;
        if (j % 2 == 0) odd += w;  // 1-based odd leaf
    }
    if (!(total > 0.0)) throw DegenerateNetworkError("all leaf weights are zero");
    const double vf1 = odd / total;
    return {vf1, 1.0 - vf1};
}

// Adapt a trained network to a new phase-2 volume fraction by scaling the
// activated weights: odd leaves by (1-vf_new)/(1-vf_trained), even leaves by
// vf_new/vf_trained. Angles are untouched. Output z holds the scaled weights,
// so dead leaves come out as exact zeros.
inline DmnParams rescale_to_volume_fraction(const DmnParams& p, double vf2_new) {
    validate(p);
    if (!(vf2_new > 0.0 && vf2_new < 1.0)) throw InputError("target volume fraction must lie in (0, 1)");
    const double vf2 = phase_volume_fractions(p).second;
    if (!(vf2 > 0.0 && vf2 < 1.0))
        throw DegeneratePhaseError("trained phase-2 volume fraction is " + std::to_string(vf2));
    const double odd_scale = (1.0 - vf2_new) / (1.0 - vf2);
    const double even_scale = vf2_new / vf2;
    DmnParams out = p;
    for (std::size_t j = 0; j < out.z.size(); ++j) {
        const double w = p.z[j] > 0.0 ? p.z[j] : 0.0;
        out.z[j] = w * (j % 2 == 0 ? odd_scale : even_scale);
    }
    return out;
}

// Convex combination of two trained networks: rho * low + (1-rho) * high on
// both activated weights and angles.
inline DmnParams interpolate_params(const DmnParams& low, const DmnParams& high, double rho) {
    validate(low);
    validate(high);
    if (low.depth != high.depth)
        throw DepthMismatchError("cannot interpolate depth " + std::to_string(low.depth) + " with depth " +
                                 std::to_string(high.depth));
    if (!(rho >= 0.0 && rho <= 1.0)) throw InputError("interpolation coefficient must lie in [0, 1]");
    DmnParams out;
    out.depth = low.depth;
    out.z.resize(low.z.size());
    out.angles.resize(low.angles.size());
    for (std::size_t j = 0; j < out.z.size(); ++j) {
        const double wl = low.z[j] > 0.0 ? low.z[j] : 0.0;
        const double wh = high.z[j] > 0.0 ? high.z[j] : 0.0;
        out.z[j] = rho * wl + (1.0 - rho) * wh;
    }
    for (std::size_t b = 0; b < out.angles.size(); ++b) {
        out.angles[b].alpha = rho * low.angles[b].alpha + (1.0 - rho) * high.angles[b].alpha;
        out.angles[b].beta = rho * low.angles[b].beta + (1.0 - rho) * high.angles[b].beta;
        out.angles[b].gamma = rho * low.angles[b].gamma + (1.0 - rho) * high.angles[b].gamma;
    }
    return out;
}

} // namespace dmn

#endif
