#ifndef DMN_BUILDING_BLOCK_HPP
#define DMN_BUILDING_BLOCK_HPP

// Two-phase laminate building block and the full offline forward pass.
//
// Inside every block the interface normal is the local 3-direction; all
// directional variety comes from the block's rotation. With
// dC = C1 - C2 and C_hat = f2*C1 + f1*C2, the phase-1 strain concentration
// tensor s1 has identity rows (1,2,6) and rows (3,4,5) equal to
//
//   s_3x6 = (C_hat_345)^-1 [ -f2*dC_(n,ip) | C2_(n,n) ],
//
// and the homogenized stiffness is C = C2 + f1 * dC * s1. These are the
// interfacial-equilibrium formulas (in-plane strain compatibility, normal
// traction continuity, volume averaging) written for this sign convention.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "dmn/errors.hpp"
#include "dmn/mandel.hpp"
#include "dmn/network.hpp"

namespace dmn {

inline constexpr double kCondLimit = 1e12;

// Rows (3,4,5) of s1 as a row-major 3x6 block plus the cached interface
// inverse; enough to rebuild everything the adjoint needs.
struct InterfaceSolve {
    Mat3 ahat_inv;
    std::array<double, 18> s{};  // s(t, j) = s[6*t + j]

    double srow(std::size_t t, std::size_t j) const { return s[6 * t + j]; }
};

namespace detail {

inline InterfaceSolve solve_interface(const Mat6& c1, const Mat6& c2, double f1, double f2) {
    Mat3 ahat;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) ahat(a, b) = f2 * c1(kNormal[a], kNormal[b]) + f1 * c2(kNormal[a], kNormal[b]);
    InterfaceSolve out;
    if (!invert3_sym(ahat, out.ahat_inv) || cond3_estimate(ahat, out.ahat_inv) > kCondLimit)
        throw SingularInterfaceBlockError("interface block C_hat_345 is numerically singular");
    // Right-hand block B: in-plane columns -f2*dC, normal columns C2.
    std::array<double, 18> b{};
    for (int t = 0; t < 3; ++t) {
        const int row = kNormal[t];
        for (int jp = 0; jp < 3; ++jp) b[6 * t + kInPlane[jp]] = -f2 * (c1(row, kInPlane[jp]) - c2(row, kInPlane[jp]));
        for (int jn = 0; jn < 3; ++jn) b[6 * t + kNormal[jn]] = c2(row, kNormal[jn]);
    }
    for (int t = 0; t < 3; ++t) {
        for (int j = 0; j < 6; ++j) {
            double acc = 0.0;
            for (int u = 0; u < 3; ++u) acc += out.ahat_inv(t, u) * b[6 * u + j];
            out.s[6 * t + j] = acc;
        }
    }
    return out;
}

} // namespace detail

inline void check_fractions(double f1, double f2) {
    if (!(f1 > 0.0 && f2 > 0.0)) throw InputError("volume fractions must be positive");
    if (std::abs(f1 + f2 - 1.0) > 1e-12) throw InputError("volume fractions must sum to 1");
}

// Full 6x6 strain concentration tensor of phase 1.
inline Mat6 strain_concentration(const Mat6& c1, const Mat6& c2, double f1, double f2) {
    check_fractions(f1, f2);
    const InterfaceSolve is = detail::solve_interface(c1, c2, f1, f2);
    Mat6 s1;
    for (int ip : kInPlane) s1(ip, ip) = 1.0;
    for (int t = 0; t < 3; ++t)
        for (int j = 0; j < 6; ++j) s1(kNormal[t], j) = is.srow(t, j);
    return s1;
}

namespace detail {

// C2 + f1 * dC * s1, unsymmetrized.
inline Mat6 homogenize_raw(const Mat6& c1, const Mat6& c2, double f1, const InterfaceSolve& is) {
    Mat6 out;
    for (int i = 0; i < 6; ++i) {
        std::array<double, 3> dci;
        for (int t = 0; t < 3; ++t) dci[t] = c1(i, kNormal[t]) - c2(i, kNormal[t]);
        for (int j = 0; j < 6; ++j) {
            double acc = 0.0;
            for (int t = 0; t < 3; ++t) acc += dci[t] * is.srow(t, j);
            out(i, j) = acc;
        }
        for (int jp : kInPlane) out(i, jp) += c1(i, jp) - c2(i, jp);
    }
    for (int i = 0; i < 36; ++i) out.m[i] = c2.m[i] + f1 * out.m[i];
    return out;
}

} // namespace detail

// Effective stiffness of the two-phase laminate block (no rotation).
inline Mat6 homogenize_pair(const Mat6& c1, const Mat6& c2, double f1, double f2) {
    check_fractions(f1, f2);
    return symmetrize(detail::homogenize_raw(c1, c2, f1, detail::solve_interface(c1, c2, f1, f2)));
}

struct BlockResult {
    Mat6 c_intermediate;
    Mat6 c_rotated;
    Mat6 s1;
    double f1 = 0.0;
    double f2 = 0.0;
};

// One building block end to end: homogenize, then rotate by the block angles.
inline BlockResult evaluate_block(const Mat6& c1, const Mat6& c2, double f1, double f2, const Angles& ang) {
    BlockResult r;
    r.f1 = f1;
    r.f2 = f2;
    r.s1 = strain_concentration(c1, c2, f1, f2);
    r.c_intermediate = homogenize_pair(c1, c2, f1, f2);
    r.c_rotated = symmetrize(rotate_stiffness(r.c_intermediate, ang.alpha, ang.beta, ang.gamma));
    return r;
}

// --- forward pass -------------------------------------------------------------

// Everything the reverse sweep needs from one block evaluation. A block is
// dead when its subtree weight is zero; it is a pass-through when exactly one
// child is dead (the block applies only its rotation to the live child).
struct BlockTrace {
    enum class Kind : unsigned char { Dead, PassThrough, Full };
    Kind kind = Kind::Dead;
    int live_child = 0;  // pass-through: 0 = left, 1 = right
    double f1 = 0.0, f2 = 0.0;
    Mat6 c1, c2;  // child stiffnesses in the block-local frame
    InterfaceSolve interface;
    Mat6 c_raw;  // pre-rotation stiffness
    Mat6 r;      // block rotation matrix
    Mat6 c_out;  // rotated, symmetrized output
};

struct ForwardTrace {
    int depth = 0;
    NodeWeights weights;
    std::vector<BlockTrace> blocks;  // breadth-first, aligned with DmnParams::angles

    const Mat6& root() const { return blocks[0].c_out; }
};

// Offline forward pass: assign phases by leaf parity, homogenize and rotate
// bottom-up, return the root stiffness. The trace records per-block inputs for
// the adjoint sweep; pass a reused instance to avoid reallocation.
inline void forward_with_trace(const DmnParams& p, const Mat6& cp1, const Mat6& cp2, ForwardTrace& trace) {
    trace.depth = p.depth;
    trace.weights = propagate_weights(p);
    trace.blocks.assign(block_count(p.depth), BlockTrace{});
    if (!(trace.weights.root() > 0.0)) throw DegenerateNetworkError("all leaf weights are zero");

    const NodeWeights& nw = trace.weights;
    for (int layer = p.depth; layer >= 1; --layer) {
        const std::size_t n = std::size_t{1} << (layer - 1);
        for (std::size_t k = 1; k <= n; ++k) {
            const std::size_t bi = node_index(layer, k);
            BlockTrace& bt = trace.blocks[bi];
            const double w1 = nw.at(layer + 1, 2 * k - 1);
            const double w2 = nw.at(layer + 1, 2 * k);
            if (!(w1 + w2 > 0.0)) continue;  // dead subtree, parent prunes it

            auto child_stiffness = [&](int side) -> const Mat6& {
                const std::size_t ck = 2 * k - 1 + side;
                if (layer == p.depth) return (ck % 2 == 1) ? cp1 : cp2;
                return trace.blocks[node_index(layer + 1, ck)].c_out;
            };

            bt.r = rotation_matrix(p.angles[bi].alpha, p.angles[bi].beta, p.angles[bi].gamma);
            if (w1 > 0.0 && w2 > 0.0) {
                bt.kind = BlockTrace::Kind::Full;
                bt.f1 = w1 / (w1 + w2);
                bt.f2 = w2 / (w1 + w2);
                bt.c1 = child_stiffness(0);
                bt.c2 = child_stiffness(1);
                try {
                    bt.interface = detail::solve_interface(bt.c1, bt.c2, bt.f1, bt.f2);
                } catch (const SingularInterfaceBlockError& e) {
                    throw SingularInterfaceBlockError(std::string(e.what()) + " at block (" + std::to_string(layer) +
                                                      "," + std::to_string(k) + ")");
                }
                bt.c_raw = detail::homogenize_raw(bt.c1, bt.c2, bt.f1, bt.interface);
            } else {
                bt.kind = BlockTrace::Kind::PassThrough;
                bt.live_child = w1 > 0.0 ? 0 : 1;
                bt.c_raw = child_stiffness(bt.live_child);
            }
            bt.c_out = symmetrize(rotate_stiffness(bt.c_raw, bt.r));
        }
    }
}

inline Mat6 forward(const DmnParams& p, const Mat6& cp1, const Mat6& cp2) {
    ForwardTrace trace;
    forward_with_trace(p, cp1, cp2, trace);
    return trace.root();
}

} // namespace dmn

#endif
