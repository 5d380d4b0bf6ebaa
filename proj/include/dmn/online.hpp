#ifndef DMN_ONLINE_HPP
#define DMN_ONLINE_HPP

// Online nonlinear prediction: residual-strain homogenization up the pruned
// tree, mixed-control root solve, de-homogenization back down, fixed-point
// iteration per load increment.
//
// Per iteration, each active leaf evaluates its material law at the current
// strain-increment iterate, yielding a consistent tangent C_j and a residual
// strain
//
//   delta_eps_j = d_eps_j - D_j d_sig_j,   D_j = C_j^-1.
//
// Blocks combine child tangents with the laminate homogenization and child
// residuals with
//
//   res = f1 res1 + f2 res2
//         + f1 f2 (D1 - D2)_(:,ip) [f1 D2 + f2 D1]_(ip,ip)^-1 (res2 - res1)_ip
//
// then rotate both into the parent frame. The root satisfies
// d_eps = C^-1 d_sig + res under the step's control mask. De-homogenization
// distributes the root strain increment with the same three block conditions
// (volume average, in-plane strain continuity, normal traction continuity
// with residuals), which reduce to the offline strain concentration in the
// linear case. Leaf states commit only when the loop converges, so a failed
// increment rolls back for free.

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "dmn/building_block.hpp"
#include "dmn/errors.hpp"
#include "dmn/mandel.hpp"
#include "dmn/materials.hpp"
#include "dmn/network.hpp"

namespace dmn {

inline constexpr double kStrainFloor = 1e-12;

inline Vec6 leaf_residual(const Vec6& d_eps, const Vec6& d_sig, const Mat6& compliance) {
    return d_eps - matvec(compliance, d_sig);
}

// Residual homogenization across one block (local frame).
inline Vec6 homogenize_residual(const Vec6& de1, const Vec6& de2, const Mat6& d1, const Mat6& d2, double f1,
                                double f2) {
    Mat3 m;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) m(a, b) = f1 * d2(kInPlane[a], kInPlane[b]) + f2 * d1(kInPlane[a], kInPlane[b]);
    Mat3 m_inv;
    if (!invert3_sym(m, m_inv) || cond3_estimate(m, m_inv) > kCondLimit)
        throw SingularInPlaneBlockError("in-plane compliance block is numerically singular");
    std::array<double, 3> rhs{}, t{};
    for (int a = 0; a < 3; ++a) rhs[a] = de2[kInPlane[a]] - de1[kInPlane[a]];
    for (int a = 0; a < 3; ++a) t[a] = m_inv(a, 0) * rhs[0] + m_inv(a, 1) * rhs[1] + m_inv(a, 2) * rhs[2];
    Vec6 res = f1 * de1 + f2 * de2;
    const double ff = f1 * f2;
    for (int i = 0; i < 6; ++i) {
        double acc = 0.0;
        for (int a = 0; a < 3; ++a) acc += (d1(i, kInPlane[a]) - d2(i, kInPlane[a])) * t[a];
        res[i] += ff * acc;
    }
    return res;
}

// --- loading programs ----------------------------------------------------------

struct LoadStep {
    std::array<bool, 6> strain_control{};  // true: strain-controlled component
    Vec6 targets;                          // absolute end-of-step values of the controlled quantities
    int increments = 1;
};

struct LoadingProgram {
    std::vector<LoadStep> steps;
};

inline void validate(const LoadStep& s) {
    if (s.increments < 1) throw InputError("load step needs at least one increment");
    bool any_strain = false;
    for (bool b : s.strain_control) any_strain |= b;
    // Full stress control is allowed (requires an SPD tangent); otherwise at
    // least one strain-controlled component must pin the deformation.
    (void)any_strain;
}

struct IncrementTargets {
    std::array<bool, 6> strain_control{};
    Vec6 delta;  // increment of the controlled quantity per component
};

// Mixed-control root solve for d_eps = C^-1 d_sig + res: strain-controlled
// components of d_eps and stress-controlled components of d_sig are given;
// the complementary block is eliminated with a Schur solve on the
// stress-controlled set.
inline std::pair<Vec6, Vec6> solve_root(const Mat6& c, const Vec6& res, const IncrementTargets& inc) {
    std::array<int, 6> stress_idx{};
    int ns = 0;
    for (int i = 0; i < 6; ++i)
        if (!inc.strain_control[i]) stress_idx[ns++] = i;

    Vec6 d_eps = inc.delta;  // strain-controlled entries are final
    if (ns > 0) {
        // A x = b with A = C_SS, x = d_eps_S - res_S,
        // b = t_S - C_SE (d_eps_E - res_E).
        std::array<double, 36> a{};
        std::array<double, 6> b{};
        for (int r = 0; r < ns; ++r) {
            const int i = stress_idx[r];
            double rhs = inc.delta[i];
            for (int j = 0; j < 6; ++j) {
                if (!inc.strain_control[j]) continue;
                rhs -= c(i, j) * (inc.delta[j] - res[j]);
            }
            b[r] = rhs;
            for (int s = 0; s < ns; ++s) a[6 * r + s] = c(i, stress_idx[s]);
        }
        // Gaussian elimination with partial pivoting on the ns x ns system.
        for (int col = 0; col < ns; ++col) {
            int piv = col;
            for (int r = col + 1; r < ns; ++r)
                if (std::abs(a[6 * r + col]) > std::abs(a[6 * piv + col])) piv = r;
            if (!(std::abs(a[6 * piv + col]) > 0.0) || !std::isfinite(a[6 * piv + col]))
                throw SingularRootSystemError("mask-reduced macroscopic system is singular");
            if (piv != col) {
                for (int j = 0; j < ns; ++j) std::swap(a[6 * piv + j], a[6 * col + j]);
                std::swap(b[piv], b[col]);
            }
            const double inv = 1.0 / a[6 * col + col];
            for (int r = 0; r < ns; ++r) {
                if (r == col) continue;
                const double f = a[6 * r + col] * inv;
                if (f == 0.0) continue;
                for (int j = col; j < ns; ++j) a[6 * r + j] -= f * a[6 * col + j];
                b[r] -= f * b[col];
            }
            for (int j = col; j < ns; ++j) a[6 * col + j] *= inv;
            b[col] *= inv;
        }
        for (int r = 0; r < ns; ++r) d_eps[stress_idx[r]] = b[r] + res[stress_idx[r]];
    }

    Vec6 d_sig = matvec(c, d_eps - res);
    // Pin the controlled stresses exactly.
    for (int r = 0; r < ns; ++r) d_sig[stress_idx[r]] = inc.delta[stress_idx[r]];
    return {d_eps, d_sig};
}

// --- response records ------------------------------------------------------------

struct ResponseRow {
    int increment = 0;  // 1-based global increment counter
    Vec6 eps;           // accumulated macroscopic strain
    Vec6 sig;           // accumulated macroscopic stress
    int iterations = 0;
    double residual_norm = 0.0;
    double max_p_acc = 0.0;
    double mean_p_acc = 0.0;  // weight-averaged over active leaves
    double dissipation = 0.0; // sum_j w_j sig_j . d_eps_p_j for this increment
};

struct MacroResponse {
    std::vector<ResponseRow> rows;
    bool converged = true;
};

// Per-block identity residuals of the last committed increment.
struct BlockIdentityCheck {
    std::size_t block_index = 0;
    double hill_mandel_rel = 0.0;  // |f1 f2 (de1-de2).(ds1-ds2)| / max(|de.ds|, floor)
};

struct IncrementDiagnostics {
    std::vector<BlockIdentityCheck> blocks;
    double max_hill_mandel_rel = 0.0;
    double stress_recomposition_rel = 0.0;  // leaf-stress recomposition vs root d_sig
};

struct PredictOptions {
    double tol = 1e-8;
    int max_iter = 500;
    int max_bisections = 4;  // CLI-level retry policy
    bool collect_diagnostics = false;
};

// --- the predictor ------------------------------------------------------------------

// Owns the pruned tree and the mutable leaf states for one loading history.
// Instances are single-threaded; run several instances for concurrent load
// cases.
class Predictor {
public:
    Predictor(const DmnParams& params, const MaterialSet& materials) : params_(params) {
        validate(params_);
        validate(materials.phase1);
        validate(materials.phase2);
        for (const auto& [idx, m] : materials.overrides) validate(m);
        build_tree(materials);
    }

    std::size_t active_leaf_count() const { return leaves_.size(); }

    // Tangent and residual homogenized from the current committed states with
    // a zero strain-increment iterate. Pure query: no state change.
    std::pair<Mat6, Vec6> probe_root() {
        for (Leaf& lf : leaves_) lf.d_eps = Vec6{};
        update_leaves();
        upsweep();
        return {nodes_[root_slot_].c_out, nodes_[root_slot_].res_out};
    }

    // One load increment via fixed-point iteration; commits on convergence,
    // rolls back (throws NoConvergenceError) otherwise.
    ResponseRow run_increment(const IncrementTargets& inc, const PredictOptions& opt) {
        for (Leaf& lf : leaves_) lf.d_eps = Vec6{};
        double metric = 0.0;
        int it = 0;
        bool converged = false;
        for (it = 1; it <= opt.max_iter; ++it) {
            update_leaves();
            upsweep();
            const auto [de_macro, ds_macro] = solve_root(nodes_[root_slot_].c_out, nodes_[root_slot_].res_out, inc);
            macro_de_ = de_macro;
            macro_ds_ = ds_macro;
            downsweep(de_macro);
            metric = 0.0;
            for (Leaf& lf : leaves_) {
                const double diff = norm(lf.d_eps_next - lf.d_eps);
                const double den = std::max(norm(lf.d_eps_next), kStrainFloor);
                metric = std::max(metric, diff / den);
                lf.d_eps = lf.d_eps_next;
            }
            if (metric < opt.tol) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw NoConvergenceError("fixed-point loop did not converge within " + std::to_string(opt.max_iter) +
                                     " iterations (metric " + std::to_string(metric) + ")");

        // Consistency pass at the converged iterate, then commit.
        update_leaves();
        upsweep();
        const auto [de_macro, ds_macro] = solve_root(nodes_[root_slot_].c_out, nodes_[root_slot_].res_out, inc);
        macro_de_ = de_macro;
        macro_ds_ = ds_macro;
        if (opt.collect_diagnostics) downsweep(de_macro);

        ResponseRow row;
        row.increment = ++increment_counter_;
        row.iterations = it;
        row.residual_norm = metric;
        double wsum = 0.0;
        for (Leaf& lf : leaves_) {
            const Vec6 d_eps_p = lf.trial.eps_p - lf.committed.eps_p;
            row.dissipation += lf.weight * dot(lf.trial.sig, d_eps_p);
            row.max_p_acc = std::max(row.max_p_acc, lf.trial.p_acc);
            row.mean_p_acc += lf.weight * lf.trial.p_acc;
            wsum += lf.weight;
            lf.committed = lf.trial;
        }
        row.mean_p_acc /= wsum;
        eps_total_ += de_macro;
        sig_total_ += ds_macro;
        row.eps = eps_total_;
        row.sig = sig_total_;
        if (opt.collect_diagnostics) collect_diagnostics();
        return row;
    }

    // Full program with linear ramps inside each step and the bisection retry
    // policy on non-convergence.
    MacroResponse run_program(const LoadingProgram& prog, const PredictOptions& opt) {
        MacroResponse out;
        for (const LoadStep& step : prog.steps) {
            validate(step);
            IncrementTargets inc;
            inc.strain_control = step.strain_control;
            Vec6 current;
            for (int i = 0; i < 6; ++i) current[i] = step.strain_control[i] ? eps_total_[i] : sig_total_[i];
            for (int i = 0; i < 6; ++i) inc.delta[i] = (step.targets[i] - current[i]) / step.increments;
            for (int n = 0; n < step.increments; ++n) {
                if (!run_subdivided(inc, opt, out, opt.max_bisections)) {
                    out.converged = false;
                    return out;
                }
            }
        }
        return out;
    }

    const Vec6& total_strain() const { return eps_total_; }
    const Vec6& total_stress() const { return sig_total_; }
    const Vec6& last_macro_strain_increment() const { return macro_de_; }
    const Vec6& last_macro_stress_increment() const { return macro_ds_; }
    const IncrementDiagnostics& last_diagnostics() const { return diagnostics_; }

    double leaf_p_acc(std::size_t slot) const { return leaves_[slot].committed.p_acc; }
    const MaterialState& leaf_state(std::size_t slot) const { return leaves_[slot].committed; }
    std::size_t leaf_index(std::size_t slot) const { return leaves_[slot].leaf_1based; }

private:
    struct Leaf {
        std::size_t leaf_1based = 0;
        double weight = 0.0;
        Material material;
        MaterialState committed;
        // per-iteration scratch
        Vec6 d_eps, d_eps_next, d_sig, residual;
        Mat6 tangent, compliance;
        MaterialState trial;
    };

    struct Node {
        std::size_t block_index = 0;  // breadth-first, aligned with params.angles
        int layer = 0;
        std::size_t k = 0;
        bool passthrough = false;
        int live_child = 0;
        double f1 = 0.0, f2 = 0.0;
        Mat6 r;
        // children: slot into nodes_ (for inner) or leaves_ (for bottom layer);
        // -1 when the child subtree is dead.
        std::array<int, 2> child_slot = {-1, -1};
        bool children_are_leaves = false;
        // per-iteration cache
        std::array<Mat6, 2> c_child, d_child;
        std::array<Vec6, 2> res_child;
        Mat3 ahat_inv;
        Mat6 c_out;
        Vec6 res_out;
        Vec6 d_eps_loc;
        std::array<Vec6, 2> d_eps_child;
    };

    void build_tree(const MaterialSet& materials) {
        const NodeWeights nw = propagate_weights(params_);
        if (!(nw.root() > 0.0)) throw DegenerateNetworkError("all leaf weights are zero");
        const double wroot = nw.root();

        std::vector<int> leaf_slot(leaf_count(params_.depth), -1);
        for (std::size_t j = 1; j <= leaf_count(params_.depth); ++j) {
            const double w = nw.at(params_.depth + 1, j);
            if (!(w > 0.0)) continue;
            Leaf lf;
            lf.leaf_1based = j;
            lf.weight = w / wroot;
            lf.material = materials.for_leaf(j);
            leaf_slot[j - 1] = static_cast<int>(leaves_.size());
            leaves_.push_back(lf);
        }

        std::vector<int> node_slot(block_count(params_.depth), -1);
        for (int layer = params_.depth; layer >= 1; --layer) {
            const std::size_t n = std::size_t{1} << (layer - 1);
            for (std::size_t k = 1; k <= n; ++k) {
                const std::size_t bi = node_index(layer, k);
                const double w1 = nw.at(layer + 1, 2 * k - 1);
                const double w2 = nw.at(layer + 1, 2 * k);
                if (!(w1 + w2 > 0.0)) continue;
                Node nd;
                nd.block_index = bi;
                nd.layer = layer;
                nd.k = k;
                nd.children_are_leaves = (layer == params_.depth);
                const Angles& a = params_.angles[bi];
                nd.r = rotation_matrix(a.alpha, a.beta, a.gamma);
                if (w1 > 0.0 && w2 > 0.0) {
                    nd.f1 = w1 / (w1 + w2);
                    nd.f2 = w2 / (w1 + w2);
                } else {
                    nd.passthrough = true;
                    nd.live_child = w1 > 0.0 ? 0 : 1;
                }
                for (int side = 0; side < 2; ++side) {
                    const std::size_t ck = 2 * k - 1 + side;
                    const double wc = side == 0 ? w1 : w2;
                    if (!(wc > 0.0)) continue;
                    nd.child_slot[side] = nd.children_are_leaves ? leaf_slot[ck - 1]
                                                                 : node_slot[node_index(layer + 1, ck)];
                }
                node_slot[bi] = static_cast<int>(nodes_.size());
                nodes_.push_back(nd);
            }
        }
        root_slot_ = static_cast<std::size_t>(node_slot[0]);
        parent_feed_.assign(nodes_.size(), Vec6{});
    }

    void update_leaves() {
        for (Leaf& lf : leaves_) {
            MaterialUpdate u = material_update(lf.material, lf.d_eps, lf.committed);
            lf.d_sig = u.d_sig;
            lf.tangent = u.tangent;
            lf.trial = u.state;
            try {
                lf.compliance = invert6(u.tangent);
            } catch (const SingularRootSystemError&) {
                throw SingularRootSystemError("leaf " + std::to_string(lf.leaf_1based) +
                                              " has a singular consistent tangent (J2 with H = 0 is not "
                                              "invertible online)");
            }
            lf.residual = leaf_residual(lf.d_eps, lf.d_sig, lf.compliance);
        }
    }

    void child_quantities(const Node& nd, int side, Mat6& c, Mat6& d, Vec6& res) const {
        const int slot = nd.child_slot[side];
        if (nd.children_are_leaves) {
            const Leaf& lf = leaves_[slot];
            c = lf.tangent;
            d = lf.compliance;
            res = lf.residual;
        } else {
            const Node& ch = nodes_[slot];
            c = ch.c_out;
            d = invert6(ch.c_out);
            res = ch.res_out;
        }
    }

    // nodes_ is built bottom-up, so iterating in order visits children first.
    void upsweep() {
        for (Node& nd : nodes_) {
            if (nd.passthrough) {
                Mat6 d;
                child_quantities(nd, nd.live_child, nd.c_child[nd.live_child], d, nd.res_child[nd.live_child]);
                nd.c_out = symmetrize(rotate_stiffness(nd.c_child[nd.live_child], nd.r));
                nd.res_out = rotate_vec(nd.res_child[nd.live_child], nd.r);
                continue;
            }
            child_quantities(nd, 0, nd.c_child[0], nd.d_child[0], nd.res_child[0]);
            child_quantities(nd, 1, nd.c_child[1], nd.d_child[1], nd.res_child[1]);
            InterfaceSolve is;
            try {
                is = detail::solve_interface(nd.c_child[0], nd.c_child[1], nd.f1, nd.f2);
            } catch (const SingularInterfaceBlockError& e) {
                throw SingularInterfaceBlockError(std::string(e.what()) + " at block (" + std::to_string(nd.layer) +
                                                  "," + std::to_string(nd.k) + ")");
            }
            nd.ahat_inv = is.ahat_inv;
            const Mat6 c_loc = symmetrize(detail::homogenize_raw(nd.c_child[0], nd.c_child[1], nd.f1, is));
            Vec6 res_loc;
            try {
                res_loc = homogenize_residual(nd.res_child[0], nd.res_child[1], nd.d_child[0], nd.d_child[1], nd.f1,
                                              nd.f2);
            } catch (const SingularInPlaneBlockError& e) {
                throw SingularInPlaneBlockError(std::string(e.what()) + " at block (" + std::to_string(nd.layer) +
                                                "," + std::to_string(nd.k) + ")");
            }
            nd.c_out = symmetrize(rotate_stiffness(c_loc, nd.r));
            nd.res_out = rotate_vec(res_loc, nd.r);
        }
    }

    // Distribute the macroscopic strain increment down the tree. The phase
    // split solves Ahat_345 * jump = C1_n.(res1) - C2_n.(res2) - dC_n.(de_loc)
    // for the normal-strain jump, with de1 = de + f2*jump, de2 = de - f1*jump
    // in the normal slots and shared in-plane components.
    void downsweep(const Vec6& de_root) {
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& nd = nodes_[i];
            const Vec6 de_parent = (i == root_slot_) ? de_root : parent_feed_[i];
            nd.d_eps_loc = rotate_vec_inverse(de_parent, nd.r);
            if (nd.passthrough) {
                nd.d_eps_child[nd.live_child] = nd.d_eps_loc;
                feed_child(nd, nd.live_child, nd.d_eps_loc);
                continue;
            }
            std::array<double, 3> rhs{};
            for (int t = 0; t < 3; ++t) {
                const int row = kNormal[t];
                double acc = 0.0;
                for (int j = 0; j < 6; ++j) {
                    acc += nd.c_child[0](row, j) * nd.res_child[0][j] - nd.c_child[1](row, j) * nd.res_child[1][j];
                    acc -= (nd.c_child[0](row, j) - nd.c_child[1](row, j)) * nd.d_eps_loc[j];
                }
                rhs[t] = acc;
            }
            std::array<double, 3> jump{};
            for (int t = 0; t < 3; ++t)
                jump[t] = nd.ahat_inv(t, 0) * rhs[0] + nd.ahat_inv(t, 1) * rhs[1] + nd.ahat_inv(t, 2) * rhs[2];
            Vec6 de1 = nd.d_eps_loc, de2 = nd.d_eps_loc;
            for (int t = 0; t < 3; ++t) {
                de1[kNormal[t]] += nd.f2 * jump[t];
                de2[kNormal[t]] -= nd.f1 * jump[t];
            }
            nd.d_eps_child[0] = de1;
            nd.d_eps_child[1] = de2;
            feed_child(nd, 0, de1);
            feed_child(nd, 1, de2);
        }
    }

    void feed_child(const Node& nd, int side, const Vec6& de) {
        const int slot = nd.child_slot[side];
        if (nd.children_are_leaves)
            leaves_[slot].d_eps_next = de;
        else
            parent_feed_[static_cast<std::size_t>(slot)] = de;
    }

    void collect_diagnostics() {
        diagnostics_ = IncrementDiagnostics{};
        // Leaf-stress recomposition: children stresses combine f-weighted in
        // the local frame, then rotate. Evaluated with the affine per-child
        // stress C_c (de_c - res_c), which equals the material stress at the
        // converged iterate.
        std::vector<Vec6> recomposed(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            Node& nd = nodes_[i];
            auto child_stress = [&](int side) {
                if (nd.children_are_leaves) return leaves_[nd.child_slot[side]].d_sig;
                return recomposed[static_cast<std::size_t>(nd.child_slot[side])];
            };
            if (nd.passthrough) {
                recomposed[i] = rotate_vec(child_stress(nd.live_child), nd.r);
                continue;
            }
            std::array<Vec6, 2> ds;
            for (int side = 0; side < 2; ++side)
                ds[side] = matvec(nd.c_child[side], nd.d_eps_child[side] - nd.res_child[side]);
            const Vec6 de_jump = nd.d_eps_child[0] - nd.d_eps_child[1];
            const Vec6 ds_jump = ds[0] - ds[1];
            const Vec6 ds_loc = nd.f1 * ds[0] + nd.f2 * ds[1];
            const double denom = std::max(std::abs(dot(nd.d_eps_loc, ds_loc)), 1e-30);
            BlockIdentityCheck chk;
            chk.block_index = nd.block_index;
            chk.hill_mandel_rel = std::abs(nd.f1 * nd.f2 * dot(de_jump, ds_jump)) / denom;
            diagnostics_.blocks.push_back(chk);
            diagnostics_.max_hill_mandel_rel = std::max(diagnostics_.max_hill_mandel_rel, chk.hill_mandel_rel);
            recomposed[i] = rotate_vec(nd.f1 * child_stress(0) + nd.f2 * child_stress(1), nd.r);
        }
        const double den = std::max(norm(macro_ds_), 1e-30);
        diagnostics_.stress_recomposition_rel = norm(recomposed[root_slot_] - macro_ds_) / den;
    }

    bool run_subdivided(const IncrementTargets& inc, const PredictOptions& opt, MacroResponse& out, int budget) {
        try {
            out.rows.push_back(run_increment(inc, opt));
            return true;
        } catch (const NoConvergenceError&) {
            if (budget <= 0) return false;
            IncrementTargets half = inc;
            half.delta *= 0.5;
            return run_subdivided(half, opt, out, budget - 1) && run_subdivided(half, opt, out, budget - 1);
        }
    }

    DmnParams params_;
    std::vector<Leaf> leaves_;
    std::vector<Node> nodes_;  // bottom-up order (children before parents)
    std::vector<Vec6> parent_feed_;
    std::size_t root_slot_ = 0;
    Vec6 eps_total_, sig_total_;
    Vec6 macro_de_, macro_ds_;
    int increment_counter_ = 0;
    IncrementDiagnostics diagnostics_;
};

} // namespace dmn

#endif
