#ifndef DMN_ORACLES_HPP
#define DMN_ORACLES_HPP

// Independent brute-force references for the production homogenization,
// rotation, and constitutive paths. Everything here is deliberately slow and
// structurally different from the library code it checks: full 3x3x3x3 index
// gymnastics instead of Mandel block shortcuts, dense partial-pivot solves
// instead of closed forms, total-strain constitutive integration instead of
// incremental updates. This header must not include building_block.hpp,
// online.hpp, or materials.hpp.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dmn/errors.hpp"
#include "dmn/mandel.hpp"
#include "dmn/network.hpp"

namespace dmn::oracles {

// --- generic dense linear algebra ---------------------------------------------

// Solve A x = b in place (row-major n x n), partial pivoting.
inline std::vector<double> lu_solve(std::size_t n, std::vector<double> a, std::vector<double> b) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (!(std::abs(a[piv * n + col]) > 0.0)) throw Error("oracle linear system is singular");
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a[piv * n + j], a[col * n + j]);
            std::swap(b[piv], b[col]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] * inv;
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) a[r * n + j] -= f * a[col * n + j];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= a[i * n + j] * x[j];
        x[i] = s / a[i * n + i];
    }
    return x;
}

// Eigenvalues of a symmetric 6x6 by cyclic Jacobi, ascending.
inline std::array<double, 6> sym_eigenvalues(const Mat6& m) {
    std::array<double, 36> a;
    for (int i = 0; i < 36; ++i) a[i] = 0.5 * (m.m[i] + m.m[6 * (i % 6) + i / 6]);
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < 6; ++p)
            for (int q = p + 1; q < 6; ++q) off += a[6 * p + q] * a[6 * p + q];
        if (off < 1e-30) break;
        for (int p = 0; p < 6; ++p) {
            for (int q = p + 1; q < 6; ++q) {
                const double apq = a[6 * p + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a[6 * q + q] - a[6 * p + p]) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int k = 0; k < 6; ++k) {
                    const double akp = a[6 * k + p], akq = a[6 * k + q];
                    a[6 * k + p] = c * akp - s * akq;
                    a[6 * k + q] = s * akp + c * akq;
                }
                for (int k = 0; k < 6; ++k) {
                    const double apk = a[6 * p + k], aqk = a[6 * q + k];
                    a[6 * p + k] = c * apk - s * aqk;
                    a[6 * q + k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::array<double, 6> ev{};
    for (int i = 0; i < 6; ++i) ev[i] = a[6 * i + i];
    std::sort(ev.begin(), ev.end());
    return ev;
}

// --- 3x3 rotations and 4th-order tensor gymnastics ------------------------------

using Rot3 = std::array<std::array<double, 3>, 3>;

inline Rot3 rot3_x(double t) {
    const double c = std::cos(t), s = std::sin(t);
    return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
}
inline Rot3 rot3_y(double t) {
    const double c = std::cos(t), s = std::sin(t);
    return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
}
inline Rot3 rot3_z(double t) {
    const double c = std::cos(t), s = std::sin(t);
    return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

inline Rot3 rot3_mul(const Rot3& a, const Rot3& b) {
    Rot3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a[i][k] * b[k][j];
            r[i][j] = s;
        }
    return r;
}

// The 3x3 rotation whose Mandel representation is the library's
// R(alpha, beta, gamma) = X(alpha) Y(beta) Z(gamma).
inline Rot3 equivalent_rotation(double alpha, double beta, double gamma) {
    return rot3_mul(rot3_x(-alpha), rot3_mul(rot3_y(-beta), rot3_z(-gamma)));
}

inline Rot3 equivalent_rotation(const Angles& a) { return equivalent_rotation(a.alpha, a.beta, a.gamma); }

using Tensor4 = std::array<double, 81>;  // C[i][j][k][l] row-major

inline double& t4(Tensor4& t, int i, int j, int k, int l) { return t[27 * i + 9 * j + 3 * k + l]; }
inline double t4c(const Tensor4& t, int i, int j, int k, int l) { return t[27 * i + 9 * j + 3 * k + l]; }

namespace detail {
// Mandel index -> tensor index pair and scale factor.
inline constexpr std::array<std::array<int, 2>, 6> kPairs = {{{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}}};
inline double mandel_factor(int m) { return m < 3 ? 1.0 : kSqrt2; }
} // namespace detail

inline Tensor4 unpack_mandel(const Mat6& c) {
    Tensor4 t{};
    for (int m = 0; m < 6; ++m) {
        for (int n = 0; n < 6; ++n) {
            const auto [i, j] = detail::kPairs[m];
            const auto [k, l] = detail::kPairs[n];
            const double v = c(m, n) / (detail::mandel_factor(m) * detail::mandel_factor(n));
            t4(t, i, j, k, l) = v;
            t4(t, j, i, k, l) = v;
            t4(t, i, j, l, k) = v;
            t4(t, j, i, l, k) = v;
        }
    }
    return t;
}

inline Mat6 pack_mandel(const Tensor4& t) {
    Mat6 c;
    for (int m = 0; m < 6; ++m)
        for (int n = 0; n < 6; ++n) {
            const auto [i, j] = detail::kPairs[m];
            const auto [k, l] = detail::kPairs[n];
            c(m, n) = t4c(t, i, j, k, l) * detail::mandel_factor(m) * detail::mandel_factor(n);
        }
    return c;
}

inline Tensor4 rotate_tensor4(const Tensor4& t, const Rot3& q) {
    Tensor4 out{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) {
                    double s = 0.0;
                    for (int a = 0; a < 3; ++a)
                        for (int b = 0; b < 3; ++b)
                            for (int c = 0; c < 3; ++c)
                                for (int d = 0; d < 3; ++d)
                                    s += q[i][a] * q[j][b] * q[k][c] * q[l][d] * t4c(t, a, b, c, d);
                    t4(out, i, j, k, l) = s;
                }
    return out;
}

// Reference for rotate_stiffness: unpack, rotate all four indices, repack.
inline Mat6 rotate_stiffness_tensor_oracle(const Mat6& c, const Rot3& q) {
    return pack_mandel(rotate_tensor4(unpack_mandel(c), q));
}

// Reference for rotate_vec: v -> mandel(Q unpack(v) Q^T).
inline Vec6 rotate_vec_tensor_oracle(const Vec6& v, const Rot3& q) {
    const Tensor2 a = to_tensor(v);
    Tensor2 out{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int a1 = 0; a1 < 3; ++a1)
                for (int b1 = 0; b1 < 3; ++b1) s += q[i][a1] * q[j][b1] * a[a1][b1];
            out[i][j] = s;
        }
    return from_tensor(out);
}

// --- strain-concentration oracle (interface normal = e3) -------------------------

// Solves the 9-unknown system {in-plane continuity, strain average, normal
// traction continuity} for unit macroscopic strains and returns the phase-1
// concentration tensor column by column.
inline Mat6 strain_concentration_oracle(const Mat6& c1, const Mat6& c2, double f1, double f2) {
    Mat6 s1;
    for (int col = 0; col < 6; ++col) {
        Vec6 macro;
        macro[col] = 1.0;
        // Unknowns x = [eps1 (6), eps2_normal (3)].
        std::vector<double> a(81, 0.0), b(9, 0.0);
        int row = 0;
        for (int t = 0; t < 3; ++t, ++row) {  // eps1_ip = macro_ip
            a[row * 9 + kInPlane[t]] = 1.0;
            b[row] = macro[kInPlane[t]];
        }
        for (int t = 0; t < 3; ++t, ++row) {  // f1 eps1_n + f2 eps2_n = macro_n
            a[row * 9 + kNormal[t]] = f1;
            a[row * 9 + 6 + t] = f2;
            b[row] = macro[kNormal[t]];
        }
        for (int t = 0; t < 3; ++t, ++row) {  // C1_n . eps1 = C2_n . eps2, eps2_ip := eps1_ip
            const int r = kNormal[t];
            for (int j = 0; j < 6; ++j) a[row * 9 + j] += c1(r, j);
            for (int p = 0; p < 3; ++p) a[row * 9 + kInPlane[p]] -= c2(r, kInPlane[p]);
            for (int p = 0; p < 3; ++p) a[row * 9 + 6 + p] -= c2(r, kNormal[p]);
        }
        const std::vector<double> x = lu_solve(9, a, b);
        for (int i = 0; i < 6; ++i) s1(i, col) = x[i];
    }
    return s1;
}

// --- linear laminate oracle ---------------------------------------------------------

struct LaminateSpec {
    Mat6 c1, c2;       // phase stiffnesses in the laminate's local frame
    double f1 = 0.5, f2 = 0.5;
    Angles angles{};   // orientation; interface normal is Q e3 in the global frame
};

inline void validate(const LaminateSpec& s) {
    if (!(s.f1 > 0.0 && s.f2 > 0.0)) throw InputError("laminate fractions must be positive");
    if (std::abs(s.f1 + s.f2 - 1.0) > 1e-12) throw InputError("laminate fractions must sum to 1");
}

namespace detail {

// Linear functional on Mandel vectors: v -> dir_a^T unpack(v) dir_b.
inline Vec6 bilinear_row(const std::array<double, 3>& da, const std::array<double, 3>& db) {
    Vec6 row;
    for (int m = 0; m < 6; ++m) {
        Vec6 unit;
        unit[m] = 1.0;
        const Tensor2 t = to_tensor(unit);
        double s = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) s += da[i] * t[i][j] * db[j];
        row[m] = s;
    }
    return row;
}

struct LaminateFrame {
    std::array<double, 3> n, a, b;  // normal and in-plane directions, global frame
    Mat6 c1g, c2g;                  // phase stiffnesses in the global frame
};

inline LaminateFrame laminate_frame(const LaminateSpec& s) {
    const Rot3 q = equivalent_rotation(s.angles);
    LaminateFrame fr;
    for (int i = 0; i < 3; ++i) {
        fr.a[i] = q[i][0];
        fr.b[i] = q[i][1];
        fr.n[i] = q[i][2];
    }
    fr.c1g = rotate_stiffness_tensor_oracle(s.c1, q);
    fr.c2g = rotate_stiffness_tensor_oracle(s.c2, q);
    return fr;
}

} // namespace detail

// Effective stiffness of a two-phase laminate, assembled and solved in the
// global frame as the 12-unknown system {strain average, in-plane strain
// continuity, traction continuity across the interface}.
inline Mat6 laminate_effective_stiffness(const LaminateSpec& spec) {
    validate(spec);
    const detail::LaminateFrame fr = detail::laminate_frame(spec);

    // Continuity rows: a.(jump).a, b.(jump).b, a.(jump).b must vanish.
    const std::array<Vec6, 3> cont = {detail::bilinear_row(fr.a, fr.a), detail::bilinear_row(fr.b, fr.b),
                                      detail::bilinear_row(fr.a, fr.b)};
    // Traction rows: e_i . (sig jump) . n.
    std::array<Vec6, 3> trac;
    for (int i = 0; i < 3; ++i) {
        std::array<double, 3> ei{};
        ei[i] = 1.0;
        trac[i] = detail::bilinear_row(ei, fr.n);
    }

    Mat6 c_eff;
    for (int col = 0; col < 6; ++col) {
        Vec6 macro;
        macro[col] = 1.0;
        // Unknowns x = [eps1 (6), eps2 (6)].
        std::vector<double> a(144, 0.0), b(12, 0.0);
        int row = 0;
        for (int i = 0; i < 6; ++i, ++row) {  // average
            a[row * 12 + i] = spec.f1;
            a[row * 12 + 6 + i] = spec.f2;
            b[row] = macro[i];
        }
        for (int t = 0; t < 3; ++t, ++row) {  // in-plane continuity
            for (int j = 0; j < 6; ++j) {
                a[row * 12 + j] = cont[t][j];
                a[row * 12 + 6 + j] = -cont[t][j];
            }
        }
        for (int t = 0; t < 3; ++t, ++row) {  // traction continuity
            const Vec6 r1 = matvec_t(fr.c1g, trac[t]);  // row of trac . C (C symmetric)
            const Vec6 r2 = matvec_t(fr.c2g, trac[t]);
            for (int j = 0; j < 6; ++j) {
                a[row * 12 + j] = r1[j];
                a[row * 12 + 6 + j] = -r2[j];
            }
        }
        const std::vector<double> x = lu_solve(12, a, b);
        Vec6 e1, e2;
        for (int i = 0; i < 6; ++i) {
            e1[i] = x[i];
            e2[i] = x[6 + i];
        }
        const Vec6 sig = spec.f1 * matvec(fr.c1g, e1) + spec.f2 * matvec(fr.c2g, e2);
        for (int i = 0; i < 6; ++i) c_eff(i, col) = sig[i];
    }
    return c_eff;
}

// --- independent constitutive integration -----------------------------------------

struct OracleMaterial {
    bool plastic = false;
    double E = 0.0, nu = 0.0;
    double sigma_y0 = 0.0, hardening = 0.0;
};

struct OracleMatState {
    Tensor2 eps_p{};   // plastic strain tensor
    double p_acc = 0.0;
};

namespace detail {

inline Tensor2 dev3(const Tensor2& t) {
    const double m = (t[0][0] + t[1][1] + t[2][2]) / 3.0;
    Tensor2 d = t;
    d[0][0] -= m;
    d[1][1] -= m;
    d[2][2] -= m;
    return d;
}

inline double frob3(const Tensor2& t) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) s += t[i][j] * t[i][j];
    return std::sqrt(s);
}

// Total-strain stress evaluation with radial return: given the total strain
// tensor, update the plastic state and return the stress tensor.
inline Tensor2 oracle_stress_at(const OracleMaterial& m, const Tensor2& eps, OracleMatState& st) {
    const double mu = m.E / (2.0 * (1.0 + m.nu));
    const double lambda = m.E * m.nu / ((1.0 + m.nu) * (1.0 - 2.0 * m.nu));
    Tensor2 ee{};  // elastic strain
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) ee[i][j] = eps[i][j] - st.eps_p[i][j];
    const double tr = ee[0][0] + ee[1][1] + ee[2][2];
    Tensor2 sig{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) sig[i][j] = 2.0 * mu * ee[i][j];
        sig[i][i] += lambda * tr;
    }
    if (!m.plastic) return sig;
    const Tensor2 s = dev3(sig);
    const double q = std::sqrt(1.5) * frob3(s);
    const double yield = m.sigma_y0 + m.hardening * st.p_acc;
    if (q <= yield) return sig;
    const double dgamma = (q - yield) / (3.0 * mu + m.hardening);
    const double scale = dgamma * 1.5 / q;  // dgamma * (3/2) / q
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) st.eps_p[i][j] += scale * s[i][j];
    st.p_acc += dgamma;
    // Re-evaluate elastically with the updated plastic strain.
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) ee[i][j] = eps[i][j] - st.eps_p[i][j];
    const double tr2 = ee[0][0] + ee[1][1] + ee[2][2];
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) sig[i][j] = 2.0 * mu * ee[i][j];
        sig[i][i] += lambda * tr2;
    }
    return sig;
}

} // namespace detail

// Stress history for a prescribed total-strain history (Mandel vectors).
// Closed-form radial return in tensor form; shares no code with the
// production material module.
inline std::vector<Vec6> pointwise_j2_oracle(const OracleMaterial& mat, const std::vector<Vec6>& strain_history) {
    OracleMatState st;
    std::vector<Vec6> out;
    out.reserve(strain_history.size());
    for (const Vec6& e : strain_history) {
        const Tensor2 sig = detail::oracle_stress_at(mat, to_tensor(e), st);
        out.push_back(from_tensor(sig));
    }
    return out;
}

// --- incremental laminate oracle ----------------------------------------------------

struct LaminateIncrementalSpec {
    OracleMaterial mat1, mat2;
    double f1 = 0.5, f2 = 0.5;
    Angles angles{};
};

struct LaminateStepControl {
    std::array<bool, 6> strain_control{};
    Vec6 delta;  // increments of the controlled macro quantities
};

struct LaminateHistoryPoint {
    Vec6 eps, sig;
};

// Nonlinear two-phase laminate under mixed macroscopic control. Each
// increment solves the 18-unknown system {phase strain increments, macro
// strain increment} with Newton iteration and a finite-difference Jacobian:
//
//   rows 1-6   : f1 de1 + f2 de2 - de_macro = 0
//   rows 7-9   : in-plane continuity of (de1 - de2)
//   rows 10-12 : traction continuity of the updated phase stresses
//   rows 13-18 : control (strain component pinned, or averaged stress
//                increment pinned)
//
// Phase stresses come from the total-strain radial-return evaluation above.
inline std::vector<LaminateHistoryPoint> laminate_incremental_response(const LaminateIncrementalSpec& spec,
                                                                       const std::vector<LaminateStepControl>& steps,
                                                                       double tol = 1e-11, int max_newton = 60) {
    const Rot3 q = equivalent_rotation(spec.angles);
    std::array<double, 3> dir_a{}, dir_b{}, dir_n{};
    for (int i = 0; i < 3; ++i) {
        dir_a[i] = q[i][0];
        dir_b[i] = q[i][1];
        dir_n[i] = q[i][2];
    }
    const std::array<Vec6, 3> cont = {detail::bilinear_row(dir_a, dir_a), detail::bilinear_row(dir_b, dir_b),
                                      detail::bilinear_row(dir_a, dir_b)};
    std::array<Vec6, 3> trac;
    for (int i = 0; i < 3; ++i) {
        std::array<double, 3> ei{};
        ei[i] = 1.0;
        trac[i] = detail::bilinear_row(ei, dir_n);
    }

    // Phase materials live in the global frame: rotate elastic axes by working
    // on global strains directly (isotropic phases are rotation-invariant, and
    // the J2 law is isotropic too, so only geometry needs rotating).
    Vec6 eps1, eps2, eps_macro, sig_macro;
    OracleMatState st1, st2;
    const double stress_scale = std::max({spec.mat1.E, spec.mat2.E, 1.0});

    auto phase_stress = [&](const OracleMaterial& m, const Vec6& eps_total, const OracleMatState& st_in) {
        OracleMatState st = st_in;  // trial evaluation
        return from_tensor(detail::oracle_stress_at(m, to_tensor(eps_total), st));
    };

    std::vector<LaminateHistoryPoint> history;
    for (const LaminateStepControl& step : steps) {
        // Newton unknowns x = [de1 (6), de2 (6), de_macro (6)].
        std::vector<double> x(18, 0.0);
        const Vec6 sig1_old = phase_stress(spec.mat1, eps1, st1);
        const Vec6 sig2_old = phase_stress(spec.mat2, eps2, st2);

        auto residual = [&](const std::vector<double>& xv) {
            Vec6 de1, de2, dem;
            for (int i = 0; i < 6; ++i) {
                de1[i] = xv[i];
                de2[i] = xv[6 + i];
                dem[i] = xv[12 + i];
            }
            const Vec6 s1 = phase_stress(spec.mat1, eps1 + de1, st1);
            const Vec6 s2 = phase_stress(spec.mat2, eps2 + de2, st2);
            std::vector<double> r(18);
            for (int i = 0; i < 6; ++i) r[i] = spec.f1 * de1[i] + spec.f2 * de2[i] - dem[i];
            for (int t = 0; t < 3; ++t) r[6 + t] = dot(cont[t], de1 - de2);
            for (int t = 0; t < 3; ++t) r[9 + t] = dot(trac[t], s1 - s2) / stress_scale;
            for (int i = 0; i < 6; ++i) {
                if (step.strain_control[i]) {
                    r[12 + i] = dem[i] - step.delta[i];
                } else {
                    const double dsig = spec.f1 * (s1[i] - sig1_old[i]) + spec.f2 * (s2[i] - sig2_old[i]);
                    r[12 + i] = (dsig - step.delta[i]) / stress_scale;
                }
            }
            return r;
        };

        bool done = false;
        for (int it = 0; it < max_newton; ++it) {
            std::vector<double> r = residual(x);
            double rn = 0.0;
            for (double v : r) rn = std::max(rn, std::abs(v));
            if (rn < tol) {
                done = true;
                break;
            }
            // Finite-difference Jacobian.
            std::vector<double> jac(324);
            for (int c = 0; c < 18; ++c) {
                const double h = 1e-7 * std::max(1.0, std::abs(x[c]));
                std::vector<double> xp = x, xm = x;
                xp[c] += h;
                xm[c] -= h;
                const std::vector<double> rp = residual(xp), rm = residual(xm);
                for (int rr = 0; rr < 18; ++rr) jac[rr * 18 + c] = (rp[rr] - rm[rr]) / (2.0 * h);
            }
            std::vector<double> dx = lu_solve(18, jac, r);
            for (int i = 0; i < 18; ++i) x[i] -= dx[i];
        }
        if (!done) throw Error("incremental laminate oracle: Newton did not converge");

        Vec6 de1, de2, dem;
        for (int i = 0; i < 6; ++i) {
            de1[i] = x[i];
            de2[i] = x[6 + i];
            dem[i] = x[12 + i];
        }
        eps1 += de1;
        eps2 += de2;
        eps_macro += dem;
        // Commit the plastic states at the converged strains.
        const Vec6 s1 = from_tensor(detail::oracle_stress_at(spec.mat1, to_tensor(eps1), st1));
        const Vec6 s2 = from_tensor(detail::oracle_stress_at(spec.mat2, to_tensor(eps2), st2));
        sig_macro = spec.f1 * s1 + spec.f2 * s2;
        history.push_back({eps_macro, sig_macro});
    }
    return history;
}

} // namespace dmn::oracles

#endif
