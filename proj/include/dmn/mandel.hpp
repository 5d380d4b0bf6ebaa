#ifndef DMN_MANDEL_HPP
#define DMN_MANDEL_HPP

// Mandel-notation tensor algebra: 6-vectors for symmetric second-order
// tensors, 6x6 matrices for stiffness/compliance/rotation operators.
//
// Component ordering is (11, 22, 33, sqrt(2)*23, sqrt(2)*13, sqrt(2)*12).
// The sqrt(2) shear scaling makes rotation matrices orthogonal and turns
// the energy pairing into an ordinary dot product; it is used everywhere
// in this library, including material tangents. Voigt conversions exist
// only at file-I/O boundaries and are labeled as such.

#include <array>
#include <cmath>
#include <cstddef>

#include "dmn/errors.hpp"

namespace dmn {

inline constexpr double kSqrt2 = 1.4142135623730950488016887242097;

// In-plane components (11, 22, 12) and interface-normal components
// (33, 23, 13) of the laminate building block, 0-based.
inline constexpr std::array<int, 3> kInPlane = {0, 1, 5};
inline constexpr std::array<int, 3> kNormal = {2, 3, 4};

struct Vec6 {
    std::array<double, 6> c{};

    double& operator[](std::size_t i) { return c[i]; }
    double operator[](std::size_t i) const { return c[i]; }

    Vec6& operator+=(const Vec6& o) {
        for (int i = 0; i < 6; ++i) c[i] += o.c[i];
        return *this;
    }
    Vec6& operator-=(const Vec6& o) {
        for (int i = 0; i < 6; ++i) c[i] -= o.c[i];
        return *this;
    }
    Vec6& operator*=(double s) {
        for (double& x : c) x *= s;
        return *this;
    }
};

inline Vec6 operator+(Vec6 a, const Vec6& b) { return a += b; }
inline Vec6 operator-(Vec6 a, const Vec6& b) { return a -= b; }
inline Vec6 operator*(double s, Vec6 v) { return v *= s; }
inline Vec6 operator*(Vec6 v, double s) { return v *= s; }
inline Vec6 operator-(const Vec6& v) {
    Vec6 r;
    for (int i = 0; i < 6; ++i) r[i] = -v[i];
    return r;
}

inline double dot(const Vec6& a, const Vec6& b) {
    double s = 0.0;
    for (int i = 0; i < 6; ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec6& v) { return std::sqrt(dot(v, v)); }

struct Mat6 {
    // Row-major 6x6.
    std::array<double, 36> m{};

    double& operator()(std::size_t i, std::size_t j) { return m[6 * i + j]; }
    double operator()(std::size_t i, std::size_t j) const { return m[6 * i + j]; }

    Mat6& operator+=(const Mat6& o) {
        for (int i = 0; i < 36; ++i) m[i] += o.m[i];
        return *this;
    }
    Mat6& operator-=(const Mat6& o) {
        for (int i = 0; i < 36; ++i) m[i] -= o.m[i];
        return *this;
    }
    Mat6& operator*=(double s) {
        for (double& x : m) x *= s;
        return *this;
    }

    static Mat6 identity() {
        Mat6 r;
        for (int i = 0; i < 6; ++i) r(i, i) = 1.0;
        return r;
    }
};

inline Mat6 operator+(Mat6 a, const Mat6& b) { return a += b; }
inline Mat6 operator-(Mat6 a, const Mat6& b) { return a -= b; }
inline Mat6 operator*(double s, Mat6 a) { return a *= s; }

inline Mat6 matmul(const Mat6& a, const Mat6& b) {
    Mat6 r;
    for (int i = 0; i < 6; ++i) {
        for (int k = 0; k < 6; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < 6; ++j) r(i, j) += aik * b(k, j);
        }
    }
    return r;
}

inline Vec6 matvec(const Mat6& a, const Vec6& v) {
    Vec6 r;
    for (int i = 0; i < 6; ++i) {
        double s = 0.0;
        for (int j = 0; j < 6; ++j) s += a(i, j) * v[j];
        r[i] = s;
    }
    return r;
}

// r = A^T v.
inline Vec6 matvec_t(const Mat6& a, const Vec6& v) {
    Vec6 r;
    for (int j = 0; j < 6; ++j) {
        double s = 0.0;
        for (int i = 0; i < 6; ++i) s += a(i, j) * v[i];
        r[j] = s;
    }
    return r;
}

inline Mat6 transpose(const Mat6& a) {
    Mat6 r;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) r(j, i) = a(i, j);
    return r;
}

inline Mat6 symmetrize(const Mat6& a) {
    Mat6 r;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) r(i, j) = 0.5 * (a(i, j) + a(j, i));
    return r;
}

inline double frobenius(const Mat6& a) {
    double s = 0.0;
    for (double x : a.m) s += x * x;
    return std::sqrt(s);
}

inline double frob_inner(const Mat6& a, const Mat6& b) {
    double s = 0.0;
    for (int i = 0; i < 36; ++i) s += a.m[i] * b.m[i];
    return s;
}

inline bool is_symmetric(const Mat6& a, double rel_tol = 1e-12) {
    const double scale = frobenius(a);
    double worst = 0.0;
    for (int i = 0; i < 6; ++i)
        for (int j = i + 1; j < 6; ++j) worst = std::max(worst, std::abs(a(i, j) - a(j, i)));
    return worst <= rel_tol * std::max(scale, 1e-300);
}

// Cholesky-based SPD test; does not modify the input.
inline bool is_spd(const Mat6& a, double rel_tol = 1e-12) {
    if (!is_symmetric(a, 1e-8)) return false;
    Mat6 l = a;
    const double floor = rel_tol * std::max(frobenius(a), 1e-300);
    for (int j = 0; j < 6; ++j) {
        double d = l(j, j);
        for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d <= floor) return false;
        const double inv = 1.0 / std::sqrt(d);
        l(j, j) = std::sqrt(d);
        for (int i = j + 1; i < 6; ++i) {
            double s = l(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s * inv;
        }
    }
    return true;
}

// --- conversions to/from full 3x3 symmetric tensors ------------------------
//
// The sqrt(2) shear scaling costs one rounding per direction, so a round trip
// is within 1 ulp componentwise (bitwise exactness is unattainable for an
// irrational scale factor).

using Tensor2 = std::array<std::array<double, 3>, 3>;

inline Tensor2 to_tensor(const Vec6& v) {
    const double s = 1.0 / kSqrt2;
    Tensor2 t{};
    t[0][0] = v[0];
    t[1][1] = v[1];
    t[2][2] = v[2];
    t[1][2] = t[2][1] = v[3] * s;
    t[0][2] = t[2][0] = v[4] * s;
    t[0][1] = t[1][0] = v[5] * s;
    return t;
}

inline Vec6 from_tensor(const Tensor2& t) {
    Vec6 v;
    v[0] = t[0][0];
    v[1] = t[1][1];
    v[2] = t[2][2];
    v[3] = kSqrt2 * t[1][2];
    v[4] = kSqrt2 * t[0][2];
    v[5] = kSqrt2 * t[0][1];
    return v;
}

// --- small 3x3 helpers for the interface block ------------------------------

struct Mat3 {
    std::array<double, 9> m{};
    double& operator()(std::size_t i, std::size_t j) { return m[3 * i + j]; }
    double operator()(std::size_t i, std::size_t j) const { return m[3 * i + j]; }
};

inline double frobenius(const Mat3& a) {
    double s = 0.0;
    for (double x : a.m) s += x * x;
    return std::sqrt(s);
}

// Closed-form adjugate inverse of a symmetric 3x3 matrix. Returns false when
// the determinant underflows relative to the matrix scale.
inline bool invert3_sym(const Mat3& a, Mat3& inv) {
    const double c00 = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
    const double c01 = a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2);
    const double c02 = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
    const double det = a(0, 0) * c00 + a(0, 1) * c01 + a(0, 2) * c02;
    const double scale = frobenius(a);
    if (!(std::abs(det) > 1e-300) || !(std::isfinite(det))) return false;
    if (std::abs(det) < 1e-250 * scale * scale * scale) return false;
    const double d = 1.0 / det;
    inv(0, 0) = c00 * d;
    inv(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) * d;
    inv(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) * d;
    inv(1, 0) = c01 * d;
    inv(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) * d;
    inv(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) * d;
    inv(2, 0) = c02 * d;
    inv(2, 1) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) * d;
    inv(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) * d;
    return true;
}

// Frobenius-based condition estimate, within a factor of 3 of the spectral
// condition number for 3x3.
inline double cond3_estimate(const Mat3& a, const Mat3& a_inv) {
    return frobenius(a) * frobenius(a_inv);
}

// --- 6x6 linear solves (production path) ------------------------------------

// Gauss-Jordan inverse with partial pivoting. Throws SingularRootSystemError
// on pivot breakdown; callers wrap it with a more specific error when one
// applies.
inline Mat6 invert6(const Mat6& a) {
    Mat6 l = a;
    Mat6 r = Mat6::identity();
    for (int col = 0; col < 6; ++col) {
        int piv = col;
        double best = std::abs(l(col, col));
        for (int i = col + 1; i < 6; ++i) {
            if (std::abs(l(i, col)) > best) {
                best = std::abs(l(i, col));
                piv = i;
            }
        }
        if (!(best > 0.0) || !std::isfinite(best)) throw SingularRootSystemError("singular 6x6 matrix");
        if (piv != col) {
            for (int j = 0; j < 6; ++j) {
                std::swap(l(piv, j), l(col, j));
                std::swap(r(piv, j), r(col, j));
            }
        }
        const double inv = 1.0 / l(col, col);
        for (int j = 0; j < 6; ++j) {
            l(col, j) *= inv;
            r(col, j) *= inv;
        }
        for (int i = 0; i < 6; ++i) {
            if (i == col) continue;
            const double f = l(i, col);
            if (f == 0.0) continue;
            for (int j = 0; j < 6; ++j) {
                l(i, j) -= f * l(col, j);
                r(i, j) -= f * r(col, j);
            }
        }
    }
    return r;
}

// --- isotropic elasticity ----------------------------------------------------

struct IsotropicElastic {
    double E = 0.0;   // Young's modulus
    double nu = 0.0;  // Poisson ratio, open interval (-1, 0.5)
};

inline void validate(const IsotropicElastic& mat) {
    if (!(mat.E > 0.0)) throw InputError("Young's modulus must be positive");
    if (!(mat.nu > -1.0 && mat.nu < 0.5)) throw InputError("Poisson ratio must lie in (-1, 0.5)");
}

inline double shear_modulus(const IsotropicElastic& mat) { return mat.E / (2.0 * (1.0 + mat.nu)); }

inline double bulk_modulus(const IsotropicElastic& mat) { return mat.E / (3.0 * (1.0 - 2.0 * mat.nu)); }

// Isotropic stiffness in Mandel notation: diagonal shear entries are 2G
// (not G as in Voigt).
inline Mat6 iso_stiffness(const IsotropicElastic& mat) {
    validate(mat);
    const double g = shear_modulus(mat);
    const double lambda = mat.E * mat.nu / ((1.0 + mat.nu) * (1.0 - 2.0 * mat.nu));
    Mat6 c;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) c(i, j) = lambda;
        c(i, i) = lambda + 2.0 * g;
        c(i + 3, i + 3) = 2.0 * g;
    }
    return c;
}

// --- Mandel rotations ---------------------------------------------------------
//
// R(alpha, beta, gamma) = X(alpha) * Y(beta) * Z(gamma), where each elemental
// matrix embeds an in-plane block r_p and an out-of-plane block r_nu:
//
//   X: (1,1)=1,  r_p on rows/cols (2,3,4),  r_nu on (5,6), angle +alpha
//   Y: (2,2)=1,  r_p on rows/cols (1,3,5),  r_nu on (4,6), angle -beta
//   Z: (3,3)=1,  r_p on rows/cols (1,2,6),  r_nu on (4,5), angle +gamma
//
// (1-based positions; note Y carries the -beta sign convention.)
// R is orthogonal; it equals the Mandel representation of the 3x3 rotation
// X3(-alpha)*Y3(-beta)*Z3(-gamma), which the test oracle exploits.

namespace detail {

struct ElemBlocks {
    // 3x3 in-plane block.
    std::array<double, 9> p;
    // 2x2 out-of-plane block.
    std::array<double, 4> nu;
};

inline ElemBlocks rotation_blocks(double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    const double c2 = c * c, s2 = s * s, sc = s * c;
    ElemBlocks b;
    b.p = {c2, s2, kSqrt2 * sc, s2, c2, -kSqrt2 * sc, -kSqrt2 * sc, kSqrt2 * sc, c2 - s2};
    b.nu = {c, -s, s, c};
    return b;
}

// d/dtheta of rotation_blocks.
inline ElemBlocks rotation_blocks_deriv(double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    const double d_c2 = -2.0 * s * c, d_s2 = 2.0 * s * c, d_sc = c * c - s * s;
    ElemBlocks b;
    b.p = {d_c2, d_s2, kSqrt2 * d_sc, d_s2, d_c2, -kSqrt2 * d_sc, -kSqrt2 * d_sc, kSqrt2 * d_sc, d_c2 - d_s2};
    b.nu = {-s, -c, c, -s};
    return b;
}

// axis: 0 = X, 1 = Y, 2 = Z. Index sets are 0-based.
inline constexpr std::array<std::array<int, 3>, 3> kElemP = {{{1, 2, 3}, {0, 2, 4}, {0, 1, 5}}};
inline constexpr std::array<std::array<int, 2>, 3> kElemNu = {{{4, 5}, {3, 5}, {3, 4}}};
inline constexpr std::array<int, 3> kElemOne = {0, 1, 2};

inline Mat6 assemble_elem(int axis, const ElemBlocks& b, bool unit_diag) {
    Mat6 r;
    if (unit_diag) r(kElemOne[axis], kElemOne[axis]) = 1.0;
    const auto& ip = kElemP[axis];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(ip[i], ip[j]) = b.p[3 * i + j];
    const auto& on = kElemNu[axis];
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) r(on[i], on[j]) = b.nu[2 * i + j];
    return r;
}

// Internal angle passed to the blocks (Y flips the sign).
inline double elem_angle(int axis, double user_angle) { return axis == 1 ? -user_angle : user_angle; }

} // namespace detail

// Elemental Mandel rotation about axis 0/1/2 with the user-facing angle.
inline Mat6 elemental_rotation(int axis, double angle) {
    return detail::assemble_elem(axis, detail::rotation_blocks(detail::elem_angle(axis, angle)), true);
}

// d/d(angle) of elemental_rotation, including the Y-axis sign chain.
inline Mat6 elemental_rotation_deriv(int axis, double angle) {
    Mat6 d = detail::assemble_elem(axis, detail::rotation_blocks_deriv(detail::elem_angle(axis, angle)), false);
    if (axis == 1) d *= -1.0;
    return d;
}

inline Mat6 rotation_matrix(double alpha, double beta, double gamma) {
    return matmul(elemental_rotation(0, alpha), matmul(elemental_rotation(1, beta), elemental_rotation(2, gamma)));
}

// dR/dalpha, dR/dbeta, dR/dgamma.
inline std::array<Mat6, 3> rotation_matrix_derivs(double alpha, double beta, double gamma) {
    const Mat6 x = elemental_rotation(0, alpha);
    const Mat6 y = elemental_rotation(1, beta);
    const Mat6 z = elemental_rotation(2, gamma);
    const Mat6 dx = elemental_rotation_deriv(0, alpha);
    const Mat6 dy = elemental_rotation_deriv(1, beta);
    const Mat6 dz = elemental_rotation_deriv(2, gamma);
    return {matmul(dx, matmul(y, z)), matmul(x, matmul(dy, z)), matmul(x, matmul(y, dz))};
}

// Stiffness rotated into the parent frame: C_bar = R C R^T. Residual strains
// rotate with the same map (rotate_vec), which keeps the root relation
// delta_eps = C^-1 delta_sig + delta_eps_res frame-consistent.
inline Mat6 rotate_stiffness(const Mat6& c, const Mat6& r) {
    return matmul(r, matmul(c, transpose(r)));
}

inline Mat6 rotate_stiffness(const Mat6& c, double alpha, double beta, double gamma) {
    return rotate_stiffness(c, rotation_matrix(alpha, beta, gamma));
}

inline Vec6 rotate_vec(const Vec6& v, const Mat6& r) { return matvec(r, v); }

inline Vec6 rotate_vec(const Vec6& v, double alpha, double beta, double gamma) {
    return matvec(rotation_matrix(alpha, beta, gamma), v);
}

// Inverse rotation (R^T v); used when descending the tree.
inline Vec6 rotate_vec_inverse(const Vec6& v, const Mat6& r) { return matvec_t(r, v); }

} // namespace dmn

#endif
