#ifndef DMN_MATERIALS_HPP
#define DMN_MATERIALS_HPP

// Leaf-level constitutive laws for online prediction: linear elasticity and
// small-strain J2 plasticity with isotropic linear hardening (radial return,
// consistent algorithmic tangent). Updates are pure: state in, state out.

#include <cmath>
#include <cstddef>
#include <map>
#include <string>

#include "dmn/errors.hpp"
#include "dmn/mandel.hpp"

namespace dmn {

struct MaterialState {
    Vec6 eps;          // total strain
    Vec6 sig;          // stress
    Vec6 eps_p;        // plastic strain (deviatoric)
    double p_acc = 0.0;  // accumulated equivalent plastic strain
};

struct J2Params {
    IsotropicElastic elastic;
    double sigma_y0 = 0.0;  // initial yield stress, > 0
    double hardening = 0.0; // linear isotropic hardening modulus H, >= 0
};

inline void validate(const J2Params& p) {
    validate(p.elastic);
    if (!(p.sigma_y0 > 0.0)) throw InputError("initial yield stress must be positive");
    if (!(p.hardening >= 0.0)) throw InputError("hardening modulus must be non-negative");
}

struct MaterialUpdate {
    Vec6 d_sig;
    Mat6 tangent;
    MaterialState state;
};

inline Vec6 deviator(const Vec6& v) {
    const double mean = (v[0] + v[1] + v[2]) / 3.0;
    Vec6 d = v;
    d[0] -= mean;
    d[1] -= mean;
    d[2] -= mean;
    return d;
}

inline double trace(const Vec6& v) { return v[0] + v[1] + v[2]; }

// Mandel norm of the deviator equals the Frobenius norm of the 3x3 deviatoric
// tensor, so q = sqrt(3/2) * |dev|.
inline double von_mises(const Vec6& sig) {
    return std::sqrt(1.5) * norm(deviator(sig));
}

inline MaterialUpdate elastic_update(const Mat6& c, const Vec6& d_eps, const MaterialState& state) {
    MaterialUpdate u;
    u.d_sig = matvec(c, d_eps);
    u.tangent = c;
    u.state = state;
    u.state.eps += d_eps;
    u.state.sig += u.d_sig;
    return u;
}

// Elastic predictor / radial-return corrector for von Mises yield
// f = q - (sigma_y0 + H * p_acc). Linear hardening admits a closed-form
// return; NonConvergedReturnError is reserved for laws that do not.
inline MaterialUpdate j2_update(const J2Params& mat, const Vec6& d_eps, const MaterialState& state) {
    const Mat6 c = iso_stiffness(mat.elastic);
    const double mu = shear_modulus(mat.elastic);

    const Vec6 sig_trial = state.sig + matvec(c, d_eps);
    const Vec6 s_trial = deviator(sig_trial);
    const double q_trial = std::sqrt(1.5) * norm(s_trial);
    const double yield = mat.sigma_y0 + mat.hardening * state.p_acc;

    if (q_trial <= yield) {
        return elastic_update(c, d_eps, state);
    }

    const double dgamma = (q_trial - yield) / (3.0 * mu + mat.hardening);
    // Unit deviatoric direction (Mandel norm 1); flow direction is
    // n_hat = sqrt(3/2) * n.
    const Vec6 n = (1.0 / norm(s_trial)) * s_trial;
    const Vec6 d_eps_p = (dgamma * std::sqrt(1.5)) * n;

    MaterialUpdate u;
    u.d_sig = matvec(c, d_eps) - (2.0 * mu * dgamma * std::sqrt(1.5)) * n;
    u.state = state;
    u.state.eps += d_eps;
    u.state.sig += u.d_sig;
    u.state.eps_p += d_eps_p;
    u.state.p_acc += dgamma;

    // Consistent tangent:
    //   C_alg = K 1x1 + 2mu (1 - 3mu dgamma/q_trial) P_dev
    //           - 6mu^2 (1/(3mu+H) - dgamma/q_trial) n x n
    const double k_bulk = bulk_modulus(mat.elastic);
    const double dev_scale = 2.0 * mu * (1.0 - 3.0 * mu * dgamma / q_trial);
    const double nn_scale = 6.0 * mu * mu * (1.0 / (3.0 * mu + mat.hardening) - dgamma / q_trial);
    Mat6 t;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t(i, j) = k_bulk - dev_scale / 3.0;
    for (int i = 0; i < 6; ++i) t(i, i) += dev_scale;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) t(i, j) -= nn_scale * n[i] * n[j];
    u.tangent = t;
    return u;
}

// Leaf material description; phase-1/phase-2 leaves bind by parity, with
// optional per-leaf overrides (see online.hpp).
struct Material {
    enum class Type { Elastic, J2 };
    Type type = Type::Elastic;
    IsotropicElastic elastic;
    double sigma_y0 = 0.0;
    double hardening = 0.0;

    static Material make_elastic(IsotropicElastic e) {
        Material m;
        m.type = Type::Elastic;
        m.elastic = e;
        return m;
    }
    static Material make_j2(J2Params p) {
        Material m;
        m.type = Type::J2;
        m.elastic = p.elastic;
        m.sigma_y0 = p.sigma_y0;
        m.hardening = p.hardening;
        return m;
    }
    J2Params j2() const { return J2Params{elastic, sigma_y0, hardening}; }
};

inline void validate(const Material& m) {
    if (m.type == Material::Type::Elastic)
        validate(m.elastic);
    else
        validate(m.j2());
}

inline MaterialUpdate material_update(const Material& m, const Vec6& d_eps, const MaterialState& state) {
    if (m.type == Material::Type::Elastic) return elastic_update(iso_stiffness(m.elastic), d_eps, state);
    return j2_update(m.j2(), d_eps, state);
}

// Registry keyed by leaf parity (odd: phase 1, even: phase 2) with optional
// per-leaf overrides for experiments.
struct MaterialSet {
    Material phase1;
    Material phase2;
    std::map<std::size_t, Material> overrides;  // keyed by 1-based leaf index

    const Material& for_leaf(std::size_t leaf_1based) const {
        auto it = overrides.find(leaf_1based);
        if (it != overrides.end()) return it->second;
        return (leaf_1based % 2 == 1) ? phase1 : phase2;
    }
};

} // namespace dmn

#endif
