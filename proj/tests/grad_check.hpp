#ifndef DMN_TESTS_GRAD_CHECK_HPP
#define DMN_TESTS_GRAD_CHECK_HPP

// Shared finite-difference gradient oracle for the unit and acceptance
// suites. Plain central differences at h = 1e-6 carry a cancellation noise
// floor near 1e-10 * loss, which drowns coordinates whose true gradient is
// tiny (for instance bottom-layer gamma rotations of transversely isotropic
// blocks, which vanish analytically). Richardson extrapolation of two
// central differences at a larger base step keeps truncation at O(h^4)
// while dividing the noise floor by about a hundred.

#include <algorithm>
#include <cmath>

#include "dmn/training.hpp"

namespace gradcheck {

using namespace dmn;

inline ParamGradient fd_richardson(const DmnParams& p, const Dataset& batch, double lambda, double s0,
                                   double base_h = 1e-4) {
    ParamGradient g = ParamGradient::zeros(p.depth);
    auto eval = [&](const DmnParams& q) { return loss(q, batch, lambda, s0).total; };
    auto central = [&](DmnParams& q, double& slot, double orig, double h) {
        slot = orig + h;
        const double lp = eval(q);
        slot = orig - h;
        const double lm = eval(q);
        slot = orig;
        return (lp - lm) / (2.0 * h);
    };
    DmnParams q = p;
    for (std::size_t j = 0; j < p.z.size(); ++j) {
        const double h = base_h * std::max(1.0, std::abs(p.z[j]));
        const double d1 = central(q, q.z[j], p.z[j], h);
        const double d2 = central(q, q.z[j], p.z[j], 0.5 * h);
        g.dz[j] = (4.0 * d2 - d1) / 3.0;
    }
    for (std::size_t b = 0; b < p.angles.size(); ++b) {
        for (int t = 0; t < 3; ++t) {
            const double orig = angle_component(p.angles[b], t);
            const double h = base_h * std::max(1.0, std::abs(orig));
            const double d1 = central(q, angle_component(q.angles[b], t), orig, h);
            const double d2 = central(q, angle_component(q.angles[b], t), orig, 0.5 * h);
            angle_component(g.dangles[b], t) = (4.0 * d2 - d1) / 3.0;
        }
    }
    return g;
}

// Worst relative disagreement over the coordinates whose gradient is
// resolvable (|g| > floor on either route).
inline double max_rel_err(const ParamGradient& a, const ParamGradient& b, double floor = 1e-10) {
    double worst = 0.0;
    auto consider = [&](double va, double vb) {
        const double scale = std::max(std::abs(va), std::abs(vb));
        if (scale > floor) worst = std::max(worst, std::abs(va - vb) / scale);
    };
    for (std::size_t j = 0; j < a.dz.size(); ++j) consider(a.dz[j], b.dz[j]);
    for (std::size_t k = 0; k < a.dangles.size(); ++k)
        for (int t = 0; t < 3; ++t) consider(angle_component(a.dangles[k], t), angle_component(b.dangles[k], t));
    return worst;
}

} // namespace gradcheck

#endif
