#include "catch_amalgamated.hpp"

#include "dmn/materials.hpp"
#include "dmn/oracles.hpp"
#include "test_util.hpp"

using namespace dmn;
using testutil::max_abs_diff;

namespace {

const J2Params kSteel{{210e3, 0.3}, 250.0, 10e3};

Vec6 uniaxial(double e) {
    Vec6 v;
    v[0] = e;
    return v;
}

oracles::OracleMaterial oracle_of(const J2Params& p) {
    oracles::OracleMaterial m;
    m.plastic = true;
    m.E = p.elastic.E;
    m.nu = p.elastic.nu;
    m.sigma_y0 = p.sigma_y0;
    m.hardening = p.hardening;
    return m;
}

} // namespace

TEST_CASE("elastic_update basics") {
    const Mat6 c = iso_stiffness({3.0, 0.2});
    MaterialState s;

    const MaterialUpdate zero = elastic_update(c, Vec6{}, s);
    CHECK(norm(zero.d_sig) == 0.0);

    Vec6 e1;
    e1[0] = 1.0;
    const MaterialUpdate unit = elastic_update(Mat6::identity(), e1, s);
    CHECK(max_abs_diff(unit.d_sig, e1) == 0.0);

    // Linearity: two half steps equal one full step.
    Rng rng(307);
    const Vec6 de = testutil::random_vec(rng, -0.01, 0.01);
    const MaterialUpdate full = elastic_update(c, de, s);
    const MaterialUpdate half1 = elastic_update(c, 0.5 * de, s);
    const MaterialUpdate half2 = elastic_update(c, 0.5 * de, half1.state);
    REQUIRE(max_abs_diff(half2.state.sig, full.state.sig) < 1e-15);
    REQUIRE(max_abs_diff(half2.state.eps, full.state.eps) < 1e-15);
}

TEST_CASE("j2_update below yield is exactly elastic") {
    MaterialState s;
    const Vec6 de = uniaxial(0.5e-3);  // well below first yield for kSteel
    const MaterialUpdate ju = j2_update(kSteel, de, s);
    const MaterialUpdate eu = elastic_update(iso_stiffness(kSteel.elastic), de, s);
    REQUIRE(max_abs_diff(ju.d_sig, eu.d_sig) == 0.0);
    REQUIRE(max_abs_diff(ju.tangent - eu.tangent, Mat6{}) == 0.0);
    REQUIRE(ju.state.p_acc == 0.0);
}

TEST_CASE("j2_update uniaxial ramp matches the pointwise oracle") {
    MaterialState s;
    std::vector<Vec6> history;
    const int n = 40;
    for (int i = 1; i <= n; ++i) history.push_back(uniaxial(0.02 * i / n));
    const std::vector<Vec6> ref = oracles::pointwise_j2_oracle(oracle_of(kSteel), history);

    Vec6 prev;
    for (int i = 0; i < n; ++i) {
        const MaterialUpdate u = j2_update(kSteel, history[i] - prev, s);
        s = u.state;
        prev = history[i];
        for (int c = 0; c < 6; ++c)
            REQUIRE(std::abs(s.sig[c] - ref[i][c]) < 1e-10 * std::max(1.0, std::abs(ref[i][c])));
    }
    REQUIRE(s.p_acc > 0.0);
}

TEST_CASE("j2_update with H = 0 caps von Mises stress at sigma_y0") {
    J2Params perfect = kSteel;
    perfect.hardening = 0.0;
    MaterialState s;
    const MaterialUpdate u = j2_update(perfect, uniaxial(0.05), s);
    REQUIRE(von_mises(u.state.sig) == Catch::Approx(perfect.sigma_y0).epsilon(1e-12));
}

TEST_CASE("j2 yield surface is respected after every return") {
    Rng rng(311);
    MaterialState s;
    for (int step = 0; step < 60; ++step) {
        const Vec6 de = testutil::random_vec(rng, -2e-3, 2e-3);
        const MaterialUpdate u = j2_update(kSteel, de, s);
        s = u.state;
        const double f = von_mises(s.sig) - (kSteel.sigma_y0 + kSteel.hardening * s.p_acc);
        REQUIRE(f <= 1e-9 * kSteel.sigma_y0);
        REQUIRE(std::abs(trace(s.eps_p)) < 1e-12);
    }
}

TEST_CASE("plastic dissipation is non-negative and p_acc non-decreasing") {
    Rng rng(313);
    MaterialState s;
    double p_prev = 0.0;
    for (int step = 0; step < 100; ++step) {
        const Vec6 de = testutil::random_vec(rng, -3e-3, 3e-3);
        const MaterialUpdate u = j2_update(kSteel, de, s);
        const Vec6 d_eps_p = u.state.eps_p - s.eps_p;
        REQUIRE(dot(u.state.sig, d_eps_p) >= 0.0);
        REQUIRE(u.state.p_acc >= p_prev);
        p_prev = u.state.p_acc;
        s = u.state;
    }
}

TEST_CASE("consistent tangent matches finite differences away from the yield kink") {
    // Drive well into the plastic branch so the finite-difference probes stay
    // on one side of the kink.
    MaterialState s;
    s = j2_update(kSteel, uniaxial(0.01), s).state;
    const Vec6 de = uniaxial(1e-3);
    const MaterialUpdate u = j2_update(kSteel, de, s);

    const double h = 1e-8;
    for (int j = 0; j < 6; ++j) {
        Vec6 dp = de, dm = de;
        dp[j] += h;
        dm[j] -= h;
        const Vec6 sp = j2_update(kSteel, dp, s).d_sig;
        const Vec6 sm = j2_update(kSteel, dm, s).d_sig;
        for (int i = 0; i < 6; ++i) {
            const double fd = (sp[i] - sm[i]) / (2.0 * h);
            REQUIRE(std::abs(u.tangent(i, j) - fd) < 1e-5 * kSteel.elastic.E);
        }
    }
}

TEST_CASE("monotonic uniaxial response is non-decreasing for H >= 0") {
    for (const double hard : {0.0, 5e3, 50e3}) {
        J2Params mat = kSteel;
        mat.hardening = hard;
        MaterialState s;
        double sig_prev = 0.0;
        for (int i = 1; i <= 50; ++i) {
            const MaterialUpdate u = j2_update(mat, uniaxial(0.03 / 50), s);
            s = u.state;
            REQUIRE(s.sig[0] >= sig_prev - 1e-12 * mat.elastic.E);
            sig_prev = s.sig[0];
        }
    }
}

TEST_CASE("material registry binds by parity with per-leaf overrides") {
    MaterialSet set;
    set.phase1 = Material::make_elastic({100.0, 0.3});
    set.phase2 = Material::make_j2(kSteel);
    set.overrides[3] = Material::make_elastic({7.0, 0.1});
    CHECK(set.for_leaf(1).type == Material::Type::Elastic);
    CHECK(set.for_leaf(2).type == Material::Type::J2);
    CHECK(set.for_leaf(3).elastic.E == 7.0);
    CHECK(set.for_leaf(5).elastic.E == 100.0);
}

TEST_CASE("material parameter validation") {
    CHECK_THROWS_AS(validate(J2Params{{210e3, 0.3}, 0.0, 1.0}), InputError);
    CHECK_THROWS_AS(validate(J2Params{{210e3, 0.3}, 250.0, -1.0}), InputError);
    CHECK_THROWS_AS(validate(J2Params{{-1.0, 0.3}, 250.0, 1.0}), InputError);
}
