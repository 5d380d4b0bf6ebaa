#include "catch_amalgamated.hpp"

#include "dmn/mandel.hpp"
#include "dmn/oracles.hpp"
#include "test_util.hpp"

using namespace dmn;
using testutil::max_abs_diff;

TEST_CASE("mandel vector / tensor conversion round-trips to the last bit") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec6 v = testutil::random_vec(rng, -3.0, 3.0);
        const Vec6 once = from_tensor(to_tensor(v));
        // The sqrt(2) scaling costs at most one rounding in each direction.
        for (int i = 0; i < 6; ++i) REQUIRE(std::abs(once[i] - v[i]) <= std::abs(v[i]) * 2.3e-16);
        // After one canonicalizing trip the conversion is stationary.
        const Vec6 twice = from_tensor(to_tensor(once));
        for (int i = 0; i < 6; ++i) REQUIRE(std::abs(twice[i] - once[i]) <= std::abs(once[i]) * 2.3e-16);
    }
}

TEST_CASE("iso_stiffness: nu = 0 decouples axes to the identity") {
    const Mat6 c = iso_stiffness({1.0, 0.0});
    REQUIRE(max_abs_diff(c, Mat6::identity()) < 1e-15);
}

TEST_CASE("iso_stiffness matches the Lame constants") {
    const double e = 1.0, nu = 0.3;
    const Mat6 c = iso_stiffness({e, nu});
    const double lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    const double mu = e / (2.0 * (1.0 + nu));
    CHECK(c(0, 0) == Catch::Approx(lambda + 2.0 * mu).epsilon(1e-14));
    CHECK(c(0, 1) == Catch::Approx(lambda).epsilon(1e-14));
    CHECK(c(3, 3) == Catch::Approx(2.0 * mu).epsilon(1e-14));
    CHECK(lambda == Catch::Approx(0.5769230769230769).epsilon(1e-12));
    CHECK(mu == Catch::Approx(0.38461538461538464).epsilon(1e-12));
}

TEST_CASE("iso_stiffness is SPD for steel-like constants") {
    REQUIRE(is_spd(iso_stiffness({210e3, 0.3})));
}

TEST_CASE("iso_stiffness rejects non-physical phases") {
    CHECK_THROWS_AS(iso_stiffness({1.0, 0.5}), InputError);
    CHECK_THROWS_AS(iso_stiffness({1.0, -1.0}), InputError);
    CHECK_THROWS_AS(iso_stiffness({0.0, 0.3}), InputError);
    CHECK_THROWS_AS(iso_stiffness({-2.0, 0.3}), InputError);
}

TEST_CASE("rotation_matrix at zero angles is the identity") {
    REQUIRE(max_abs_diff(rotation_matrix(0.0, 0.0, 0.0), Mat6::identity()) == 0.0);
}

TEST_CASE("rotation_matrix(pi/2, 0, 0) reproduces the elemental X blocks") {
    const double h = 1.5707963267948966;
    const Mat6 r = rotation_matrix(h, 0.0, 0.0);
    // r_p(pi/2) permutes the (2,3) entries and flips the 4-diagonal;
    // r_nu(pi/2) swaps (5,6) with a sign.
    Mat6 expected;
    expected(0, 0) = 1.0;
    expected(1, 2) = 1.0;
    expected(2, 1) = 1.0;
    expected(3, 3) = -1.0;
    expected(4, 5) = -1.0;
    expected(5, 4) = 1.0;
    REQUIRE(max_abs_diff(r, expected) < 1e-15);
}

TEST_CASE("rotation matrices are orthogonal") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const Angles a = testutil::random_angles(rng);
        const Mat6 r = rotation_matrix(a.alpha, a.beta, a.gamma);
        REQUIRE(max_abs_diff(matmul(transpose(r), r), Mat6::identity()) < 1e-12);
    }
}

TEST_CASE("rotation_matrix equals the 4th-order tensor-rotation oracle") {
    Rng rng(23);
    for (int trial = 0; trial < 1000; ++trial) {
        const Angles a = testutil::random_angles(rng);
        const Mat6 r = rotation_matrix(a.alpha, a.beta, a.gamma);
        const oracles::Rot3 q = oracles::equivalent_rotation(a);
        // Column j of R is the rotated j-th Mandel basis vector.
        for (int j = 0; j < 6; ++j) {
            Vec6 unit;
            unit[j] = 1.0;
            const Vec6 col = oracles::rotate_vec_tensor_oracle(unit, q);
            for (int i = 0; i < 6; ++i) REQUIRE(std::abs(r(i, j) - col[i]) < 1e-10);
        }
        // And R C R^T equals the full index-gymnastics rotation by q.
        const Mat6 c = trial % 2 == 0 ? testutil::random_spd(rng) : testutil::sample_orthotropic();
        const Mat6 prod = rotate_stiffness(c, a.alpha, a.beta, a.gamma);
        const Mat6 ref = oracles::rotate_stiffness_tensor_oracle(c, q);
        REQUIRE(max_abs_diff(prod, ref) < 1e-10);
    }
}

TEST_CASE("rotate_stiffness leaves any stiffness unchanged at zero angles") {
    Rng rng(29);
    const Mat6 c = testutil::random_spd(rng);
    REQUIRE(max_abs_diff(rotate_stiffness(c, 0.0, 0.0, 0.0), c) < 1e-15);
}

TEST_CASE("rotate_stiffness leaves isotropic stiffness unchanged") {
    Rng rng(31);
    const Mat6 c = iso_stiffness({7.0, 0.27});
    for (int trial = 0; trial < 20; ++trial) {
        const Angles a = testutil::random_angles(rng);
        REQUIRE(testutil::rel_frob_diff(rotate_stiffness(c, a.alpha, a.beta, a.gamma), c) < 1e-12);
    }
}

TEST_CASE("rotating an orthotropic stiffness by gamma = pi/2 swaps axes 1 and 2") {
    const double h = 1.5707963267948966;
    const Mat6 c = testutil::sample_orthotropic();
    const Mat6 r = rotate_stiffness(c, 0.0, 0.0, h);
    CHECK(r(0, 0) == Catch::Approx(c(1, 1)).margin(1e-12));
    CHECK(r(1, 1) == Catch::Approx(c(0, 0)).margin(1e-12));
    CHECK(r(2, 2) == Catch::Approx(c(2, 2)).margin(1e-12));
    CHECK(r(3, 3) == Catch::Approx(c(4, 4)).margin(1e-12));
    CHECK(r(4, 4) == Catch::Approx(c(3, 3)).margin(1e-12));
    // Cross-check the whole matrix against the tensor oracle.
    const Mat6 ref = oracles::rotate_stiffness_tensor_oracle(c, oracles::equivalent_rotation({0.0, 0.0, h}));
    REQUIRE(max_abs_diff(r, ref) < 1e-12);
}

TEST_CASE("rotate_stiffness preserves symmetry, spectrum, and Frobenius norm") {
    Rng rng(37);
    for (int trial = 0; trial < 50; ++trial) {
        const Mat6 c = testutil::random_spd(rng);
        const Angles a = testutil::random_angles(rng);
        const Mat6 r = rotate_stiffness(c, a.alpha, a.beta, a.gamma);
        REQUIRE(is_symmetric(symmetrize(r), 1e-12));
        REQUIRE(std::abs(frobenius(r) - frobenius(c)) < 1e-10 * frobenius(c));
        const auto ev_in = oracles::sym_eigenvalues(c);
        const auto ev_out = oracles::sym_eigenvalues(symmetrize(r));
        for (int i = 0; i < 6; ++i) REQUIRE(std::abs(ev_in[i] - ev_out[i]) < 1e-10 * std::abs(ev_in[5]));
        REQUIRE(is_spd(symmetrize(r)));
    }
}

TEST_CASE("rotate_vec: identity, hydrostatic invariance, oracle agreement") {
    Rng rng(41);
    const Vec6 v = testutil::random_vec(rng);
    REQUIRE(max_abs_diff(rotate_vec(v, 0.0, 0.0, 0.0), v) == 0.0);

    Vec6 hydro;
    hydro[0] = hydro[1] = hydro[2] = 1.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Angles a = testutil::random_angles(rng);
        REQUIRE(max_abs_diff(rotate_vec(hydro, a.alpha, a.beta, a.gamma), hydro) < 1e-12);
    }

    const Angles a{0.3, -0.7, 1.1};
    const Vec6 rotated = rotate_vec(v, a.alpha, a.beta, a.gamma);
    const Vec6 ref = oracles::rotate_vec_tensor_oracle(v, oracles::equivalent_rotation(a));
    REQUIRE(max_abs_diff(rotated, ref) < 1e-12);
}

TEST_CASE("rotate_vec preserves norms and round-trips through the inverse") {
    Rng rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        const Vec6 v = testutil::random_vec(rng);
        const Angles a = testutil::random_angles(rng);
        const Mat6 r = rotation_matrix(a.alpha, a.beta, a.gamma);
        const Vec6 w = rotate_vec(v, r);
        REQUIRE(std::abs(norm(w) - norm(v)) < 1e-12 * std::max(1.0, norm(v)));
        REQUIRE(max_abs_diff(rotate_vec_inverse(w, r), v) < 1e-12);
    }
}

TEST_CASE("elemental rotation derivatives match finite differences") {
    Rng rng(47);
    for (int axis = 0; axis < 3; ++axis) {
        const double theta = rng.uniform(-2.0, 2.0);
        const double h = 1e-7;
        const Mat6 fd = (1.0 / (2.0 * h)) * (elemental_rotation(axis, theta + h) - elemental_rotation(axis, theta - h));
        REQUIRE(max_abs_diff(elemental_rotation_deriv(axis, theta), fd) < 1e-8);
    }
    // Full rotation derivative, one spot check per angle.
    const Angles a{0.4, -1.2, 0.9};
    const auto dr = rotation_matrix_derivs(a.alpha, a.beta, a.gamma);
    const double h = 1e-7;
    const Mat6 fd_alpha =
        (1.0 / (2.0 * h)) * (rotation_matrix(a.alpha + h, a.beta, a.gamma) - rotation_matrix(a.alpha - h, a.beta, a.gamma));
    const Mat6 fd_beta =
        (1.0 / (2.0 * h)) * (rotation_matrix(a.alpha, a.beta + h, a.gamma) - rotation_matrix(a.alpha, a.beta - h, a.gamma));
    const Mat6 fd_gamma =
        (1.0 / (2.0 * h)) * (rotation_matrix(a.alpha, a.beta, a.gamma + h) - rotation_matrix(a.alpha, a.beta, a.gamma - h));
    REQUIRE(max_abs_diff(dr[0], fd_alpha) < 1e-8);
    REQUIRE(max_abs_diff(dr[1], fd_beta) < 1e-8);
    REQUIRE(max_abs_diff(dr[2], fd_gamma) < 1e-8);
}
