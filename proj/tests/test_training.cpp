#include "catch_amalgamated.hpp"

#include "dmn/training.hpp"
#include "grad_check.hpp"
#include "test_util.hpp"

using namespace dmn;

namespace {

// Batch whose C_dns comes from the given params' own forward pass.
Dataset self_consistent_batch(const DmnParams& p, Rng& rng, int n) {
    Dataset data;
    for (int i = 0; i < n; ++i) {
        TrainingSample s;
        s.c_p1 = testutil::random_iso(rng);
        s.c_p2 = testutil::random_iso(rng);
        s.c_dns = forward(p, s.c_p1, s.c_p2);
        data.push_back(s);
    }
    return data;
}

} // namespace

TEST_CASE("loss is zero on a self-consistent batch") {
    Rng rng(401);
    const DmnParams p = testutil::random_params(rng, 3);
    const Dataset batch = self_consistent_batch(p, rng, 4);
    const double s0 = 2.0;
    const LossBreakdown lb = loss(p, batch, 0.01, s0);
    CHECK(lb.mean_stiff < 1e-28);
    CHECK(lb.total == Catch::Approx(lb.reg).margin(1e-28));
}

TEST_CASE("doubling C_dns gives a stiffness loss of exactly 1/4") {
    Rng rng(409);
    const DmnParams p = testutil::random_params(rng, 2);
    TrainingSample s;
    s.c_p1 = testutil::random_iso(rng);
    s.c_p2 = testutil::random_iso(rng);
    s.c_dns = 2.0 * forward(p, s.c_p1, s.c_p2);
    const LossBreakdown lb = loss(p, {s}, 0.0, 1.0);
    CHECK(lb.mean_stiff == Catch::Approx(0.25).epsilon(1e-12));
    CHECK(lb.reg == 0.0);
}

TEST_CASE("regularizer vanishes when the weight sum hits the target") {
    DmnParams p;
    p.depth = 2;
    p.z = {0.25, 0.25, 0.25, 0.25};
    p.angles.assign(3, Angles{});
    CHECK(regularizer(p, 0.5, 1.0) == 0.0);
    CHECK(regularizer(p, 0.5, 2.0) == Catch::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("zero-contrast isotropic batch has vanishing parameter gradients") {
    Rng rng(419);
    const DmnParams p = testutil::random_params(rng, 3);
    TrainingSample s;
    s.c_p1 = iso_stiffness({5.0, 0.3});
    s.c_p2 = s.c_p1;
    s.c_dns = 2.0 * iso_stiffness({5.0, 0.3});  // non-trivial adjoint seed
    const ParamGradient g = gradient(p, {s}, 0.0, 1.0);
    for (const Angles& a : g.dangles) {
        CHECK(std::abs(a.alpha) < 1e-13);
        CHECK(std::abs(a.beta) < 1e-13);
        CHECK(std::abs(a.gamma) < 1e-13);
    }
    for (double dz : g.dz) CHECK(std::abs(dz) < 1e-13);
}

TEST_CASE("adjoint gradient matches central finite differences") {
    Rng rng(421);
    const DmnParams p = testutil::random_params(rng, 3);
    Dataset batch;
    for (int i = 0; i < 4; ++i) {
        TrainingSample s;
        s.c_p1 = testutil::random_iso(rng);
        s.c_p2 = testutil::random_iso(rng);
        s.c_dns = testutil::random_spd(rng, 2.0);
        batch.push_back(s);
    }
    const double lambda = 0.02, s0 = 1.7;
    const ParamGradient adj = gradient(p, batch, lambda, s0);
    // Plain central differences at the documented h = 1e-6 resolve gradients
    // down to about 1e-4; the Richardson oracle checks the small remainder.
    const ParamGradient fd = gradient_fd(p, batch, lambda, s0);
    INFO("plain-FD max relative error " << gradcheck::max_rel_err(adj, fd, 1e-4));
    REQUIRE(gradcheck::max_rel_err(adj, fd, 1e-4) < 1e-6);
    const ParamGradient fdr = gradcheck::fd_richardson(p, batch, lambda, s0);
    INFO("richardson max relative error " << gradcheck::max_rel_err(adj, fdr));
    REQUIRE(gradcheck::max_rel_err(adj, fdr) < 1e-6);
}

TEST_CASE("dead leaves receive exactly zero gradient") {
    Rng rng(431);
    DmnParams p = testutil::random_params(rng, 3);
    p.z[2] = -0.4;
    p.z[5] = -1.0;
    Dataset batch = self_consistent_batch(p, rng, 2);
    batch[0].c_dns = 2.0 * batch[0].c_dns;
    const ParamGradient g = gradient(p, batch, 0.05, 1.0);
    CHECK(g.dz[2] == 0.0);
    CHECK(g.dz[5] == 0.0);
    // Alive leaves still learn.
    double alive = 0.0;
    for (std::size_t j = 0; j < g.dz.size(); ++j) alive += std::abs(g.dz[j]);
    CHECK(alive > 0.0);
}

TEST_CASE("adjoint agrees with finite differences on randomized configurations") {
    Rng rng(433);
    for (int cfg = 0; cfg < 6; ++cfg) {
        const int depth = 1 + static_cast<int>(rng.index(4));
        DmnParams p = testutil::random_params(rng, depth);
        if (cfg % 2 == 0 && p.z.size() > 2) p.z[rng.index(p.z.size())] = -0.3;  // include a dead leaf
        Dataset batch;
        for (int i = 0; i < 3; ++i) {
            TrainingSample s;
            s.c_p1 = testutil::random_iso(rng);
            s.c_p2 = testutil::random_iso(rng);
            s.c_dns = testutil::random_spd(rng, 1.5);
            batch.push_back(s);
        }
        const ParamGradient adj = gradient(p, batch, 0.01, 1.2);
        const ParamGradient fd = gradcheck::fd_richardson(p, batch, 0.01, 1.2);
        INFO("config " << cfg << " depth " << depth << " err " << gradcheck::max_rel_err(adj, fd));
        REQUIRE(gradcheck::max_rel_err(adj, fd) < 1e-6);
    }
}

TEST_CASE("self-training fixed point: stiffness gradient vanishes on emitted data") {
    Rng rng(439);
    const DmnParams p = testutil::random_params(rng, 3);
    const Dataset batch = self_consistent_batch(p, rng, 5);
    const ParamGradient g = gradient(p, batch, 0.0, 1.0);  // lambda = 0 isolates L_stiff
    CHECK(g.max_abs() < 1e-8);
}

TEST_CASE("scaling z changes only the regularizer") {
    Rng rng(443);
    const DmnParams p = testutil::random_params(rng, 3);
    Dataset batch = self_consistent_batch(p, rng, 3);
    batch[1].c_dns = 1.5 * batch[1].c_dns;
    const LossBreakdown base = loss(p, batch, 0.01, 2.0);
    for (const double s : {0.2, 4.0}) {
        DmnParams q = p;
        for (double& z : q.z) z *= s;
        const LossBreakdown scaled = loss(q, batch, 0.01, 2.0);
        CHECK(std::abs(scaled.mean_stiff - base.mean_stiff) < 1e-12 * std::max(1.0, base.mean_stiff));
        CHECK(scaled.reg != base.reg);
    }
}

TEST_CASE("full-batch descent with halving on increase is non-increasing over 50 steps") {
    Rng rng(449);
    const DmnParams teacher = testutil::random_params(rng, 3);
    Dataset data = self_consistent_batch(teacher, rng, 12);
    DmnParams p = init_params(3, 7);
    const double lambda = 0.001, s0 = 2.0;

    double lr = 0.1;
    double current = loss(p, data, lambda, s0).total;
    const double initial = current;
    for (int step = 0; step < 50; ++step) {
        const ParamGradient g = gradient(p, data, lambda, s0);
        for (;;) {
            DmnParams trial = p;
            for (std::size_t j = 0; j < trial.z.size(); ++j) trial.z[j] -= lr * g.dz[j];
            for (std::size_t b = 0; b < trial.angles.size(); ++b)
                for (int t = 0; t < 3; ++t) angle_component(trial.angles[b], t) -= lr * angle_component(g.dangles[b], t);
            const double next = loss(trial, data, lambda, s0).total;
            if (next <= current) {
                p = trial;
                current = next;
                break;
            }
            lr *= 0.5;
            REQUIRE(lr > 1e-12);
        }
    }
    REQUIRE(current < initial);
}

TEST_CASE("init_params is deterministic with the documented shapes and spread") {
    const DmnParams a = init_params(4, 99);
    const DmnParams b = init_params(4, 99);
    REQUIRE(a.z == b.z);
    REQUIRE(a.z.size() == 16);
    REQUIRE(a.angles.size() == 15);
    for (std::size_t i = 0; i < a.angles.size(); ++i) {
        CHECK(a.angles[i].alpha == b.angles[i].alpha);
        CHECK(std::abs(a.angles[i].alpha) <= 0.7853981633974484);
    }
    const DmnParams c = init_params(4, 100);
    REQUIRE(a.z != c.z);

    // Weight sum lands near the target and volume fractions near 1/2.
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const DmnParams p = init_params(4, seed);
        double wsum = 0.0;
        for (double z : p.z) wsum += z;
        CHECK(wsum == Catch::Approx(4.0).margin(4.0 * 0.2));
        const double vf1 = phase_volume_fractions(p).first;
        CHECK(vf1 > 0.35);
        CHECK(vf1 < 0.65);
    }
}

TEST_CASE("generate_dataset: teacher samples stay within Voigt-Reuss bounds") {
    const GeneratedDataset gen = generate_dataset(DatasetKind::Teacher, 40, 3, 5);
    const auto [vf1, vf2] = phase_volume_fractions(gen.teacher);
    Rng rng(457);
    for (const TrainingSample& s : gen.samples) {
        REQUIRE(is_spd(s.c_dns));
        const Mat6 voigt = vf1 * s.c_p1 + vf2 * s.c_p2;
        const Mat6 reuss = invert6(vf1 * invert6(s.c_p1) + vf2 * invert6(s.c_p2));
        for (int probe = 0; probe < 6; ++probe) {
            const Vec6 x = testutil::random_vec(rng);
            CHECK(dot(x, matvec(s.c_dns, x)) <= dot(x, matvec(voigt, x)) * (1.0 + 1e-9));
            CHECK(dot(x, matvec(s.c_dns, x)) >= dot(x, matvec(reuss, x)) * (1.0 - 1e-9));
        }
    }
}

TEST_CASE("generate_dataset: laminate kind agrees with its own geometry and is deterministic") {
    const GeneratedDataset a = generate_dataset(DatasetKind::LaminateOracle, 10, 3, 12);
    const GeneratedDataset b = generate_dataset(DatasetKind::LaminateOracle, 10, 3, 12);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        REQUIRE(a.samples[i].c_dns.m == b.samples[i].c_dns.m);
        REQUIRE(is_spd(a.samples[i].c_dns));
    }
}

TEST_CASE("unit contrast collapses the homogenized stiffness onto the phase") {
    GeneratedDataset gen = generate_dataset(DatasetKind::Teacher, 1, 3, 21);
    TrainingSample s = gen.samples[0];
    s.c_p2 = s.c_p1;
    const Mat6 out = forward(gen.teacher, s.c_p1, s.c_p2);
    REQUIRE(testutil::rel_frob_diff(out, s.c_p1) < 1e-12);
}

TEST_CASE("train with lr = 0 leaves parameters untouched and the report flat") {
    const GeneratedDataset gen = generate_dataset(DatasetKind::Teacher, 20, 2, 3);
    const DmnParams p0 = init_params(2, 11);
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.epochs = 5;
    cfg.batch_size = 4;
    cfg.seed = 1;
    const auto [p, report] = train(p0, gen.samples, cfg);
    REQUIRE(p.z == p0.z);
    for (int e = 1; e < 5; ++e) {
        CHECK(report.train_loss[e] == report.train_loss[0]);
        CHECK(report.val_loss[e] == report.val_loss[0]);
    }
}

TEST_CASE("train is deterministic for a fixed seed and any thread count") {
    const GeneratedDataset gen = generate_dataset(DatasetKind::Teacher, 30, 2, 8);
    const DmnParams p0 = init_params(2, 5);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 42;
    cfg.threads = 1;
    const auto [pa, ra] = train(p0, gen.samples, cfg);
    cfg.threads = 4;
    const auto [pb, rb] = train(p0, gen.samples, cfg);
    REQUIRE(pa.z == pb.z);
    for (std::size_t b = 0; b < pa.angles.size(); ++b) {
        REQUIRE(pa.angles[b].alpha == pb.angles[b].alpha);
        REQUIRE(pa.angles[b].beta == pb.angles[b].beta);
        REQUIRE(pa.angles[b].gamma == pb.angles[b].gamma);
    }
    REQUIRE(ra.train_loss == rb.train_loss);
}

TEST_CASE("single-sample overfit drives the stiffness loss below 1e-6") {
    const GeneratedDataset gen = generate_dataset(DatasetKind::Teacher, 1, 2, 5);
    DmnParams p0 = init_params(3, 17);
    TrainConfig cfg;
    cfg.lr = 0.3;
    cfg.lr_decay = 1.0;
    cfg.epochs = 6000;
    cfg.batch_size = 1;
    cfg.lambda_reg = 1e-3;
    cfg.validation_fraction = 0.0;
    cfg.seed = 2;
    const auto [p, report] = train(p0, gen.samples, cfg);
    INFO("final train loss " << report.train_loss.back());
    REQUIRE(report.best_val < 1e-6);
}

TEST_CASE("training surfaces non-finite losses with context") {
    const GeneratedDataset gen = generate_dataset(DatasetKind::Teacher, 10, 2, 3);
    const DmnParams p0 = init_params(2, 1);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.lambda_reg = 1e308;  // overflows the squared penalty
    cfg.seed = 1;
    CHECK_THROWS_AS(train(p0, gen.samples, cfg), NonFiniteError);
}

TEST_CASE("finite-difference gradient mode trains the same direction") {
    const GeneratedDataset gen = generate_dataset(DatasetKind::Teacher, 6, 1, 9);
    const DmnParams p0 = init_params(1, 3);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 3;
    cfg.seed = 4;
    cfg.gradient_mode = GradientMode::FiniteDifference;
    const auto [p, report] = train(p0, gen.samples, cfg);
    TrainConfig cfg2 = cfg;
    cfg2.gradient_mode = GradientMode::Adjoint;
    const auto [q, report2] = train(p0, gen.samples, cfg2);
    for (std::size_t j = 0; j < p.z.size(); ++j) REQUIRE(p.z[j] == Catch::Approx(q.z[j]).margin(1e-7));
}
