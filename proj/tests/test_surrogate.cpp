#include "kfat/errors.hpp"
#include "kfat/surrogate.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace kfat;

namespace {

KernelHyper unit_hyper(int dim, double signal = 1.0, double length = 1.0)
{
    KernelHyper h;
    h.signal_std = signal;
    h.length_scales = Eigen::VectorXd::Constant(dim, length);
    return h;
}

Eigen::Vector2d pt(double x, double y)
{
    return {x, y};
}

// Samples from a zero-mean GP with the library kernel using an independent
// dense Cholesky, so fits can be checked against known ground truth.
Eigen::VectorXd gp_draw(const Eigen::MatrixXd& points, const KernelHyper& hyper,
                        std::uint64_t seed)
{
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            k(i, j) = kernel(points.row(i).transpose(), points.row(j).transpose(), hyper);
        }
        k(i, i) += 1e-10;
    }
    const Eigen::MatrixXd l = k.llt().matrixL();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z(i) = n01(rng);
    }
    return l * z;
}

ObservationSet grid_observations(int per_side, const KernelHyper& truth, std::uint64_t seed)
{
    const int n = per_side * per_side;
    Eigen::MatrixXd points(n, 2);
    int row = 0;
    for (int i = 0; i < per_side; ++i) {
        for (int j = 0; j < per_side; ++j) {
            points(row, 0) = (i + 0.5) / per_side;
            points(row, 1) = (j + 0.5) / per_side;
            ++row;
        }
    }
    const Eigen::VectorXd y = gp_draw(points, truth, seed);
    ObservationSet obs;
    for (int i = 0; i < n; ++i) {
        obs.add(points.row(i).transpose(), y(i));
    }
    return obs;
}

} // namespace

TEST_SUITE("surrogate")
{
    TEST_CASE("matern kernel")
    {
        const KernelHyper h = unit_hyper(2);

        SUBCASE("value at zero distance is the signal variance")
        {
            CHECK(kernel(pt(0.3, 0.7), pt(0.3, 0.7), h) == doctest::Approx(1.0).epsilon(1e-15));
            const KernelHyper h2 = unit_hyper(2, 2.5);
            CHECK(kernel(pt(0.1, 0.2), pt(0.1, 0.2), h2) ==
                  doctest::Approx(6.25).epsilon(1e-15));
        }
        SUBCASE("unit-distance value matches the closed form")
        {
            const double expected = (1.0 + std::sqrt(5.0) + 5.0 / 3.0) * std::exp(-std::sqrt(5.0));
            CHECK(kernel(pt(0.0, 0.0), pt(1.0, 0.0), h) ==
                  doctest::Approx(expected).epsilon(1e-14));
            CHECK(expected == doctest::Approx(0.52399).epsilon(1e-4));
        }
        SUBCASE("symmetry and stationarity")
        {
            const Eigen::Vector2d a = pt(0.11, 0.62);
            const Eigen::Vector2d b = pt(0.48, 0.33);
            const Eigen::Vector2d shift = pt(0.2, 0.1);
            CHECK(kernel(a, b, h) == kernel(b, a, h));
            CHECK(kernel(a, b, h) ==
                  doctest::Approx(kernel((a + shift).eval(), (b + shift).eval(), h))
                      .epsilon(1e-13));
        }
        SUBCASE("independent length scales per dimension")
        {
            KernelHyper ard = unit_hyper(2);
            ard.length_scales << 0.5, 2.0;
            // Distance along dim 0 counts 4x as much as along dim 1.
            CHECK(kernel(pt(0.0, 0.0), pt(0.25, 0.0), ard) ==
                  doctest::Approx(kernel(pt(0.0, 0.0), pt(0.0, 1.0), ard)).epsilon(1e-13));
        }
        SUBCASE("monotone decay with distance")
        {
            double prev = kernel(pt(0.0, 0.0), pt(0.0, 0.0), h);
            for (int i = 1; i <= 20; ++i) {
                const double cur = kernel(pt(0.0, 0.0), pt(0.15 * i, 0.0), h);
                CHECK(cur < prev);
                CHECK(cur > 0.0);
                prev = cur;
            }
        }
        SUBCASE("invalid hyperparameters rejected")
        {
            KernelHyper bad = unit_hyper(2);
            bad.signal_std = 0.0;
            CHECK_THROWS_AS(bad.validate(), ConfigError);
            bad = unit_hyper(2);
            bad.length_scales(1) = -1.0;
            CHECK_THROWS_AS(bad.validate(), ConfigError);
        }
    }

    TEST_CASE("observation bookkeeping")
    {
        ObservationSet obs;
        obs.add(pt(0.2, 0.3), 1.5);
        obs.add(pt(0.8, 0.1), -0.5);
        CHECK(obs.size() == 2);
        CHECK(obs.dim() == 2);
        CHECK(obs.contains(pt(0.2, 0.3)));
        CHECK(obs.contains(pt(0.2 + 5e-13, 0.3)));
        CHECK(!obs.contains(pt(0.2 + 1e-10, 0.3)));

        CHECK_THROWS_AS(obs.add(pt(0.2, 0.3), 9.0), DataError);          // duplicate
        CHECK_THROWS_AS(obs.add(pt(1.2, 0.3), 0.0), DataError);          // outside cube
        CHECK_THROWS_AS(obs.add(pt(-0.1, 0.3), 0.0), DataError);         // outside cube
        CHECK_THROWS_AS(obs.add(Eigen::Vector3d(0.1, 0.1, 0.1), 0.0), DataError);
        CHECK_THROWS_AS(obs.add(pt(0.5, std::nan("")), 0.0), DataError);
        CHECK_THROWS_AS(obs.add(pt(0.5, 0.5), std::numeric_limits<double>::infinity()),
                        DataError);
        CHECK(obs.size() == 2); // failed adds must not mutate
    }

    TEST_CASE("negative log marginal likelihood")
    {
        ObservationSet obs;
        obs.add(pt(0.1, 0.2), 0.4);
        obs.add(pt(0.7, 0.9), -0.3);
        obs.add(pt(0.5, 0.4), 0.1);
        const KernelHyper h = unit_hyper(2, 0.8, 0.6);

        // Independent dense evaluation of both likelihoods.
        const Eigen::Index n = 3;
        Eigen::MatrixXd k(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                k(i, j) = kernel(obs.points.row(i).transpose(), obs.points.row(j).transpose(), h);
            }
            k(i, i) += 1e-6 * h.signal_std * h.signal_std;
        }
        const Eigen::VectorXd y = obs.values.array() - obs.values.mean();
        const double quad = y.dot(k.inverse() * y);
        const double log_det = std::log(k.determinant());

        SUBCASE("gaussian branch")
        {
            const double expected =
                0.5 * quad + 0.5 * log_det + 0.5 * 3.0 * std::log(2.0 * M_PI);
            CHECK(nlml(obs, h, SurrogateKind::gp, 0.0) ==
                  doctest::Approx(expected).epsilon(1e-10));
        }
        SUBCASE("student-t branch")
        {
            const double dof = 15.0;
            const double expected = -std::lgamma(0.5 * (dof + 3.0)) + std::lgamma(0.5 * dof) +
                                    0.5 * 3.0 * std::log((dof - 2.0) * M_PI) + 0.5 * log_det +
                                    0.5 * (dof + 3.0) * std::log1p(quad / (dof - 2.0));
            CHECK(nlml(obs, h, SurrogateKind::tsp, dof) ==
                  doctest::Approx(expected).epsilon(1e-10));
        }
        SUBCASE("student-t converges to the gaussian likelihood for huge dof")
        {
            CHECK(nlml(obs, h, SurrogateKind::tsp, 1e6) ==
                  doctest::Approx(nlml(obs, h, SurrogateKind::gp, 0.0)).epsilon(1e-3));
        }
        SUBCASE("dof at or below 2 rejected")
        {
            CHECK_THROWS_AS(nlml(obs, h, SurrogateKind::tsp, 2.0), ConfigError);
            CHECK_THROWS_AS(fit(obs, SurrogateKind::tsp, 1.5, 0), ConfigError);
        }
    }

    TEST_CASE("fixed-hyperparameter model assembly")
    {
        ObservationSet obs;
        obs.add(pt(0.2, 0.2), 1.0);
        obs.add(pt(0.8, 0.5), 3.0);
        obs.add(pt(0.4, 0.9), 2.0);
        const KernelHyper h = unit_hyper(2, 1.2, 0.4);

        SUBCASE("posterior mean is linear in the observed values")
        {
            ObservationSet doubled = obs;
            doubled.values *= 2.0;
            const SurrogateModel m1 = build_model(obs, SurrogateKind::gp, 0.0, h);
            const SurrogateModel m2 = build_model(doubled, SurrogateKind::gp, 0.0, h);
            for (double x : {0.1, 0.33, 0.62, 0.97}) {
                const Posterior p1 = posterior(m1, pt(x, 0.5));
                const Posterior p2 = posterior(m2, pt(x, 0.5));
                CHECK(p2.mean == doctest::Approx(2.0 * p1.mean).epsilon(1e-11));
                CHECK(p2.variance == doctest::Approx(p1.variance).epsilon(1e-11));
            }
        }
        SUBCASE("t-process variance scales with the residual quadratic form")
        {
            const SurrogateModel gp = build_model(obs, SurrogateKind::gp, 0.0, h);
            const SurrogateModel tsp = build_model(obs, SurrogateKind::tsp, 15.0, h);
            ObservationSet wild = obs;
            wild.values << 1.0, 30.0, -20.0; // violent residuals, same mean structure
            const SurrogateModel tsp_wild = build_model(wild, SurrogateKind::tsp, 15.0, h);
            const Eigen::Vector2d q = pt(0.55, 0.55);
            const double ratio = (tsp.dof + tsp.quad_form - 2.0) / (tsp.dof + 3.0 - 2.0);
            CHECK(posterior(tsp, q).variance ==
                  doctest::Approx(posterior(gp, q).variance * ratio).epsilon(1e-10));
            CHECK(tsp_wild.quad_form > tsp.quad_form);
            CHECK(posterior(tsp_wild, q).variance > posterior(tsp, q).variance);
        }
        SUBCASE("dimension mismatch rejected")
        {
            CHECK_THROWS_AS(build_model(obs, SurrogateKind::gp, 0.0, unit_hyper(3)), ConfigError);
        }
    }

    TEST_CASE("fitting")
    {
        SUBCASE("single observation falls back to defaults")
        {
            ObservationSet obs;
            obs.add(pt(0.5, 0.5), 2.0);
            const SurrogateModel m = fit(obs, SurrogateKind::tsp, 15.0, 0);
            CHECK(m.hyper.signal_std == 1.0);
            CHECK(m.hyper.length_scales(0) == 0.5);
            CHECK(posterior(m, pt(0.5, 0.5)).mean == doctest::Approx(2.0).epsilon(1e-5));
        }
        SUBCASE("deterministic for a fixed seed")
        {
            const KernelHyper truth = unit_hyper(2, 1.0, 0.3);
            const ObservationSet obs = grid_observations(4, truth, 77);
            const SurrogateModel a = fit(obs, SurrogateKind::tsp, 15.0, 5);
            const SurrogateModel b = fit(obs, SurrogateKind::tsp, 15.0, 5);
            CHECK(a.hyper.signal_std == b.hyper.signal_std);
            CHECK(a.hyper.length_scales == b.hyper.length_scales);
            CHECK(a.quad_form == b.quad_form);
        }
        SUBCASE("interpolates the training data")
        {
            const KernelHyper truth = unit_hyper(2, 1.0, 0.4);
            const ObservationSet obs = grid_observations(4, truth, 3);
            const SurrogateModel m = fit(obs, SurrogateKind::gp, 0.0, 1);
            const double y_range = obs.values.maxCoeff() - obs.values.minCoeff();
            for (std::size_t i = 0; i < obs.size(); ++i) {
                const Posterior p = posterior(m, obs.points.row(i).transpose());
                CHECK(std::abs(p.mean - obs.values(i)) < 0.02 * y_range);
                CHECK(p.variance >= 0.0);
                CHECK(p.variance < 0.01 * m.hyper.signal_std * m.hyper.signal_std);
            }
        }
        SUBCASE("reverts to the prior far from all data")
        {
            ObservationSet obs;
            obs.add(pt(0.02, 0.03), 5.0);
            obs.add(pt(0.05, 0.08), 5.2);
            obs.add(pt(0.08, 0.02), 4.8);
            const SurrogateModel m = fit(obs, SurrogateKind::gp, 0.0, 2);
            // With length scales well under 1 the opposite corner is several
            // scales away; the fit clamps them to at most ~1e3 though, so only
            // check against the model's own hyperparameters.
            if (m.hyper.length_scales.maxCoeff() < 0.3) {
                const Posterior far = posterior(m, pt(1.0, 1.0));
                CHECK(far.mean == doctest::Approx(m.center).epsilon(1e-3));
                CHECK(far.variance == doctest::Approx(m.hyper.signal_std * m.hyper.signal_std)
                                          .epsilon(1e-2));
            }
            const Posterior near = posterior(m, pt(0.05, 0.05));
            CHECK(std::abs(near.mean - 5.0) < 0.5);
        }
        SUBCASE("recovers a known length scale within a factor of two")
        {
            KernelHyper truth = unit_hyper(2, 1.0, 0.0);
            truth.length_scales << 0.3, 0.3;
            const ObservationSet obs = grid_observations(6, truth, 12);
            const SurrogateModel m = fit(obs, SurrogateKind::gp, 0.0, 4);
            for (int d = 0; d < 2; ++d) {
                MESSAGE("recovered length scale [", d, "]: ", m.hyper.length_scales(d));
                CHECK(m.hyper.length_scales(d) > 0.15);
                CHECK(m.hyper.length_scales(d) < 0.6);
            }
        }
        SUBCASE("gaussian-limit t-process matches the gaussian posterior")
        {
            const KernelHyper truth = unit_hyper(2, 1.0, 0.35);
            const ObservationSet obs = grid_observations(4, truth, 21);
            const SurrogateModel gp = fit(obs, SurrogateKind::gp, 0.0, 9);
            const SurrogateModel tsp = build_model(obs, SurrogateKind::tsp, 1e6, gp.hyper);
            std::mt19937_64 rng(33);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            for (int trial = 0; trial < 50; ++trial) {
                const Eigen::Vector2d q = pt(unit(rng), unit(rng));
                const Posterior pg = posterior(gp, q);
                const Posterior pt_ = posterior(tsp, q);
                CHECK(pt_.mean == doctest::Approx(pg.mean).epsilon(1e-9));
                const double scale = std::max(pg.variance, 1e-12);
                CHECK(std::abs(pt_.variance - pg.variance) / scale < 1e-3);
            }
        }
        SUBCASE("empty observation set rejected")
        {
            CHECK_THROWS_AS(fit(ObservationSet{}, SurrogateKind::gp, 0.0, 0), DataError);
        }
    }
}
