#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <random>
#include <sstream>

#include "loadcast/gp.hpp"
#include "support/oracles.hpp"

using namespace loadcast;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected loadcast::Error");
    return ErrorKind::InvalidArgument;
}

Eigen::MatrixXd column(std::initializer_list<double> xs) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(xs.size()), 1);
    Eigen::Index i = 0;
    for (const double v : xs) x(i++, 0) = v;
    return x;
}

LoadSeries sine_days(int days, int resolution = 60, double offset = 1.0) {
    const int spd = steps_per_day(resolution);
    std::vector<double> v(static_cast<std::size_t>(days * spd));
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = offset + std::sin(2.0 * std::numbers::pi * static_cast<double>(i % static_cast<std::size_t>(spd)) / spd);
    }
    return LoadSeries(kDefaultStart, resolution, std::move(v), "sine");
}

} // namespace

TEST_CASE("kernels are symmetric with unit diagonal scale", "[gp][kernel]") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 30.0);
    Eigen::MatrixXd x(15, 2);
    for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) << u(rng), u(rng);
    for (const auto kind : {KernelKind::rbf, KernelKind::periodic, KernelKind::sum_rbf_periodic}) {
        const KernelSpec k{kind, 2.5, 24.0, 1.7, 0.0};
        const auto g = gram(k, x);
        CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0.0);
        for (Eigen::Index i = 0; i < x.rows(); ++i) CHECK_THAT(g(i, i), WithinAbs(1.7, 1e-15));
        CHECK(gram(k, x, x).isApprox(g, 1e-15));
    }
    // The periodic term repeats with the period and only sees feature 0.
    const KernelSpec per{KernelKind::periodic, 2.0, 24.0, 1.0, 0.0};
    Eigen::RowVector2d a(3.0, 0.0);
    Eigen::RowVector2d b(27.0, 99.0);
    CHECK_THAT(kernel_value(per, a, b), WithinAbs(1.0, 1e-12));

    CHECK(parse_kernel_kind(to_string(KernelKind::sum_rbf_periodic)) == KernelKind::sum_rbf_periodic);
    CHECK(kind_of([] { parse_kernel_kind("matern"); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([] { KernelSpec{KernelKind::rbf, -1.0, 24.0, 1.0, 0.0}.validate(); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("log marginal likelihood closed forms", "[gp]") {
    const KernelSpec unit{KernelKind::rbf, 1.0, 24.0, 1.0, 0.0};
    const double lml = log_marginal_likelihood(unit, column({0.0}), Eigen::VectorXd::Zero(1));
    CHECK_THAT(lml, WithinAbs(-0.5 * std::log(2.0 * std::numbers::pi), 1e-15));
    CHECK_THAT(lml, WithinAbs(-0.9189, 1e-4));

    // Zero targets leave only the complexity and constant terms.
    const KernelSpec k{KernelKind::rbf, 1.3, 24.0, 2.0, 0.2};
    const auto x = column({0.0, 0.7, 2.0});
    const GaussianProcess gp(k, x, Eigen::VectorXd::Zero(3));
    CHECK(gp.alpha().cwiseAbs().maxCoeff() == 0.0);
    Eigen::VectorXd y(3);
    y << 1.0, -2.0, 0.5;
    CHECK(log_marginal_likelihood(k, x, y) < gp.log_marginal_likelihood());
}

TEST_CASE("Cholesky factor reproduces the noisy Gram matrix", "[gp]") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd x(12, 2);
        for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) << u(rng), u(rng);
        const KernelSpec k{KernelKind::sum_rbf_periodic, 1.5, 24.0, 1.2, 0.1};
        const GaussianProcess gp(k, x, Eigen::VectorXd::Ones(12));
        Eigen::MatrixXd expected = gram(k, x);
        expected.diagonal().array() += 0.1 + gp.jitter();
        const Eigen::MatrixXd l = gp.chol_factor();
        REQUIRE((l * l.transpose() - expected).norm() <= 1e-8 * expected.norm());
    }
}

TEST_CASE("jitter escalates before giving up", "[gp]") {
    // Duplicate inputs with no noise make the Gram matrix singular.
    const KernelSpec k{KernelKind::rbf, 1.0, 24.0, 1.0, 0.0};
    const GaussianProcess gp(k, column({1.0, 1.0, 2.0}), Eigen::Vector3d(0.5, 0.5, 1.0));
    CHECK(gp.jitter() >= 1e-8);
    CHECK(gp.jitter() <= 1e-4);

    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
    bad(1, 1) = -1.0;
    CHECK(kind_of([&] { detail::cholesky_with_jitter(bad); }) == ErrorKind::FactorizationFailure);
}

TEST_CASE("log marginal likelihood gradients match central differences", "[gp][property]") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> size(2, 20);
    std::uniform_int_distribution<int> kind_pick(0, 2);
    std::uniform_real_distribution<double> pos(0.0, 12.0);
    std::uniform_real_distribution<double> log_u(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    const KernelKind kinds[] = {KernelKind::rbf, KernelKind::periodic, KernelKind::sum_rbf_periodic};
    for (int trial = 0; trial < 50; ++trial) {
        const int n = size(rng);
        Eigen::MatrixXd x(n, 2);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            x.row(i) << pos(rng), pos(rng);
            y(i) = std::sin(x(i, 0)) + 0.3 * noise(rng);
        }
        KernelSpec k{kinds[kind_pick(rng)], 2.0 * std::exp(log_u(rng)), 12.0, std::exp(log_u(rng)),
                     0.2 * std::exp(log_u(rng))};
        const GaussianProcess gp(k, x, y);
        REQUIRE(gp.jitter() == 0.0);
        const Eigen::Vector3d grad = gp.log_marginal_likelihood_gradient();

        const auto lml_at = [&](int which, double log_value) {
            KernelSpec kk = k;
            (which == 0 ? kk.lengthscale : which == 1 ? kk.signal_variance : kk.noise_variance) = std::exp(log_value);
            return log_marginal_likelihood(kk, x, y);
        };
        const double base[] = {std::log(k.lengthscale), std::log(k.signal_variance), std::log(k.noise_variance)};
        for (int p = 0; p < 3; ++p) {
            const double fd = oracle::central_difference([&](double v) { return lml_at(p, v); }, base[p], 1e-5);
            INFO("trial " << trial << " parameter " << p << " analytic " << grad(p) << " fd " << fd);
            REQUIRE(std::abs(fd - grad(p)) <= 1e-5 * std::max(std::abs(grad(p)), std::abs(fd)) + 1e-9);
        }
    }
}

TEST_CASE("posterior mean matches a dense-solve oracle", "[gp]") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 6.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double ell = 0.8 + 0.1 * trial;
        const double sf2 = 1.5;
        const double sn2 = trial % 2 ? 0.05 : 0.4;
        std::vector<double> xs(5);
        std::vector<double> ys(5);
        for (std::size_t i = 0; i < 5; ++i) {
            xs[i] = u(rng);
            ys[i] = std::cos(xs[i]) + 0.1 * static_cast<double>(i);
        }
        const double q = u(rng);

        oracle::Matrix a(5, std::vector<double>(5));
        std::vector<double> kq(5);
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                a[i][j] = sf2 * std::exp(-(xs[i] - xs[j]) * (xs[i] - xs[j]) / (2.0 * ell * ell)) + (i == j ? sn2 : 0.0);
            }
            kq[i] = sf2 * std::exp(-(xs[i] - q) * (xs[i] - q) / (2.0 * ell * ell));
        }
        const auto w = oracle::dense_solve(a, ys);
        double expected = 0.0;
        for (std::size_t i = 0; i < 5; ++i) expected += kq[i] * w[i];

        Eigen::MatrixXd x(5, 1);
        Eigen::VectorXd y(5);
        for (Eigen::Index i = 0; i < 5; ++i) {
            x(i, 0) = xs[static_cast<std::size_t>(i)];
            y(i) = ys[static_cast<std::size_t>(i)];
        }
        const GaussianProcess gp({KernelKind::rbf, ell, 24.0, sf2, sn2}, x, y);
        for (Eigen::Index i = 0; i < 5; ++i) REQUIRE_THAT(gp.alpha()(i), WithinAbs(w[static_cast<std::size_t>(i)], 1e-8));
        const auto p = gp.posterior(column({q}));
        REQUIRE_THAT(p.mean(0), WithinAbs(expected, 1e-8));
    }
}

TEST_CASE("noiseless posterior interpolates and reverts to the prior", "[gp]") {
    const KernelSpec k{KernelKind::rbf, 1.0, 24.0, 2.0, 0.0};
    const auto x = column({0.0, 1.5, 3.0, 4.5, 6.0});
    Eigen::VectorXd y(5);
    y << 0.3, -1.0, 2.0, 0.5, 1.1;
    const GaussianProcess gp(k, x, y);
    REQUIRE(gp.jitter() == 0.0);
    const auto at_train = gp.posterior(x);
    for (Eigen::Index i = 0; i < 5; ++i) {
        CHECK_THAT(at_train.mean(i), WithinAbs(y(i), 1e-6));
        CHECK_THAT(at_train.covariance(i, i), WithinAbs(0.0, 1e-8));
    }
    const auto draws = sample_gaussian(at_train.mean, at_train.covariance, 20, 5);
    for (std::size_t s = 0; s < 20; ++s) {
        for (std::size_t i = 0; i < 5; ++i) CHECK_THAT(draws[s * 5 + i], WithinAbs(y(static_cast<Eigen::Index>(i)), 1e-4));
    }

    const auto far = gp.posterior(column({1000.0, -500.0}));
    CHECK_THAT(far.covariance(0, 0), WithinAbs(2.0, 1e-6));
    CHECK_THAT(far.covariance(1, 1), WithinAbs(2.0, 1e-6));
    CHECK_THAT(far.mean(0), WithinAbs(0.0, 1e-6));
}

TEST_CASE("posterior variance is never negative", "[gp][property]") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 48.0);
    for (int trial = 0; trial < 30; ++trial) {
        Eigen::MatrixXd x(25, 2);
        Eigen::MatrixXd q(40, 2);
        for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) << u(rng), u(rng);
        for (Eigen::Index i = 0; i < q.rows(); ++i) q.row(i) << u(rng), u(rng);
        const GaussianProcess gp({KernelKind::sum_rbf_periodic, 3.0, 24.0, 1.0, trial % 2 ? 0.0 : 0.01}, x,
                                 Eigen::VectorXd::Ones(25));
        const auto p = gp.posterior(q);
        REQUIRE(p.covariance.diagonal().minCoeff() >= 0.0);
    }
}

TEST_CASE("gp_fit on calendar features", "[gp]") {
    SECTION("noiseless sine is interpolated") {
        const auto train = sine_days(2);
        const std::vector<KernelSpec> grid{{KernelKind::sum_rbf_periodic, 1.0, 24.0, 1.0, 0.0}};
        const auto model = gp_fit(train, grid);
        CHECK(model.selected == 0);
        const auto p = model.gp.posterior(model.gp.inputs());
        for (std::size_t i = 0; i < train.size(); ++i) {
            REQUIRE_THAT(p.mean(static_cast<Eigen::Index>(i)) + model.target_mean, WithinAbs(train[i], 1e-6));
        }
    }
    SECTION("selection maximizes the likelihood over the grid") {
        const auto train = generate_synthetic(6, 60, SyntheticProfile::feeder, 3);
        const auto grid = default_gp_grid(train);
        CHECK(grid.size() == 6);
        const auto model = gp_fit(train, grid);
        // Re-score every grid point independently.
        Eigen::MatrixXd x(static_cast<Eigen::Index>(train.size()), 2);
        Eigen::VectorXd y(static_cast<Eigen::Index>(train.size()));
        for (std::size_t i = 0; i < train.size(); ++i) {
            x.row(static_cast<Eigen::Index>(i)) = calendar_features(train.timestamp(i), 60);
            y(static_cast<Eigen::Index>(i)) = train[i];
        }
        y.array() -= y.mean();
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& k : grid) best = std::max(best, log_marginal_likelihood(k, x, y));
        CHECK(model.gp.log_marginal_likelihood() == best);
        for (const double l : model.grid_log_likelihoods) CHECK(l <= model.grid_log_likelihoods[model.selected]);
    }
    SECTION("long training series are strided") {
        const auto train = generate_synthetic(100, 60, SyntheticProfile::feeder, 1);
        const std::vector<KernelSpec> grid{{KernelKind::sum_rbf_periodic, 2.0, 24.0, 10.0, 1.0}};
        const auto model = gp_fit(train, grid);
        CHECK(static_cast<std::size_t>(model.gp.inputs().rows()) <= kGpMaxTrainPoints);
        CHECK(model.gp.inputs().rows() == 1200);
    }
    SECTION("empty grid") {
        CHECK(kind_of([] { gp_fit(sine_days(1), {}); }) == ErrorKind::InvalidArgument);
    }
}

TEST_CASE("calendar features", "[gp]") {
    const auto monday = kDefaultStart + std::chrono::days{6};  // 2013-01-07
    const auto f = calendar_features(monday + std::chrono::minutes{90}, 30);
    CHECK(f(0) == 3.0);
    CHECK(f(1) == 0.0);
    const auto tue = calendar_features(kDefaultStart, 60);  // 2013-01-01 was a Tuesday
    CHECK(tue(1) == 24.0);
}

TEST_CASE("gp_predict samples the predictive distribution", "[gp]") {
    const auto train = generate_synthetic(10, 60, SyntheticProfile::household, 4);
    GpForecaster gp;
    CHECK_FALSE(gp.zero_shot());
    CHECK(gp.probabilistic());
    ForecastRequest r;
    r.horizon = 24;
    r.num_samples = 200;
    r.seed = 17;
    r.resolution_minutes = 60;
    r.context_start = train.timestamp(train.size() - 72);
    std::vector<double> ctx(train.values().end() - 72, train.values().end());
    r.context = ctx;
    CHECK(kind_of([&] { gp.predict(r); }) == ErrorKind::NotFitted);
    gp.fit(train);
    const auto a = gp.predict(r);
    CHECK(a.num_samples() == 200);
    CHECK(a.horizon() == 24);
    CHECK(a == gp.predict(r));
    r.seed = 18;
    CHECK_FALSE(a == gp.predict(r));

    // Sample moments agree with the predictive distribution.
    const auto p = gp_predictive(gp.model(), r.target_start(), 24);
    const auto big = gp_predict(gp.model(), r.target_start(), 24, 20000, 3);
    const auto mean = forecast_mean(big);
    for (std::size_t h = 0; h < 24; ++h) {
        const double sd = std::sqrt(p.covariance(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(h)));
        CHECK(std::abs(mean[h] - p.mean(static_cast<Eigen::Index>(h))) < 5.0 * sd / std::sqrt(20000.0));
    }

    r.resolution_minutes = 30;
    CHECK(kind_of([&] { gp.predict(r); }) == ErrorKind::IncompatibleResolution);
}

TEST_CASE("gp predictive samples are left unclipped", "[gp]") {
    // Level near zero with unit-scale noise: negative draws must survive.
    const auto train = sine_days(4, 60, 1.0);
    const std::vector<KernelSpec> grid{{KernelKind::sum_rbf_periodic, 2.0, 24.0, 1.0, 1.0}};
    const auto model = gp_fit(train, grid);
    const auto f = gp_predict(model, train.timestamp(train.size() - 1) + std::chrono::hours{1}, 24, 500, 1);
    CHECK(*std::min_element(f.data().begin(), f.data().end()) < 0.0);
}

TEST_CASE("gp model dump round trips", "[gp]") {
    const auto train = generate_synthetic(5, 60, SyntheticProfile::feeder, 8);
    const auto model = gp_fit(train, default_gp_grid(train));
    std::stringstream buf;
    write_gp_model(buf, model);
    const auto back = read_gp_model(buf);
    CHECK(back.kernel().lengthscale == model.kernel().lengthscale);
    CHECK(back.target_mean == model.target_mean);
    const auto t = train.timestamp(train.size() - 1) + std::chrono::hours{1};
    CHECK(gp_predict(back, t, 24, 10, 2) == gp_predict(model, t, 24, 10, 2));

    std::istringstream junk("model svr\n");
    CHECK(kind_of([&] { read_gp_model(junk); }) == ErrorKind::MalformedRow);
}

TEST_CASE("sample_gaussian rejects indefinite covariances", "[gp]") {
    Eigen::Matrix2d c;
    c << 1.0, 0.0, 0.0, -0.5;
    CHECK(kind_of([&] { sample_gaussian(Eigen::Vector2d::Zero(), c, 3, 1); }) == ErrorKind::FactorizationFailure);
    const auto zero = sample_gaussian(Eigen::Vector2d(1.0, 2.0), Eigen::Matrix2d::Zero(), 4, 1);
    CHECK(zero == std::vector<double>{1, 2, 1, 2, 1, 2, 1, 2});
}
