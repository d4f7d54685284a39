#include <doctest.h>

#include <map>
#include <set>

#include "debias/econometrics.hpp"
#include "debias/error.hpp"
#include "debias/random.hpp"
#include "econometrics_oracle.hpp"

using namespace debias;

using oracle::dummy_ols;
using oracle::literal_one_way;
using oracle::literal_two_way;
using oracle::randn;
using oracle::random_panel;

TEST_SUITE("econometrics") {

TEST_CASE("ols: exact lines") {
    Eigen::VectorXd y(3), x(3);
    y << 1, 2, 3;
    x << 1, 2, 3;
    const auto r = ols(y, x, true, SeMode::Classical, {"x"});
    CHECK(r.coef_of("x") == doctest::Approx(1.0));
    CHECK(r.coef_of("const") == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.r_squared == doctest::Approx(1.0));

    Eigen::VectorXd x50 = Eigen::VectorXd::LinSpaced(50, -3, 8);
    const auto r2 = ols((2.0 * x50.array() + 1.0).matrix(), x50, true, SeMode::Hc1);
    CHECK(r2.coef(1) == doctest::Approx(2.0));
    CHECK(r2.coef(0) == doctest::Approx(1.0));
    CHECK(r2.residuals.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ols matches a brute-force normal-equation solve") {
    NormalRng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd X = randn(rng, 20, 3);
        const Eigen::VectorXd y = randn(rng, 20, 1).col(0);
        const auto r = ols(y, X, true, SeMode::Classical);
        Eigen::MatrixXd Z(20, 4);
        Z << Eigen::VectorXd::Ones(20), X;
        const Eigen::VectorXd ref = (Z.transpose() * Z).inverse() * Z.transpose() * y;
        CHECK((r.coef - ref).cwiseAbs().maxCoeff() < 1e-10);
        // classical vcov
        const double s2 = (y - Z * ref).squaredNorm() / 16.0;
        const Eigen::MatrixXd v = s2 * (Z.transpose() * Z).inverse();
        CHECK((r.vcov - v).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(r.t(1) == doctest::Approx(ref(1) / std::sqrt(v(1, 1))));
        // HC1
        const auto h = ols(y, X, true, SeMode::Hc1);
        Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(4, 4);
        const Eigen::VectorXd e = y - Z * ref;
        for (int i = 0; i < 20; ++i) meat += e(i) * e(i) * Z.row(i).transpose() * Z.row(i);
        const Eigen::MatrixXd inv = (Z.transpose() * Z).inverse();
        const Eigen::MatrixXd hc1 = 20.0 / 16.0 * inv * meat * inv;
        CHECK((h.vcov - hc1).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("ols rejects collinear designs and names the columns") {
    NormalRng rng(3);
    Eigen::MatrixXd X = randn(rng, 30, 3);
    X.col(2) = 2.0 * X.col(0) - X.col(1);
    try {
        ols(randn(rng, 30, 1).col(0), X, true, SeMode::Classical, {"a", "b", "c"});
        FAIL("expected SingularDesignError");
    } catch (const SingularDesignError& e) {
        const std::string what = e.what();
        CHECK((what.find("a") != std::string::npos || what.find("c") != std::string::npos));
    }
}

TEST_CASE("error-revision regression: planted slope") {
    ForecastPanel p;
    NormalRng rng(1);
    for (int i = 0; i < 50; ++i) {
        PanelRow r;
        r.subject_id = i % 5;
        r.t = 2 + i;
        r.f_two_lag = rng.normal(0, 5);
        r.f_one = r.f_two_lag + rng.normal(0, 3);
        r.realized = r.f_one - 0.5 * r.revision();
        p.rows.push_back(r);
    }
    const auto fit = error_revision_regression(p);
    CHECK(fit.coef_of("revision") == doctest::Approx(-0.5));
    CHECK(fit.r_squared == doctest::Approx(1.0));
    CHECK(fit.se_mode == SeMode::Classical);

    // Stacking identical copies leaves b unchanged.
    ForecastPanel twice = p;
    twice.rows.insert(twice.rows.end(), p.rows.begin(), p.rows.end());
    CHECK(error_revision_regression(twice).coef_of("revision") == doctest::Approx(fit.coef_of("revision")).epsilon(1e-12));

    // A constant shift in the realization moves only the intercept.
    ForecastPanel shifted = p;
    for (auto& r : shifted.rows) {
        r.realized += 3.0 + 0.1 * rng.standard_normal();
    }
    const auto a = error_revision_regression(shifted);
    ForecastPanel shifted2 = shifted;
    for (auto& r : shifted2.rows) r.realized += 10.0;
    const auto b = error_revision_regression(shifted2);
    CHECK(std::abs(a.coef_of("revision") - b.coef_of("revision")) < 1e-10);
    CHECK(b.coef_of("const") - a.coef_of("const") == doctest::Approx(10.0));
}

TEST_CASE("error-revision regression: zero-variance revision and empty panel") {
    ForecastPanel p;
    for (int i = 0; i < 10; ++i) p.rows.push_back({0, i, 1.0, 1.0, static_cast<double>(i)});
    CHECK_THROWS_AS(error_revision_regression(p), SingularDesignError);
    CHECK_THROWS_AS(error_revision_regression(ForecastPanel{}), DataError);
}

TEST_CASE("subject fixed effects match dummy-variable OLS") {
    NormalRng rng(6);
    ForecastPanel p;
    for (int s = 0; s < 6; ++s) {
        const double fe = rng.normal(0, 4);
        for (int t = 2; t <= 15; ++t) {
            const double f2 = rng.normal(0, 5);
            const double f1 = f2 + rng.normal(0, 3);
            p.rows.push_back({s, t, f1, f2, f1 - 0.4 * (f1 - f2) + fe + rng.standard_normal()});
        }
    }
    const auto fe = error_revision_regression(p, SeMode::Classical, true);
    const auto n = static_cast<Eigen::Index>(p.rows.size());
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, 7);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = p.rows[static_cast<std::size_t>(i)];
        Z(i, 0) = r.revision();
        Z(i, 1 + r.subject_id) = 1.0;
        y(i) = r.error();
    }
    const Eigen::VectorXd coef = (Z.transpose() * Z).inverse() * Z.transpose() * y;
    const double s2 = (y - Z * coef).squaredNorm() / static_cast<double>(n - 7);
    CHECK(fe.coef_of("revision") == doctest::Approx(coef(0)).epsilon(1e-10));
    CHECK(fe.se_of("revision") == doctest::Approx(std::sqrt(s2 * (Z.transpose() * Z).inverse()(0, 0))).epsilon(1e-8));
}

TEST_CASE("within transform absorbs additive effects") {
    Eigen::MatrixXd v(4, 2);
    v << 1, 5, 2, 5, 3, 5, 4, 5;  // 1 + unit + 2*time style: units {0,0,1,1}, times {0,1,0,1}
    const std::vector<long> u{0, 0, 1, 1}, t{0, 1, 0, 1};
    const auto d = within_transform(v, u, t);
    CHECK(d.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("two-way FE equals dummy-variable OLS on 50 random panels") {
    NormalRng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const int units = 3 + static_cast<int>(rng.index(10));
        const int times = 3 + static_cast<int>(rng.index(10));
        const int n_lags = 1 + static_cast<int>(rng.index(3));
        const auto p = random_panel(rng, units, times, n_lags);
        if (static_cast<int>(p.size()) < n_lags + units + times + 2) continue;
        PanelSpec spec;
        for (int s = 0; s < n_lags; ++s) spec.lags.push_back(s);
        spec.cluster = ClusterMode::None;
        const auto fe = panel_fe_regression(p, spec);
        const auto ref = dummy_ols(p, n_lags);
        CHECK((fe.beta - ref).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("planted lag coefficient is recovered and no-FE reduces to ols") {
    NormalRng rng(9);
    PanelRows p;
    const int units = 40, times = 30;
    std::vector<double> ua(units), tb(times);
    for (auto& v : ua) v = rng.normal(0, 1);
    for (auto& v : tb) v = rng.normal(0, 1);
    std::vector<double> dep;
    std::vector<double> r0;
    for (int u = 0; u < units; ++u)
        for (int t = 0; t < times; ++t) {
            p.unit.push_back(u);
            p.time.push_back(t);
            r0.push_back(rng.normal(0, 0.1));
            dep.push_back(0.4 * r0.back() + ua[static_cast<std::size_t>(u)] + tb[static_cast<std::size_t>(t)] + rng.normal(0, 1e-3));
        }
    const auto n = static_cast<Eigen::Index>(dep.size());
    p.dependent = Eigen::Map<Eigen::VectorXd>(dep.data(), n);
    p.lags = Eigen::MatrixXd::Zero(n, 12);
    p.lags.col(0) = Eigen::Map<Eigen::VectorXd>(r0.data(), n);
    p.lags.col(1) = randn(rng, n, 1);
    PanelSpec spec;
    spec.lags = {0, 1};
    const auto fit = panel_fe_regression(p, spec);
    CHECK(std::abs(fit.beta_lag(0) - 0.4) < 0.01);
    CHECK(fit.n_units == units);
    CHECK(fit.n_times == times);

    PanelSpec plain = spec;
    plain.unit_fe = plain.time_fe = false;
    plain.cluster = ClusterMode::None;
    const auto a = panel_fe_regression(p, plain);
    const auto b = ols(p.dependent, p.lags.leftCols(2), true, SeMode::Classical);
    CHECK((a.beta - b.coef.tail(2)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.se - b.se.tail(2)).cwiseAbs().maxCoeff() < 1e-12);

    // Adding a constant to the dependent is absorbed by the fixed effects.
    PanelRows shifted = p;
    shifted.dependent.array() += 5.0;
    CHECK((panel_fe_regression(shifted, spec).beta - fit.beta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("panel spec validation") {
    PanelRows p;
    p.unit = {0, 1};
    p.time = {0, 1};
    p.dependent = Eigen::VectorXd::Zero(2);
    p.lags = Eigen::MatrixXd::Zero(2, 12);
    PanelSpec spec;
    spec.lags = {12};
    CHECK_THROWS_AS(panel_fe_regression(p, spec), ConfigError);
    CHECK(PanelSpec::all_lags().lags.size() == 12);
}

TEST_CASE("double-clustered vcov equals literal summation on 20 instances") {
    NormalRng rng(55);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = 60;
        const Eigen::MatrixXd X = randn(rng, n, 3);
        const Eigen::VectorXd e = randn(rng, n, 1).col(0);
        std::vector<long> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            a[static_cast<std::size_t>(i)] = static_cast<long>(rng.index(5));
            b[static_cast<std::size_t>(i)] = static_cast<long>(rng.index(4));
        }
        const Eigen::MatrixXd expected = literal_two_way(X, e, a, b);
        const Eigen::MatrixXd got = cluster_robust_vcov(X, e, {a, b});
        const double scale = expected.cwiseAbs().maxCoeff();
        CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-10 * scale);
        CHECK((got - got.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * scale);

        const Eigen::MatrixXd one = cluster_robust_vcov(X, e, {a});
        CHECK((one - literal_one_way(X, e, a)).cwiseAbs().maxCoeff() <= 1e-10 * one.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("singleton clusters reduce to HC1 up to the small-sample factor") {
    NormalRng rng(8);
    const Eigen::MatrixXd X = randn(rng, 40, 2);
    const Eigen::VectorXd y = randn(rng, 40, 1).col(0);
    const auto fit = ols(y, X, false, SeMode::Hc1);
    std::vector<long> own(40);
    for (long i = 0; i < 40; ++i) own[static_cast<std::size_t>(i)] = i;
    const Eigen::MatrixXd v = cluster_robust_vcov(X, fit.residuals, {own});
    // HC1 uses n/(n-k); singleton clusters use G/(G-1) (n-1)/(n-k) = n/(n-k) as well.
    CHECK((v - fit.vcov).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a single cluster is an inference error") {
    NormalRng rng(1);
    const Eigen::MatrixXd X = randn(rng, 10, 2);
    const std::vector<long> one(10, 0);
    CHECK_THROWS_AS(cluster_robust_vcov(X, randn(rng, 10, 1).col(0), {one}), EstimationError);
}

TEST_CASE("psd repair clamps negative eigenvalues") {
    Eigen::Matrix2d m;
    m << 1, 2, 2, 1;  // eigenvalues 3, -1
    const Eigen::MatrixXd r = psd_repair(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
    CHECK(r(0, 0) == doctest::Approx(1.5));
}

TEST_CASE("descriptive statistics") {
    const std::vector<double> v{1, 2, 3, 4, 5};
    const auto d = descriptive_stats(v);
    CHECK(d.mean == 3.0);
    CHECK(d.median == 3.0);
    CHECK(d.p25 == 2.0);
    CHECK(d.p75 == 4.0);
    CHECK(d.sd == doctest::Approx(std::sqrt(2.5)));
    CHECK(d.n == 5);
    const std::vector<double> c(7, 2.5);
    const auto k = descriptive_stats(c);
    CHECK(k.sd == 0.0);
    CHECK(k.p25 == 2.5);
    CHECK(k.p75 == 2.5);
    CHECK_THROWS_AS(descriptive_stats(std::vector<double>{}), EmptyInputError);
    CHECK(percentile({10, 0, 20}, 0.5) == 10.0);
    CHECK(percentile({0, 10}, 0.25) == 2.5);
}

}  // TEST_SUITE
