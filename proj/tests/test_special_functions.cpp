#include "doctest.h"
#include "oracles.hpp"

#include "hklab/error.hpp"
#include "hklab/quadrature.hpp"
#include "hklab/special_functions.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

using namespace hklab;

TEST_CASE("complex gamma") {
    for (double x : {0.3, 0.5, 1.0, 2.5, 7.0, -0.5, -2.3})
        CHECK(complex_gamma(cplx(x, 0.0)).real() == doctest::Approx(std::tgamma(x)).epsilon(1e-12));
    const double pi = std::numbers::pi;
    CHECK(std::norm(complex_gamma(cplx(0.0, 1.0))) == doctest::Approx(pi / std::sinh(pi)).epsilon(1e-12));
    for (cplx z : {cplx(0.5, 2.0), cplx(1.0, -3.0), cplx(2.0, 0.7)}) {
        const cplx lhs = complex_gamma(z + 1.0);
        const cplx rhs = z * complex_gamma(z);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(rhs));
    }
}

TEST_CASE("Hermite polynomials") {
    for (double u : {-1.7, 0.0, 0.4, 2.2}) {
        CHECK(hermite(0, u) == 1.0);
        CHECK(hermite(1, u) == doctest::Approx(2 * u));
        CHECK(hermite(3, u) == doctest::Approx(8 * u * u * u - 12 * u));
        CHECK(hermite(4, u) == doctest::Approx(16 * std::pow(u, 4) - 48 * u * u + 12));
    }
}

TEST_CASE("Gaussian time derivative closed forms") {
    for (double t : {-0.8, 0.3, 1.9})
        for (double s : {0.2, 1.0, 3.0}) {
            CHECK(gaussian_time_derivative(t, s, 1) == doctest::Approx(-(2 * t / s) * std::exp(-t * t / s)));
        }
    CHECK(gaussian_time_derivative(0.0, 0.7, 2) == doctest::Approx(-2.0 / 0.7));
    CHECK_THROWS_AS(gaussian_time_derivative(1.0, 1.0, 0), InvalidArgument);
    CHECK_THROWS_AS(gaussian_time_derivative(1.0, 1.0, 9), InvalidArgument);
    CHECK_THROWS_AS(gaussian_time_derivative(1.0, -1.0, 2), InvalidArgument);
}

TEST_CASE("Gaussian time derivative against finite differences on a 50-point grid") {
    double worst_fd = 0.0, worst_poly = 0.0;
    for (int order = 1; order <= 6; ++order) {
        for (int i = 0; i < 10; ++i) {
            for (int j = 0; j < 5; ++j) {
                const double t = -2.0 + 4.4 * i / 9.0;
                const double s = 0.3 * std::pow(3.0, j);
                const double envelope = std::exp(-t * t / (2 * s)) * std::pow(s, -0.5 * order);
                const double v = gaussian_time_derivative(t, s, order);
                const auto lower = [&](double x) {
                    return order == 1 ? std::exp(-x * x / s) : gaussian_time_derivative(x, s, order - 1);
                };
                const double fd = oracle::central_difference(lower, t, 1e-3 * std::sqrt(s));
                worst_fd = std::max(worst_fd, std::abs(v - fd) / envelope);
                worst_poly = std::max(worst_poly, std::abs(v - oracle::gaussian_derivative_exact(t, s, order)) / envelope);
            }
        }
    }
    CHECK(worst_fd < 1e-6);
    CHECK(worst_poly < 1e-11);
    const double fd4 = oracle::central_difference([](double x) { return gaussian_time_derivative(x, 0.7, 3); }, 1.3, 1e-3);
    CHECK(std::abs(gaussian_time_derivative(1.3, 0.7, 4) - fd4) <= 1e-6 * std::abs(fd4));
}

TEST_CASE("derivative bound constant is the sharp constant") {
    for (int order = 1; order <= 8; ++order) {
        const double C = gaussian_derivative_bound_constant(order);
        double best = 0.0;
        for (int i = 0; i <= 4000; ++i) {
            const double t = -6.0 + 12.0 * i / 4000;
            for (double s : {0.5, 2.0}) {
                const double ratio = std::abs(gaussian_time_derivative(t * std::sqrt(s), s, order)) /
                                     (std::exp(-t * t / 2) * std::pow(s, -0.5 * order));
                CHECK(ratio <= C * (1 + 1e-12));
                best = std::max(best, ratio);
            }
        }
        CHECK(best >= 0.999 * C);
    }
}

TEST_CASE("complex Gaussian derivative agrees on the real axis") {
    for (int order = 1; order <= 5; ++order) {
        const cplx v = gaussian_time_derivative(cplx(0.9, 0.0), cplx(1.7, 0.0), order);
        CHECK(v.real() == doctest::Approx(gaussian_time_derivative(0.9, 1.7, order)).epsilon(1e-13));
        CHECK(std::abs(v.imag()) < 1e-15);
    }
    CHECK(std::abs(gaussian_time_derivative(cplx(0.4, 0.2), cplx(2.0), 0) - std::exp(-cplx(0.4, 0.2) * cplx(0.4, 0.2) / 2.0)) < 1e-15);
}

TEST_CASE("log grid trapezoid") {
    const auto g = make_log_grid(std::exp(-30.0), std::exp(5.0), 2001);
    double sum = 0.0;
    for (std::size_t i = 0; i < g.x.size(); ++i) sum += g.w[i] * g.x[i] * std::exp(-g.x[i]);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    double wsum = 0.0;
    for (double w : g.w) wsum += w;
    CHECK(wsum == doctest::Approx(35.0));
}

TEST_CASE("composite log grid resolves a jump") {
    const std::vector<double> breaks = {2.0};
    const double exact = 1.0 - 3.0 * std::exp(-2.0);
    const auto truncated = [](const LogGrid& g) {
        double sum = 0.0;
        for (std::size_t i = 0; i < g.x.size(); ++i)
            if (g.x[i] < 2.0) sum += g.w[i] * g.x[i] * g.x[i] * std::exp(-g.x[i]);
        return sum;
    };
    const auto g0 = make_composite_log_grid(std::exp(-30.0), std::exp(5.0), breaks, 1001);
    const auto g1 = make_composite_log_grid(std::exp(-30.0), std::exp(5.0), breaks, 1001, 1);
    const double e0 = std::abs(truncated(g0) - exact);
    const double e1 = std::abs(truncated(g1) - exact);
    CHECK(e0 < 1e-4);
    CHECK(e1 < e0 / 3.5);
    CHECK(g1.x.size() > 2 * g0.x.size() - 10);
    const double plain = std::abs(truncated(make_log_grid(std::exp(-30.0), std::exp(5.0), 1001)) - exact);
    CHECK(plain > 10 * e0);
}

TEST_CASE("refinement reports diagnostics and gives up") {
    QuadratureSpec spec;
    spec.nodes = 64;
    QuadratureDiagnostics diag;
    const auto integrate = [](const LogGrid& grid) {
        double s = 0.0;
        for (std::size_t i = 0; i < grid.x.size(); ++i) s += grid.w[i] * grid.x[i] * std::exp(-grid.x[i]);
        return s;
    };
    const auto change = [](double a, double b) { return std::abs(a - b); };
    const double v = integrate_with_doubling(1e-12, 60.0, spec, integrate, change, diag);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(diag.converged);
    CHECK(diag.nodes > 64);
    const auto j = nlohmann::json::parse(diag.to_json());
    CHECK(j.contains("nodes"));

    spec.max_doublings = 1;
    spec.tolerance = 1e-300;
    QuadratureDiagnostics d2;
    CHECK_THROWS_AS(integrate_with_doubling(1e-12, 60.0, spec, integrate, change, d2), QuadratureError);

    QuadratureSpec bad;
    bad.nodes = 8;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}
