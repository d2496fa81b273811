#include "hklab/special_functions.hpp"

#include "hklab/error.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

namespace hklab {

namespace {

constexpr double kLanczosG = 7.0;
constexpr std::array<double, 9> kLanczosCoeff = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

template <class T>
T hermite_impl(int n, T u) {
    if (n < 0) throw InvalidArgument("Hermite degree must be non-negative");
    T prev = T(1.0);
    if (n == 0) return prev;
    T cur = T(2.0) * u;
    for (int k = 1; k < n; ++k) {
        T next = T(2.0) * u * cur - T(2.0 * k) * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

}  // namespace

cplx complex_gamma(cplx z) {
    if (z.real() < 0.5) {
        // Reflection: Gamma(z) Gamma(1 - z) = pi / sin(pi z)
        return std::numbers::pi / (std::sin(std::numbers::pi * z) * complex_gamma(1.0 - z));
    }
    z -= 1.0;
    cplx x = kLanczosCoeff[0];
    for (std::size_t i = 1; i < kLanczosCoeff.size(); ++i) x += kLanczosCoeff[i] / (z + static_cast<double>(i));
    const cplx t = z + kLanczosG + 0.5;
    return std::sqrt(2.0 * std::numbers::pi) * std::pow(t, z + 0.5) * std::exp(-t) * x;
}

double hermite(int n, double u) { return hermite_impl(n, u); }
cplx hermite(int n, cplx u) { return hermite_impl(n, u); }

double gaussian_time_derivative(double t, double s, int order) {
    if (order < 1 || order > 8) {
        throw InvalidArgument("derivative order must lie in [1, 8], got " + std::to_string(order));
    }
    if (!(s > 0.0)) throw InvalidArgument("scale s must be positive");
    const double u = t / std::sqrt(s);
    const double sign = order % 2 == 0 ? 1.0 : -1.0;
    return sign * std::pow(s, -0.5 * order) * hermite(order, u) * std::exp(-u * u);
}

cplx gaussian_time_derivative(cplx z, cplx s, int order) {
    if (order < 0 || order > 8) {
        throw InvalidArgument("derivative order must lie in [0, 8], got " + std::to_string(order));
    }
    const cplx root = std::sqrt(s);
    const cplx u = z / root;
    const double sign = order % 2 == 0 ? 1.0 : -1.0;
    return sign * std::pow(root, -order) * hermite(order, u) * std::exp(-u * u);
}

double gaussian_derivative_bound_constant(int order) {
    if (order < 0 || order > 8) throw InvalidArgument("derivative order must lie in [0, 8]");
    // |H_n(u)| e^{-u^2/2} is even and negligible beyond |u| = 12 for n <= 8.
    auto g = [order](double u) { return std::abs(hermite(order, u)) * std::exp(-0.5 * u * u); };
    constexpr int samples = 24000;
    double best = 0.0, best_u = 0.0;
    for (int i = 0; i <= samples; ++i) {
        const double u = 12.0 * i / samples;
        const double v = g(u);
        if (v > best) {
            best = v;
            best_u = u;
        }
    }
    // Golden-section refinement around the best sample.
    double a = std::max(0.0, best_u - 12.0 / samples);
    double b = best_u + 12.0 / samples;
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 100; ++it) {
        const double c = b - phi * (b - a);
        const double d = a + phi * (b - a);
        if (g(c) > g(d)) b = d; else a = c;
    }
    return std::max(best, g(0.5 * (a + b)));
}

}  // namespace hklab
