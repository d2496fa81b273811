#pragma once

#include <complex>

namespace hklab {

using cplx = std::complex<double>;

/// Gamma function on the complex plane (Lanczos, g = 7, relative error
/// below 1e-13 away from the poles).
cplx complex_gamma(cplx z);

/// Physicists' Hermite polynomial H_n(u), by the three-term recurrence.
double hermite(int n, double u);
cplx hermite(int n, cplx u);

/// d^order/dt^order of exp(-t^2/s) in closed form:
///   (-1)^order s^{-order/2} H_order(t / sqrt(s)) exp(-t^2/s).
/// `order` in [1, 8], s > 0. Throws InvalidArgument otherwise.
double gaussian_time_derivative(double t, double s, int order);

/// Same closed form for complex time z; `s` may be complex too (s = 4v with
/// real v in practice). Allows order 0 for convenience.
cplx gaussian_time_derivative(cplx z, cplx s, int order);

/// sup_u |H_order(u)| exp(-u^2/2): the smallest C with
/// |d^order/dt^order exp(-t^2/s)| <= C exp(-t^2/(2s)) s^{-order/2}.
double gaussian_derivative_bound_constant(int order);

}  // namespace hklab
