#include "hklab/semigroups.hpp"

#include "hklab/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <string>

namespace hklab {

namespace {

constexpr int kMaxOrder = 7;  // the weights need d^{k+1}, available up to 8

void check_time(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("time parameter must be positive and finite");
}

void check_order(int k) {
    if (k < 0 || k > kMaxOrder) {
        throw InvalidArgument("derivative order k must lie in [0, " + std::to_string(kMaxOrder) + "]");
    }
}

void check_site(const SpectralData& spec, int x) {
    if (x < 0 || x >= spec.vectors.rows()) throw InvalidArgument("site id out of range");
}

template <class Scalar>
double max_change(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& a,
                  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& b) {
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

// |integrand per du| at a single node, without the e^{-v lambda} factor.
double node_magnitude(cplx z, int k, double v) {
    LogGrid g;
    g.x = {v};
    g.w = {1.0};
    return std::abs(subordination_nodes(z, k, g).w.front());
}

template <class Result, class Evaluate>
Result run_subordination(cplx z, int k, double lambda_min, const QuadratureSpec& quad, QuadratureDiagnostics* diag,
                         Evaluate&& evaluate) {
    auto [lo, hi] = subordination_window(z, k, lambda_min);
    if (quad.lower) lo = *quad.lower;
    if (quad.upper) hi = *quad.upper;
    QuadratureDiagnostics local;
    local.left_tail = node_magnitude(z, k, lo);
    local.right_tail = node_magnitude(z, k, hi) * std::exp(-hi * lambda_min);
    auto change = [](const Result& a, const Result& b) {
        if constexpr (std::is_arithmetic_v<Result> || std::is_same_v<Result, cplx>) {
            return std::abs(a - b) / std::max(1.0, std::abs(b));
        } else {
            return max_change(a, b);
        }
    };
    try {
        Result r = integrate_with_doubling(
            lo, hi, quad, [&](const LogGrid& grid) { return evaluate(subordination_nodes(z, k, grid)); }, change,
            local);
        if (diag) *diag = local;
        return r;
    } catch (...) {
        if (diag) *diag = local;
        throw;
    }
}

}  // namespace

// --- providers -------------------------------------------------------------

Eigen::MatrixXd HeatProvider::weighted_positive_sum(std::span<const double> v, std::span<const double> w) const {
    const Eigen::MatrixXd zero = zero_mode_kernel();
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(size(), size());
    double wsum = 0.0;
    for (std::size_t q = 0; q < v.size(); ++q) {
        acc += w[q] * heat(v[q]);
        wsum += w[q];
    }
    return acc - wsum * zero;
}

Eigen::MatrixXcd HeatProvider::weighted_positive_sum(std::span<const double> v, std::span<const cplx> w) const {
    const Eigen::MatrixXd zero = zero_mode_kernel();
    Eigen::MatrixXd re = Eigen::MatrixXd::Zero(size(), size());
    Eigen::MatrixXd im = Eigen::MatrixXd::Zero(size(), size());
    cplx wsum = 0.0;
    for (std::size_t q = 0; q < v.size(); ++q) {
        const Eigen::MatrixXd h = heat(v[q]);
        re += w[q].real() * h;
        im += w[q].imag() * h;
        wsum += w[q];
    }
    re -= wsum.real() * zero;
    im -= wsum.imag() * zero;
    Eigen::MatrixXcd out(size(), size());
    out.real() = re;
    out.imag() = im;
    return out;
}

Eigen::MatrixXd SpectralHeatProvider::heat(double v) const { return heat_kernel(spec_, v).values; }

Eigen::MatrixXd SpectralHeatProvider::weighted_positive_sum(std::span<const double> v,
                                                            std::span<const double> w) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(spec_.values.size());
    for (Eigen::Index j = 0; j < g.size(); ++j) {
        if (spec_.is_zero_mode(j)) continue;
        double s = 0.0;
        for (std::size_t q = 0; q < v.size(); ++q) s += w[q] * std::exp(-v[q] * spec_.values(j));
        g(j) = s;
    }
    return spectral_kernel(spec_, g);
}

Eigen::MatrixXcd SpectralHeatProvider::weighted_positive_sum(std::span<const double> v,
                                                             std::span<const cplx> w) const {
    Eigen::VectorXcd g = Eigen::VectorXcd::Zero(spec_.values.size());
    for (Eigen::Index j = 0; j < g.size(); ++j) {
        if (spec_.is_zero_mode(j)) continue;
        cplx s = 0.0;
        for (std::size_t q = 0; q < v.size(); ++q) s += w[q] * std::exp(-v[q] * spec_.values(j));
        g(j) = s;
    }
    return spectral_kernel(spec_, g);
}

// --- spectral routes -------------------------------------------------------

Eigen::MatrixXd spectral_kernel(const SpectralData& spec, const Eigen::VectorXd& multiplier) {
    // Denormal multipliers (e.g. e^{-t lambda} for large t lambda) slow the
    // dense product by orders of magnitude and carry no information.
    const double cut = 1e-200 * std::max(1.0, multiplier.cwiseAbs().maxCoeff());
    const Eigen::VectorXd g = (multiplier.array().abs() < cut).select(0.0, multiplier);
    Eigen::MatrixXd out = spec.vectors * g.asDiagonal() * spec.vectors.transpose();
    return 0.5 * (out + out.transpose());
}

Eigen::MatrixXcd spectral_kernel(const SpectralData& spec, const Eigen::VectorXcd& multiplier) {
    Eigen::MatrixXcd out(spec.vectors.rows(), spec.vectors.rows());
    out.real() = spectral_kernel(spec, Eigen::VectorXd(multiplier.real()));
    out.imag() = spectral_kernel(spec, Eigen::VectorXd(multiplier.imag()));
    return out;
}

KernelMatrix heat_kernel(const SpectralData& spec, double t) {
    check_time(t);
    const Eigen::VectorXd g = (-t * spec.values.array()).exp();
    return {t, 0, spectral_kernel(spec, g)};
}

double heat_kernel_entry(const SpectralData& spec, double t, int x, int y) {
    check_time(t);
    check_site(spec, x);
    check_site(spec, y);
    double s = 0.0;
    for (Eigen::Index j = 0; j < spec.values.size(); ++j) {
        s += std::exp(-t * spec.values(j)) * spec.vectors(x, j) * spec.vectors(y, j);
    }
    return s;
}

Eigen::VectorXd apply_heat(const SpectralData& spec, double t, const Eigen::VectorXd& f) {
    check_time(t);
    const Eigen::VectorXd c = spec.coefficients(f);
    return spec.synthesize(Eigen::VectorXd((-t * spec.values.array()).exp() * c.array()));
}

double poisson_symbol(double lambda, double t, int k) {
    if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
    const double s = t * std::sqrt(lambda);
    return std::pow(s, k) * std::exp(-s);
}

cplx poisson_symbol(double lambda, cplx z, int k) {
    if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
    const cplx s = z * std::sqrt(lambda);
    return std::pow(s, k) * std::exp(-s);
}

KernelMatrix poisson_kernel_spectral(const SpectralData& spec, double t, int k) {
    check_time(t);
    check_order(k);
    Eigen::VectorXd g(spec.values.size());
    for (Eigen::Index j = 0; j < g.size(); ++j) g(j) = poisson_symbol(spec.values(j), t, k);
    return {t, k, spectral_kernel(spec, g)};
}

double poisson_kernel_entry(const SpectralData& spec, double t, int k, int x, int y) {
    check_time(t);
    check_order(k);
    check_site(spec, x);
    check_site(spec, y);
    double s = 0.0;
    for (Eigen::Index j = 0; j < spec.values.size(); ++j) {
        s += poisson_symbol(spec.values(j), t, k) * spec.vectors(x, j) * spec.vectors(y, j);
    }
    return s;
}

cplx complex_poisson_entry(const SpectralData& spec, cplx z, int k, int x, int y) {
    check_sector(z);
    check_order(k);
    check_site(spec, x);
    check_site(spec, y);
    cplx s = 0.0;
    for (Eigen::Index j = 0; j < spec.values.size(); ++j) {
        s += poisson_symbol(spec.values(j), z, k) * (spec.vectors(x, j) * spec.vectors(y, j));
    }
    return s;
}

Eigen::VectorXd apply_poisson(const SpectralData& spec, double t, int k, const Eigen::VectorXd& f) {
    check_time(t);
    check_order(k);
    Eigen::VectorXd c = spec.coefficients(f);
    for (Eigen::Index j = 0; j < c.size(); ++j) c(j) *= poisson_symbol(spec.values(j), t, k);
    return spec.synthesize(c);
}

Eigen::VectorXcd apply_complex_poisson(const SpectralData& spec, cplx z, int k, const Eigen::VectorXd& f) {
    check_sector(z);
    check_order(k);
    const Eigen::VectorXd c = spec.coefficients(f);
    Eigen::VectorXcd g(c.size());
    for (Eigen::Index j = 0; j < c.size(); ++j) g(j) = c(j) * poisson_symbol(spec.values(j), z, k);
    return spec.synthesize(g);
}

void check_sector(cplx z) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()) || z == cplx(0.0)) {
        throw InvalidArgument("complex time must be finite and non-zero");
    }
    if (!(std::abs(std::arg(z)) < 0.25 * std::numbers::pi)) {
        throw InvalidArgument("complex time outside the sector |arg z| < pi/4");
    }
}

ComplexKernelMatrix complex_poisson_kernel(const SpectralData& spec, cplx z, int k) {
    check_sector(z);
    check_order(k);
    Eigen::VectorXcd g(spec.values.size());
    for (Eigen::Index j = 0; j < g.size(); ++j) g(j) = poisson_symbol(spec.values(j), z, k);
    return {z, k, spectral_kernel(spec, g)};
}

// --- subordination routes --------------------------------------------------

SubordinationNodes subordination_nodes(cplx z, int k, const LogGrid& grid) {
    check_order(k);
    SubordinationNodes nodes;
    nodes.v = grid.x;
    nodes.w.resize(grid.x.size());
    // (z sqrt(lambda))^k e^{-z sqrt(lambda)}
    //   = (-1)^{k+1} z^k / sqrt(pi) int d_z^{k+1} e^{-z^2/(4v)} e^{-v lambda} v^{-1/2} dv,
    // and dv = v du on the log grid.
    const double sign = k % 2 == 0 ? -1.0 : 1.0;
    const cplx zk = std::pow(z, k);
    for (std::size_t q = 0; q < grid.x.size(); ++q) {
        const double v = grid.x[q];
        const cplx d = gaussian_time_derivative(z, cplx(4.0 * v), k + 1);
        nodes.w[q] = grid.w[q] * sign * zk / std::sqrt(std::numbers::pi) * d * std::sqrt(v);
    }
    return nodes;
}

std::pair<double, double> subordination_window(cplx z, int k, double lambda_min) {
    const double re = (z * z).real();
    if (!(re > 0.0)) throw InvalidArgument("subordination needs Re z^2 > 0");
    const double lo = re / (4.0 * (50.0 + 2.0 * (k + 1)));
    double hi;
    if (lambda_min > 0.0) {
        hi = 50.0 / lambda_min;
    } else {
        hi = 1e24 * std::max(1.0, std::norm(z));
    }
    hi = std::max(hi, 1e3 * lo);
    return {lo, hi};
}

double subordinate_scalar(double lambda, double t, int k, const QuadratureSpec& quad, QuadratureDiagnostics* diag) {
    check_time(t);
    return subordinate_scalar(lambda, cplx(t), k, quad, diag).real();
}

cplx subordinate_scalar(double lambda, cplx z, int k, const QuadratureSpec& quad, QuadratureDiagnostics* diag) {
    check_sector(z);
    check_order(k);
    if (!(lambda >= 0.0)) throw InvalidArgument("eigenvalue must be non-negative");
    return run_subordination<cplx>(z, k, lambda, quad, diag, [lambda](const SubordinationNodes& n) {
        cplx s = 0.0;
        for (std::size_t q = 0; q < n.v.size(); ++q) s += n.w[q] * std::exp(-n.v[q] * lambda);
        return s;
    });
}

KernelMatrix poisson_kernel_subordination(const HeatProvider& heat, double t, int k, const QuadratureSpec& quad,
                                          QuadratureDiagnostics* diag) {
    check_time(t);
    check_order(k);
    const double lambda_min = heat.smallest_positive_eigenvalue();
    Eigen::MatrixXd values = run_subordination<Eigen::MatrixXd>(
        cplx(t), k, lambda_min, quad, diag, [&heat](const SubordinationNodes& n) {
            std::vector<double> w(n.w.size());
            for (std::size_t q = 0; q < w.size(); ++q) w[q] = n.w[q].real();
            return heat.weighted_positive_sum(n.v, w);
        });
    if (k == 0) values += heat.zero_mode_kernel();
    values = 0.5 * (values + values.transpose()).eval();
    return {t, k, std::move(values)};
}

ComplexKernelMatrix complex_poisson_kernel(const HeatProvider& heat, cplx z, int k, const QuadratureSpec& quad,
                                           QuadratureDiagnostics* diag) {
    check_sector(z);
    check_order(k);
    const double lambda_min = heat.smallest_positive_eigenvalue();
    Eigen::MatrixXcd values = run_subordination<Eigen::MatrixXcd>(
        z, k, lambda_min, quad, diag,
        [&heat](const SubordinationNodes& n) { return heat.weighted_positive_sum(n.v, std::span<const cplx>(n.w)); });
    if (k == 0) values += heat.zero_mode_kernel().cast<cplx>();
    values = 0.5 * (values + values.transpose()).eval();
    return {z, k, std::move(values)};
}

// --- majorant --------------------------------------------------------------

double poisson_upper_via_heat(const std::function<double(double)>& heat_bound, double t, int k,
                              double derivative_constant, const MajorantOptions& options,
                              QuadratureDiagnostics* diag) {
    check_time(t);
    check_order(k);
    if (!(derivative_constant > 0.0)) throw InvalidArgument("derivative bound constant must be positive");
    const double pref = derivative_constant / (std::ldexp(1.0, k + 1) * std::sqrt(std::numbers::pi));
    auto integrand = [&](double u) {
        const double v = std::exp(u);
        const double b = heat_bound(v);
        if (!(b >= 0.0)) throw NumericalError("heat bound must be non-negative");
        if (b == 0.0) return 0.0;
        const double g = std::exp(-t * t / (8.0 * v));
        if (g == 0.0) return 0.0;
        return pref * g * std::pow(t / std::sqrt(v), k) * b;
    };

    std::vector<double> cuts;
    for (double bp : options.breakpoints) {
        if (bp > 0.0 && std::isfinite(bp)) cuts.push_back(std::log(bp));
    }
    std::sort(cuts.begin(), cuts.end());

    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    auto piece = [&](double a, double b) { return GK::integrate(integrand, a, b, 12, 1e-12); };
    auto next_right = [&](double u) {
        double nxt = u + 1.0;
        auto it = std::upper_bound(cuts.begin(), cuts.end(), u + 1e-12);
        if (it != cuts.end() && *it < nxt) nxt = *it;
        return nxt;
    };
    auto next_left = [&](double u) {
        double nxt = u - 1.0;
        auto it = std::lower_bound(cuts.begin(), cuts.end(), u - 1e-12);
        if (it != cuts.begin() && *std::prev(it) > nxt) nxt = *std::prev(it);
        return nxt;
    };

    // Start where the Gaussian factor is e^{-1} and walk outwards in unit
    // steps until three consecutive pieces are negligible.
    const double u0 = std::log(t * t / 8.0);
    double total = 0.0;
    int quiet = 0;
    int pieces = 0;
    double u = u0;
    double last_right = 0.0;
    while (quiet < 3) {
        if (u > options.max_log_v) {
            throw QuadratureError("majorant integral did not converge: integrand has not decayed at v = e^" +
                                      std::to_string(options.max_log_v),
                                  pieces, last_right, 0.0, std::abs(integrand(u)));
        }
        const double b = next_right(u);
        last_right = piece(u, b);
        total += last_right;
        ++pieces;
        quiet = std::abs(last_right) <= options.relative_tolerance * std::abs(total) ? quiet + 1 : 0;
        u = b;
    }
    const double u_hi = u;
    quiet = 0;
    u = u0;
    double last_left = 0.0;
    while (quiet < 3) {
        if (u < -options.max_log_v) {
            throw QuadratureError("majorant integral did not converge at small v", pieces, last_left,
                                  std::abs(integrand(u)), 0.0);
        }
        const double a = next_left(u);
        last_left = piece(a, u);
        total += last_left;
        ++pieces;
        quiet = std::abs(last_left) <= options.relative_tolerance * std::abs(total) ? quiet + 1 : 0;
        u = a;
    }
    if (diag) {
        diag->nodes = pieces * 61;
        diag->doublings = 0;
        diag->lower = std::exp(u);
        diag->upper = std::exp(u_hi);
        diag->last_change = std::max(std::abs(last_left), std::abs(last_right));
        diag->left_tail = std::abs(integrand(u));
        diag->right_tail = std::abs(integrand(u_hi));
        diag->converged = true;
    }
    return total;
}

void write_kernel_csv(const KernelMatrix& kernel, std::ostream& out, Eigen::Index max_sites) {
    if (kernel.size() > max_sites) {
        throw SizeCapExceeded("kernel has " + std::to_string(kernel.size()) + " sites, dump limit is " +
                              std::to_string(max_sites));
    }
    out << "x,y,value\n" << std::setprecision(17);
    for (Eigen::Index x = 0; x < kernel.size(); ++x) {
        for (Eigen::Index y = 0; y < kernel.size(); ++y) out << x << ',' << y << ',' << kernel.values(x, y) << '\n';
    }
}

}  // namespace hklab
