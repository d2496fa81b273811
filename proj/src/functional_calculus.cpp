#include "hklab/functional_calculus.hpp"

#include "hklab/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hklab {

namespace {

constexpr double kLeftWindow = 1e-7;
constexpr double kRightWindow = 40.0;

double relative_change(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    const double scale = std::max(1e-300, b.cwiseAbs().maxCoeff());
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

void MultiplierSpec::validate() const {
    if (!m_tilde) throw InvalidArgument("multiplier '" + name + "' has no time profile");
    if (!(sup_bound > 0.0)) throw InvalidArgument("multiplier sup bound must be positive");
    for (int i = 0; i <= 2000; ++i) {
        const double t = std::pow(10.0, -8.0 + 16.0 * i / 2000.0);
        if (std::abs(m_tilde(t)) > sup_bound * (1.0 + 1e-12)) {
            throw InvalidArgument("multiplier '" + name + "' exceeds its declared sup bound at t = " +
                                  std::to_string(t));
        }
    }
}

cplx MultiplierSpec::symbol_at(double z) const {
    if (z < 0.0) throw InvalidArgument("symbol argument must be non-negative");
    if (z == 0.0) return 0.0;
    if (symbol) return symbol(z);
    return laplace_symbol_quadrature(*this, z);
}

MultiplierSpec MultiplierSpec::constant(double c) {
    MultiplierSpec m;
    m.name = "constant";
    m.m_tilde = [c](double) { return cplx(c); };
    m.sup_bound = std::max(std::abs(c), 1e-300);
    m.symbol = [c](double) { return cplx(c); };
    return m;
}

MultiplierSpec MultiplierSpec::indicator(double T) {
    if (!(T > 0.0)) throw InvalidArgument("indicator length must be positive");
    MultiplierSpec m;
    m.name = "indicator";
    m.m_tilde = [T](double t) { return cplx(t <= T ? 1.0 : 0.0); };
    m.symbol = [T](double z) { return cplx(-std::expm1(-T * z)); };
    m.breakpoints = {T};
    return m;
}

MultiplierSpec MultiplierSpec::sqrt_imaginary_power(double sigma) {
    MultiplierSpec m;
    m.name = "sqrt_imaginary_power";
    const cplx norm = 1.0 / complex_gamma(cplx(1.0, sigma));
    m.m_tilde = [sigma, norm](double t) { return std::exp(cplx(0.0, sigma * std::log(t))) * norm; };
    m.sup_bound = std::abs(norm);
    m.symbol = [sigma](double z) { return std::exp(cplx(0.0, -sigma * std::log(z))); };
    m.frequency = std::abs(sigma);
    return m;
}

MultiplierSpec MultiplierSpec::imaginary_power(double s) {
    MultiplierSpec m;
    m.name = "imaginary_power";
    const cplx norm = 1.0 / complex_gamma(cplx(1.0, -2.0 * s));
    m.m_tilde = [s, norm](double t) { return std::exp(cplx(0.0, -2.0 * s * std::log(t))) * norm; };
    m.sup_bound = std::abs(norm);
    m.symbol = [s](double z) { return std::exp(cplx(0.0, 2.0 * s * std::log(z))); };
    m.frequency = 2.0 * std::abs(s);
    return m;
}

MultiplierSpec MultiplierSpec::table(std::vector<double> t, std::vector<cplx> values) {
    if (t.size() != values.size() || t.size() < 2) {
        throw InvalidArgument("multiplier table needs at least two (t, value) samples of equal length");
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(t[i] > 0.0) || (i > 0 && !(t[i] > t[i - 1]))) {
            throw InvalidArgument("multiplier table times must be positive and increasing");
        }
    }
    MultiplierSpec m;
    m.name = "table";
    double sup = 0.0;
    for (const cplx& v : values) sup = std::max(sup, std::abs(v));
    m.sup_bound = std::max(sup, 1e-300);
    m.breakpoints = t;
    m.m_tilde = [t, values](double x) {
        if (x <= t.front()) return values.front();
        if (x >= t.back()) return values.back();
        const auto it = std::upper_bound(t.begin(), t.end(), x);
        const std::size_t j = static_cast<std::size_t>(it - t.begin());
        const double a = std::log(x / t[j - 1]) / std::log(t[j] / t[j - 1]);
        return (1.0 - a) * values[j - 1] + a * values[j];
    };
    return m;
}

Eigen::VectorXcd multiplier_oracle(const SpectralData& spec, const std::function<cplx(double)>& symbol,
                                   const Eigen::VectorXcd& f) {
    Eigen::VectorXcd c = spec.coefficients(f);
    for (Eigen::Index j = 0; j < c.size(); ++j) c(j) *= symbol(std::sqrt(spec.values(j)));
    return spec.synthesize(c);
}

Eigen::VectorXcd multiplier_oracle(const SpectralData& spec, const MultiplierSpec& mult, const Eigen::VectorXcd& f) {
    return multiplier_oracle(spec, [&mult](double z) { return mult.symbol_at(z); }, f);
}

QuadratureSpec default_multiplier_quadrature(const MultiplierSpec& mult) {
    QuadratureSpec q;
    q.nodes = std::max(256, static_cast<int>(std::ceil(64.0 * (1.0 + mult.frequency))));
    q.tolerance = 1e-6;
    return q;
}

std::pair<double, double> multiplier_time_window(const SpectralData& spec) {
    const double lmin = spec.smallest_positive();
    const double lmax = spec.largest();
    if (!(lmax > 0.0)) throw InvalidArgument("spectrum has no positive eigenvalue");
    return {kLeftWindow / std::sqrt(lmax), kRightWindow / std::sqrt(lmin)};
}

namespace {

// Per-mode trapezoid sums on the composite grid of [lo, hi].
Eigen::VectorXcd symbol_sums(const Eigen::VectorXd& roots, const MultiplierSpec& mult, const LogGrid& grid) {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(roots.size());
    for (std::size_t q = 0; q < grid.x.size(); ++q) {
        const double t = grid.x[q];
        const cplx m = mult.m_tilde(t) * grid.w[q];
        if (m == cplx(0.0)) continue;
        for (Eigen::Index j = 0; j < roots.size(); ++j) {
            if (roots(j) == 0.0) continue;
            // (t sqrt(lambda)) e^{-t sqrt(lambda)} / t, times dt = t du
            const double s = t * roots(j);
            out(j) += m * (s * std::exp(-s));
        }
    }
    return out;
}

Eigen::VectorXcd quadrature_symbols(const Eigen::VectorXd& roots, double lo, double hi, const MultiplierSpec& mult,
                                    const QuadratureSpec& quad, QuadratureDiagnostics& diag) {
    std::vector<double> cuts;
    for (double b : mult.breakpoints) cuts.push_back(b);
    if (quad.lower) lo = *quad.lower;
    if (quad.upper) hi = *quad.upper;
    diag.lower = lo;
    diag.upper = hi;
    const double rmax = roots.maxCoeff();
    double rmin = rmax;
    for (Eigen::Index j = 0; j < roots.size(); ++j) {
        if (roots(j) > 0.0) rmin = std::min(rmin, roots(j));
    }
    diag.left_tail = lo * rmax * mult.sup_bound;
    diag.right_tail = hi * rmin * std::exp(-hi * rmin) * mult.sup_bound;
    return integrate_with_refinement(
        quad, [&](int level) { return make_composite_log_grid(lo, hi, cuts, quad.nodes, level); },
        [&](const LogGrid& g) { return symbol_sums(roots, mult, g); }, relative_change, diag);
}

}  // namespace

Eigen::VectorXcd laplace_multiplier_symbols(const SpectralData& spec, const MultiplierSpec& mult,
                                            const std::optional<QuadratureSpec>& quad, QuadratureDiagnostics* diag) {
    if (!mult.m_tilde) throw InvalidArgument("multiplier has no time profile");
    const auto [lo, hi] = multiplier_time_window(spec);
    const QuadratureSpec q = quad.value_or(default_multiplier_quadrature(mult));
    const Eigen::VectorXd roots = spec.values.cwiseSqrt();
    QuadratureDiagnostics local;
    try {
        Eigen::VectorXcd out = quadrature_symbols(roots, lo, hi, mult, q, local);
        if (diag) *diag = local;
        return out;
    } catch (...) {
        if (diag) *diag = local;
        throw;
    }
}

Eigen::VectorXcd apply_laplace_multiplier(const SpectralData& spec, const MultiplierSpec& mult,
                                          const Eigen::VectorXcd& f, const std::optional<QuadratureSpec>& quad,
                                          QuadratureDiagnostics* diag) {
    if (!f.allFinite()) throw InvalidArgument("input function must be finite");
    const Eigen::VectorXcd m = laplace_multiplier_symbols(spec, mult, quad, diag);
    const Eigen::VectorXcd c = spec.coefficients(f);
    return spec.synthesize(Eigen::VectorXcd(c.cwiseProduct(m)));
}

cplx laplace_symbol_quadrature(const MultiplierSpec& mult, double z) {
    if (!(z > 0.0)) throw InvalidArgument("symbol quadrature needs z > 0");
    if (!mult.m_tilde) throw InvalidArgument("multiplier has no time profile");
    // u = log(t z); the integrand z e^{-tz} m(t) dt becomes w e^{-w} m(w / z) du with w = e^u
    const double lo = std::log(1e-14), hi = std::log(45.0);
    std::vector<double> cuts = {lo, hi};
    for (double b : mult.breakpoints) {
        const double u = std::log(b * z);
        if (u > lo && u < hi) cuts.push_back(u);
    }
    std::sort(cuts.begin(), cuts.end());
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    cplx total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        for (double a = cuts[i]; a < cuts[i + 1];) {
            const double b = std::min(a + 1.0, cuts[i + 1]);
            const auto part = [&](bool imag) {
                return GK::integrate(
                    [&](double u) {
                        const double w = std::exp(u);
                        const cplx v = w * std::exp(-w) * mult.m_tilde(w / z);
                        return imag ? v.imag() : v.real();
                    },
                    a, b, 15, 1e-13);
            };
            total += cplx(part(false), part(true));
            a = b;
        }
    }
    return total;
}

Eigen::VectorXcd imaginary_power(const SpectralData& spec, double s, const Eigen::VectorXcd& f, PowerMethod method,
                                 const std::optional<QuadratureSpec>& quad) {
    if (!f.allFinite()) throw InvalidArgument("input function must be finite");
    if (method == PowerMethod::Quadrature) {
        return apply_laplace_multiplier(spec, MultiplierSpec::imaginary_power(s), f, quad);
    }
    Eigen::VectorXcd c = spec.coefficients(f);
    for (Eigen::Index j = 0; j < c.size(); ++j) {
        const double l = spec.values(j);
        c(j) *= l == 0.0 ? cplx(0.0) : std::exp(cplx(0.0, s * std::log(l)));
    }
    return spec.synthesize(c);
}

double g_function_constant(int kappa) {
    if (kappa < 1) throw InvalidArgument("kappa must be >= 1");
    return std::sqrt(std::tgamma(2.0 * kappa) / std::pow(2.0, 2.0 * kappa));
}

Eigen::VectorXd g_function(const SpectralData& spec, const Eigen::VectorXd& f, int kappa,
                           const std::optional<QuadratureSpec>& quad, QuadratureDiagnostics* diag) {
    if (kappa < 1) throw InvalidArgument("kappa must be >= 1");
    const auto [lo0, hi0] = multiplier_time_window(spec);
    QuadratureSpec q = quad.value_or(QuadratureSpec{});
    const double lo = q.lower.value_or(lo0);
    const double hi = q.upper.value_or(hi0);
    const Eigen::VectorXd c = spec.coefficients(f);
    const Eigen::VectorXd roots = spec.values.cwiseSqrt();
    QuadratureDiagnostics local;
    local.lower = lo;
    local.upper = hi;
    local.left_tail = std::pow(lo * roots.maxCoeff(), 2 * kappa);
    local.right_tail = std::pow(hi * spec.smallest_positive(), 2 * kappa) *
                       std::exp(-2.0 * hi * std::sqrt(spec.smallest_positive()));
    auto evaluate = [&](const LogGrid& grid) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(f.size());
        Eigen::VectorXd coef(c.size());
        for (std::size_t qi = 0; qi < grid.x.size(); ++qi) {
            for (Eigen::Index j = 0; j < c.size(); ++j) {
                const double s = grid.x[qi] * roots(j);
                coef(j) = roots(j) == 0.0 ? 0.0 : c(j) * std::pow(s, kappa) * std::exp(-s);
            }
            acc += grid.w[qi] * spec.synthesize(coef).cwiseAbs2();
        }
        return acc;
    };
    auto change = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
    };
    try {
        const Eigen::VectorXd g2 = integrate_with_doubling(lo, hi, q, evaluate, change, local);
        if (diag) *diag = local;
        return g2.cwiseMax(0.0).cwiseSqrt();
    } catch (...) {
        if (diag) *diag = local;
        throw;
    }
}

double l2_norm(const Eigen::VectorXd& measure, const Eigen::VectorXcd& f) {
    return std::sqrt((measure.array() * f.array().abs2()).sum());
}

}  // namespace hklab
