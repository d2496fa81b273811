#pragma once

#include "hklab/operators.hpp"
#include "hklab/quadrature.hpp"
#include "hklab/special_functions.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hklab {

/// A multiplier of Laplace transform type:
///   M(z) = int_0^inf z e^{-tz} m(t) dt  for z > 0,  M(0) = 0,
/// with |m(t)| <= sup_bound.
struct MultiplierSpec {
    std::string name;
    std::function<cplx(double)> m_tilde;
    double sup_bound = 1.0;
    /// Closed form of M on z > 0 when known; otherwise M is computed by
    /// scalar quadrature of the defining integral.
    std::function<cplx(double)> symbol;
    /// t values where m or its derivative jumps.
    std::vector<double> breakpoints;
    /// Oscillation frequency of m in log t (drives the node count).
    double frequency = 0.0;

    /// Throws InvalidArgument if m is missing or exceeds sup_bound on a
    /// log-spaced probe of [1e-8, 1e8].
    void validate() const;
    cplx symbol_at(double z) const;

    static MultiplierSpec constant(double c);
    /// m = 1 on [0, T]: M(z) = 1 - e^{-Tz}
    static MultiplierSpec indicator(double T);
    /// m = t^{i sigma} / Gamma(1 + i sigma): M(z) = z^{-i sigma}
    static MultiplierSpec sqrt_imaginary_power(double sigma);
    /// m = t^{-2is} / Gamma(1 - 2is): M(z) = z^{2is}, so M(sqrt L) = L^{is}
    static MultiplierSpec imaginary_power(double s);
    /// m interpolated linearly in log t through the samples, constant
    /// beyond the first and last sample.
    static MultiplierSpec table(std::vector<double> t, std::vector<cplx> values);
};

/// sum_j symbol(sqrt(lambda_j)) <f, phi_j> phi_j, the symbol taken as given
/// (including at lambda = 0).
Eigen::VectorXcd multiplier_oracle(const SpectralData& spec, const std::function<cplx(double)>& symbol,
                                   const Eigen::VectorXcd& f);
/// Oracle with the multiplier's symbol and the zero-mode convention M(0) = 0.
Eigen::VectorXcd multiplier_oracle(const SpectralData& spec, const MultiplierSpec& mult, const Eigen::VectorXcd& f);

/// Default time-quadrature settings for a multiplier: tolerance 1e-6 and
/// max(256, 64 (1 + frequency)) nodes.
QuadratureSpec default_multiplier_quadrature(const MultiplierSpec& mult);

/// The time window [1e-7 / sqrt(lambda_max), 40 / sqrt(lambda_min+)].
std::pair<double, double> multiplier_time_window(const SpectralData& spec);

/// Per-mode values of the time quadrature
///   sum_q w_q (t_q sqrt(lambda)) e^{-t_q sqrt(lambda)} / t_q * m(t_q)
/// (zero on the null space).
Eigen::VectorXcd laplace_multiplier_symbols(const SpectralData& spec, const MultiplierSpec& mult,
                                            const std::optional<QuadratureSpec>& quad = std::nullopt,
                                            QuadratureDiagnostics* diag = nullptr);

/// M(sqrt L) f by quadrature of int_0^inf [sqrt(L) e^{-t sqrt(L)} f] m(t) dt.
Eigen::VectorXcd apply_laplace_multiplier(const SpectralData& spec, const MultiplierSpec& mult,
                                          const Eigen::VectorXcd& f,
                                          const std::optional<QuadratureSpec>& quad = std::nullopt,
                                          QuadratureDiagnostics* diag = nullptr);

/// Scalar M(z) by adaptive Gauss-Kronrod quadrature in log t over
/// [1e-14/z, 45/z], split at the breakpoints.
cplx laplace_symbol_quadrature(const MultiplierSpec& mult, double z);

enum class PowerMethod { Oracle, Quadrature };

/// L^{is} f: lambda^{is} on positive modes, 0 on the null space.
Eigen::VectorXcd imaginary_power(const SpectralData& spec, double s, const Eigen::VectorXcd& f,
                                 PowerMethod method = PowerMethod::Oracle,
                                 const std::optional<QuadratureSpec>& quad = std::nullopt);

/// sqrt(Gamma(2 kappa) / 2^{2 kappa})
double g_function_constant(int kappa);

/// g(f)(x) = ( int_0^inf |(t sqrt(L))^kappa e^{-t sqrt(L)} f (x)|^2 dt/t )^{1/2}
Eigen::VectorXd g_function(const SpectralData& spec, const Eigen::VectorXd& f, int kappa,
                           const std::optional<QuadratureSpec>& quad = std::nullopt,
                           QuadratureDiagnostics* diag = nullptr);

/// sqrt(sum_x mu_x |f(x)|^2)
double l2_norm(const Eigen::VectorXd& measure, const Eigen::VectorXcd& f);

}  // namespace hklab
