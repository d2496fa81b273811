#pragma once

#include "hklab/operators.hpp"
#include "hklab/quadrature.hpp"
#include "hklab/special_functions.hpp"

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace hklab {

/// Kernel values K(x, y) of a semigroup at one time parameter and
/// derivative order. `time` is real t or complex z.
template <class Scalar>
struct Kernel {
    Scalar time{};
    int order = 0;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> values;

    Eigen::Index size() const noexcept { return values.rows(); }
    Scalar operator()(Eigen::Index x, Eigen::Index y) const { return values(x, y); }
};

using KernelMatrix = Kernel<double>;
using ComplexKernelMatrix = Kernel<cplx>;

/// Source of heat kernels H_v for arbitrary v > 0, split into the null-space
/// part (constant in v) and the part on positive modes.
class HeatProvider {
public:
    virtual ~HeatProvider() = default;

    virtual Eigen::Index size() const = 0;
    virtual Eigen::MatrixXd heat(double v) const = 0;
    virtual Eigen::MatrixXd zero_mode_kernel() const = 0;
    virtual double smallest_positive_eigenvalue() const = 0;

    /// sum_q w_q (H_{v_q} - zero-mode kernel)
    virtual Eigen::MatrixXd weighted_positive_sum(std::span<const double> v, std::span<const double> w) const;
    virtual Eigen::MatrixXcd weighted_positive_sum(std::span<const double> v, std::span<const cplx> w) const;
};

/// Heat kernels read off a spectral decomposition. Weighted sums are formed
/// on the eigenvalues and assembled once.
class SpectralHeatProvider final : public HeatProvider {
public:
    explicit SpectralHeatProvider(const SpectralData& spec) : spec_(spec) {}

    Eigen::Index size() const override { return spec_.vectors.rows(); }
    Eigen::MatrixXd heat(double v) const override;
    Eigen::MatrixXd zero_mode_kernel() const override { return spec_.zero_mode_kernel(); }
    double smallest_positive_eigenvalue() const override { return spec_.smallest_positive(); }

    Eigen::MatrixXd weighted_positive_sum(std::span<const double> v, std::span<const double> w) const override;
    Eigen::MatrixXcd weighted_positive_sum(std::span<const double> v, std::span<const cplx> w) const override;

private:
    const SpectralData& spec_;
};

/// Heat kernels from an arbitrary callable; weighted sums are formed term by term.
class FunctionHeatProvider final : public HeatProvider {
public:
    FunctionHeatProvider(std::function<Eigen::MatrixXd(double)> heat, Eigen::MatrixXd zero_mode_kernel,
                         double smallest_positive_eigenvalue)
        : heat_(std::move(heat))
        , zero_(std::move(zero_mode_kernel))
        , lambda_min_(smallest_positive_eigenvalue) {}

    Eigen::Index size() const override { return zero_.rows(); }
    Eigen::MatrixXd heat(double v) const override { return heat_(v); }
    Eigen::MatrixXd zero_mode_kernel() const override { return zero_; }
    double smallest_positive_eigenvalue() const override { return lambda_min_; }

private:
    std::function<Eigen::MatrixXd(double)> heat_;
    Eigen::MatrixXd zero_;
    double lambda_min_;
};

// --- spectral routes -------------------------------------------------------

/// sum_j g(lambda_j) phi_j(x) phi_j(y) for a spectral multiplier g.
Eigen::MatrixXd spectral_kernel(const SpectralData& spec, const Eigen::VectorXd& multiplier);
Eigen::MatrixXcd spectral_kernel(const SpectralData& spec, const Eigen::VectorXcd& multiplier);

KernelMatrix heat_kernel(const SpectralData& spec, double t);
double heat_kernel_entry(const SpectralData& spec, double t, int x, int y);
Eigen::VectorXd apply_heat(const SpectralData& spec, double t, const Eigen::VectorXd& f);

/// (t sqrt(lambda))^k e^{-t sqrt(lambda)}; at lambda = 0 this is 1 for k = 0
/// and 0 for k >= 1.
double poisson_symbol(double lambda, double t, int k);
cplx poisson_symbol(double lambda, cplx z, int k);

KernelMatrix poisson_kernel_spectral(const SpectralData& spec, double t, int k);
double poisson_kernel_entry(const SpectralData& spec, double t, int k, int x, int y);
cplx complex_poisson_entry(const SpectralData& spec, cplx z, int k, int x, int y);
Eigen::VectorXd apply_poisson(const SpectralData& spec, double t, int k, const Eigen::VectorXd& f);
Eigen::VectorXcd apply_complex_poisson(const SpectralData& spec, cplx z, int k, const Eigen::VectorXd& f);

/// Throws InvalidArgument unless z != 0 and |arg z| < pi/4.
void check_sector(cplx z);

ComplexKernelMatrix complex_poisson_kernel(const SpectralData& spec, cplx z, int k);

// --- subordination routes --------------------------------------------------

/// Quadrature nodes v_q and weights w_q with
///   (z sqrt(L))^k e^{-z sqrt(L)}  ~  sum_q w_q e^{-v_q L}
/// on positive modes, from the subordination integral
///   (-1)^k z^k / sqrt(pi) int_0^inf d_z^{k+1} e^{-z^2/(4v)} e^{-vL} dv / sqrt(v).
struct SubordinationNodes {
    std::vector<double> v;
    std::vector<cplx> w;
};
SubordinationNodes subordination_nodes(cplx z, int k, const LogGrid& grid);

/// Default truncation window for the subordination integral. `lambda_min`
/// is the smallest positive eigenvalue (0 for a pure zero mode).
std::pair<double, double> subordination_window(cplx z, int k, double lambda_min);

/// The subordination integral for a single eigenvalue, evaluated by
/// quadrature (no closed form is used).
double subordinate_scalar(double lambda, double t, int k, const QuadratureSpec& quad = {},
                          QuadratureDiagnostics* diag = nullptr);
cplx subordinate_scalar(double lambda, cplx z, int k, const QuadratureSpec& quad = {},
                        QuadratureDiagnostics* diag = nullptr);

/// P_{t,k} by quadrature of the subordination formula over H_v. The
/// zero-mode contribution (1 for k = 0, 0 otherwise) is added exactly.
KernelMatrix poisson_kernel_subordination(const HeatProvider& heat, double t, int k,
                                          const QuadratureSpec& quad = {}, QuadratureDiagnostics* diag = nullptr);

ComplexKernelMatrix complex_poisson_kernel(const HeatProvider& heat, cplx z, int k,
                                           const QuadratureSpec& quad = {}, QuadratureDiagnostics* diag = nullptr);

struct MajorantOptions {
    std::vector<double> breakpoints;  ///< v values where the bound is not smooth
    double relative_tolerance = 1e-9;
    double max_log_v = 92.0;          ///< give up if the integrand has not decayed by v = e^92
};

/// C / (2^{k+1} sqrt(pi)) int_0^inf e^{-t^2/(8v)} (t/sqrt(v))^k B(v) dv/v
/// where B is a pointwise bound for |H_v(x, y)| and C the derivative bound
/// constant for order k+1. Throws QuadratureError when the integral does
/// not converge (e.g. k = 0 with a non-decaying bound).
double poisson_upper_via_heat(const std::function<double(double)>& heat_bound, double t, int k,
                              double derivative_constant, const MajorantOptions& options = {},
                              QuadratureDiagnostics* diag = nullptr);

/// CSV triplets x,y,value. Refuses kernels with more than `max_sites` rows.
void write_kernel_csv(const KernelMatrix& kernel, std::ostream& out, Eigen::Index max_sites = 2000);

}  // namespace hklab
