#pragma once

#include "hklab/model_geometry.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>

namespace hklab {

/// L f(i) = mu_i^{-1} sum_j c_ij (f(i) - f(j)) + V(i) f(i) on a model.
///
/// Self-adjoint in <f, g> = sum_i mu_i f(i) g(i). Cheap to copy: the model
/// is shared and never mutated.
class OperatorHandle {
public:
    OperatorHandle(std::shared_ptr<const ManifoldModel> model, Eigen::VectorXd potential);

    const ManifoldModel& model() const noexcept { return *model_; }
    std::shared_ptr<const ManifoldModel> model_ptr() const noexcept { return model_; }
    const Eigen::VectorXd& potential() const noexcept { return potential_; }
    bool has_potential() const noexcept { return potential_.cwiseAbs().maxCoeff() > 0.0; }
    std::size_t size() const noexcept { return model_->size(); }

    Eigen::VectorXd apply(const Eigen::VectorXd& f) const;
    /// <L f, g> in the mu-weighted pairing.
    double form(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const;
    /// (L e_i)(i)
    double diagonal(int i) const;

    /// D^{1/2} L D^{-1/2}, the Euclidean-symmetric similarity transform.
    Eigen::MatrixXd symmetric_matrix() const;

private:
    std::shared_ptr<const ManifoldModel> model_;
    Eigen::VectorXd potential_;
};

OperatorHandle assemble_laplacian(std::shared_ptr<const ManifoldModel> model);

/// Adds a non-negative diagonal potential; throws on negative entries.
OperatorHandle add_potential(const OperatorHandle& op, const Eigen::VectorXd& potential);

namespace potentials {
Eigen::VectorXd constant(const ManifoldModel& model, double value);
/// `value` on the centre segment, zero elsewhere.
Eigen::VectorXd center_bump(const ManifoldModel& model, double value);
/// amplitude / (1 + |x|^power)
Eigen::VectorXd radial_decay(const ManifoldModel& model, double amplitude, double power);
}  // namespace potentials

/// Full eigensystem of a self-adjoint operator in l^2(mu).
///
/// `vectors.col(j)` is phi_j with sum_x mu_x phi_i(x) phi_j(x) = delta_ij.
/// Eigenvalues below `zero_tol` are stored as exact zeros.
struct SpectralData {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    Eigen::VectorXd measure;
    double zero_tol = 0.0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
    bool is_zero_mode(Eigen::Index j) const { return values(j) == 0.0; }
    Eigen::Index zero_mode_count() const;
    double smallest_positive() const;
    double largest() const { return values(values.size() - 1); }

    /// c_j = <f, phi_j>_mu
    Eigen::VectorXd coefficients(const Eigen::VectorXd& f) const;
    Eigen::VectorXcd coefficients(const Eigen::VectorXcd& f) const;
    Eigen::VectorXd synthesize(const Eigen::VectorXd& c) const { return vectors * c; }
    Eigen::VectorXcd synthesize(const Eigen::VectorXcd& c) const;
    /// P_0 f, the projection onto the null space.
    Eigen::VectorXd zero_mode_projection(const Eigen::VectorXd& f) const;
    /// sum over zero modes of phi_j(x) phi_j(y)
    Eigen::MatrixXd zero_mode_kernel() const;
};

struct DecompositionOptions {
    std::size_t size_cap = 5000;
    double orthonormality_tol = 1e-10;
    double residual_tol = 1e-8;
};

/// Dense symmetric eigendecomposition through D^{1/2} L D^{-1/2}. Path
/// graphs use the tridiagonal solver. Throws SizeCapExceeded or
/// NumericalError; both tolerance checks are hard failures.
SpectralData spectral_decompose(const OperatorHandle& op, const DecompositionOptions& options = {});

void write_spectrum_csv(const SpectralData& spec, std::ostream& out, bool include_vectors = false);

}  // namespace hklab
