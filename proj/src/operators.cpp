#include "hklab/operators.hpp"

#include "hklab/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <iomanip>
#include <ostream>

namespace hklab {

OperatorHandle::OperatorHandle(std::shared_ptr<const ManifoldModel> model, Eigen::VectorXd potential)
    : model_(std::move(model))
    , potential_(std::move(potential)) {
    if (!model_) throw InvalidArgument("operator needs a model");
    if (potential_.size() != static_cast<Eigen::Index>(model_->size())) {
        throw InvalidArgument("potential size does not match the model");
    }
    if (!potential_.allFinite() || (potential_.array() < 0.0).any()) {
        throw InvalidArgument("potential must be finite and non-negative");
    }
}

Eigen::VectorXd OperatorHandle::apply(const Eigen::VectorXd& f) const {
    const auto count = static_cast<int>(model_->size());
    Eigen::VectorXd out(count);
    for (int i = 0; i < count; ++i) {
        double flux = 0.0;
        for (const auto& nb : model_->neighbors(i)) flux += nb.conductance * (f(i) - f(nb.site));
        out(i) = flux / model_->measure(i) + potential_(i) * f(i);
    }
    return out;
}

double OperatorHandle::form(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
    return model_->measures().cwiseProduct(apply(f)).dot(g);
}

double OperatorHandle::diagonal(int i) const {
    double total = 0.0;
    for (const auto& nb : model_->neighbors(i)) total += nb.conductance;
    return total / model_->measure(i) + potential_(i);
}

Eigen::MatrixXd OperatorHandle::symmetric_matrix() const {
    const auto count = static_cast<Eigen::Index>(model_->size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(count, count);
    for (int i = 0; i < count; ++i) {
        a(i, i) = diagonal(i);
        for (const auto& nb : model_->neighbors(i)) {
            a(i, nb.site) -= nb.conductance / std::sqrt(model_->measure(i) * model_->measure(nb.site));
        }
    }
    return a;
}

OperatorHandle assemble_laplacian(std::shared_ptr<const ManifoldModel> model) {
    if (!model) throw InvalidArgument("operator needs a model");
    const auto count = static_cast<Eigen::Index>(model->size());
    return OperatorHandle(std::move(model), Eigen::VectorXd::Zero(count));
}

OperatorHandle add_potential(const OperatorHandle& op, const Eigen::VectorXd& potential) {
    if (potential.size() != op.potential().size()) {
        throw InvalidArgument("potential size does not match the model");
    }
    if ((potential.array() < 0.0).any()) throw InvalidArgument("potential must be non-negative");
    return OperatorHandle(op.model_ptr(), op.potential() + potential);
}

namespace potentials {

Eigen::VectorXd constant(const ManifoldModel& model, double value) {
    return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(model.size()), value);
}

Eigen::VectorXd center_bump(const ManifoldModel& model, double value) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.size()));
    for (int id : model.sites_in(Region::Center)) v(id) = value;
    return v;
}

Eigen::VectorXd radial_decay(const ManifoldModel& model, double amplitude, double power) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(model.size()));
    for (const Site& s : model.sites()) v(s.id) = amplitude / (1.0 + std::pow(model.norm_abs(s.id), power));
    return v;
}

}  // namespace potentials

Eigen::Index SpectralData::zero_mode_count() const {
    Eigen::Index count = 0;
    for (Eigen::Index j = 0; j < values.size(); ++j) count += values(j) == 0.0 ? 1 : 0;
    return count;
}

double SpectralData::smallest_positive() const {
    for (Eigen::Index j = 0; j < values.size(); ++j) {
        if (values(j) > 0.0) return values(j);
    }
    throw NumericalError("spectrum has no positive eigenvalue");
}

Eigen::VectorXd SpectralData::coefficients(const Eigen::VectorXd& f) const {
    return vectors.transpose() * measure.cwiseProduct(f);
}

Eigen::VectorXcd SpectralData::coefficients(const Eigen::VectorXcd& f) const {
    const Eigen::VectorXcd weighted = measure.cast<std::complex<double>>().cwiseProduct(f);
    return vectors.transpose().cast<std::complex<double>>() * weighted;
}

Eigen::VectorXcd SpectralData::synthesize(const Eigen::VectorXcd& c) const {
    Eigen::VectorXcd out(vectors.rows());
    out.real() = vectors * c.real();
    out.imag() = vectors * c.imag();
    return out;
}

Eigen::VectorXd SpectralData::zero_mode_projection(const Eigen::VectorXd& f) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(f.size());
    for (Eigen::Index j = 0; j < values.size() && values(j) == 0.0; ++j) {
        out += vectors.col(j) * vectors.col(j).dot(measure.cwiseProduct(f));
    }
    return out;
}

Eigen::MatrixXd SpectralData::zero_mode_kernel() const {
    const Eigen::Index z = zero_mode_count();
    if (z == 0) return Eigen::MatrixXd::Zero(vectors.rows(), vectors.rows());
    return vectors.leftCols(z) * vectors.leftCols(z).transpose();
}

SpectralData spectral_decompose(const OperatorHandle& op, const DecompositionOptions& options) {
    const ManifoldModel& model = op.model();
    const auto count = static_cast<Eigen::Index>(model.size());
    if (model.size() > options.size_cap) {
        throw SizeCapExceeded("model has " + std::to_string(model.size()) +
                              " sites, above the decomposition cap of " + std::to_string(options.size_cap));
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    Eigen::MatrixXd dense;
    if (model.is_path_graph()) {
        Eigen::VectorXd diag(count);
        Eigen::VectorXd sub = Eigen::VectorXd::Zero(std::max<Eigen::Index>(count - 1, 0));
        for (int i = 0; i < count; ++i) diag(i) = op.diagonal(i);
        for (const Edge& e : model.edges()) {
            sub(std::min(e.i, e.j)) -= e.conductance / std::sqrt(model.measure(e.i) * model.measure(e.j));
        }
        solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    } else {
        dense = op.symmetric_matrix();
        solver.compute(dense, Eigen::ComputeEigenvectors);
    }
    if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");

    const Eigen::MatrixXd& psi = solver.eigenvectors();
    const Eigen::VectorXd& lambda = solver.eigenvalues();

    const Eigen::MatrixXd gram = psi.transpose() * psi;
    const double ortho_err = (gram - Eigen::MatrixXd::Identity(count, count)).cwiseAbs().maxCoeff();
    if (ortho_err > options.orthonormality_tol) {
        throw NumericalError("eigenvectors fail orthonormality: max error " + std::to_string(ortho_err));
    }
    // Residuals in l^2(mu) equal Euclidean residuals of the similarity transform.
    Eigen::MatrixXd a_psi;
    if (model.is_path_graph()) {
        a_psi.resize(count, count);
        for (int i = 0; i < count; ++i) {
            a_psi.row(i) = op.diagonal(i) * psi.row(i);
            for (const auto& nb : model.neighbors(i)) {
                a_psi.row(i) -= nb.conductance / std::sqrt(model.measure(i) * model.measure(nb.site)) *
                                psi.row(nb.site);
            }
        }
    } else {
        a_psi = dense * psi;
    }
    for (Eigen::Index j = 0; j < count; ++j) {
        const double res = (a_psi.col(j) - lambda(j) * psi.col(j)).norm();
        if (res > options.residual_tol * std::max(1.0, std::abs(lambda(j)))) {
            throw NumericalError("eigenpair " + std::to_string(j) + " residual " + std::to_string(res) +
                                 " exceeds tolerance");
        }
    }

    SpectralData spec;
    spec.measure = model.measures();
    spec.zero_tol = 1e-10 * std::max(1.0, std::abs(lambda(count - 1)));
    spec.values = lambda;
    for (Eigen::Index j = 0; j < count; ++j) {
        if (std::abs(spec.values(j)) <= spec.zero_tol) {
            spec.values(j) = 0.0;
        } else if (spec.values(j) < 0.0) {
            throw NumericalError("operator has a negative eigenvalue " + std::to_string(spec.values(j)));
        }
    }
    const Eigen::VectorXd inv_sqrt_mu = spec.measure.cwiseSqrt().cwiseInverse();
    spec.vectors = inv_sqrt_mu.asDiagonal() * psi;
    // Fix the sign of each eigenvector so results do not depend on solver internals.
    for (Eigen::Index j = 0; j < count; ++j) {
        Eigen::Index arg = 0;
        spec.vectors.col(j).cwiseAbs().maxCoeff(&arg);
        if (spec.vectors(arg, j) < 0.0) spec.vectors.col(j) *= -1.0;
    }
    return spec;
}

void write_spectrum_csv(const SpectralData& spec, std::ostream& out, bool include_vectors) {
    out << std::setprecision(17);
    out << "index,eigenvalue";
    if (include_vectors) {
        for (Eigen::Index x = 0; x < spec.vectors.rows(); ++x) out << ",phi_" << x;
    }
    out << '\n';
    for (Eigen::Index j = 0; j < spec.values.size(); ++j) {
        out << j << ',' << spec.values(j);
        if (include_vectors) {
            for (Eigen::Index x = 0; x < spec.vectors.rows(); ++x) out << ',' << spec.vectors(x, j);
        }
        out << '\n';
    }
}

}  // namespace hklab
