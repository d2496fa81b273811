#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's numerical routines.

#include "hklab/model_geometry.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

/// All-pairs shortest paths from the edge list.
inline Eigen::MatrixXd floyd_warshall(const hklab::ManifoldModel& model) {
    const auto n = static_cast<Eigen::Index>(model.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
    for (Eigen::Index i = 0; i < n; ++i) d(i, i) = 0.0;
    for (const auto& e : model.edges()) {
        d(e.i, e.j) = std::min(d(e.i, e.j), e.length);
        d(e.j, e.i) = std::min(d(e.j, e.i), e.length);
    }
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) d(i, j) = std::min(d(i, j), d(i, k) + d(k, j));
    return d;
}

/// Generator matrix A with (A f)(i) = mu_i^{-1} sum_j c_ij (f(i) - f(j)) + V_i f(i),
/// built from the edge list.
inline Eigen::MatrixXd generator(const hklab::ManifoldModel& model, const Eigen::VectorXd& V) {
    const auto n = static_cast<Eigen::Index>(model.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : model.edges()) {
        A(e.i, e.i) += e.conductance / model.measure(e.i);
        A(e.j, e.j) += e.conductance / model.measure(e.j);
        A(e.i, e.j) -= e.conductance / model.measure(e.i);
        A(e.j, e.i) -= e.conductance / model.measure(e.j);
    }
    for (Eigen::Index i = 0; i < n; ++i) A(i, i) += V(i);
    return A;
}

/// Heat kernel H_t(x, y) = (e^{-tA})_{xy} / mu_y via the Pade matrix exponential.
inline Eigen::MatrixXd heat_by_expm(const hklab::ManifoldModel& model, const Eigen::VectorXd& V, double t) {
    const Eigen::MatrixXd A = generator(model, V);
    const Eigen::MatrixXd E = (-t * A).exp();
    Eigen::MatrixXd H = E;
    for (Eigen::Index y = 0; y < H.cols(); ++y) H.col(y) /= model.measure(static_cast<int>(y));
    return H;
}

/// g(A) f through a fresh eigensolve of mu^{1/2} A mu^{-1/2}. Eigenvalues
/// below `zero_tol` are treated as exact zeros.
inline Eigen::VectorXcd spectral_function(const hklab::ManifoldModel& model, const Eigen::VectorXd& V,
                                          const std::function<std::complex<double>(double)>& g,
                                          const Eigen::VectorXcd& f, double zero_tol = 1e-10) {
    const Eigen::MatrixXd A = generator(model, V);
    const auto n = A.rows();
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s(i) = std::sqrt(model.measure(static_cast<int>(i)));
    Eigen::MatrixXd S = s.asDiagonal() * A * s.cwiseInverse().asDiagonal();
    S = 0.5 * (S + S.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    Eigen::VectorXcd gl(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double lam = es.eigenvalues()(j);
        gl(j) = g(lam < zero_tol ? 0.0 : lam);
    }
    const Eigen::MatrixXcd U = es.eigenvectors().cast<std::complex<double>>();
    const Eigen::VectorXcd sf = s.cast<std::complex<double>>().cwiseProduct(f);
    return s.cwiseInverse().cast<std::complex<double>>().cwiseProduct(U * gl.asDiagonal() * (U.adjoint() * sf));
}

inline double ball_volume(const hklab::ManifoldModel& model, const Eigen::MatrixXd& dist, int x, double r) {
    double v = 0.0;
    for (Eigen::Index y = 0; y < dist.cols(); ++y)
        if (dist(x, y) <= r) v += model.measure(static_cast<int>(y));
    return v;
}

/// Maximal function by enumerating every ball B(y, d(y, z)).
inline Eigen::VectorXd maximal_brute(const hklab::ManifoldModel& model, const Eigen::MatrixXd& dist,
                                     const Eigen::VectorXd& f) {
    const auto n = static_cast<Eigen::Index>(model.size());
    Eigen::VectorXd M = Eigen::VectorXd::Zero(n);
    for (Eigen::Index y = 0; y < n; ++y) {
        for (Eigen::Index z = 0; z < n; ++z) {
            const double r = dist(y, z);
            double mass = 0.0, integral = 0.0;
            for (Eigen::Index w = 0; w < n; ++w) {
                if (dist(y, w) <= r) {
                    mass += model.measure(static_cast<int>(w));
                    integral += std::abs(f(w)) * model.measure(static_cast<int>(w));
                }
            }
            const double avg = integral / mass;
            for (Eigen::Index w = 0; w < n; ++w)
                if (dist(y, w) <= r) M(w) = std::max(M(w), avg);
        }
    }
    return M;
}

/// Coefficients of p_n with d^n/dt^n e^{-t^2/s} = p_n(t) e^{-t^2/s}, from
/// p_{n+1} = p_n' - (2t/s) p_n.
inline std::vector<double> gaussian_derivative_poly(int order, double s) {
    std::vector<double> p = {1.0};
    for (int k = 0; k < order; ++k) {
        std::vector<double> q(p.size() + 1, 0.0);
        for (std::size_t i = 1; i < p.size(); ++i) q[i - 1] += static_cast<double>(i) * p[i];
        for (std::size_t i = 0; i < p.size(); ++i) q[i + 1] -= 2.0 / s * p[i];
        p = q;
    }
    return p;
}

inline double gaussian_derivative_exact(double t, double s, int order) {
    const auto p = gaussian_derivative_poly(order, s);
    double v = 0.0;
    for (std::size_t i = p.size(); i-- > 0;) v = v * t + p[i];
    return v * std::exp(-t * t / s);
}

/// Five-point fourth-order central difference of g at t.
inline double central_difference(const std::function<double(double)>& g, double t, double step) {
    return (-g(t + 2 * step) + 8 * g(t + step) - 8 * g(t - step) + g(t - 2 * step)) / (12 * step);
}

/// (t sqrt(lambda))^k e^{-t sqrt(lambda)} with the zero-mode convention.
inline std::complex<double> poisson_scalar(double lambda, std::complex<double> z, int k) {
    if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
    const std::complex<double> w = z * std::sqrt(lambda);
    return std::pow(w, k) * std::exp(-w);
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> nd;
    Eigen::VectorXd v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

inline double weighted_l2(const Eigen::VectorXd& mu, const Eigen::VectorXcd& f) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) s += mu(i) * std::norm(f(i));
    return std::sqrt(s);
}

}  // namespace oracle
