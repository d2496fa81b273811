#include "doctest.h"
#include "oracles.hpp"

#include "hklab/error.hpp"
#include "hklab/operators.hpp"

#include <memory>
#include <random>
#include <sstream>

using namespace hklab;

namespace {

std::shared_ptr<const ManifoldModel> small_model() {
    ModelParams p;
    p.h = 0.2;
    p.R_max = 10.0;
    return std::make_shared<const ManifoldModel>(build_two_ends_model(p));
}

}  // namespace

TEST_CASE("Laplacian kills constants and is symmetric in l2(mu)") {
    const auto model = small_model();
    const auto L = assemble_laplacian(model);
    const auto n = static_cast<Eigen::Index>(model->size());
    CHECK(L.apply(Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff() < 1e-12);
    std::mt19937_64 rng(11);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Eigen::VectorXd f = oracle::random_vector(rng, n);
        const Eigen::VectorXd g = oracle::random_vector(rng, n);
        const double a = L.form(f, g), b = L.form(g, f);
        worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
        CHECK(L.form(f, f) >= 0.0);
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("action matches the generator built from the edge list") {
    const auto model = small_model();
    const Eigen::VectorXd V = potentials::radial_decay(*model, 2.0, 1.5);
    const auto L = add_potential(assemble_laplacian(model), V);
    const Eigen::MatrixXd A = oracle::generator(*model, V);
    std::mt19937_64 rng(3);
    const Eigen::VectorXd f = oracle::random_vector(rng, A.rows());
    CHECK((L.apply(f) - A * f).cwiseAbs().maxCoeff() < 1e-10 * (A * f).cwiseAbs().maxCoeff());
    for (int i = 0; i < static_cast<int>(A.rows()); i += 5) CHECK(L.diagonal(i) == doctest::Approx(A(i, i)));
}

TEST_CASE("two-site graph has eigenvalues 0 and 2") {
    std::vector<Site> sites = {{0, Region::Center, 0.0, 1.0}, {1, Region::Center, 0.0, 1.0}};
    std::vector<Edge> edges = {{0, 1, 1.0, 1.0}};
    auto model = std::make_shared<const ManifoldModel>(ManifoldModel::from_graph(ModelParams{}, sites, edges));
    const auto spec = spectral_decompose(assemble_laplacian(model));
    CHECK(spec.values(0) == 0.0);
    CHECK(spec.values(1) == doctest::Approx(2.0));
}

TEST_CASE("potentials") {
    const auto model = small_model();
    const auto base = assemble_laplacian(model);
    const auto n = static_cast<Eigen::Index>(model->size());
    CHECK_THROWS_AS(add_potential(base, -Eigen::VectorXd::Ones(n)), InvalidArgument);

    const auto zero = add_potential(base, Eigen::VectorXd::Zero(n));
    std::mt19937_64 rng(5);
    const Eigen::VectorXd f = oracle::random_vector(rng, n);
    CHECK((zero.apply(f) - base.apply(f)).cwiseAbs().maxCoeff() == 0.0);

    const auto s0 = spectral_decompose(base);
    const auto sc = spectral_decompose(add_potential(base, potentials::constant(*model, 0.7)));
    CHECK((sc.values - s0.values - Eigen::VectorXd::Constant(n, 0.7)).cwiseAbs().maxCoeff() < 1e-9);

    const auto sb = spectral_decompose(add_potential(base, potentials::center_bump(*model, 1.0)));
    CHECK(s0.values(0) == 0.0);
    CHECK(sb.values(0) > 1e-8);
    for (Eigen::Index j = 0; j < n; ++j) CHECK(sb.values(j) >= s0.values(j) - 1e-9);

    const Eigen::VectorXd V1 = potentials::radial_decay(*model, 1.0, 2.0);
    const Eigen::VectorXd V2 = 2.0 * V1 + potentials::center_bump(*model, 0.5);
    const auto L1 = add_potential(base, V1);
    const auto L2 = add_potential(base, V2);
    for (int i = 0; i < 20; ++i) {
        const Eigen::VectorXd g = oracle::random_vector(rng, n);
        CHECK(L1.form(g, g) <= L2.form(g, g) + 1e-12);
    }
}

TEST_CASE("spectral decomposition invariants") {
    const auto model = small_model();
    const auto L = add_potential(assemble_laplacian(model), potentials::radial_decay(*model, 0.5, 2.0));
    const auto spec = spectral_decompose(L);
    const auto n = static_cast<Eigen::Index>(model->size());
    const Eigen::VectorXd& mu = spec.measure;

    const Eigen::MatrixXd gram = spec.vectors.transpose() * mu.asDiagonal() * spec.vectors;
    CHECK((gram - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
    for (Eigen::Index j = 0; j < n; ++j) {
        CHECK(spec.values(j) >= 0.0);
        if (j > 0) CHECK(spec.values(j) >= spec.values(j - 1));
        const Eigen::VectorXd r = L.apply(spec.vectors.col(j)) - spec.values(j) * spec.vectors.col(j);
        CHECK(oracle::weighted_l2(mu, r.cast<std::complex<double>>()) <= 1e-8 * std::max(1.0, spec.values(j)));
    }
    double trace = 0.0;
    for (int i = 0; i < static_cast<int>(n); ++i) trace += L.diagonal(i);
    CHECK(spec.values.sum() == doctest::Approx(trace).epsilon(1e-8));

    // sum_j lambda_j phi_j(x) phi_j(y) mu_y reproduces the action
    const Eigen::MatrixXd A = oracle::generator(*model, L.potential());
    const Eigen::MatrixXd rebuilt = spec.vectors * spec.values.asDiagonal() * spec.vectors.transpose() * mu.asDiagonal();
    CHECK((rebuilt - A).cwiseAbs().maxCoeff() < 1e-8 * A.cwiseAbs().maxCoeff());
}

TEST_CASE("pure Laplacian zero mode is the normalised constant") {
    const auto model = small_model();
    const auto spec = spectral_decompose(assemble_laplacian(model));
    REQUIRE(spec.zero_mode_count() == 1);
    CHECK(spec.values(0) == 0.0);
    const double c = 1.0 / std::sqrt(model->total_mass());
    CHECK((spec.vectors.col(0).cwiseAbs() - Eigen::VectorXd::Constant(spec.vectors.rows(), c)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(spec.smallest_positive() == spec.values(1));
    std::mt19937_64 rng(9);
    const Eigen::VectorXd f = oracle::random_vector(rng, spec.vectors.rows());
    const Eigen::VectorXd p = spec.zero_mode_projection(f);
    CHECK((p - Eigen::VectorXd::Constant(f.size(), f.dot(spec.measure) / model->total_mass())).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((spec.synthesize(spec.coefficients(f)) - f).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("size cap and spectrum export") {
    const auto model = small_model();
    DecompositionOptions opt;
    opt.size_cap = 10;
    CHECK_THROWS_AS(spectral_decompose(assemble_laplacian(model), opt), SizeCapExceeded);
    const auto spec = spectral_decompose(assemble_laplacian(model));
    std::ostringstream out;
    write_spectrum_csv(spec, out);
    std::size_t lines = 0;
    for (char ch : out.str()) lines += ch == '\n';
    CHECK(lines == model->size() + 1);
}
