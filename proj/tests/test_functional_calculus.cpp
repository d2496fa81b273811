#include "doctest.h"
#include "oracles.hpp"

#include "hklab/error.hpp"
#include "hklab/functional_calculus.hpp"

#include <cmath>
#include <memory>

using namespace hklab;

namespace {

struct Fixture {
    std::shared_ptr<const ManifoldModel> model;
    SpectralData spec;
    Eigen::VectorXd zero;
};

const Fixture& small() {
    static const Fixture f = [] {
        ModelParams p;
        p.h = 0.2;
        p.R_max = 10.0;
        auto model = std::make_shared<const ManifoldModel>(build_two_ends_model(p));
        auto spec = spectral_decompose(assemble_laplacian(model));
        return Fixture{model, std::move(spec), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model->size()))};
    }();
    return f;
}

Eigen::VectorXcd random_complex(std::mt19937_64& rng, Eigen::Index n) {
    const Eigen::VectorXd re = oracle::random_vector(rng, n);
    const Eigen::VectorXd im = oracle::random_vector(rng, n);
    Eigen::VectorXcd f(n);
    for (Eigen::Index i = 0; i < n; ++i) f(i) = cplx(re(i), im(i));
    return f;
}

double rel_err(const Eigen::VectorXcd& got, const Eigen::VectorXcd& want, const Eigen::VectorXd& mu) {
    return oracle::weighted_l2(mu, got - want) / oracle::weighted_l2(mu, want);
}

// f minus its mean, i.e. the part on positive modes of the Laplacian
Eigen::VectorXcd positive_part(const Fixture& f, const Eigen::VectorXcd& g) {
    const cplx mean = (f.spec.measure.cast<cplx>().cwiseProduct(g)).sum() / f.model->total_mass();
    return g - Eigen::VectorXcd::Constant(g.size(), mean);
}

}  // namespace

TEST_CASE("oracle matches an independent eigensolve") {
    const auto& f = small();
    std::mt19937_64 rng(1);
    const Eigen::VectorXcd g = random_complex(rng, f.zero.size());
    const auto sym = [](double z) { return cplx(std::exp(-0.3 * z), std::sin(z)); };
    const Eigen::VectorXcd lib = multiplier_oracle(f.spec, sym, g);
    const Eigen::VectorXcd ref =
        oracle::spectral_function(*f.model, f.zero, [&](double lam) { return sym(std::sqrt(lam)); }, g);
    CHECK(rel_err(lib, ref, f.spec.measure) < 1e-10);
}

TEST_CASE("constant and indicator multipliers by quadrature") {
    const auto& f = small();
    std::mt19937_64 rng(2);
    const Eigen::VectorXcd g = random_complex(rng, f.zero.size());

    const auto c = MultiplierSpec::constant(0.8);
    CHECK_NOTHROW(c.validate());
    const Eigen::VectorXcd want_c = 0.8 * positive_part(f, g);
    QuadratureDiagnostics diag;
    CHECK(rel_err(apply_laplace_multiplier(f.spec, c, g, std::nullopt, &diag), want_c, f.spec.measure) < 1e-5);
    CHECK(diag.converged);

    for (double T : {0.5, 3.0}) {
        const auto ind = MultiplierSpec::indicator(T);
        CHECK_NOTHROW(ind.validate());
        const Eigen::VectorXcd want = oracle::spectral_function(
            *f.model, f.zero, [T](double lam) { return lam == 0.0 ? cplx(0.0) : cplx(1.0 - std::exp(-T * std::sqrt(lam))); },
            g);
        CHECK(rel_err(apply_laplace_multiplier(f.spec, ind, g), want, f.spec.measure) < 1e-5);
        const Eigen::VectorXcd symbols = laplace_multiplier_symbols(f.spec, ind);
        for (Eigen::Index j = 1; j < symbols.size(); j += 17)
            CHECK(std::abs(symbols(j) - (1.0 - std::exp(-T * std::sqrt(f.spec.values(j))))) < 1e-6);
        CHECK(symbols(0) == cplx(0.0));
    }
    CHECK_THROWS_AS(MultiplierSpec::indicator(0.0), InvalidArgument);
}

TEST_CASE("scalar symbol quadrature") {
    const auto m = MultiplierSpec::sqrt_imaginary_power(1.0);
    CHECK_NOTHROW(m.validate());
    for (double z : {0.1, 1.0, 10.0}) {
        const cplx want = std::exp(cplx(0.0, -std::log(z)));
        CHECK(std::abs(laplace_symbol_quadrature(m, z) - want) < 1e-10);
    }
    const auto ip = MultiplierSpec::imaginary_power(0.4);
    CHECK(std::abs(laplace_symbol_quadrature(ip, 2.0) - std::exp(cplx(0.0, 0.8 * std::log(2.0)))) < 1e-10);

    const auto flat = MultiplierSpec::table({0.1, 1.0, 10.0}, {1.0, 1.0, 1.0});
    CHECK(std::abs(flat.symbol_at(3.0) - 1.0) < 1e-6);
    CHECK(flat.symbol_at(0.0) == cplx(0.0));
    const auto ramp = MultiplierSpec::table({1.0, 2.0}, {0.0, 1.0});
    // integrating by parts, M(1) = int_1^2 e^{-t} / (t log 2) dt
    const cplx want = (std::expint(-2.0) - std::expint(-1.0)) / std::log(2.0);
    CHECK(std::abs(laplace_symbol_quadrature(ramp, 1.0) - want) < 1e-10);
    CHECK(std::abs(laplace_symbol_quadrature(MultiplierSpec::indicator(2.0), 0.7) - (1.0 - std::exp(-1.4))) < 1e-10);
    CHECK_THROWS_AS(MultiplierSpec::table({1.0}, {1.0}), InvalidArgument);
    CHECK_THROWS_AS(MultiplierSpec::table({2.0, 1.0}, {1.0, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(MultiplierSpec::constant(1.0).symbol_at(-1.0), InvalidArgument);

    auto liar = MultiplierSpec::constant(2.0);
    liar.sup_bound = 1.0;
    CHECK_THROWS_AS(liar.validate(), InvalidArgument);
    MultiplierSpec empty;
    CHECK_THROWS_AS(empty.validate(), InvalidArgument);
}

TEST_CASE("imaginary powers") {
    const auto& f = small();
    std::mt19937_64 rng(3);
    const Eigen::VectorXcd g = random_complex(rng, f.zero.size());
    const Eigen::VectorXcd gp = positive_part(f, g);
    const auto& mu = f.spec.measure;

    CHECK(rel_err(imaginary_power(f.spec, 0.0, g), gp, mu) < 1e-10);

    for (double s : {0.3, 0.7, -1.2}) {
        const Eigen::VectorXcd want = oracle::spectral_function(
            *f.model, f.zero, [s](double lam) { return lam == 0.0 ? cplx(0.0) : std::exp(cplx(0.0, s * std::log(lam))); },
            g);
        const Eigen::VectorXcd got = imaginary_power(f.spec, s, g);
        CHECK(rel_err(got, want, mu) < 1e-9);
        CHECK(oracle::weighted_l2(mu, got) == doctest::Approx(oracle::weighted_l2(mu, gp)).epsilon(1e-10));
        CHECK(rel_err(imaginary_power(f.spec, -s, got), gp, mu) < 1e-10);
    }

    const double s = 0.7;
    const Eigen::VectorXcd quad = imaginary_power(f.spec, s, g, PowerMethod::Quadrature);
    CHECK(rel_err(quad, imaginary_power(f.spec, s, g), mu) < 1e-5);
    CHECK(rel_err(imaginary_power(f.spec, -s, quad, PowerMethod::Quadrature), gp, mu) < 1e-5);
}

TEST_CASE("time window and quadrature defaults") {
    const auto& f = small();
    const auto [lo, hi] = multiplier_time_window(f.spec);
    CHECK(lo == doctest::Approx(1e-7 / std::sqrt(f.spec.largest())));
    CHECK(hi == doctest::Approx(40.0 / std::sqrt(f.spec.smallest_positive())));
    CHECK(default_multiplier_quadrature(MultiplierSpec::constant(1.0)).nodes == 256);
    CHECK(default_multiplier_quadrature(MultiplierSpec::imaginary_power(4.0)).nodes == 64 * 9);
}

TEST_CASE("g-function") {
    const auto& f = small();
    const auto& mu = f.spec.measure;
    CHECK(g_function_constant(1) == doctest::Approx(0.5));
    CHECK(g_function_constant(2) == doctest::Approx(std::sqrt(6.0 / 16.0)));

    for (Eigen::Index j : {1, 10, 60}) {
        const Eigen::VectorXd phi = f.spec.vectors.col(j);
        const Eigen::VectorXd g1 = g_function(f.spec, phi, 1);
        CHECK((g1 - 0.5 * phi.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-8 * phi.cwiseAbs().maxCoeff());
        const Eigen::VectorXd g2 = g_function(f.spec, phi, 2);
        CHECK((g2 - g_function_constant(2) * phi.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-8 * phi.cwiseAbs().maxCoeff());
    }

    const Eigen::VectorXd one = Eigen::VectorXd::Ones(mu.size());
    CHECK(g_function(f.spec, one, 1).cwiseAbs().maxCoeff() < 1e-10);

    std::mt19937_64 rng(6);
    const Eigen::VectorXd v = oracle::random_vector(rng, mu.size());
    for (int kappa : {1, 2, 3}) {
        const Eigen::VectorXd g = g_function(f.spec, v, kappa);
        const double lhs = oracle::weighted_l2(mu, g.cast<cplx>());
        const double rhs = g_function_constant(kappa) * oracle::weighted_l2(mu, positive_part(f, v.cast<cplx>()));
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-7));
    }
    CHECK(l2_norm(mu, one.cast<cplx>()) == doctest::Approx(std::sqrt(f.model->total_mass())));
}
