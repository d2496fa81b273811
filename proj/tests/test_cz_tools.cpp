#include "doctest.h"
#include "oracles.hpp"

#include "hklab/error.hpp"
#include "hklab/cz_tools.hpp"
#include "hklab/semigroups.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

using namespace hklab;

namespace {

struct Fixture {
    std::shared_ptr<const ManifoldModel> model;
    SpectralData spec;
    Eigen::MatrixXd dist;
};

const Fixture& small() {
    static const Fixture f = [] {
        ModelParams p;
        p.h = 0.2;
        p.R_max = 10.0;
        auto model = std::make_shared<const ManifoldModel>(build_two_ends_model(p));
        auto spec = spectral_decompose(assemble_laplacian(model));
        return Fixture{model, std::move(spec), oracle::floyd_warshall(*model)};
    }();
    return f;
}

double l1(const Eigen::VectorXd& f, const Eigen::VectorXd& mu) { return (f.cwiseAbs().array() * mu.array()).sum(); }

}  // namespace

TEST_CASE("region split") {
    const auto& f = small();
    std::mt19937_64 rng(1);
    const Eigen::VectorXd v = oracle::random_vector(rng, f.dist.rows());
    const auto s = region_split(*f.model, v);
    CHECK((s.big + s.small + s.center - v).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.big.cwiseProduct(s.small).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.big.cwiseProduct(s.center).cwiseAbs().maxCoeff() == 0.0);
    for (int x : f.model->sites_in(Region::SmallEnd)) CHECK(s.small(x) == v(x));
}

TEST_CASE("maximal function against brute force") {
    const auto& f = small();
    const auto& model = *f.model;
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 3; ++trial) {
        const Eigen::VectorXd v = oracle::random_vector(rng, f.dist.rows());
        const Eigen::VectorXd M = maximal_function(model, v);
        const Eigen::VectorXd ref = oracle::maximal_brute(model, f.dist, v);
        CHECK((M - ref).cwiseAbs().maxCoeff() <= 1e-12 * ref.maxCoeff());
        CHECK((M - v.cwiseAbs()).minCoeff() >= -1e-12);
        const Eigen::VectorXd w = oracle::random_vector(rng, f.dist.rows());
        CHECK((maximal_function(model, v + w) - M - maximal_function(model, w)).maxCoeff() <= 1e-12);
        CHECK((maximal_function(model, -2.5 * v) - 2.5 * M).cwiseAbs().maxCoeff() <= 1e-12 * M.maxCoeff());
    }
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(f.dist.rows(), -1.7);
    CHECK((maximal_function(model, c).array() - 1.7).abs().maxCoeff() < 1e-12);
    Eigen::VectorXd spike = Eigen::VectorXd::Zero(f.dist.rows());
    const int x0 = model.nearest_site(Region::SmallEnd, 4.0);
    spike(x0) = 1.0;
    const Eigen::VectorXd Ms = maximal_function(model, spike);
    CHECK(Ms(x0) == doctest::Approx(1.0));
    CHECK(Ms.minCoeff() > 0.0);
}

TEST_CASE("semigroup maximal functions") {
    const auto& f = small();
    const auto n = f.dist.rows();
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(n, 2.0);
    const std::vector<double> times = {0.1, 1.0, 10.0};
    CHECK((heat_maximal(f.spec, c, times).array() - 2.0).abs().maxCoeff() < 1e-8);
    const std::vector<cplx> zs = {0.5, std::polar(1.0, 0.5), 4.0};
    CHECK((poisson_maximal(f.spec, c, 0, zs).array() - 2.0).abs().maxCoeff() < 1e-8);
    CHECK(poisson_maximal(f.spec, c, 2, zs).cwiseAbs().maxCoeff() < 1e-8);
    const std::vector<cplx> bad = {std::polar(1.0, 0.8)};
    CHECK_THROWS_AS(poisson_maximal(f.spec, c, 1, bad), InvalidArgument);

    std::mt19937_64 rng(3);
    const Eigen::VectorXd v = oracle::random_vector(rng, n);
    const std::vector<double> finer = {0.1, 0.3, 1.0, 3.0, 10.0};
    const Eigen::VectorXd coarse = heat_maximal(f.spec, v, times);
    const Eigen::VectorXd fine = heat_maximal(f.spec, v, finer);
    CHECK((fine - coarse).minCoeff() >= -1e-14);
    Eigen::VectorXd direct = Eigen::VectorXd::Zero(n);
    for (double t : finer) direct = direct.cwiseMax(apply_heat(f.spec, t, v).cwiseAbs());
    CHECK((fine - direct).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dyadic charts") {
    const auto& model = *small().model;
    const auto g = DyadicGrid::from_end(model, Region::BigEnd);
    CHECK(g.size() == model.sites_in(Region::BigEnd).size());
    CHECK(g.dimension() == model.params().m);
    CHECK(g.positions().front() >= 0.0);
    CHECK(g.positions().back() < g.top_cube().right());
    CHECK(g.positions().back() >= 0.5 * g.top_cube().right());
    double total = 0.0;
    for (double m : g.measures()) total += m;
    CHECK(g.mass(g.top_cube()) == doctest::Approx(total));
    const DyadicCube left{g.top_level() - 1, 0}, right{g.top_level() - 1, 1};
    CHECK(g.mass(left) + g.mass(right) == doctest::Approx(total));
    CHECK(left.touches_origin());
    CHECK_FALSE(right.touches_origin());
    CHECK_THROWS_AS(DyadicGrid::from_end(model, Region::Center), InvalidArgument);

    std::mt19937_64 rng(4);
    const Eigen::VectorXd v = oracle::random_vector(rng, static_cast<Eigen::Index>(model.size()));
    const Eigen::VectorXd back = g.extend(g.restrict(v), model.size());
    for (int id : g.site_ids()) CHECK(back(id) == v(id));
    for (int id : model.sites_in(Region::SmallEnd)) CHECK(back(id) == 0.0);
}

TEST_CASE("Calderon-Zygmund decomposition") {
    ModelParams p;
    p.R_max = 20.0;
    const auto model = build_two_ends_model(p);
    for (Region end : {Region::BigEnd, Region::SmallEnd}) {
        const auto g = DyadicGrid::from_end(model, end);
        const Eigen::VectorXd mu = Eigen::Map<const Eigen::VectorXd>(g.measures().data(), g.size());
        std::mt19937_64 rng(5);
        Eigen::VectorXd f = oracle::random_vector(rng, g.size()).cwiseAbs().array().pow(3).matrix();
        f(3) = 400.0;
        const double lambda = 20.0 * l1(f, mu) / mu.sum();
        const auto cz = cz_decompose(g, f, lambda);
        REQUIRE_FALSE(cz.bad.empty());

        Eigen::VectorXd sum = cz.good;
        for (const auto& b : cz.bad) {
            sum += b.b;
            double mass = 0.0, integral = 0.0, mean = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (b.cube.contains(g.positions()[i])) {
                    mass += mu(i);
                    integral += std::abs(f(i)) * mu(i);
                    mean += b.b(i) * mu(i);
                } else {
                    CHECK(b.b(i) == 0.0);
                }
            }
            CHECK(b.mass == doctest::Approx(mass));
            CHECK(integral / mass > lambda);
            CHECK(integral / mass <= std::ldexp(lambda, g.dimension()) * (1 + 1e-12));
            CHECK(std::abs(mean) <= 1e-10 * integral);
        }
        CHECK((sum - f).cwiseAbs().maxCoeff() <= 1e-12 * f.cwiseAbs().maxCoeff());
        for (std::size_t i = 0; i < cz.bad.size(); ++i)
            for (std::size_t j = i + 1; j < cz.bad.size(); ++j)
                CHECK((cz.bad[i].cube.right() <= cz.bad[j].cube.left() || cz.bad[j].cube.right() <= cz.bad[i].cube.left()));

        const auto chk = check_cz(g, f, cz);
        CHECK(chk.reconstruction_error <= 1e-12 * f.cwiseAbs().maxCoeff());
        CHECK(chk.max_average_ratio <= std::ldexp(1.0, g.dimension()));
        CHECK(chk.selected_mass_ratio <= 1.0 + 1e-12);
        CHECK(chk.good_sup_ratio <= std::ldexp(1.0, g.dimension()) + 1e-12);
        CHECK(cz.interior_cubes().size() + cz.origin_cubes().size() == cz.bad.size());
    }
}

TEST_CASE("Calderon-Zygmund edge cases") {
    ModelParams p;
    p.h = 0.2;
    p.R_max = 10.0;
    const auto model = build_two_ends_model(p);
    const auto g = DyadicGrid::from_end(model, Region::SmallEnd);
    const Eigen::VectorXd mu = Eigen::Map<const Eigen::VectorXd>(g.measures().data(), g.size());
    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(g.size(), 0.5);
    const auto none = cz_decompose(g, flat, 0.5);
    CHECK(none.bad.empty());
    CHECK((none.good - flat).cwiseAbs().maxCoeff() == 0.0);

    // A times the indicator of a dyadic cube below the top
    const DyadicCube q{g.top_level() - 2, 1};
    const auto [a, b] = g.members(q);
    REQUIRE(b > a);
    Eigen::VectorXd spike = Eigen::VectorXd::Zero(g.size());
    for (std::size_t i = a; i < b; ++i) spike(i) = 50.0;
    const double lambda = 1.01 * l1(spike, mu) / mu.sum();
    const auto cz = cz_decompose(g, spike, lambda);
    double selected = 0.0;
    for (const auto& bp : cz.bad) selected += bp.mass;
    CHECK(selected * lambda <= l1(spike, mu) * (1 + 1e-12));
    CHECK(check_cz(g, spike, cz).reconstruction_error < 1e-12);

    CHECK_THROWS_AS(cz_decompose(g, flat, 0.0), InvalidArgument);
    CHECK_THROWS_AS(cz_decompose(g, flat, -1.0), InvalidArgument);
    CHECK_THROWS_AS(cz_decompose(g, flat, 0.1), InvalidArgument);
}

TEST_CASE("Whitney cover of a ball") {
    const auto& f = small();
    const auto& model = *f.model;
    const int x = model.nearest_site(Region::BigEnd, 4.0);
    std::vector<int> domain;
    for (int y = 0; y < static_cast<int>(model.size()); ++y)
        if (f.dist(x, y) < 2.0) domain.push_back(y);
    const auto cover = whitney_cover(model, domain);
    REQUIRE_FALSE(cover.balls.empty());
    std::vector<bool> covered(model.size(), false);
    for (const auto& b : cover.balls) {
        double to_complement = 1e300;
        for (int y = 0; y < static_cast<int>(model.size()); ++y)
            if (!std::binary_search(domain.begin(), domain.end(), y)) to_complement = std::min(to_complement, f.dist(b.center, y));
        CHECK(b.radius == doctest::Approx(0.5 * to_complement));
        for (int y : b.members) {
            CHECK(f.dist(b.center, y) <= b.radius + 1e-12);
            covered[y] = true;
        }
    }
    for (int y : domain) CHECK(covered[y]);
    const auto chk = check_whitney(model, cover);
    CHECK(chk.union_ok);
    CHECK(chk.fifth_disjoint);
    CHECK(chk.radii_exact);
    CHECK(chk.max_weight_error < 1e-12);
    CHECK(chk.overlap_constant <= 16);
    for (const auto& w : cover.partition_weights())
        for (double v : w) CHECK((v >= 0.0 && v <= 1.0));

    CHECK_THROWS_AS(whitney_cover(model, std::vector<int>{}), InvalidArgument);
    std::vector<int> everything(model.size());
    for (std::size_t i = 0; i < everything.size(); ++i) everything[i] = static_cast<int>(i);
    CHECK_THROWS_AS(whitney_cover(model, everything), InvalidArgument);
}

TEST_CASE("weak quasinorm") {
    const auto& f = small();
    const Eigen::VectorXd& mu = f.spec.measure;
    const auto identity = [](const Eigen::VectorXd& v) { return Eigen::VectorXcd(v.cast<cplx>()); };
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(mu.size());
    delta(7) = 1.0;
    const auto rep = weak_quasinorm(identity, delta, mu);
    CHECK(rep.value <= 1.0);
    CHECK(rep.value >= std::pow(1e-3, 1.0 / 63.0) * (1 - 1e-12));
    CHECK(rep.lambdas.size() == 64);

    std::mt19937_64 rng(8);
    const Eigen::VectorXd v = oracle::random_vector(rng, mu.size());
    const auto heat = [&](const Eigen::VectorXd& g) { return Eigen::VectorXcd(apply_heat(f.spec, 0.5, g).cast<cplx>()); };
    const double a = weak_quasinorm(heat, v, mu).value;
    CHECK(weak_quasinorm(heat, 3.0 * v, mu).value == doctest::Approx(a).epsilon(1e-9));
    CHECK_THROWS_AS(weak_quasinorm(heat, Eigen::VectorXd::Zero(mu.size()), mu), InvalidArgument);

    std::ostringstream out;
    rep.write_csv(out);
    CHECK(out.str().rfind("lambda,measure,product\n", 0) == 0);
}
