#include "doctest.h"
#include "oracles.hpp"

#include "hklab/error.hpp"
#include "hklab/model_geometry.hpp"

#include <cmath>
#include <sstream>

using namespace hklab;

namespace {

ModelParams small_params() {
    ModelParams p;
    p.h = 0.2;
    p.R_max = 10.0;
    return p;
}

}  // namespace

TEST_CASE("default model has two rays joined through the centre") {
    const auto model = build_two_ends_model(ModelParams{});
    CHECK(model.size() == doctest::Approx(2 * 20 / 0.1).epsilon(0.05));
    CHECK(model.is_path_graph());
    const auto big = model.sites_in(Region::BigEnd);
    const auto small = model.sites_in(Region::SmallEnd);
    const auto center = model.sites_in(Region::Center);
    REQUIRE_FALSE(center.empty());
    CHECK(big.size() + small.size() + center.size() == model.size());
    double big_max = 0, small_max = 0;
    for (int x : big) big_max = std::max(big_max, model.site(x).r);
    for (int x : small) small_max = std::max(small_max, model.site(x).r);
    CHECK(big_max == doctest::Approx(20.0));
    CHECK(small_max == doctest::Approx(20.0));
}

TEST_CASE("invalid parameters are rejected") {
    ModelParams p;
    p.m = 3;
    p.n = 3;
    CHECK_THROWS_AS(build_two_ends_model(p), InvalidArgument);
    p = ModelParams{};
    p.n = 2;
    p.m = 4;
    CHECK_THROWS_AS(build_two_ends_model(p), InvalidArgument);
    p = ModelParams{};
    p.h = 0.0;
    CHECK_THROWS_AS(build_two_ends_model(p), InvalidArgument);
    p = ModelParams{};
    p.R_max = -1.0;
    CHECK_THROWS_AS(build_two_ends_model(p), InvalidArgument);
    p = ModelParams{};
    p.mode = MeshMode::FullMesh;
    CHECK_THROWS_AS(build_two_ends_model(p), InvalidArgument);
}

TEST_CASE("end measures follow r^{dim-1} h") {
    ModelParams p;
    p.m = 5;
    p.n = 3;
    p.h = 0.05;
    p.R_max = 40.0;
    const auto model = build_two_ends_model(p);
    const int first_big = model.nearest_site(Region::BigEnd, 1.0);
    CHECK(model.site(first_big).r == doctest::Approx(1.0));
    CHECK(model.measure(first_big) == doctest::Approx(0.05));
    for (int x : model.sites_in(Region::BigEnd)) {
        const auto& s = model.site(x);
        CHECK(s.measure == doctest::Approx(std::pow(s.r, 4) * 0.05).epsilon(1e-12));
    }
    for (int x : model.sites_in(Region::SmallEnd)) {
        const auto& s = model.site(x);
        CHECK(s.measure == doctest::Approx(std::pow(s.r, 2) * 0.05).epsilon(1e-12));
    }
}

TEST_CASE("graph distance matches Floyd-Warshall exhaustively") {
    const auto model = build_two_ends_model(small_params());
    REQUIRE(model.size() <= 500);
    const Eigen::MatrixXd d = oracle::floyd_warshall(model);
    const auto n = static_cast<int>(model.size());
    double worst = 0.0;
    bool triangle = true;
    for (int x = 0; x < n; ++x) {
        CHECK(graph_distance(model, x, x) == 0.0);
        for (int y = 0; y < n; ++y) {
            worst = std::max(worst, std::abs(graph_distance(model, x, y) - d(x, y)));
            if (graph_distance(model, x, y) != graph_distance(model, y, x)) triangle = false;
        }
    }
    CHECK(worst < 1e-12);
    for (int x = 0; x < n; x += 3)
        for (int y = 0; y < n; y += 2)
            for (int z = 0; z < n; ++z)
                if (model.distance(x, y) > model.distance(x, z) + model.distance(z, y) + 1e-12) triangle = false;
    CHECK(triangle);
}

TEST_CASE("distance across the centre") {
    const auto model = build_two_ends_model(small_params());
    const int x = model.nearest_site(Region::BigEnd, 2.0);
    const int y = model.nearest_site(Region::SmallEnd, 3.0);
    const Eigen::MatrixXd d = oracle::floyd_warshall(model);
    CHECK(model.distance(x, y) == doctest::Approx(d(x, y)));
    CHECK(model.distance(x, y) == doctest::Approx((2.0 - 1.0) + (3.0 - 1.0) + model.params().center_width));
    const auto& e = model.edges()[0];
    CHECK(model.distance(e.i, e.j) == doctest::Approx(model.params().h));
}

TEST_CASE("norm_abs is one plus the distance to the centre") {
    const auto model = build_two_ends_model(small_params());
    const Eigen::MatrixXd d = oracle::floyd_warshall(model);
    const auto center = model.sites_in(Region::Center);
    for (int x = 0; x < static_cast<int>(model.size()); ++x) {
        double best = 1e300;
        for (int c : center) best = std::min(best, d(x, c));
        CHECK(norm_abs(model, x) == doctest::Approx(1.0 + best).epsilon(1e-12));
        CHECK(norm_abs(model, x) >= 1.0);
        CHECK((norm_abs(model, x) == 1.0) == (model.site(x).region == Region::Center));
    }
    const int edge = model.nearest_site(Region::BigEnd, 1.0);
    CHECK(norm_abs(model, edge) == doctest::Approx(1.0 + model.params().h));
    const int deep = model.nearest_site(Region::BigEnd, 10.0);
    CHECK(norm_abs(model, deep) == doctest::Approx(10.0 + model.params().h));
}

TEST_CASE("ball volume against direct summation") {
    const auto model = build_two_ends_model(small_params());
    const Eigen::MatrixXd d = oracle::floyd_warshall(model);
    const int n = static_cast<int>(model.size());
    for (int x = 0; x < n; x += 7) {
        CHECK(ball_volume(model, x, 0.4 * model.params().h) == doctest::Approx(model.measure(x)));
        CHECK(ball_volume(model, x, 2 * model.params().R_max + 5) == doctest::Approx(model.total_mass()));
        double prev = 0.0;
        for (double r = 0.05; r < 25.0; r *= 1.3) {
            const double v = ball_volume(model, x, r);
            CHECK(v == doctest::Approx(oracle::ball_volume(model, d, x, r)));
            CHECK(v >= prev);
            prev = v;
        }
    }
}

TEST_CASE("small-end part of balls at the centre grows like r^n") {
    ModelParams p;
    p.R_max = 41.0;
    const auto model = build_two_ends_model(p);
    const int x = model.sites_in(Region::Center).back();
    std::vector<double> lr, lv;
    for (double r = 2.0; r <= 5.0; r += 0.25) {
        double v = 0.0;
        for (int y : model.sites_in(Region::SmallEnd))
            if (model.distance(x, y) <= r) v += model.measure(y);
        lr.push_back(std::log(1.0 + r));
        lv.push_back(std::log(v));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lr.size(); ++i) mx += lr[i], my += lv[i];
    mx /= lr.size();
    my /= lr.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lr.size(); ++i) sxy += (lr[i] - mx) * (lv[i] - my), sxx += (lr[i] - mx) * (lr[i] - mx);
    CHECK(sxy / sxx == doctest::Approx(3.0).epsilon(0.15));
}

TEST_CASE("volume growth report") {
    ModelParams p;
    p.R_max = 41.0;
    const auto model = build_two_ends_model(p);
    const auto report = volume_growth_report(model);
    REQUIRE(report.regimes.size() >= 3);
    for (const auto& g : report.regimes) {
        INFO(g.name);
        CHECK(g.radii.size() >= 8);
        CHECK(std::isfinite(g.slope));
        CHECK(std::abs(g.slope - g.expected_exponent) <= 0.10 * g.expected_exponent);
        for (std::size_t i = 0; i < g.radii.size(); ++i)
            CHECK(g.volumes[i] == doctest::Approx(shell_ball_volume(model, g.center_site, g.radii[i])));
    }
    ModelParams q;
    q.R_max = 20.0;
    const auto smaller = volume_growth_report(build_two_ends_model(q));
    CHECK(report.doubling.max_ratio > std::ldexp(1.0, p.n));
    CHECK(report.doubling.max_ratio > smaller.doubling.max_ratio);
}

TEST_CASE("sphere cap fraction in three dimensions") {
    for (double rho : {1.0, 2.5, 7.0})
        for (double rx : {1.0, 3.0})
            for (double s : {0.1, 0.7, 2.0, 5.0, 20.0}) {
                double expected;
                if (std::abs(rho - rx) > s) expected = 0.0;
                else if (rho + rx <= s) expected = 1.0;
                else expected = 0.5 * (1.0 - (rho * rho + rx * rx - s * s) / (2.0 * rho * rx));
                CHECK(sphere_cap_fraction(3, rho, rx, s) == doctest::Approx(expected).epsilon(1e-12));
            }
}

TEST_CASE("shell volumes agree with graph volumes on the centre and saturate") {
    const auto model = build_two_ends_model(small_params());
    const int c = model.sites_in(Region::Center).front();
    for (double r : {0.1, 0.5, 2.0})
        CHECK(shell_ball_volume(model, c, r) == doctest::Approx(ball_volume(model, c, r)));
    const int x = model.nearest_site(Region::BigEnd, 4.0);
    CHECK(shell_ball_volume(model, x, 100.0) == doctest::Approx(model.total_mass()));
    double prev = 0.0;
    for (double r = 0.1; r < 30.0; r *= 1.4) {
        const double v = shell_ball_volume(model, x, r);
        CHECK(v >= prev * (1.0 - 1e-12));
        prev = v;
    }
}

TEST_CASE("volume report needs enough range") {
    ModelParams p;
    p.h = 0.5;
    p.R_max = 10.0;
    CHECK_THROWS_AS(volume_growth_report(build_two_ends_model(p)), InvalidArgument);
}

TEST_CASE("model serialisation round trip") {
    const auto model = build_two_ends_model(small_params());
    std::stringstream a;
    save_model(model, a);
    const auto back = load_model(a);
    REQUIRE(back.size() == model.size());
    for (int x = 0; x < static_cast<int>(model.size()); ++x) {
        CHECK(back.site(x).measure == model.site(x).measure);
        CHECK(back.site(x).region == model.site(x).region);
    }
    std::stringstream b;
    save_model(back, b);
    std::stringstream c;
    save_model(model, c);
    CHECK(b.str() == c.str());
}

TEST_CASE("from_graph rejects bad input") {
    std::vector<Site> sites = {{0, Region::Center, 0.0, 1.0}, {1, Region::Center, 0.0, 1.0}, {2, Region::Center, 0.0, 1.0}};
    std::vector<Edge> edges = {{0, 1, 1.0, 1.0}};
    CHECK_THROWS_AS(ManifoldModel::from_graph(ModelParams{}, sites, edges), InvalidArgument);
    sites[1].measure = 0.0;
    edges.push_back({1, 2, 1.0, 1.0});
    CHECK_THROWS_AS(ManifoldModel::from_graph(ModelParams{}, sites, edges), InvalidArgument);
}
