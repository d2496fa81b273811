#include "hklab/model_geometry.hpp"

#include "hklab/error.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <queue>

namespace hklab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> log_spaced(double lo, double hi, int count) {
    std::vector<double> out(static_cast<std::size_t>(count));
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (int i = 0; i < count; ++i) {
        out[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (count - 1));
    }
    return out;
}

VolumeRegimeFit fit_regime(const ManifoldModel& model, std::string name, int exponent,
                           int center, std::vector<double> radii) {
    VolumeRegimeFit fit;
    fit.name = std::move(name);
    fit.expected_exponent = exponent;
    fit.center_site = center;
    fit.radii = std::move(radii);
    const std::size_t count = fit.radii.size();
    std::vector<double> lx(count), ly(count);
    for (std::size_t i = 0; i < count; ++i) {
        fit.volumes.push_back(shell_ball_volume(model, center, fit.radii[i]));
        lx[i] = std::log(fit.radii[i]);
        ly[i] = std::log(fit.volumes[i]);
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= static_cast<double>(count);
    my /= static_cast<double>(count);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    for (std::size_t i = 0; i < count; ++i) {
        fit.residuals.push_back(ly[i] - (fit.intercept + fit.slope * lx[i]));
    }
    if (!std::isfinite(fit.slope)) {
        throw NumericalError("volume regression produced a non-finite slope for " + fit.name);
    }
    return fit;
}

std::vector<double> regime_radii(const std::string& name, double lo, double hi, int count) {
    if (!(hi > 1.2 * lo)) {
        throw InvalidArgument("insufficient range for volume regime " + name + ": [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return log_spaced(lo, hi, count);
}

}  // namespace

std::string to_string(Region region) {
    switch (region) {
    case Region::BigEnd: return "big_end";
    case Region::SmallEnd: return "small_end";
    case Region::Center: return "center";
    }
    return "unknown";
}

std::string to_string(MeshMode mode) {
    return mode == MeshMode::RadialRay ? "radial_ray" : "full_mesh";
}

Region region_from_string(const std::string& name) {
    if (name == "big_end") return Region::BigEnd;
    if (name == "small_end") return Region::SmallEnd;
    if (name == "center") return Region::Center;
    throw InvalidArgument("unknown region '" + name + "'");
}

MeshMode mesh_mode_from_string(const std::string& name) {
    if (name == "radial_ray") return MeshMode::RadialRay;
    if (name == "full_mesh") return MeshMode::FullMesh;
    throw InvalidArgument("unknown mesh mode '" + name + "'");
}

void ModelParams::validate() const {
    if (n < 3) throw InvalidArgument("small-end dimension n must be at least 3");
    if (m <= n) throw InvalidArgument("big-end dimension m must exceed n");
    if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("grid spacing h must be positive");
    if (!(R_max > 0.0) || !std::isfinite(R_max)) throw InvalidArgument("R_max must be positive");
    if (!(center_width > 0.0)) throw InvalidArgument("center_width must be positive");
    if (R_max < 10.0 * center_width) throw InvalidArgument("R_max must be at least 10 * center_width");
    if (center_width < 2.0 * h) throw InvalidArgument("center_width must hold at least one site");
}

ManifoldModel ManifoldModel::from_graph(ModelParams params, std::vector<Site> sites,
                                        std::vector<Edge> edges) {
    if (sites.empty()) throw InvalidArgument("model needs at least one site");
    ManifoldModel model;
    model.params_ = params;
    const auto count = sites.size();
    model.adjacency_.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Site& s = sites[i];
        if (s.id != static_cast<int>(i)) throw InvalidArgument("site ids must equal their index");
        if (!(s.measure > 0.0) || !std::isfinite(s.measure)) {
            throw InvalidArgument("site " + std::to_string(i) + " has non-positive measure");
        }
        if (s.r < 0.0) throw InvalidArgument("radial coordinate must be non-negative");
        model.total_mass_ += s.measure;
    }
    bool path = true;
    for (const Edge& e : edges) {
        if (e.i < 0 || e.j < 0 || e.i >= static_cast<int>(count) || e.j >= static_cast<int>(count) ||
            e.i == e.j) {
            throw InvalidArgument("edge endpoints out of range");
        }
        if (!(e.conductance > 0.0) || !(e.length > 0.0)) {
            throw InvalidArgument("edges need positive conductance and length");
        }
        model.adjacency_[static_cast<std::size_t>(e.i)].push_back({e.j, e.conductance, e.length});
        model.adjacency_[static_cast<std::size_t>(e.j)].push_back({e.i, e.conductance, e.length});
        if (std::abs(e.i - e.j) != 1) path = false;
    }
    model.path_graph_ = path;
    model.sites_ = std::move(sites);
    model.edges_ = std::move(edges);

    if (count <= kDistanceCacheCap) {
        model.distances_.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(count));
        for (std::size_t i = 0; i < count; ++i) {
            const int src = static_cast<int>(i);
            model.distances_.col(static_cast<Eigen::Index>(i)) = model.dijkstra(std::span(&src, 1));
        }
        // Symmetrise exactly: both directions sum the same edge lengths, but
        // possibly in a different order.
        for (Eigen::Index i = 0; i < model.distances_.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < model.distances_.cols(); ++j) {
                model.distances_(j, i) = model.distances_(i, j);
            }
        }
        if (!model.distances_.allFinite()) throw InvalidArgument("model graph is not connected");
    } else {
        const int src = 0;
        if (!model.dijkstra(std::span(&src, 1)).allFinite()) {
            throw InvalidArgument("model graph is not connected");
        }
    }

    std::vector<int> center = model.sites_in(Region::Center);
    model.norm_abs_.assign(count, 1.0);
    if (!center.empty()) {
        const Eigen::VectorXd dk = model.dijkstra(center);
        for (std::size_t i = 0; i < count; ++i) {
            model.norm_abs_[i] = model.sites_[i].region == Region::Center
                                     ? 1.0
                                     : 1.0 + dk(static_cast<Eigen::Index>(i));
        }
    }
    return model;
}

Eigen::VectorXd ManifoldModel::dijkstra(std::span<const int> sources) const {
    Eigen::VectorXd dist = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(adjacency_.size()), kInf);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    for (int s : sources) {
        dist(s) = 0.0;
        queue.emplace(0.0, s);
    }
    while (!queue.empty()) {
        auto [d, v] = queue.top();
        queue.pop();
        if (d > dist(v)) continue;
        for (const Neighbor& nb : adjacency_[static_cast<std::size_t>(v)]) {
            const double nd = d + nb.length;
            if (nd < dist(nb.site)) {
                dist(nb.site) = nd;
                queue.emplace(nd, nb.site);
            }
        }
    }
    return dist;
}

Eigen::VectorXd ManifoldModel::measures() const {
    Eigen::VectorXd mu(static_cast<Eigen::Index>(sites_.size()));
    for (const Site& s : sites_) mu(s.id) = s.measure;
    return mu;
}

double ManifoldModel::distance(int x, int y) const {
    if (has_distance_cache()) return distances_(x, y);
    return dijkstra(std::span(&x, 1))(y);
}

Eigen::VectorXd ManifoldModel::distance_row(int x) const {
    if (has_distance_cache()) return distances_.col(x);
    return dijkstra(std::span(&x, 1));
}

std::vector<int> ManifoldModel::sites_in(Region region) const {
    std::vector<int> out;
    for (const Site& s : sites_) {
        if (s.region == region) out.push_back(s.id);
    }
    return out;
}

int ManifoldModel::nearest_site(Region region, double r) const {
    int best = -1;
    double best_gap = kInf;
    for (const Site& s : sites_) {
        if (s.region != region) continue;
        const double gap = std::abs(s.r - r);
        if (gap < best_gap) {
            best_gap = gap;
            best = s.id;
        }
    }
    if (best < 0) throw InvalidArgument("model has no sites in region " + to_string(region));
    return best;
}

int ManifoldModel::dimension_of(Region region) const {
    return region == Region::SmallEnd ? params_.n : params_.m;
}

ManifoldModel build_two_ends_model(const ModelParams& params) {
    params.validate();
    if (params.mode == MeshMode::FullMesh) {
        throw InvalidArgument("full_mesh mode is not supported; use radial_ray");
    }
    const double h = params.h;
    const int ray_sites = static_cast<int>(std::floor((params.R_max - 1.0) / h + 1e-9)) + 1;
    const int center_sites = std::max(1, static_cast<int>(std::lround(params.center_width / h)) - 1);

    std::vector<Site> sites;
    std::vector<double> density;
    sites.reserve(static_cast<std::size_t>(2 * ray_sites + center_sites));
    auto push = [&](Region region, double r, double weight) {
        Site s;
        s.id = static_cast<int>(sites.size());
        s.region = region;
        s.r = r;
        s.measure = weight * h;
        sites.push_back(s);
        density.push_back(weight);
    };
    // Big end from the outer boundary inwards, then the centre, then the small
    // end outwards: a single chain in id order.
    for (int j = ray_sites - 1; j >= 0; --j) {
        const double r = 1.0 + j * h;
        push(Region::BigEnd, r, std::pow(r, params.m - 1));
    }
    for (int j = 0; j < center_sites; ++j) push(Region::Center, 0.0, 1.0);
    for (int j = 0; j < ray_sites; ++j) {
        const double r = 1.0 + j * h;
        push(Region::SmallEnd, r, std::pow(r, params.n - 1));
    }

    std::vector<Edge> edges;
    edges.reserve(sites.size() - 1);
    for (std::size_t i = 0; i + 1 < sites.size(); ++i) {
        Edge e;
        e.i = static_cast<int>(i);
        e.j = static_cast<int>(i + 1);
        e.length = h;
        e.conductance = std::sqrt(density[i] * density[i + 1]) / h;
        edges.push_back(e);
    }
    return ManifoldModel::from_graph(params, std::move(sites), std::move(edges));
}

double graph_distance(const ManifoldModel& model, int x, int y) { return model.distance(x, y); }

double norm_abs(const ManifoldModel& model, int x) { return model.norm_abs(x); }

double ball_volume(const ManifoldModel& model, int x, double r) {
    const Eigen::VectorXd row = model.distance_row(x);
    double volume = 0.0;
    for (const Site& s : model.sites()) {
        if (row(s.id) <= r) volume += s.measure;
    }
    return volume;
}

double sphere_cap_fraction(int dim, double rho, double rho_x, double s) {
    if (s <= 0.0) return 0.0;
    if (std::abs(rho - rho_x) > s) return 0.0;
    if (rho + rho_x <= s) return 1.0;
    const double cos_theta = std::clamp((rho * rho + rho_x * rho_x - s * s) / (2.0 * rho * rho_x), -1.0, 1.0);
    const double x = 0.5 * (1.0 - cos_theta);
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double a = 0.5 * (dim - 1);
    return boost::math::ibeta(a, a, x);
}

namespace {

// Fraction of the product shell S^{n-1}(rho) x S^{d} (unit sphere, d = m - n)
// within product distance r of a point at radius rho_x.
double product_shell_fraction(int n, int d, double rho, double rho_x, double r) {
    if (std::abs(rho - rho_x) > r) return 0.0;
    const double upper = std::min(r, std::numbers::pi);
    constexpr int intervals = 256;
    const double step = upper / intervals;
    // density of the geodesic distance to a fixed point on S^d
    const double norm = std::sqrt(std::numbers::pi) * boost::math::tgamma(0.5 * d) /
                        boost::math::tgamma(0.5 * (d + 1));
    double acc = 0.0;
    for (int i = 0; i <= intervals; ++i) {
        const double sigma = i * step;
        const double weight = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        const double dens = d == 1 ? 1.0 : std::pow(std::sin(sigma), d - 1);
        const double rem = std::sqrt(std::max(0.0, r * r - sigma * sigma));
        acc += weight * dens * sphere_cap_fraction(n, rho, rho_x, rem);
    }
    double frac = acc * step / 3.0 / norm;
    // When the ball swallows the whole sphere factor the remaining part of
    // [0, pi] is covered exactly by the Simpson nodes; clamp rounding.
    return std::clamp(frac, 0.0, 1.0);
}

}  // namespace

double shell_ball_volume(const ManifoldModel& model, int x, double r) {
    const Site& center = model.site(x);
    if (center.region == Region::Center) return ball_volume(model, x, r);
    const Eigen::VectorXd row = model.distance_row(x);
    const ModelParams& p = model.params();
    double volume = 0.0;
    for (const Site& s : model.sites()) {
        if (s.region != center.region) {
            if (row(s.id) <= r) volume += s.measure;
            continue;
        }
        double frac = 0.0;
        if (center.region == Region::BigEnd) {
            frac = sphere_cap_fraction(p.m, s.r, center.r, r);
        } else {
            frac = product_shell_fraction(p.n, p.m - p.n, s.r, center.r, r);
        }
        volume += frac * s.measure;
    }
    return volume;
}

VolumeReport volume_growth_report(const ManifoldModel& model, int radii_per_regime) {
    if (radii_per_regime < 8) {
        throw InvalidArgument("insufficient range: each volume regime needs at least 8 radii");
    }
    const ModelParams& p = model.params();
    VolumeReport report;

    const double mid = 0.5 * (1.0 + p.R_max);
    const int big_mid = model.nearest_site(Region::BigEnd, mid);
    const int small_mid = model.nearest_site(Region::SmallEnd, mid);

    // (i) local scale: the manifold is m-dimensional in both ends.
    const double local_lo = 3.0 * p.h;
    report.regimes.push_back(fit_regime(model, "local_big_end", p.m, big_mid,
                                        regime_radii("local_big_end", local_lo, 1.0, radii_per_regime)));
    report.regimes.push_back(fit_regime(model, "local_small_end", p.m, small_mid,
                                        regime_radii("local_small_end", local_lo, 1.0, radii_per_regime)));

    // (ii) balls of radius > 1 staying inside the small end.
    const double rho_c = model.site(small_mid).r;
    const double inside_hi = 0.95 * std::min(rho_c - 1.0, p.R_max - rho_c);
    report.regimes.push_back(fit_regime(model, "inside_small_end", p.n, small_mid,
                                        regime_radii("inside_small_end", std::max(4.0, 1.0), inside_hi,
                                                     radii_per_regime)));

    // (iii) small-end centre, r > 2|x|: the ball spills into the big end.
    const int near_k = model.nearest_site(Region::SmallEnd, 1.0 + p.h);
    const double lo = std::max(2.0 * model.norm_abs(near_k), p.R_max / 4.0);
    report.regimes.push_back(fit_regime(model, "across_to_big_end", p.m, near_k,
                                        regime_radii("across_to_big_end", lo, 0.9 * p.R_max,
                                                     radii_per_regime)));

    DoublingWitness& w = report.doubling;
    w.center_site = model.nearest_site(Region::SmallEnd, std::min(2.0, p.R_max));
    w.radii = log_spaced(p.h, p.R_max / 2.0, 48);
    for (double r : w.radii) {
        const double ratio = ball_volume(model, w.center_site, 2.0 * r) / ball_volume(model, w.center_site, r);
        w.ratios.push_back(ratio);
        if (ratio > w.max_ratio) {
            w.max_ratio = ratio;
            w.argmax_radius = r;
        }
    }
    return report;
}

void save_model(const ManifoldModel& model, std::ostream& out) {
    nlohmann::ordered_json j;
    j["format"] = "hklab-model";
    j["version"] = 1;
    const ModelParams& p = model.params();
    j["params"] = {{"m", p.m},       {"n", p.n},
                   {"h", p.h},       {"R_max", p.R_max},
                   {"center_width", p.center_width},
                   {"mode", to_string(p.mode)}};
    auto sites = nlohmann::ordered_json::array();
    for (const Site& s : model.sites()) {
        sites.push_back({s.id, to_string(s.region), s.r, s.measure});
    }
    j["sites"] = std::move(sites);
    auto edges = nlohmann::ordered_json::array();
    for (const Edge& e : model.edges()) {
        edges.push_back({e.i, e.j, e.conductance, e.length});
    }
    j["edges"] = std::move(edges);
    out << j.dump(1) << '\n';
}

ManifoldModel load_model(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("model file is not valid JSON: ") + e.what());
    }
    if (j.value("format", "") != "hklab-model") throw InvalidArgument("not an hklab model file");
    if (j.value("version", 0) != 1) throw InvalidArgument("unsupported model file version");
    try {
        ModelParams p;
        const auto& jp = j.at("params");
        p.m = jp.at("m").get<int>();
        p.n = jp.at("n").get<int>();
        p.h = jp.at("h").get<double>();
        p.R_max = jp.at("R_max").get<double>();
        p.center_width = jp.at("center_width").get<double>();
        p.mode = mesh_mode_from_string(jp.at("mode").get<std::string>());
        std::vector<Site> sites;
        for (const auto& js : j.at("sites")) {
            sites.push_back({js.at(0).get<int>(), region_from_string(js.at(1).get<std::string>()),
                             js.at(2).get<double>(), js.at(3).get<double>()});
        }
        std::vector<Edge> edges;
        for (const auto& je : j.at("edges")) {
            edges.push_back({je.at(0).get<int>(), je.at(1).get<int>(), je.at(2).get<double>(),
                             je.at(3).get<double>()});
        }
        return ManifoldModel::from_graph(p, std::move(sites), std::move(edges));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed model file: ") + e.what());
    }
}

}  // namespace hklab
