#include "hklab/cz_tools.hpp"

#include "hklab/error.hpp"
#include "hklab/semigroups.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

namespace hklab {

namespace {
using json = nlohmann::ordered_json;

void check_size(const ManifoldModel& model, const Eigen::VectorXd& f) {
    if (static_cast<std::size_t>(f.size()) != model.size()) throw InvalidArgument("vector size does not match the model");
}
}  // namespace

RegionSplit region_split(const ManifoldModel& model, const Eigen::VectorXd& f) {
    check_size(model, f);
    const Eigen::Index N = f.size();
    RegionSplit s{Eigen::VectorXd::Zero(N), Eigen::VectorXd::Zero(N), Eigen::VectorXd::Zero(N)};
    for (const Site& site : model.sites()) {
        switch (site.region) {
        case Region::BigEnd: s.big(site.id) = f(site.id); break;
        case Region::SmallEnd: s.small(site.id) = f(site.id); break;
        case Region::Center: s.center(site.id) = f(site.id); break;
        }
    }
    return s;
}

Eigen::VectorXd maximal_function(const ManifoldModel& model, const Eigen::VectorXd& f) {
    check_size(model, f);
    const int N = static_cast<int>(model.size());
    Eigen::VectorXd out = Eigen::VectorXd::Zero(N);
    std::vector<int> order(static_cast<std::size_t>(N));
    std::vector<double> suffix(static_cast<std::size_t>(N));
    for (int y = 0; y < N; ++y) {
        const Eigen::VectorXd row = model.distance_row(y);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&row](int a, int b) { return row(a) < row(b) || (row(a) == row(b) && a < b); });
        // Ball averages at each distinct radius; ties enter together.
        double mass = 0.0, total = 0.0;
        std::size_t i = 0;
        std::vector<std::pair<std::size_t, double>> groups;  // (end index, average)
        while (i < order.size()) {
            std::size_t j = i;
            while (j < order.size() && row(order[j]) == row(order[i])) {
                mass += model.measure(order[j]);
                total += std::abs(f(order[j])) * model.measure(order[j]);
                ++j;
            }
            groups.emplace_back(j, total / mass);
            i = j;
        }
        // A site in group g lies in every ball of index >= g.
        double best = 0.0;
        for (std::size_t g = groups.size(); g-- > 0;) {
            best = std::max(best, groups[g].second);
            const std::size_t begin = g == 0 ? 0 : groups[g - 1].first;
            for (std::size_t p = begin; p < groups[g].first; ++p) suffix[static_cast<std::size_t>(order[p])] = best;
        }
        for (int x = 0; x < N; ++x) out(x) = std::max(out(x), suffix[static_cast<std::size_t>(x)]);
    }
    return out;
}

Eigen::VectorXd heat_maximal(const SpectralData& spec, const Eigen::VectorXd& f, std::span<const double> t_grid) {
    if (t_grid.empty()) throw InvalidArgument("time grid must be nonempty");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(f.size());
    for (double t : t_grid) out = out.cwiseMax(apply_heat(spec, t, f).cwiseAbs());
    return out;
}

Eigen::VectorXd poisson_maximal(const SpectralData& spec, const Eigen::VectorXd& f, int k,
                                std::span<const cplx> z_grid) {
    if (z_grid.empty()) throw InvalidArgument("time grid must be nonempty");
    for (const cplx& z : z_grid) check_sector(z);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(f.size());
    for (const cplx& z : z_grid) out = out.cwiseMax(apply_complex_poisson(spec, z, k, f).cwiseAbs());
    return out;
}

// --- dyadic grid -----------------------------------------------------------

DyadicGrid::DyadicGrid(std::vector<int> site_ids, std::vector<double> positions, std::vector<double> measures,
                       int dimension)
    : dimension_(dimension) {
    if (site_ids.size() != positions.size() || positions.size() != measures.size() || positions.empty()) {
        throw InvalidArgument("dyadic grid needs matching, nonempty ids, positions and measures");
    }
    std::vector<std::size_t> idx(positions.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return positions[a] < positions[b]; });
    for (std::size_t i : idx) {
        if (!(positions[i] >= 0.0)) throw InvalidArgument("chart positions must be non-negative");
        if (!(measures[i] > 0.0)) throw InvalidArgument("chart measures must be positive");
        site_ids_.push_back(site_ids[i]);
        positions_.push_back(positions[i]);
        measures_.push_back(measures[i]);
    }
    for (std::size_t i = 1; i < positions_.size(); ++i) {
        if (positions_[i] == positions_[i - 1]) throw InvalidArgument("chart positions must be distinct");
    }
    prefix_mass_.assign(1, 0.0);
    for (double m : measures_) prefix_mass_.push_back(prefix_mass_.back() + m);
    const double top = positions_.back();
    int level = top > 0.0 ? static_cast<int>(std::floor(std::log2(top))) : 0;
    while (std::ldexp(1.0, level) <= top) ++level;
    top_level_ = level;
}

DyadicGrid DyadicGrid::from_end(const ManifoldModel& model, Region end) {
    if (end == Region::Center) throw InvalidArgument("dyadic charts live on the ends");
    std::vector<int> ids = model.sites_in(end);
    std::vector<double> pos, mu;
    for (int id : ids) {
        pos.push_back(model.site(id).r - 1.0);
        mu.push_back(model.measure(id));
    }
    return DyadicGrid(ids, pos, mu, model.dimension_of(end));
}

std::pair<std::size_t, std::size_t> DyadicGrid::members(const DyadicCube& q) const {
    const auto lo = std::lower_bound(positions_.begin(), positions_.end(), q.left());
    const auto hi = std::lower_bound(positions_.begin(), positions_.end(), q.right());
    return {static_cast<std::size_t>(lo - positions_.begin()), static_cast<std::size_t>(hi - positions_.begin())};
}

double DyadicGrid::mass(const DyadicCube& q) const {
    const auto [a, b] = members(q);
    return prefix_mass_[b] - prefix_mass_[a];
}

Eigen::VectorXd DyadicGrid::restrict(const Eigen::VectorXd& global) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) out(static_cast<Eigen::Index>(i)) = global(site_ids_[i]);
    return out;
}

Eigen::VectorXd DyadicGrid::extend(const Eigen::VectorXd& local, std::size_t model_size) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model_size));
    for (std::size_t i = 0; i < size(); ++i) out(site_ids_[i]) = local(static_cast<Eigen::Index>(i));
    return out;
}

// --- Calderon-Zygmund ------------------------------------------------------

CZDecomposition cz_decompose(const DyadicGrid& grid, const Eigen::VectorXd& f, double lambda) {
    if (!(lambda > 0.0)) throw InvalidArgument("threshold lambda must be positive");
    if (static_cast<std::size_t>(f.size()) != grid.size()) throw InvalidArgument("chart vector size mismatch");
    const auto& mu = grid.measures();
    auto sums = [&](std::size_t a, std::size_t b) {
        double mass = 0.0, abs_sum = 0.0, signed_sum = 0.0;
        for (std::size_t i = a; i < b; ++i) {
            const double fi = f(static_cast<Eigen::Index>(i));
            mass += mu[i];
            abs_sum += std::abs(fi) * mu[i];
            signed_sum += fi * mu[i];
        }
        return std::array<double, 3>{mass, abs_sum, signed_sum};
    };
    const auto top = sums(0, grid.size());
    const double total_mass = top[0], l1 = top[1];
    if (l1 > lambda * total_mass) {
        throw InvalidArgument("top cube too small: |Q| = " + std::to_string(total_mass) + " < ||f||_1 / lambda = " +
                              std::to_string(l1 / lambda));
    }

    CZDecomposition cz;
    cz.lambda = lambda;
    cz.dimension = grid.dimension();
    cz.good = f;

    std::vector<DyadicCube> stack = {grid.top_cube()};
    while (!stack.empty()) {
        const DyadicCube q = stack.back();
        stack.pop_back();
        for (int side = 1; side >= 0; --side) {
            const DyadicCube child{q.level - 1, 2 * q.index + side};
            const auto [a, b] = grid.members(child);
            if (a == b) continue;
            const auto [mass, abs_sum, signed_sum] = sums(a, b);
            const double avg = abs_sum / mass;
            if (avg > lambda) {
                BadPart part;
                part.cube = child;
                part.first = a;
                part.last = b;
                part.mass = mass;
                part.average = avg;
                part.origin_corner = child.touches_origin();
                const double mean = signed_sum / mass;
                part.b = Eigen::VectorXd::Zero(f.size());
                for (std::size_t i = a; i < b; ++i) {
                    const auto ii = static_cast<Eigen::Index>(i);
                    part.b(ii) = f(ii) - mean;
                    cz.good(ii) = mean;
                }
                cz.bad.push_back(std::move(part));
            } else if (b - a > 1) {
                stack.push_back(child);
            }
        }
    }
    std::sort(cz.bad.begin(), cz.bad.end(), [](const BadPart& x, const BadPart& y) { return x.first < y.first; });
    return cz;
}

std::vector<std::size_t> CZDecomposition::interior_cubes() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bad.size(); ++i) {
        if (!bad[i].origin_corner) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> CZDecomposition::origin_cubes() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bad.size(); ++i) {
        if (bad[i].origin_corner) out.push_back(i);
    }
    return out;
}

std::string CZDecomposition::to_json() const {
    json j;
    j["lambda"] = lambda;
    j["dimension"] = dimension;
    json cubes = json::array();
    for (const auto& p : bad) {
        cubes.push_back({{"left", p.cube.left()},
                         {"right", p.cube.right()},
                         {"side", p.cube.side()},
                         {"level", p.cube.level},
                         {"points", p.last - p.first},
                         {"mass", p.mass},
                         {"average", p.average},
                         {"class", p.origin_corner ? "origin" : "interior"}});
    }
    j["cubes"] = cubes;
    j["good_sup"] = good.size() ? good.cwiseAbs().maxCoeff() : 0.0;
    return j.dump(2);
}

CZCheck check_cz(const DyadicGrid& grid, const Eigen::VectorXd& f, const CZDecomposition& cz) {
    CZCheck c;
    const auto& mu = grid.measures();
    Eigen::VectorXd sum = cz.good;
    double selected = 0.0;
    for (const auto& p : cz.bad) {
        sum += p.b;
        selected += p.mass;
        double mean = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            if (i < p.first || i >= p.last) {
                if (p.b(ii) != 0.0) c.max_mean = std::max(c.max_mean, 1.0);  // support leak
                continue;
            }
            mean += p.b(ii) * mu[i];
            scale += std::abs(f(ii)) * mu[i];
        }
        c.max_mean = std::max(c.max_mean, std::abs(mean) / std::max(scale, 1e-300));
        c.max_average_ratio = std::max(c.max_average_ratio, p.average / cz.lambda);
        if (!p.origin_corner) {
            const double lo = grid.positions()[p.first];
            const double hi = grid.positions()[p.last - 1];
            c.interior_sup_inf_ratio = std::max(c.interior_sup_inf_ratio, hi / lo);
        }
    }
    c.reconstruction_error = (f - sum).cwiseAbs().maxCoeff();
    double l1 = 0.0, g1 = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        l1 += std::abs(f(ii)) * mu[i];
        g1 += std::abs(cz.good(ii)) * mu[i];
    }
    c.selected_mass_ratio = l1 > 0.0 ? selected * cz.lambda / l1 : 0.0;
    c.good_sup_ratio = cz.good.cwiseAbs().maxCoeff() / cz.lambda;
    c.good_l1_ratio = l1 > 0.0 ? g1 / l1 : 0.0;
    return c;
}

// --- Whitney ---------------------------------------------------------------

WhitneyCover whitney_cover(const ManifoldModel& model, std::span<const int> domain) {
    const int N = static_cast<int>(model.size());
    std::vector<char> inside(static_cast<std::size_t>(N), 0);
    for (int x : domain) {
        if (x < 0 || x >= N) throw InvalidArgument("domain site out of range");
        inside[static_cast<std::size_t>(x)] = 1;
    }
    WhitneyCover cover;
    for (int x = 0; x < N; ++x) {
        if (inside[static_cast<std::size_t>(x)]) cover.domain.push_back(x);
    }
    if (cover.domain.empty()) throw InvalidArgument("Whitney cover needs a nonempty set");
    if (cover.domain.size() == model.size()) throw InvalidArgument("Whitney cover needs a proper subset (complement is empty)");

    std::vector<double> dc(cover.domain.size());
    std::vector<Eigen::VectorXd> rows(cover.domain.size());
    for (std::size_t i = 0; i < cover.domain.size(); ++i) {
        rows[i] = model.distance_row(cover.domain[i]);
        double best = std::numeric_limits<double>::infinity();
        for (int y = 0; y < N; ++y) {
            if (!inside[static_cast<std::size_t>(y)]) best = std::min(best, rows[i](y));
        }
        dc[i] = best;
    }
    std::vector<std::size_t> order(cover.domain.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&dc](std::size_t a, std::size_t b) { return dc[a] > dc[b]; });

    std::vector<std::size_t> chosen;
    for (std::size_t i : order) {
        bool covered = false;
        for (std::size_t c : chosen) {
            if (rows[c](cover.domain[i]) <= 0.5 * dc[c]) {
                covered = true;
                break;
            }
        }
        if (covered) continue;
        chosen.push_back(i);
        WhitneyBall ball;
        ball.center = cover.domain[i];
        ball.radius = 0.5 * dc[i];
        for (int y = 0; y < N; ++y) {
            if (rows[i](y) <= ball.radius) ball.members.push_back(y);
        }
        cover.balls.push_back(std::move(ball));
    }

    cover.overlap.assign(cover.domain.size(), 0);
    for (const auto& b : cover.balls) {
        for (int y : b.members) {
            const auto it = std::lower_bound(cover.domain.begin(), cover.domain.end(), y);
            if (it != cover.domain.end() && *it == y) ++cover.overlap[static_cast<std::size_t>(it - cover.domain.begin())];
        }
    }
    cover.overlap_constant = *std::max_element(cover.overlap.begin(), cover.overlap.end());
    return cover;
}

std::vector<std::vector<double>> WhitneyCover::partition_weights() const {
    std::vector<std::vector<double>> w(balls.size(), std::vector<double>(domain.size(), 0.0));
    for (std::size_t i = 0; i < balls.size(); ++i) {
        for (int y : balls[i].members) {
            const auto it = std::lower_bound(domain.begin(), domain.end(), y);
            if (it == domain.end() || *it != y) continue;
            const auto p = static_cast<std::size_t>(it - domain.begin());
            w[i][p] = 1.0 / overlap[p];
        }
    }
    return w;
}

std::string WhitneyCover::to_json() const {
    json j;
    j["domain_size"] = domain.size();
    j["overlap_constant"] = overlap_constant;
    json b = json::array();
    for (const auto& ball : balls) {
        b.push_back({{"center", ball.center}, {"radius", ball.radius}, {"members", ball.members.size()}});
    }
    j["balls"] = b;
    return j.dump(2);
}

WhitneyCheck check_whitney(const ManifoldModel& model, const WhitneyCover& cover) {
    WhitneyCheck c;
    c.overlap_constant = cover.overlap_constant;
    const int N = static_cast<int>(model.size());
    std::vector<char> inside(static_cast<std::size_t>(N), 0);
    for (int x : cover.domain) inside[static_cast<std::size_t>(x)] = 1;

    // Union: every ball lies in the set and every point of the set is covered.
    std::vector<char> covered(static_cast<std::size_t>(N), 0);
    bool contained = true;
    for (const auto& b : cover.balls) {
        for (int y : b.members) {
            covered[static_cast<std::size_t>(y)] = 1;
            if (!inside[static_cast<std::size_t>(y)]) contained = false;
        }
    }
    bool all = true;
    for (int x : cover.domain) all = all && covered[static_cast<std::size_t>(x)];
    c.union_ok = contained && all;

    c.radii_exact = true;
    for (const auto& b : cover.balls) {
        const Eigen::VectorXd row = model.distance_row(b.center);
        double best = std::numeric_limits<double>::infinity();
        for (int y = 0; y < N; ++y) {
            if (!inside[static_cast<std::size_t>(y)]) best = std::min(best, row(y));
        }
        if (b.radius != 0.5 * best) c.radii_exact = false;
        std::vector<int> members;
        for (int y = 0; y < N; ++y) {
            if (row(y) <= b.radius) members.push_back(y);
        }
        if (members != b.members) c.radii_exact = false;
    }

    c.fifth_disjoint = true;
    for (std::size_t i = 0; i < cover.balls.size() && c.fifth_disjoint; ++i) {
        for (std::size_t j = i + 1; j < cover.balls.size(); ++j) {
            const auto& a = cover.balls[i];
            const auto& b = cover.balls[j];
            if (model.distance(a.center, b.center) <= (a.radius + b.radius) / 5.0) {
                c.fifth_disjoint = false;
                break;
            }
        }
    }

    const auto w = cover.partition_weights();
    for (std::size_t p = 0; p < cover.domain.size(); ++p) {
        double s = 0.0;
        for (const auto& wi : w) s += wi[p];
        c.max_weight_error = std::max(c.max_weight_error, std::abs(s - 1.0));
    }
    return c;
}

// --- weak type -------------------------------------------------------------

std::vector<double> default_lambda_grid(double top, int count) {
    if (!(top > 0.0) || count < 2) throw InvalidArgument("lambda grid needs top > 0 and at least two points");
    std::vector<double> g(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = top * std::pow(1e-3, 1.0 - static_cast<double>(i) / (count - 1));
    g.back() = top;
    return g;
}

QuasinormReport weak_quasinorm(const std::function<Eigen::VectorXcd(const Eigen::VectorXd&)>& apply_T,
                               const Eigen::VectorXd& f, const Eigen::VectorXd& measure,
                               std::span<const double> lambda_grid) {
    if (f.size() != measure.size()) throw InvalidArgument("vector size does not match the measure");
    const double l1 = (f.cwiseAbs().array() * measure.array()).sum();
    if (!(l1 > 0.0)) throw InvalidArgument("weak quasinorm needs f != 0");
    const Eigen::VectorXd tf = apply_T(f).cwiseAbs();
    QuasinormReport rep;
    const double top = tf.maxCoeff();
    if (!(top > 0.0)) return rep;
    rep.lambdas = lambda_grid.empty() ? default_lambda_grid(top) : std::vector<double>(lambda_grid.begin(), lambda_grid.end());
    for (double lam : rep.lambdas) {
        double m = 0.0;
        for (Eigen::Index x = 0; x < tf.size(); ++x) {
            if (tf(x) > lam) m += measure(x);
        }
        rep.level_measures.push_back(m);
        const double v = lam * m / l1;
        if (v > rep.value) {
            rep.value = v;
            rep.argmax_lambda = lam;
        }
    }
    return rep;
}

void QuasinormReport::write_csv(std::ostream& out) const {
    out << "lambda,measure,product\n" << std::setprecision(12);
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        out << lambdas[i] << ',' << level_measures[i] << ',' << lambdas[i] * level_measures[i] << '\n';
    }
}

}  // namespace hklab
