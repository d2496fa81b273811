#include "hklab/bounds.hpp"

#include "hklab/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>

namespace hklab {

namespace {

using json = nlohmann::ordered_json;

struct Oriented {
    int case_index;
    bool swapped;
};

// Maps an unordered region pair to (case, orientation) given the ordered
// table of (first, second) region pairs; index 0 of the table is case `base`.
Oriented orient(Region a, Region b, const std::vector<std::pair<Region, Region>>& table, int base) {
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (table[i].first == a && table[i].second == b) return {base + static_cast<int>(i), false};
        if (table[i].first == b && table[i].second == a) return {base + static_cast<int>(i), true};
    }
    throw InvalidArgument("unclassifiable region pair");
}

const std::vector<std::pair<Region, Region>>& heat_table() {
    static const std::vector<std::pair<Region, Region>> t = {
        {Region::Center, Region::Center},     {Region::BigEnd, Region::Center},
        {Region::SmallEnd, Region::Center},   {Region::BigEnd, Region::SmallEnd},
        {Region::BigEnd, Region::BigEnd},     {Region::SmallEnd, Region::SmallEnd}};
    return t;
}

double ratio_of(double value, double bound) {
    if (bound > 0.0) return value / bound;
    return value > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

struct Choice {
    double c0 = 0.0;
    double cu = 0.0;
    double cl = 0.0;
    double score = std::numeric_limits<double>::infinity();
};

Choice best_c0(const std::vector<const KernelSample*>& group, const UnitBound& bound, bool two_sided,
               std::span<const double> c0_grid) {
    Choice best;
    for (double c0 : c0_grid) {
        double cu = 0.0, cl = std::numeric_limits<double>::infinity();
        double log_sum = 0.0;
        std::size_t log_count = 0;
        for (const KernelSample* s : group) {
            const double r = ratio_of(s->value, bound(*s, c0));
            cu = std::max(cu, r);
            cl = std::min(cl, r);
            if (r > 0.0 && std::isfinite(r)) {
                log_sum += std::log(r);
                ++log_count;
            }
        }
        double score;
        if (two_sided) {
            score = cl > 0.0 ? std::log(cu / cl) : std::numeric_limits<double>::infinity();
        } else {
            score = log_count ? std::log(cu) - log_sum / static_cast<double>(log_count)
                              : std::numeric_limits<double>::infinity();
        }
        if (!std::isfinite(cu)) continue;
        if (score < best.score || !std::isfinite(best.score)) {
            best = {c0, cu, two_sided ? cl : 0.0, score};
        }
    }
    if (best.cu == 0.0 && !std::isfinite(best.score)) best.c0 = c0_grid.empty() ? 0.0 : c0_grid.front();
    return best;
}

bool violates(const RegimeFit& fit, bool two_sided, double value, double unit_upper, double unit_lower,
              double inflation) {
    constexpr double slack = 1e-12;
    if (value > inflation * fit.C_upper * unit_upper * (1.0 + slack)) return true;
    if (two_sided && value < fit.C_lower / inflation * unit_lower * (1.0 - slack)) return true;
    return false;
}

}  // namespace

std::string to_string(KernelKind kind) { return kind == KernelKind::Heat ? "heat" : "poisson"; }

std::string RegimeTag::name() const {
    std::string s = to_string(kind) + "-case-" + std::to_string(case_index);
    if (time == TimeRegime::Short) s += "-short-time";
    return s;
}

RegimeTag classify_regime(const ManifoldModel& model, KernelKind kind, double t, int x, int y) {
    if (x < 0 || y < 0 || static_cast<std::size_t>(x) >= model.size() || static_cast<std::size_t>(y) >= model.size()) {
        throw InvalidArgument("site id out of range");
    }
    RegimeTag tag;
    tag.kind = kind;
    Region a = model.site(x).region;
    Region b = model.site(y).region;
    if (kind == KernelKind::Heat) {
        if (!(t > 0.0)) throw InvalidArgument("time must be positive");
        if (t <= 1.0) {
            tag.case_index = 1;
            tag.time = TimeRegime::Short;
            tag.x_region = a;
            tag.y_region = b;
            return tag;
        }
        tag.time = TimeRegime::Long;
        const Oriented o = orient(a, b, heat_table(), 2);
        tag.case_index = o.case_index;
        tag.swapped = o.swapped;
    } else {
        tag.time = TimeRegime::Any;
        const Oriented o = orient(a, b, heat_table(), 1);
        tag.case_index = o.case_index;
        tag.swapped = o.swapped;
    }
    if (tag.swapped) std::swap(a, b);
    tag.x_region = a;
    tag.y_region = b;
    return tag;
}

void BoundConstants::validate() const {
    if (!(C_upper > 0.0) || !(C_lower > 0.0) || !(c0_upper > 0.0) || !(c0_lower > 0.0) || !(alpha > 0.0)) {
        throw InvalidArgument("bound constants must be strictly positive");
    }
}

BoundGeometry bound_geometry(const ManifoldModel& model, const RegimeTag& tag, double t, int x, int y) {
    BoundGeometry g;
    g.t = t;
    g.d = model.distance(x, y);
    const int ox = tag.swapped ? y : x;
    const int oy = tag.swapped ? x : y;
    g.abs_x = model.norm_abs(ox);
    g.abs_y = model.norm_abs(oy);
    g.volume = tag.kind == KernelKind::Heat && tag.case_index == 1 ? ball_volume(model, x, std::sqrt(t)) : 0.0;
    return g;
}

std::vector<double> heat_bound_terms(int m, int n, int case_index, double c0, const BoundGeometry& g) {
    const double t = g.t;
    const double gauss = std::exp(-c0 * g.d * g.d / t);
    const double tn = std::pow(t, -0.5 * n);
    const double tm = std::pow(t, -0.5 * m);
    switch (case_index) {
    case 1:
        return {gauss / g.volume};
    case 2:
        return {tn * gauss};
    case 3:
        return {tn * std::pow(g.abs_x, -(m - 2)) * gauss, tm * gauss};
    case 4:
        return {tn * std::pow(g.abs_x, -(n - 2)) * gauss, tn * gauss};
    case 5:
        return {tn * std::pow(g.abs_x, -(m - 2)) * gauss, tm * std::pow(g.abs_y, -(n - 2)) * gauss};
    case 6: {
        const double far = std::exp(-c0 * (g.abs_x * g.abs_x + g.abs_y * g.abs_y) / t);
        return {tn * std::pow(g.abs_x * g.abs_y, -(m - 2)) * far, tm * gauss};
    }
    case 7: {
        const double far = std::exp(-c0 * (g.abs_x * g.abs_x + g.abs_y * g.abs_y) / t);
        return {tn * std::pow(g.abs_x * g.abs_y, -(n - 2)) * far, tn * gauss};
    }
    default:
        throw InvalidArgument("heat case index must lie in [1, 7]");
    }
}

std::vector<double> poisson_bound_terms(int m, int n, int case_index, int k, const BoundGeometry& g) {
    if (k < 0) throw InvalidArgument("derivative order must be non-negative");
    const int p = k_or_one(k);
    const double t = g.t;
    const double a = t / (t + g.d);
    const double big = std::pow(t, -m) * std::pow(a, m + p);
    const double small = std::pow(t, -n) * std::pow(a, n + p);
    switch (case_index) {
    case 1:
    case 3:
    case 6:
        return {big, small};
    case 2:
        return {big, small * std::pow(g.abs_x, -(m - 2))};
    case 4:
        return {big, small * std::pow(g.abs_x, -(m - 2)), big * std::pow(g.abs_y, -(n - 2))};
    case 5: {
        const double b = t / (t + g.abs_x + g.abs_y);
        return {big, std::pow(t, -n) * std::pow(g.abs_x * g.abs_y, -(m - 2)) * std::pow(b, n + p)};
    }
    default:
        throw InvalidArgument("Poisson case index must lie in [1, 6]");
    }
}

namespace {
double sum_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}
}  // namespace

double heat_bound_value(const ManifoldModel& model, const BoundConstants& consts, BoundSide side, double t, int x,
                        int y) {
    consts.validate();
    const RegimeTag tag = classify_regime(model, KernelKind::Heat, t, x, y);
    const BoundGeometry g = bound_geometry(model, tag, t, x, y);
    const auto& p = model.params();
    const bool upper = side == BoundSide::Upper;
    const double c0 = upper ? consts.c0_upper : consts.c0_lower;
    const double C = upper ? consts.C_upper : consts.C_lower;
    return C * sum_of(heat_bound_terms(p.m, p.n, tag.case_index, c0, g));
}

double poisson_bound_value(const ManifoldModel& model, const BoundConstants& consts, double t, int k, int x, int y) {
    consts.validate();
    if (!(t > 0.0)) throw InvalidArgument("time must be positive");
    const RegimeTag tag = classify_regime(model, KernelKind::Poisson, t, x, y);
    const BoundGeometry g = bound_geometry(model, tag, t, x, y);
    const auto& p = model.params();
    return consts.C_upper * sum_of(poisson_bound_terms(p.m, p.n, tag.case_index, k, g));
}

std::vector<KernelSample> sample_kernels(const ManifoldModel& model, KernelKind kind, std::span<const double> times,
                                         std::span<const int> sites,
                                         const std::function<KernelMatrix(double)>& kernel_at, double noise_factor) {
    std::vector<KernelSample> out;
    for (double t : times) {
        const KernelMatrix K = kernel_at(t);
        for (std::size_t i = 0; i < sites.size(); ++i) {
            for (std::size_t j = i; j < sites.size(); ++j) {
                const int x = sites[i], y = sites[j];
                const double v = std::abs(K.values(x, y));
                if (kind == KernelKind::Heat) {
                    const double floor = noise_factor / std::sqrt(model.measure(x) * model.measure(y));
                    if (!(K.values(x, y) > floor)) continue;
                }
                KernelSample s;
                s.t = t;
                s.x = x;
                s.y = y;
                s.value = v;
                s.tag = classify_regime(model, kind, t, x, y);
                s.geometry = bound_geometry(model, s.tag, t, x, y);
                out.push_back(s);
            }
        }
    }
    return out;
}

UnitBound heat_unit_bound(const ManifoldModel& model) {
    const int m = model.params().m, n = model.params().n;
    return [m, n](const KernelSample& s, double c0) { return sum_of(heat_bound_terms(m, n, s.tag.case_index, c0, s.geometry)); };
}

UnitBound poisson_unit_bound(const ManifoldModel& model, int k) {
    const int m = model.params().m, n = model.params().n;
    return [m, n, k](const KernelSample& s, double) {
        return sum_of(poisson_bound_terms(m, n, s.tag.case_index, k, s.geometry));
    };
}

std::vector<double> default_c0_grid() {
    std::vector<double> g;
    constexpr int count = 97;
    for (int i = 0; i < count; ++i) g.push_back(0.01 * std::pow(200.0, static_cast<double>(i) / (count - 1)));
    return g;
}

const RegimeFit* BoundFitReport::find(int case_index) const {
    for (const auto& r : regimes) {
        if (r.tag.case_index == case_index) return &r;
    }
    return nullptr;
}

std::size_t BoundFitReport::total_violations() const {
    std::size_t v = 0;
    for (const auto& r : regimes) v += r.violations;
    return v;
}

BoundFitReport fit_and_check_bounds(std::span<const KernelSample> samples, const UnitBound& bound, bool two_sided,
                                    std::span<const double> c0_grid, std::span<const int> required_cases) {
    if (samples.empty()) throw InvalidArgument("empty regime: no kernel samples supplied");
    BoundFitReport report;
    report.kind = samples.front().tag.kind;
    report.two_sided = two_sided;
    report.c0_grid = c0_grid.empty() ? default_c0_grid() : std::vector<double>(c0_grid.begin(), c0_grid.end());
    if (report.kind == KernelKind::Poisson) report.c0_grid = {1.0};

    std::map<int, std::vector<const KernelSample*>> groups;
    std::vector<double> times;
    for (const auto& s : samples) {
        groups[s.tag.case_index].push_back(&s);
        times.push_back(s.t);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    report.times = times;
    for (int c : required_cases) {
        if (!groups.count(c)) {
            throw InvalidArgument("empty regime: no samples for " + to_string(report.kind) + " case " +
                                  std::to_string(c));
        }
    }

    for (const auto& [case_index, group] : groups) {
        const Choice ch = best_c0(group, bound, two_sided, report.c0_grid);
        RegimeFit fit;
        fit.tag = group.front()->tag;
        fit.tag.swapped = false;
        fit.samples = group.size();
        fit.c0_upper = ch.c0;
        fit.c0_lower = two_sided ? ch.c0 : 0.0;
        fit.C_upper = ch.cu;
        fit.C_lower = ch.cl;
        fit.log_spread = two_sided ? ch.score : 0.0;
        for (const KernelSample* s : group) {
            const double bu = bound(*s, fit.c0_upper);
            const double bl = two_sided ? bound(*s, fit.c0_lower) : 0.0;
            if (fit.C_upper > 0.0) fit.max_kernel_over_bound = std::max(fit.max_kernel_over_bound, s->value / (fit.C_upper * bu));
            if (two_sided && s->value > 0.0) {
                fit.max_bound_over_kernel = std::max(fit.max_bound_over_kernel, fit.C_lower * bl / s->value);
            }
            if (violates(fit, two_sided, s->value, bu, bl, 1.0)) ++fit.violations;
        }
        report.regimes.push_back(fit);
    }
    return report;
}

std::size_t count_violations(const BoundFitReport& fit, std::span<const KernelSample> samples, const UnitBound& bound,
                             double inflation) {
    if (!(inflation >= 1.0)) throw InvalidArgument("inflation factor must be >= 1");
    std::size_t v = 0;
    for (const auto& s : samples) {
        const RegimeFit* r = fit.find(s.tag.case_index);
        if (!r) throw InvalidArgument("sample in a regime without fitted constants: " + s.tag.name());
        const double bu = bound(s, r->c0_upper);
        const double bl = fit.two_sided ? bound(s, r->c0_lower) : 0.0;
        if (violates(*r, fit.two_sided, s.value, bu, bl, inflation)) ++v;
    }
    return v;
}

void write_sample_ratios_csv(const BoundFitReport& fit, std::span<const KernelSample> samples,
                             const UnitBound& bound, std::ostream& out) {
    out << "case,t,x,y,value,upper_bound,ratio_upper,lower_bound,ratio_lower\n" << std::setprecision(12);
    for (const auto& s : samples) {
        const RegimeFit* r = fit.find(s.tag.case_index);
        if (!r) continue;
        const double bu = r->C_upper * bound(s, r->c0_upper);
        const double bl = fit.two_sided ? r->C_lower * bound(s, r->c0_lower) : 0.0;
        out << s.tag.case_index << ',' << s.t << ',' << s.x << ',' << s.y << ',' << s.value << ',' << bu << ','
            << ratio_of(s.value, bu) << ',' << bl << ',' << (fit.two_sided ? ratio_of(bl, s.value) : 0.0) << '\n';
    }
}

std::string BoundFitReport::to_json() const {
    json j;
    j["kind"] = to_string(kind);
    j["order"] = order;
    j["two_sided"] = two_sided;
    j["times"] = times;
    j["c0_grid"] = {{"min", c0_grid.front()}, {"max", c0_grid.back()}, {"count", c0_grid.size()}};
    json regs = json::array();
    for (const auto& r : regimes) {
        json e;
        e["regime"] = r.tag.name();
        e["case"] = r.tag.case_index;
        e["samples"] = r.samples;
        e["C_upper"] = r.C_upper;
        e["c0_upper"] = r.c0_upper;
        if (two_sided) {
            e["C_lower"] = r.C_lower;
            e["c0_lower"] = r.c0_lower;
            e["max_bound_over_kernel"] = r.max_bound_over_kernel;
            e["log_spread"] = r.log_spread;
        }
        e["max_kernel_over_bound"] = r.max_kernel_over_bound;
        e["violations"] = r.violations;
        regs.push_back(e);
    }
    j["regimes"] = regs;
    return j.dump(2);
}

double heat_seam_mismatch(const ManifoldModel& model, double c0, int x, int y) {
    const auto& p = model.params();
    const RegimeTag short_tag = classify_regime(model, KernelKind::Heat, 1.0, x, y);
    RegimeTag long_tag = classify_regime(model, KernelKind::Heat, 2.0, x, y);
    const double s = sum_of(heat_bound_terms(p.m, p.n, 1, c0, bound_geometry(model, short_tag, 1.0, x, y)));
    const double l = sum_of(heat_bound_terms(p.m, p.n, long_tag.case_index, c0, bound_geometry(model, long_tag, 1.0, x, y)));
    return l / s;
}

double on_diagonal_slope(const SpectralData& spec, int x, std::span<const double> times) {
    if (times.size() < 2) throw InvalidArgument("slope needs at least two times");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double t : times) {
        const double lx = std::log(t);
        const double ly = std::log(heat_kernel_entry(spec, t, x, x));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(times.size());
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

DominationReport check_gaussian_type_domination(const SpectralData& with_potential, const SpectralData& free,
                                                std::span<const double> alpha_grid, std::span<const double> t_grid,
                                                double trotter_tol) {
    if (with_potential.vectors.rows() != free.vectors.rows()) {
        throw InvalidArgument("kernels must live on the same model");
    }
    DominationReport rep;
    rep.times.assign(t_grid.begin(), t_grid.end());
    const Eigen::Index N = free.vectors.rows();
    Eigen::MatrixXd floor(N, N);
    for (Eigen::Index x = 0; x < N; ++x) {
        for (Eigen::Index y = 0; y < N; ++y) floor(x, y) = 1e-9 / std::sqrt(free.measure(x) * free.measure(y));
    }
    std::vector<double> best_C(alpha_grid.size(), 0.0);
    rep.trotter_max_excess = -std::numeric_limits<double>::infinity();
    for (double t : t_grid) {
        const Eigen::MatrixXd hv = heat_kernel(with_potential, t).values;
        const Eigen::MatrixXd h = heat_kernel(free, t).values;
        for (Eigen::Index y = 0; y < N; ++y) {
            for (Eigen::Index x = 0; x < N; ++x) {
                const double e = hv(x, y) - h(x, y);
                rep.trotter_max_excess = std::max(rep.trotter_max_excess, e);
                if (e > trotter_tol && rep.trotter_violations.size() < 100) {
                    rep.trotter_violations.push_back({t, static_cast<int>(x), static_cast<int>(y), e});
                }
            }
        }
        for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
            const Eigen::MatrixXd ha = heat_kernel(free, alpha_grid[a] * t).values;
            for (Eigen::Index y = 0; y < N; ++y) {
                for (Eigen::Index x = 0; x < N; ++x) {
                    if (ha(x, y) > floor(x, y)) best_C[a] = std::max(best_C[a], hv(x, y) / ha(x, y));
                }
            }
        }
    }
    for (std::size_t a = 0; a < alpha_grid.size(); ++a) rep.pairs.push_back({alpha_grid[a], best_C[a]});
    return rep;
}

std::string DominationReport::to_json() const {
    json j;
    j["times"] = times;
    j["trotter_ok"] = trotter_ok();
    j["trotter_max_excess"] = trotter_max_excess;
    json v = json::array();
    for (const auto& e : trotter_violations) v.push_back({{"t", e.t}, {"x", e.x}, {"y", e.y}, {"excess", e.excess}});
    j["trotter_violations"] = v;
    json p = json::array();
    for (const auto& e : pairs) p.push_back({{"alpha", e.alpha}, {"C", e.C}});
    j["pairs"] = p;
    return j.dump(2);
}

ApproxIdentityReport check_approx_identity(const ManifoldModel& model,
                                           const std::function<KernelMatrix(double)>& family,
                                           const BoundConstants& consts, int k, std::span<const double> t_grid,
                                           std::span<const int> sites, std::span<const double> C_grid,
                                           std::span<const double> alpha_grid) {
    consts.validate();
    if (C_grid.empty() || alpha_grid.empty() || t_grid.empty()) throw InvalidArgument("grids must be nonempty");
    std::vector<double> worst(alpha_grid.size(), 0.0);
    for (double t : t_grid) {
        const KernelMatrix K = family(t);
        for (int x : sites) {
            for (int y : sites) {
                const double v = std::abs(K.values(x, y));
                for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
                    const double b = poisson_bound_value(model, consts, alpha_grid[a] * t, k, x, y);
                    worst[a] = std::max(worst[a], ratio_of(v, b));
                }
            }
        }
    }
    ApproxIdentityReport rep;
    rep.order = k;
    std::vector<double> Cs(C_grid.begin(), C_grid.end());
    std::sort(Cs.begin(), Cs.end());
    rep.C = std::numeric_limits<double>::infinity();
    std::size_t best_a = 0;
    for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
        if (worst[a] < worst[best_a]) best_a = a;
        auto it = std::lower_bound(Cs.begin(), Cs.end(), worst[a]);
        if (it != Cs.end() && *it < rep.C) {
            rep.C = *it;
            rep.alpha = alpha_grid[a];
            rep.worst_ratio = worst[a];
            rep.passed = true;
        }
    }
    if (!rep.passed) {
        rep.C = Cs.back();
        rep.alpha = alpha_grid[best_a];
        rep.worst_ratio = worst[best_a];
    }
    return rep;
}

std::string ApproxIdentityReport::to_json() const {
    json j;
    j["passed"] = passed;
    j["order"] = order;
    j["C"] = C;
    j["alpha"] = alpha;
    j["worst_ratio"] = worst_ratio;
    return j.dump(2);
}

}  // namespace hklab
