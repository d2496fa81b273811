#include "hklab/experiments.hpp"

#include "hklab/bounds.hpp"
#include "hklab/cz_tools.hpp"
#include "hklab/functional_calculus.hpp"
#include "hklab/operators.hpp"
#include "hklab/semigroups.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>

namespace hklab {

namespace {

using json = nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string join_path(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

/// Typed reader over one config object that records which keys it consumed.
class Fields {
public:
    Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(path_, "expected an object");
    }

    std::string path(const std::string& key) const { return join_path(path_, key); }

    const json* find(const std::string& key) {
        used_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() || it->is_null() ? nullptr : &*it;
    }

    double real(const std::string& key, std::optional<double> fallback, double lo = -kInf, double hi = kInf,
                bool open_lo = false) {
        const json* v = find(key);
        if (!v) {
            if (!fallback) throw ConfigError(path(key), "missing required field");
            return *fallback;
        }
        return check_real(*v, path(key), lo, hi, open_lo);
    }

    int integer(const std::string& key, std::optional<int> fallback, int lo, int hi) {
        const json* v = find(key);
        if (!v) {
            if (!fallback) throw ConfigError(path(key), "missing required field");
            return *fallback;
        }
        return check_int(*v, path(key), lo, hi);
    }

    bool boolean(const std::string& key, bool fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_boolean()) throw ConfigError(path(key), "expected true or false");
        return v->get<bool>();
    }

    std::string choice(const std::string& key, std::optional<std::string> fallback,
                       const std::vector<std::string>& options) {
        const json* v = find(key);
        if (!v) {
            if (!fallback) throw ConfigError(path(key), "missing required field");
            return *fallback;
        }
        if (!v->is_string()) throw ConfigError(path(key), "expected a string");
        const auto s = v->get<std::string>();
        if (std::find(options.begin(), options.end(), s) == options.end()) {
            std::string list;
            for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
            throw ConfigError(path(key), "unknown value '" + s + "' (expected one of: " + list + ")");
        }
        return s;
    }

    std::vector<double> reals(const std::string& key, std::optional<std::vector<double>> fallback,
                              double lo = -kInf, double hi = kInf, bool open_lo = false) {
        const json* v = find(key);
        if (!v) {
            if (!fallback) throw ConfigError(path(key), "missing required field");
            return *fallback;
        }
        if (!v->is_array()) throw ConfigError(path(key), "expected an array of numbers");
        if (v->empty()) throw ConfigError(path(key), "grid must be nonempty");
        std::vector<double> out;
        for (std::size_t i = 0; i < v->size(); ++i) {
            out.push_back(check_real((*v)[i], path(key) + "[" + std::to_string(i) + "]", lo, hi, open_lo));
        }
        return out;
    }

    std::vector<int> integers(const std::string& key, std::optional<std::vector<int>> fallback, int lo, int hi) {
        const json* v = find(key);
        if (!v) {
            if (!fallback) throw ConfigError(path(key), "missing required field");
            return *fallback;
        }
        if (!v->is_array()) throw ConfigError(path(key), "expected an array of integers");
        if (v->empty()) throw ConfigError(path(key), "grid must be nonempty");
        std::vector<int> out;
        for (std::size_t i = 0; i < v->size(); ++i) {
            out.push_back(check_int((*v)[i], path(key) + "[" + std::to_string(i) + "]", lo, hi));
        }
        return out;
    }

    const json& object(const std::string& key) {
        const json* v = find(key);
        if (!v) throw ConfigError(path(key), "missing required field");
        if (!v->is_object()) throw ConfigError(path(key), "expected an object");
        return *v;
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!used_.count(it.key())) throw ConfigError(path(it.key()), "unknown field");
        }
    }

private:
    static double check_real(const json& v, const std::string& where, double lo, double hi, bool open_lo) {
        if (!v.is_number()) throw ConfigError(where, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(where, "must be finite");
        if (open_lo ? !(x > lo) : !(x >= lo)) {
            throw ConfigError(where, std::string("must be ") + (open_lo ? "> " : ">= ") + fmt(lo));
        }
        if (x > hi) throw ConfigError(where, "must be <= " + fmt(hi));
        return x;
    }

    static int check_int(const json& v, const std::string& where, int lo, int hi) {
        if (!v.is_number_integer()) throw ConfigError(where, "expected an integer");
        const auto x = v.get<long long>();
        if (x < lo || x > hi) {
            throw ConfigError(where, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
        return static_cast<int>(x);
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> used_;
};

std::vector<double> log_grid(double lo, double hi, int count) {
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double s = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
        out[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, s);
    }
    return out;
}

json parse_quadrature(Fields& f, int nodes, double tolerance) {
    const json* q = f.find("quadrature");
    if (!q) return json(nullptr);
    Fields g(*q, f.path("quadrature"));
    json out;
    out["nodes"] = g.integer("nodes", nodes, 32, 1 << 20);
    out["tolerance"] = g.real("tolerance", tolerance, 0.0, 1.0, true);
    out["max_doublings"] = g.integer("max_doublings", 10, 1, 16);
    g.finish();
    return out;
}

std::optional<QuadratureSpec> quadrature_from(const json& q) {
    if (q.is_null()) return std::nullopt;
    QuadratureSpec s;
    s.nodes = q.at("nodes").get<int>();
    s.tolerance = q.at("tolerance").get<double>();
    s.max_doublings = q.at("max_doublings").get<int>();
    return s;
}

const std::vector<double> kFitTimes = {0.1, 0.2, 0.4, 0.7, 1.0, 1.05, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0, 100.0};
const std::vector<double> kFreshTimes = {0.15, 0.3, 0.55, 0.85, 1.2, 1.8, 2.5, 4.0, 7.0, 15.0, 30.0, 70.0};

json parse_multiplier(const json& v, const std::string& path) {
    Fields f(v, path);
    json out;
    const auto type = f.choice("type", std::nullopt,
                               {"constant", "indicator", "imaginary_power", "sqrt_imaginary_power", "table"});
    out["type"] = type;
    if (type == "constant") {
        out["value"] = f.real("value", 1.0);
    } else if (type == "indicator") {
        out["T"] = f.real("T", 1.0, 0.0, kInf, true);
    } else if (type == "imaginary_power") {
        out["s"] = f.real("s", 1.0, -50.0, 50.0);
    } else if (type == "sqrt_imaginary_power") {
        out["sigma"] = f.real("sigma", 1.0, -50.0, 50.0);
    } else {
        const auto t = f.reals("t", std::nullopt, 0.0, kInf, true);
        const auto re = f.reals("re", std::nullopt);
        const auto im = f.reals("im", std::vector<double>(re.size(), 0.0));
        if (re.size() != t.size()) throw ConfigError(f.path("re"), "must have the same length as t");
        if (im.size() != t.size()) throw ConfigError(f.path("im"), "must have the same length as t");
        for (std::size_t i = 1; i < t.size(); ++i) {
            if (!(t[i] > t[i - 1])) throw ConfigError(f.path("t"), "must be strictly increasing");
        }
        out["t"] = t;
        out["re"] = re;
        out["im"] = im;
    }
    f.finish();
    return out;
}

MultiplierSpec multiplier_from(const json& m) {
    const auto type = m.at("type").get<std::string>();
    if (type == "constant") return MultiplierSpec::constant(m.at("value").get<double>());
    if (type == "indicator") return MultiplierSpec::indicator(m.at("T").get<double>());
    if (type == "imaginary_power") return MultiplierSpec::imaginary_power(m.at("s").get<double>());
    if (type == "sqrt_imaginary_power") return MultiplierSpec::sqrt_imaginary_power(m.at("sigma").get<double>());
    const auto t = m.at("t").get<std::vector<double>>();
    const auto re = m.at("re").get<std::vector<double>>();
    const auto im = m.at("im").get<std::vector<double>>();
    std::vector<cplx> values;
    for (std::size_t i = 0; i < t.size(); ++i) values.emplace_back(re[i], im[i]);
    return MultiplierSpec::table(t, values);
}

json parse_kind_params(const std::string& kind, Fields& f) {
    json p;
    if (kind == "volume") {
        p["radii_per_regime"] = f.integer("radii_per_regime", 12, 8, 256);
        p["tolerance"] = f.real("tolerance", 0.15, 0.0, 1.0, true);
    } else if (kind == "heat-check") {
        p["times"] = f.reals("times", std::vector<double>{0.1, 1.0, 10.0}, 0.0, kInf, true);
        p["s"] = f.real("s", 0.5, 0.0, kInf, true);
        p["semigroup_tolerance"] = f.real("semigroup_tolerance", 1e-8, 0.0, 1.0, true);
        p["mass_tolerance"] = f.real("mass_tolerance", 1e-6, 0.0, 1.0, true);
        p["symmetry_tolerance"] = f.real("symmetry_tolerance", 1e-12, 0.0, 1.0, true);
        p["write_kernel"] = f.boolean("write_kernel", false);
    } else if (kind == "poisson-check") {
        p["t"] = f.real("t", 1.0, 0.0, kInf, true);
        p["k"] = f.integer("k", 2, 0, 7);
        p["arg"] = f.real("arg", 0.0, -0.785, 0.785);
        p["tolerance"] = f.real("tolerance", 1e-6, 0.0, 1.0, true);
        p["quadrature"] = parse_quadrature(f, 256, 1e-8);
    } else if (kind == "bounds-fit") {
        const auto kernel = f.choice("kernel", "heat", {"heat", "poisson"});
        p["kernel"] = kernel;
        p["k"] = f.integer("k", 0, 0, 7);
        p["times"] = f.reals("times", kFitTimes, 0.0, kInf, true);
        p["fresh_times"] = f.reals("fresh_times", kFreshTimes, 0.0, kInf, true);
        p["site_stride"] = f.integer("site_stride", 20, 1, 1 << 20);
        p["inflation"] = f.real("inflation", 1.5, 1.0);
        p["two_sided"] = f.boolean("two_sided", kernel == "heat");
        if (kernel == "poisson" && p["two_sided"].get<bool>()) {
            throw ConfigError(f.path("two_sided"), "Poisson kernels have upper bounds only");
        }
        p["slope_radius"] = f.real("slope_radius", 3.1, 1.0);
        p["slope_times"] = f.reals("slope_times", log_grid(10.0, 100.0, 10), 0.0, kInf, true);
        p["slope_tolerance"] = f.real("slope_tolerance", 0.15, 0.0, 1.0, true);
    } else if (kind == "domination") {
        p["times"] = f.reals("times", std::vector<double>{0.1, 0.5, 1.0, 5.0, 10.0}, 0.0, kInf, true);
        p["alphas"] = f.reals("alphas", std::vector<double>{0.25, 0.5, 0.75, 1.0}, 0.0, 1.0, true);
        p["tolerance"] = f.real("tolerance", 1e-10, 0.0, 1.0, true);
    } else if (kind == "multiplier") {
        const json* m = f.find("multiplier");
        p["multiplier"] = m ? parse_multiplier(*m, f.path("multiplier")) : json{{"type", "imaginary_power"}, {"s", 1.0}};
        p["samples"] = f.integer("samples", 5, 1, 10000);
        p["tolerance"] = f.real("tolerance", 1e-4, 0.0, 1.0, true);
        p["oracle_tolerance"] = f.real("oracle_tolerance", 1e-10, 0.0, 1.0, true);
        p["quadrature"] = parse_quadrature(f, 256, 1e-6);
    } else if (kind == "g-function") {
        p["kappas"] = f.integers("kappas", std::vector<int>{1, 2}, 1, 6);
        p["samples"] = f.integer("samples", 20, 1, 10000);
        p["tolerance"] = f.real("tolerance", 1e-5, 0.0, 1.0, true);
        p["quadrature"] = parse_quadrature(f, 256, 1e-8);
    } else if (kind == "maximal") {
        p["samples"] = f.integer("samples", 5, 1, 10000);
        p["heat_times"] = f.reals("heat_times", log_grid(0.01, 100.0, 9), 0.0, kInf, true);
        p["k"] = f.integer("k", 1, 0, 7);
        p["poisson_times"] = f.reals("poisson_times", log_grid(0.1, 100.0, 7), 0.0, kInf, true);
        p["tolerance"] = f.real("tolerance", 1e-12, 0.0, 1.0, true);
    } else if (kind == "cz-demo") {
        p["trials"] = f.integer("trials", 100, 1, 100000);
        p["lambda_factors"] = f.reals("lambda_factors", std::vector<double>{1.0, 100.0}, 1.0);
        if (p["lambda_factors"].size() != 2 || p["lambda_factors"][1].get<double>() < p["lambda_factors"][0].get<double>()) {
            throw ConfigError(f.path("lambda_factors"), "expected [low, high] with low <= high");
        }
        p["spike_probability"] = f.real("spike_probability", 0.1, 0.0, 1.0);
        p["tolerance"] = f.real("tolerance", 1e-12, 0.0, 1.0, true);
        p["interior_ratio"] = f.real("interior_ratio", 3.0, 1.0);
    } else if (kind == "whitney-demo") {
        p["trials"] = f.integer("trials", 20, 1, 100000);
        p["max_domain"] = f.integer("max_domain", 1000, 1, 1 << 20);
        p["max_overlap"] = f.integer("max_overlap", 16, 1, 1 << 20);
        p["tolerance"] = f.real("tolerance", 1e-12, 0.0, 1.0, true);
    } else if (kind == "weak11") {
        p["s"] = f.real("s", 1.0, -50.0, 50.0);
        p["widths"] = f.integers("widths", std::vector<int>{16, 8, 4, 2, 1}, 1, 1 << 16);
        p["radii"] = f.reals("radii", std::vector<double>{2.0, 5.0, 10.0}, 1.0);
        p["factor"] = f.real("factor", 2.0, 1.0);
        p["lambda_count"] = f.integer("lambda_count", 64, 2, 100000);
    }
    return p;
}

const std::vector<std::string>& kind_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& k : experiment_kinds()) n.push_back(k.name);
        return n;
    }();
    return names;
}

// --- running -----------------------------------------------------------------

std::string region_short(Region r) {
    switch (r) {
        case Region::BigEnd: return "big";
        case Region::SmallEnd: return "small";
        case Region::Center: return "center";
    }
    return "?";
}

Eigen::VectorXd build_potential(const ManifoldModel& model, const PotentialConfig& p) {
    if (p.kind == "constant") return potentials::constant(model, p.value);
    if (p.kind == "center_bump") return potentials::center_bump(model, p.value);
    return potentials::radial_decay(model, p.amplitude, p.power);
}

std::string describe(const PotentialConfig& p) {
    if (p.kind == "radial_decay") return "radial_decay(amplitude=" + fmt(p.amplitude) + ", power=" + fmt(p.power) + ")";
    return p.kind + "(" + fmt(p.value) + ")";
}

class Run {
public:
    explicit Run(const ExperimentConfig& cfg)
        : cfg_(cfg)
        , p(cfg.params)
        , rng(cfg.seed)
        , model(std::make_shared<const ManifoldModel>(build_two_ends_model(cfg.model)))
        , op(cfg.schrodinger ? add_potential(assemble_laplacian(model), build_potential(*model, cfg.potential))
                             : assemble_laplacian(model)) {}

    const SpectralData& spec() {
        if (!spec_) spec_ = spectral_decompose(op);
        return *spec_;
    }

    const SpectralData& free_spec() {
        if (!cfg_.schrodinger) return spec();
        if (!free_spec_) free_spec_ = spectral_decompose(assemble_laplacian(model));
        return *free_spec_;
    }

    void check(const std::string& name, bool passed, const std::string& detail) {
        checks.push_back({name, passed, detail});
    }
    void note(const std::string& line) { notes.push_back(line); }
    void file(const std::string& name, std::string content) { files.emplace_back(name, std::move(content)); }
    void file(const std::string& name, const json& j) { file(name, j.dump(2) + "\n"); }

    Eigen::VectorXd gaussian_vector(Eigen::Index n) {
        std::normal_distribution<double> nd;
        Eigen::VectorXd f(n);
        for (auto& x : f) x = nd(rng);
        return f;
    }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

    const ExperimentConfig& cfg_;
    const json& p;
    std::mt19937_64 rng;
    std::shared_ptr<const ManifoldModel> model;
    OperatorHandle op;
    std::vector<CheckResult> checks;
    std::vector<std::string> notes;
    std::vector<std::pair<std::string, std::string>> files;

private:
    std::optional<SpectralData> spec_;
    std::optional<SpectralData> free_spec_;
};

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

void run_volume(Run& r) {
    const auto report = volume_growth_report(*r.model, r.p.at("radii_per_regime").get<int>());
    const double tol = r.p.at("tolerance").get<double>();
    json j;
    std::ostringstream csv;
    csv << "regime,radius,volume\n";
    for (const auto& g : report.regimes) {
        j["regimes"].push_back({{"name", g.name},
                                {"expected_exponent", g.expected_exponent},
                                {"center_site", g.center_site},
                                {"slope", g.slope},
                                {"intercept", g.intercept},
                                {"radii", g.radii},
                                {"volumes", g.volumes}});
        bool monotone = true;
        for (std::size_t i = 0; i < g.radii.size(); ++i) {
            csv << g.name << ',' << fmt(g.radii[i]) << ',' << fmt(g.volumes[i]) << '\n';
            if (i > 0 && g.radii[i] >= g.radii[i - 1] && g.volumes[i] < g.volumes[i - 1]) monotone = false;
        }
        const double rel = std::abs(g.slope - g.expected_exponent) / g.expected_exponent;
        r.check("slope " + g.name, rel <= tol,
                "slope " + fmt_short(g.slope) + " vs " + std::to_string(g.expected_exponent) + " (rel " +
                    fmt_short(rel) + ", tol " + fmt_short(tol) + ")");
        r.check("monotone " + g.name, monotone, "ball volume nondecreasing in r");
    }
    const auto& d = report.doubling;
    j["doubling"] = {{"center_site", d.center_site},
                     {"max_ratio", d.max_ratio},
                     {"argmax_radius", d.argmax_radius},
                     {"radii", d.radii},
                     {"ratios", d.ratios}};
    std::ostringstream dcsv;
    dcsv << "radius,ratio\n";
    for (std::size_t i = 0; i < d.radii.size(); ++i) dcsv << fmt(d.radii[i]) << ',' << fmt(d.ratios[i]) << '\n';
    r.note("doubling ratio V(x,2r)/V(x,r) peaks at " + fmt_short(d.max_ratio) + " (r = " + fmt_short(d.argmax_radius) + ")");
    r.file("volume.json", j);
    r.file("volume_regimes.csv", csv.str());
    r.file("doubling.csv", dcsv.str());
}

void run_heat_check(Run& r) {
    const auto& spec = r.spec();
    const auto times = r.p.at("times").get<std::vector<double>>();
    const double s = r.p.at("s").get<double>();
    const double sg_tol = r.p.at("semigroup_tolerance").get<double>();
    const double mass_tol = r.p.at("mass_tolerance").get<double>();
    const double sym_tol = r.p.at("symmetry_tolerance").get<double>();
    const Eigen::VectorXd& mu = spec.measure;
    const auto N = static_cast<Eigen::Index>(r.model->size());

    double worst_sym = 0.0, worst_mass = 0.0, worst_sg = 0.0, worst_neg = 0.0;
    std::ostringstream csv, diag;
    csv << "t,symmetry_error,mass_error,min_entry_ratio,semigroup_error\n";
    diag << "t,site,region,r,value\n";
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double t = times[i];
        const auto K = heat_kernel(spec, t);
        const Eigen::MatrixXd& H = K.values;
        const double scale = max_abs(H);
        const double sym = max_abs(H - H.transpose()) / scale;
        const Eigen::VectorXd rows = H * mu;
        double mass = 0.0;
        for (Eigen::Index x = 0; x < N; ++x) {
            mass = std::max(mass, r.cfg_.schrodinger ? rows(x) - 1.0 : std::abs(rows(x) - 1.0));
        }
        const double neg = std::max(0.0, -H.minCoeff()) / scale;
        const Eigen::MatrixXd composed = H * mu.asDiagonal() * heat_kernel(spec, s).values;
        const Eigen::MatrixXd direct = heat_kernel(spec, t + s).values;
        const double sg = max_abs(composed - direct) / max_abs(direct);
        worst_sym = std::max(worst_sym, sym);
        worst_mass = std::max(worst_mass, mass);
        worst_sg = std::max(worst_sg, sg);
        worst_neg = std::max(worst_neg, neg);
        csv << fmt(t) << ',' << fmt(sym) << ',' << fmt(mass) << ',' << fmt(neg) << ',' << fmt(sg) << '\n';
        for (Eigen::Index x = 0; x < N; ++x) {
            const auto& site = r.model->site(static_cast<int>(x));
            diag << fmt(t) << ',' << x << ',' << region_short(site.region) << ',' << fmt(site.r) << ','
                 << fmt(H(x, x)) << '\n';
        }
        if (r.p.at("write_kernel").get<bool>()) {
            std::ostringstream k;
            write_kernel_csv(K, k);
            r.file("heat_kernel_" + std::to_string(i) + ".csv", k.str());
        }
    }
    r.check("symmetry", worst_sym <= sym_tol, "max |H(x,y)-H(y,x)| / max H = " + fmt_short(worst_sym));
    r.check(r.cfg_.schrodinger ? "sub-Markov" : "mass conservation", worst_mass <= mass_tol,
            "max deviation of sum_y H(x,y) mu_y " + std::string(r.cfg_.schrodinger ? "above 1" : "from 1") + " = " +
                fmt_short(worst_mass));
    r.check("semigroup law", worst_sg <= sg_tol, "max |H_t H_s - H_{t+s}| / max H_{t+s} = " + fmt_short(worst_sg));
    r.check("positivity", worst_neg <= 1e-10, "most negative entry / max H = " + fmt_short(-worst_neg));
    r.file("heat_checks.csv", csv.str());
    r.file("heat_diagonal.csv", diag.str());
}

void run_poisson_check(Run& r) {
    const auto& spec = r.spec();
    const double t = r.p.at("t").get<double>();
    const int k = r.p.at("k").get<int>();
    const double arg = r.p.at("arg").get<double>();
    const double tol = r.p.at("tolerance").get<double>();
    const QuadratureSpec quad = quadrature_from(r.p.at("quadrature")).value_or(QuadratureSpec{});
    SpectralHeatProvider provider(spec);
    QuadratureDiagnostics qd;
    double dev = 0.0, scale = 0.0;
    std::ostringstream csv;
    csv << "site,region,r,subordination,spectral\n";
    auto emit = [&](auto&& sub, auto&& ref) {
        dev = (sub - ref).cwiseAbs().maxCoeff();
        scale = ref.cwiseAbs().maxCoeff();
        for (Eigen::Index x = 0; x < sub.rows(); ++x) {
            const auto& site = r.model->site(static_cast<int>(x));
            csv << x << ',' << region_short(site.region) << ',' << fmt(site.r) << ',' << fmt(std::abs(sub(x, x)))
                << ',' << fmt(std::abs(ref(x, x))) << '\n';
        }
    };
    if (arg == 0.0) {
        const auto sub = poisson_kernel_subordination(provider, t, k, quad, &qd);
        const auto ref = poisson_kernel_spectral(spec, t, k);
        emit(sub.values, ref.values);
    } else {
        const cplx z = std::polar(t, arg);
        const auto sub = complex_poisson_kernel(provider, z, k, quad, &qd);
        const auto ref = complex_poisson_kernel(spec, z, k);
        emit(sub.values, ref.values);
    }
    json j = {{"t", t},
              {"k", k},
              {"arg", arg},
              {"max_abs_deviation", dev},
              {"max_abs_kernel", scale},
              {"max_rel_deviation", dev / scale},
              {"quadrature", json::parse(qd.to_json())}};
    r.note("max subordination-vs-spectral deviation: " + fmt_short(dev) + " (kernel scale " + fmt_short(scale) +
           ", " + std::to_string(qd.nodes) + " nodes)");
    r.check("subordination vs spectral", dev <= tol, "max |P_sub - P_spec| = " + fmt_short(dev) + " (tol " + fmt_short(tol) + ")");
    r.file("poisson_check.json", j);
    r.file("poisson_diagonal.csv", csv.str());
}

std::vector<int> fit_sites(const ManifoldModel& model, int stride, int offset) {
    std::set<int> out;
    for (Region reg : {Region::BigEnd, Region::SmallEnd}) {
        const auto ids = model.sites_in(reg);
        for (std::size_t i = static_cast<std::size_t>(offset) % ids.size(); i < ids.size(); i += static_cast<std::size_t>(stride)) {
            out.insert(ids[i]);
        }
        if (offset == 0) {
            out.insert(ids.front());
            out.insert(ids.back());
        }
    }
    for (int c : model.sites_in(Region::Center)) out.insert(c);
    return {out.begin(), out.end()};
}

void run_bounds_fit(Run& r) {
    const auto& spec = r.spec();
    const bool heat = r.p.at("kernel").get<std::string>() == "heat";
    const int k = r.p.at("k").get<int>();
    const auto times = r.p.at("times").get<std::vector<double>>();
    const auto fresh_times = r.p.at("fresh_times").get<std::vector<double>>();
    const int stride = r.p.at("site_stride").get<int>();
    const double inflation = r.p.at("inflation").get<double>();
    const bool two_sided = r.p.at("two_sided").get<bool>();
    const KernelKind kind = heat ? KernelKind::Heat : KernelKind::Poisson;
    const auto& model = *r.model;

    std::function<KernelMatrix(double)> kernel_at = [&](double t) {
        return heat ? heat_kernel(spec, t) : poisson_kernel_spectral(spec, t, k);
    };
    const UnitBound unit = heat ? heat_unit_bound(model) : poisson_unit_bound(model, k);
    const auto sites = fit_sites(model, stride, 0);
    const auto fresh_sites = fit_sites(model, stride, std::max(1, stride / 3));
    const auto samples = sample_kernels(model, kind, times, sites, kernel_at);
    const auto fresh = sample_kernels(model, kind, fresh_times, fresh_sites, kernel_at);

    std::set<int> cases;
    for (const auto& s : samples) cases.insert(s.tag.case_index);
    const int case_count = heat ? 7 : 6;
    std::string missing;
    for (int c = 1; c <= case_count; ++c) {
        if (!cases.count(c)) missing += (missing.empty() ? "" : " ") + std::to_string(c);
    }
    r.check("all regimes sampled", missing.empty(), missing.empty() ? std::to_string(case_count) + " regimes" : "missing cases " + missing);

    const auto fit = fit_and_check_bounds(samples, unit, two_sided);
    const auto fresh_violations = count_violations(fit, fresh, unit, inflation);
    json j = json::parse(fit.to_json());
    j["samples"] = samples.size();
    j["fresh_samples"] = fresh.size();
    j["fresh_violations"] = fresh_violations;
    j["inflation"] = inflation;
    for (const auto& g : fit.regimes) {
        r.note("case " + std::to_string(g.tag.case_index) + " (" + g.tag.name() + "): " + std::to_string(g.samples) +
               " samples, C_upper " + fmt_short(g.C_upper) + (two_sided ? ", C_lower " + fmt_short(g.C_lower) : "") +
               ", c0 " + fmt_short(g.c0_upper));
    }
    r.check("fit violations", fit.total_violations() == 0,
            std::to_string(fit.total_violations()) + " of " + std::to_string(samples.size()) + " samples");
    r.check("fresh-grid violations", fresh_violations == 0,
            std::to_string(fresh_violations) + " of " + std::to_string(fresh.size()) + " samples at inflation " +
                fmt_short(inflation));
    if (heat && !r.cfg_.schrodinger) {
        const auto slope_times = r.p.at("slope_times").get<std::vector<double>>();
        const int x = model.nearest_site(Region::SmallEnd, r.p.at("slope_radius").get<double>());
        const double slope = on_diagonal_slope(spec, x, slope_times);
        const double expected = -0.5 * model.params().n;
        const double rel = std::abs(slope - expected) / std::abs(expected);
        j["on_diagonal_slope"] = {{"site", x}, {"r", model.site(x).r}, {"times", slope_times}, {"slope", slope}, {"expected", expected}};
        r.check("on-diagonal slope", rel <= r.p.at("slope_tolerance").get<double>(),
                "slope " + fmt_short(slope) + " vs " + fmt_short(expected) + " (rel " + fmt_short(rel) + ")");
    }
    std::ostringstream csv;
    write_sample_ratios_csv(fit, samples, unit, csv);
    r.file("bounds_fit.json", j);
    r.file("sample_ratios.csv", csv.str());
}

void run_domination(Run& r) {
    const auto& free = r.free_spec();
    const auto times = r.p.at("times").get<std::vector<double>>();
    const auto alphas = r.p.at("alphas").get<std::vector<double>>();
    const double tol = r.p.at("tolerance").get<double>();
    std::vector<PotentialConfig> pots;
    if (r.cfg_.schrodinger) {
        pots.push_back(r.cfg_.potential);
    } else {
        pots.push_back({"constant", 0.5, 0.0, 2.0});
        pots.push_back({"center_bump", 2.0, 0.0, 2.0});
        pots.push_back({"radial_decay", 0.0, 1.0, 2.0});
    }
    json j = json::array();
    std::ostringstream csv;
    csv << "potential,alpha,C\n";
    const auto base = assemble_laplacian(r.model);
    for (const auto& pc : pots) {
        const auto specV = spectral_decompose(add_potential(base, build_potential(*r.model, pc)));
        const auto rep = check_gaussian_type_domination(specV, free, alphas, times, tol);
        const auto name = describe(pc);
        j.push_back({{"potential", name}, {"report", json::parse(rep.to_json())}});
        for (const auto& pr : rep.pairs) csv << '"' << name << "\"," << fmt(pr.alpha) << ',' << fmt(pr.C) << '\n';
        r.check("Trotter " + name, rep.trotter_ok(),
                "max (H^V - H) = " + fmt_short(rep.trotter_max_excess) + ", " +
                    std::to_string(rep.trotter_violations.size()) + " violations");
        if (!rep.pairs.empty()) {
            const auto best = *std::min_element(rep.pairs.begin(), rep.pairs.end(),
                                                [](const auto& a, const auto& b) { return a.C < b.C; });
            r.note(name + ": smallest C = " + fmt_short(best.C) + " at alpha = " + fmt_short(best.alpha));
        }
    }
    r.file("domination.json", j);
    r.file("domination_pairs.csv", csv.str());
}

void run_multiplier(Run& r) {
    const auto& spec = r.spec();
    const auto mult = multiplier_from(r.p.at("multiplier"));
    mult.validate();
    const auto quad = quadrature_from(r.p.at("quadrature"));
    const double tol = r.p.at("tolerance").get<double>();
    const double oracle_tol = r.p.at("oracle_tolerance").get<double>();
    const int samples = r.p.at("samples").get<int>();
    const auto& mu = spec.measure;
    const auto N = static_cast<Eigen::Index>(r.model->size());

    QuadratureDiagnostics qd;
    const Eigen::VectorXcd symbols = laplace_multiplier_symbols(spec, mult, quad, &qd);
    std::ostringstream sym;
    sym << "mode,lambda,re_oracle,im_oracle,re_quadrature,im_quadrature\n";
    for (Eigen::Index j = 0; j < symbols.size(); ++j) {
        const cplx o = spec.is_zero_mode(j) ? cplx(0.0) : mult.symbol_at(std::sqrt(spec.values(j)));
        sym << j << ',' << fmt(spec.values(j)) << ',' << fmt(o.real()) << ',' << fmt(o.imag()) << ','
            << fmt(symbols(j).real()) << ',' << fmt(symbols(j).imag()) << '\n';
    }

    const bool power = r.p.at("multiplier").at("type") == "imaginary_power";
    const double s = power ? r.p.at("multiplier").at("s").get<double>() : 0.0;
    double worst = 0.0, worst_iso = 0.0, worst_comp_oracle = 0.0, worst_comp_quad = 0.0;
    std::ostringstream csv;
    csv << "trial,relative_error,oracle_norm,input_norm\n";
    for (int trial = 0; trial < samples; ++trial) {
        const Eigen::VectorXd f = r.gaussian_vector(N);
        const Eigen::VectorXcd fc = f.cast<cplx>();
        const auto a = apply_laplace_multiplier(spec, mult, fc, quad);
        const auto b = multiplier_oracle(spec, mult, fc);
        const double nb = l2_norm(mu, b);
        const double rel = l2_norm(mu, a - b) / std::max(nb, 1e-300);
        worst = std::max(worst, rel);
        csv << trial << ',' << fmt(rel) << ',' << fmt(nb) << ',' << fmt(l2_norm(mu, fc)) << '\n';
        if (power) {
            const Eigen::VectorXcd target = (f - spec.zero_mode_projection(f)).cast<cplx>();
            const double nt = l2_norm(mu, target);
            worst_iso = std::max(worst_iso, std::abs(l2_norm(mu, b) - nt) / nt);
            const auto back = imaginary_power(spec, -s, b);
            worst_comp_oracle = std::max(worst_comp_oracle, l2_norm(mu, back - target) / nt);
            const auto back_q = imaginary_power(spec, -s, a, PowerMethod::Quadrature, quad);
            worst_comp_quad = std::max(worst_comp_quad, l2_norm(mu, back_q - target) / nt);
        }
    }
    r.check("quadrature vs oracle", worst <= tol, "max relative l2 error " + fmt_short(worst) + " over " + std::to_string(samples) + " samples");
    json j = {{"multiplier", mult.name},
              {"samples", samples},
              {"max_relative_error", worst},
              {"quadrature", json::parse(qd.to_json())}};
    if (power) {
        r.check("isometry on range", worst_iso <= oracle_tol, "max | ||L^is f|| / ||(I-P0) f|| - 1 | = " + fmt_short(worst_iso));
        r.check("inverse composition (oracle)", worst_comp_oracle <= oracle_tol, "relative error " + fmt_short(worst_comp_oracle));
        r.check("inverse composition (quadrature)", worst_comp_quad <= tol, "relative error " + fmt_short(worst_comp_quad));
        j["isometry_error"] = worst_iso;
        j["composition_error_oracle"] = worst_comp_oracle;
        j["composition_error_quadrature"] = worst_comp_quad;
    }
    r.file("multiplier.json", j);
    r.file("multiplier_trials.csv", csv.str());
    r.file("multiplier_symbols.csv", sym.str());
}

void run_g_function(Run& r) {
    const auto& spec = r.spec();
    const auto kappas = r.p.at("kappas").get<std::vector<int>>();
    const int samples = r.p.at("samples").get<int>();
    const double tol = r.p.at("tolerance").get<double>();
    const auto quad = quadrature_from(r.p.at("quadrature"));
    const auto& mu = spec.measure;
    const auto N = static_cast<Eigen::Index>(r.model->size());
    std::ostringstream csv;
    csv << "kappa,trial,g_norm,predicted,relative_error\n";
    std::vector<Eigen::VectorXd> fs;
    for (int i = 0; i < samples; ++i) fs.push_back(r.gaussian_vector(N));
    json j = json::array();
    for (int kappa : kappas) {
        const double c = g_function_constant(kappa);
        double worst = 0.0;
        for (int i = 0; i < samples; ++i) {
            const auto& f = fs[static_cast<std::size_t>(i)];
            const Eigen::VectorXd g = g_function(spec, f, kappa, quad);
            const double lhs = l2_norm(mu, g.cast<cplx>());
            const double rhs = c * l2_norm(mu, (f - spec.zero_mode_projection(f)).cast<cplx>());
            const double rel = std::abs(lhs - rhs) / rhs;
            worst = std::max(worst, rel);
            csv << kappa << ',' << i << ',' << fmt(lhs) << ',' << fmt(rhs) << ',' << fmt(rel) << '\n';
        }
        j.push_back({{"kappa", kappa}, {"constant", c}, {"max_relative_error", worst}});
        r.check("g-function isometry kappa=" + std::to_string(kappa), worst <= tol,
                "||g(f)|| = " + fmt_short(c) + " ||(I-P0) f|| up to " + fmt_short(worst));
    }
    r.file("g_function.json", j);
    r.file("g_function.csv", csv.str());
}

void run_maximal(Run& r) {
    const auto& model = *r.model;
    const auto& spec = r.spec();
    const int samples = r.p.at("samples").get<int>();
    const auto heat_times = r.p.at("heat_times").get<std::vector<double>>();
    const auto ptimes = r.p.at("poisson_times").get<std::vector<double>>();
    const int k = r.p.at("k").get<int>();
    const double tol = r.p.at("tolerance").get<double>();
    const auto N = static_cast<Eigen::Index>(model.size());
    std::vector<cplx> zs(ptimes.begin(), ptimes.end());

    auto random_f = [&] {
        Eigen::VectorXd f = r.gaussian_vector(N);
        for (auto& x : f) {
            if (r.uniform() < 0.05) x *= 50.0;
        }
        return f;
    };
    double dom = 0.0, sub = 0.0, hom = 0.0;
    double heat_ratio = 0.0, poisson_ratio = 0.0;
    std::ostringstream csv;
    csv << "site,region,r,f,Mf,heat_max,poisson_max\n";
    for (int i = 0; i < samples; ++i) {
        const Eigen::VectorXd f = random_f();
        const Eigen::VectorXd g = random_f();
        const Eigen::VectorXd Mf = maximal_function(model, f);
        const Eigen::VectorXd Mg = maximal_function(model, g);
        const Eigen::VectorXd Mfg = maximal_function(model, f + g);
        const Eigen::VectorXd M2 = maximal_function(model, -2.5 * f);
        const double scale = Mf.maxCoeff();
        dom = std::max(dom, (f.cwiseAbs() - Mf).maxCoeff() / scale);
        sub = std::max(sub, (Mfg - Mf - Mg).maxCoeff() / scale);
        hom = std::max(hom, (M2 - 2.5 * Mf).cwiseAbs().maxCoeff() / scale);
        const Eigen::VectorXd hm = heat_maximal(spec, f, heat_times);
        const Eigen::VectorXd pm = poisson_maximal(spec, f, k, zs);
        const auto l2 = [&](const Eigen::VectorXd& v) { return l2_norm(spec.measure, v.cast<cplx>()); };
        heat_ratio = std::max(heat_ratio, l2(hm) / l2(f));
        poisson_ratio = std::max(poisson_ratio, l2(pm) / l2(f));
        if (i == 0) {
            for (Eigen::Index x = 0; x < N; ++x) {
                const auto& site = model.site(static_cast<int>(x));
                csv << x << ',' << region_short(site.region) << ',' << fmt(site.r) << ',' << fmt(f(x)) << ','
                    << fmt(Mf(x)) << ',' << fmt(hm(x)) << ',' << fmt(pm(x)) << '\n';
            }
        }
    }
    r.check("Mf >= |f|", dom <= tol, "max (|f| - Mf) / max Mf = " + fmt_short(dom));
    r.check("sublinearity", sub <= tol, "max (M(f+g) - Mf - Mg) / max Mf = " + fmt_short(sub));
    r.check("homogeneity", hom <= tol, "max |M(-2.5 f) - 2.5 Mf| / max Mf = " + fmt_short(hom));
    if (!r.cfg_.schrodinger) {
        const Eigen::VectorXd one = Eigen::VectorXd::Ones(N);
        const double dev = (heat_maximal(spec, one, heat_times) - one).cwiseAbs().maxCoeff();
        r.check("heat maximal of constants", dev <= 1e-8, "max |sup_t e^{-tL} 1 - 1| = " + fmt_short(dev));
    }
    r.note("max ||sup_t |e^{-tL} f| ||_2 / ||f||_2 = " + fmt_short(heat_ratio));
    r.note("max ||sup_t |P_{t,k} f| ||_2 / ||f||_2 = " + fmt_short(poisson_ratio) + " (k = " + std::to_string(k) + ")");
    r.file("maximal.csv", csv.str());
    r.file("maximal.json", json{{"samples", samples},
                                {"heat_times", heat_times},
                                {"poisson_times", ptimes},
                                {"k", k},
                                {"dominance_error", dom},
                                {"sublinearity_excess", sub},
                                {"homogeneity_error", hom},
                                {"heat_l2_ratio", heat_ratio},
                                {"poisson_l2_ratio", poisson_ratio}});
}

void run_cz_demo(Run& r) {
    const auto& model = *r.model;
    const int trials = r.p.at("trials").get<int>();
    const auto factors = r.p.at("lambda_factors").get<std::vector<double>>();
    const double spike = r.p.at("spike_probability").get<double>();
    const double tol = r.p.at("tolerance").get<double>();
    const double interior_bound = r.p.at("interior_ratio").get<double>();
    const DyadicGrid grids[2] = {DyadicGrid::from_end(model, Region::BigEnd), DyadicGrid::from_end(model, Region::SmallEnd)};

    double recon = 0.0, mean = 0.0, avg = 0.0, sel = 0.0, gsup = 0.0, interior = 0.0, gl1 = 0.0;
    std::ostringstream csv;
    csv << "trial,end,dimension,lambda,cubes,reconstruction_error,max_mean,average_ratio,selected_mass_ratio,"
           "good_sup_ratio,good_l1_ratio,interior_sup_inf_ratio\n";
    for (int trial = 0; trial < trials; ++trial) {
        const auto& grid = grids[trial % 2];
        const auto n = static_cast<Eigen::Index>(grid.size());
        Eigen::VectorXd f(n);
        for (auto& x : f) x = (r.uniform() < spike ? 50.0 : 1.0) * (r.uniform() - 0.5);
        double l1 = 0.0, mass = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            l1 += std::abs(f(static_cast<Eigen::Index>(i))) * grid.measures()[i];
            mass += grid.measures()[i];
        }
        const double factor = factors[0] * std::pow(factors[1] / factors[0], r.uniform());
        const double lambda = l1 / mass * factor;
        const auto cz = cz_decompose(grid, f, lambda);
        const auto c = check_cz(grid, f, cz);
        const double two_d = std::ldexp(1.0, grid.dimension());
        recon = std::max(recon, c.reconstruction_error / f.cwiseAbs().maxCoeff());
        mean = std::max(mean, c.max_mean);
        avg = std::max(avg, c.max_average_ratio / two_d);
        sel = std::max(sel, c.selected_mass_ratio);
        gsup = std::max(gsup, c.good_sup_ratio / two_d);
        gl1 = std::max(gl1, c.good_l1_ratio);
        interior = std::max(interior, c.interior_sup_inf_ratio);
        csv << trial << ',' << (trial % 2 ? "small" : "big") << ',' << grid.dimension() << ',' << fmt(lambda) << ','
            << cz.bad.size() << ',' << fmt(c.reconstruction_error) << ',' << fmt(c.max_mean) << ','
            << fmt(c.max_average_ratio) << ',' << fmt(c.selected_mass_ratio) << ',' << fmt(c.good_sup_ratio) << ','
            << fmt(c.good_l1_ratio) << ',' << fmt(c.interior_sup_inf_ratio) << '\n';
        if (trial == 0) r.file("cz_example.json", json::parse(cz.to_json()));
    }
    r.check("reconstruction", recon <= tol, "max |f - g - sum b| / max |f| = " + fmt_short(recon));
    r.check("mean zero", mean <= tol, "max |sum_Q b mu| / sum_Q |f| mu = " + fmt_short(mean));
    r.check("selected averages", avg <= 1.0 + tol, "max avg_Q |f| / (2^dim lambda) = " + fmt_short(avg));
    r.check("selected mass", sel <= 1.0 + tol, "max lambda sum |Q_j| / ||f||_1 = " + fmt_short(sel));
    r.check("good part sup", gsup <= 1.0 + tol, "max ||g||_inf / (2^dim lambda) = " + fmt_short(gsup));
    r.check("interior cubes", interior <= interior_bound, "max sup|z| / inf|z| over cubes away from the origin = " + fmt_short(interior));
    r.note("max ||g||_1 / ||f||_1 = " + fmt_short(gl1));
    r.file("cz_trials.csv", csv.str());
}

std::vector<int> random_open_set(Run& r, int max_domain) {
    const auto& model = *r.model;
    const int N = static_cast<int>(model.size());
    std::uniform_int_distribution<int> pick(0, N - 1);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<char> in(static_cast<std::size_t>(N), 0);
        const int balls = 1 + static_cast<int>(r.uniform() * 3.0);
        for (int b = 0; b < balls; ++b) {
            const int c = pick(r.rng);
            const double radius = 0.3 + 6.0 * r.uniform();
            const Eigen::VectorXd row = model.distance_row(c);
            for (int y = 0; y < N; ++y) {
                if (row(y) < radius) in[static_cast<std::size_t>(y)] = 1;
            }
        }
        std::vector<int> dom;
        for (int y = 0; y < N; ++y) {
            if (in[static_cast<std::size_t>(y)]) dom.push_back(y);
        }
        if (!dom.empty() && static_cast<int>(dom.size()) < N && static_cast<int>(dom.size()) <= max_domain) return dom;
    }
    throw NumericalError("could not draw an open set within max_domain");
}

void run_whitney_demo(Run& r) {
    const int trials = r.p.at("trials").get<int>();
    const int max_domain = std::min<int>(r.p.at("max_domain").get<int>(), static_cast<int>(r.model->size()) - 1);
    const int max_overlap = r.p.at("max_overlap").get<int>();
    const double tol = r.p.at("tolerance").get<double>();
    bool uni = true, fifth = true, radii = true;
    double weight = 0.0;
    int overlap = 0;
    std::ostringstream csv;
    csv << "trial,domain_size,balls,union_ok,fifth_disjoint,radii_exact,max_weight_error,overlap_constant\n";
    for (int trial = 0; trial < trials; ++trial) {
        const auto dom = random_open_set(r, max_domain);
        const auto cover = whitney_cover(*r.model, dom);
        const auto c = check_whitney(*r.model, cover);
        uni = uni && c.union_ok;
        fifth = fifth && c.fifth_disjoint;
        radii = radii && c.radii_exact;
        weight = std::max(weight, c.max_weight_error);
        overlap = std::max(overlap, c.overlap_constant);
        csv << trial << ',' << dom.size() << ',' << cover.balls.size() << ',' << c.union_ok << ',' << c.fifth_disjoint
            << ',' << c.radii_exact << ',' << fmt(c.max_weight_error) << ',' << c.overlap_constant << '\n';
        if (trial == 0) r.file("whitney_example.json", json::parse(cover.to_json()));
    }
    r.check("union", uni, "balls cover the open set and stay inside it");
    r.check("fifth-balls disjoint", fifth, "d(x_i, x_j) > (r_i + r_j) / 5 for every pair");
    r.check("radii", radii, "r_i = d(x_i, complement) / 2");
    r.check("bounded overlap", overlap <= max_overlap, "overlap constant " + std::to_string(overlap));
    r.check("partition of unity", weight <= tol, "max |sum_k phi_k - 1| = " + fmt_short(weight));
    r.file("whitney_trials.csv", csv.str());
}

void run_weak11(Run& r) {
    const auto& model = *r.model;
    const auto& spec = r.spec();
    const double s = r.p.at("s").get<double>();
    const auto widths = r.p.at("widths").get<std::vector<int>>();
    const auto radii = r.p.at("radii").get<std::vector<double>>();
    const double factor = r.p.at("factor").get<double>();
    const int count = r.p.at("lambda_count").get<int>();
    const auto N = static_cast<Eigen::Index>(model.size());
    const double h = model.params().h;
    const auto T = [&](const Eigen::VectorXd& v) { return imaginary_power(spec, s, v.cast<cplx>()); };

    struct Row {
        std::string end;
        double r;
        int width;
        int site;
        QuasinormReport q;
    };
    std::vector<Row> rows;
    for (Region end : {Region::BigEnd, Region::SmallEnd}) {
        for (double rad : radii) {
            const int x0 = model.nearest_site(end, rad);
            const Eigen::VectorXd dist = model.distance_row(x0);
            for (int w : widths) {
                Eigen::VectorXd f = Eigen::VectorXd::Zero(N);
                for (Eigen::Index y = 0; y < N; ++y) {
                    if (dist(y) <= 0.5 * w * h + 1e-9) f(y) = 1.0;
                }
                const Eigen::VectorXcd Tf = T(f);
                const auto grid = default_lambda_grid(Tf.cwiseAbs().maxCoeff(), count);
                rows.push_back({region_short(end), rad, w, x0, weak_quasinorm(T, f, spec.measure, grid)});
            }
        }
    }
    std::vector<double> vals;
    for (const auto& row : rows) vals.push_back(row.q.value);
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    const double median = n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
    std::ostringstream csv, sweep;
    csv << "case,end,r,width,site,quasinorm,argmax_lambda,ratio_to_median\n";
    sweep << "case,lambda,measure,product\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        csv << i << ',' << row.end << ',' << fmt(row.r) << ',' << row.width << ',' << row.site << ','
            << fmt(row.q.value) << ',' << fmt(row.q.argmax_lambda) << ',' << fmt(row.q.value / median) << '\n';
        for (std::size_t l = 0; l < row.q.lambdas.size(); ++l) {
            sweep << i << ',' << fmt(row.q.lambdas[l]) << ',' << fmt(row.q.level_measures[l]) << ','
                  << fmt(row.q.lambdas[l] * row.q.level_measures[l]) << '\n';
        }
    }
    const double lo = vals.front() / median, hi = vals.back() / median;
    r.note("weak-(1,1) quasinorms: median " + fmt_short(median) + ", min/median " + fmt_short(lo) + ", max/median " + fmt_short(hi));
    r.check("within factor of median", hi <= factor && lo >= 1.0 / factor,
            "range [" + fmt_short(lo) + ", " + fmt_short(hi) + "] x median, allowed factor " + fmt_short(factor));
    r.file("weak11.csv", csv.str());
    r.file("weak11_sweeps.csv", sweep.str());
    r.file("weak11.json", json{{"s", s}, {"median", median}, {"min_ratio", lo}, {"max_ratio", hi}, {"values", vals}});
}

std::string sha1_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1) {
        throw std::runtime_error("SHA-1 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

const std::vector<ExperimentKindInfo>& experiment_kinds() {
    static const std::vector<ExperimentKindInfo> kinds = {
        {"volume", "log-log volume growth slopes per regime and the doubling-ratio sweep"},
        {"heat-check", "heat kernel symmetry, mass conservation, positivity and semigroup law"},
        {"poisson-check", "Poisson kernel by subordination against the spectral kernel"},
        {"bounds-fit", "fit heat or Poisson kernel bound constants per regime and count violations"},
        {"domination", "Trotter comparison and Gaussian-type domination constants for potentials"},
        {"multiplier", "Laplace-transform multiplier by time quadrature against the spectral oracle"},
        {"g-function", "L^2 identity of the Littlewood-Paley g-function"},
        {"maximal", "Hardy-Littlewood, heat and Poisson maximal functions"},
        {"cz-demo", "Calderon-Zygmund decompositions on random data"},
        {"whitney-demo", "Whitney covers of random open sets"},
        {"weak11", "weak-(1,1) quasinorm of L^{is} over concentrating bumps in both ends"},
    };
    return kinds;
}

json ExperimentConfig::to_json() const {
    json j;
    j["model"] = {{"m", model.m},
                  {"n", model.n},
                  {"h", model.h},
                  {"R_max", model.R_max},
                  {"center_width", model.center_width},
                  {"mode", hklab::to_string(model.mode)}};
    if (schrodinger) {
        json pot = {{"kind", potential.kind}};
        if (potential.kind == "radial_decay") {
            pot["amplitude"] = potential.amplitude;
            pot["power"] = potential.power;
        } else {
            pot["value"] = potential.value;
        }
        j["operator"] = {{"type", "schrodinger"}, {"potential", pot}};
    } else {
        j["operator"] = {{"type", "laplacian"}};
    }
    json exp = params;
    exp["kind"] = kind;
    j["experiment"] = exp;
    j["output_dir"] = output_dir;
    j["seed"] = seed;
    return j;
}

ExperimentConfig parse_config(const json& doc) {
    Fields top(doc, "");
    ExperimentConfig cfg;
    {
        Fields m(top.object("model"), "model");
        cfg.model.m = m.integer("m", std::nullopt, 1, 64);
        cfg.model.n = m.integer("n", std::nullopt, 1, 64);
        cfg.model.h = m.real("h", 0.1, 0.0, kInf, true);
        cfg.model.R_max = m.real("R_max", 20.0, 0.0, kInf, true);
        cfg.model.center_width = m.real("center_width", 1.0, 0.0, kInf, true);
        const auto mode = m.choice("mode", "radial_ray", {"radial_ray", "full_mesh"});
        if (mode == "full_mesh") throw ConfigError("model.mode", "full_mesh is not supported; use radial_ray");
        cfg.model.mode = MeshMode::RadialRay;
        m.finish();
        try {
            cfg.model.validate();
        } catch (const InvalidArgument& e) {
            throw ConfigError("model", e.what());
        }
        const double sites = 2.0 * (cfg.model.R_max - 1.0) / cfg.model.h + cfg.model.center_width / cfg.model.h;
        if (sites > 5000.0) throw ConfigError("model.h", "model would exceed 5000 sites");
    }
    if (const json* op = top.find("operator")) {
        Fields o(*op, "operator");
        const auto type = o.choice("type", "laplacian", {"laplacian", "schrodinger"});
        if (type == "schrodinger") {
            cfg.schrodinger = true;
            Fields v(o.object("potential"), "operator.potential");
            cfg.potential.kind = v.choice("kind", std::nullopt, {"constant", "center_bump", "radial_decay"});
            if (cfg.potential.kind == "radial_decay") {
                cfg.potential.amplitude = v.real("amplitude", std::nullopt, 0.0);
                cfg.potential.power = v.real("power", 2.0, 0.0);
            } else {
                cfg.potential.value = v.real("value", std::nullopt, 0.0);
            }
            v.finish();
        } else if (o.find("potential")) {
            throw ConfigError("operator.potential", "only allowed with type schrodinger");
        }
        o.finish();
    }
    {
        Fields e(top.object("experiment"), "experiment");
        cfg.kind = e.choice("kind", std::nullopt, kind_names());
        cfg.params = parse_kind_params(cfg.kind, e);
        e.finish();
    }
    if (const json* out = top.find("output_dir")) {
        if (!out->is_string() || out->get<std::string>().empty()) {
            throw ConfigError("output_dir", "expected a nonempty string");
        }
        const std::filesystem::path p(out->get<std::string>());
        if (p.is_absolute()) throw ConfigError("output_dir", "must be a relative path");
        for (const auto& part : p) {
            if (part == "..") throw ConfigError("output_dir", "must not contain '..'");
        }
        cfg.output_dir = p.lexically_normal().generic_string();
    } else {
        cfg.output_dir = "runs/" + cfg.kind;
    }
    if (const json* seed = top.find("seed")) {
        if (!seed->is_number_integer() || (!seed->is_number_unsigned() && seed->get<std::int64_t>() < 0)) throw ConfigError("seed", "expected a non-negative integer");
        cfg.seed = seed->get<std::uint64_t>();
    }
    top.finish();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed JSON: ") + e.what());
    }
    return parse_config(doc);
}

const CheckResult* RunResult::first_failure() const {
    for (const auto& c : checks) {
        if (!c.passed) return &c;
    }
    return nullptr;
}

std::string git_blob_sha1(std::string_view content) {
    std::string data = "blob " + std::to_string(content.size());
    data.push_back('\0');
    data.append(content);
    return sha1_hex(data);
}

RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& output_root) {
    Run run(config);
    const auto& k = config.kind;
    if (k == "volume") run_volume(run);
    else if (k == "heat-check") run_heat_check(run);
    else if (k == "poisson-check") run_poisson_check(run);
    else if (k == "bounds-fit") run_bounds_fit(run);
    else if (k == "domination") run_domination(run);
    else if (k == "multiplier") run_multiplier(run);
    else if (k == "g-function") run_g_function(run);
    else if (k == "maximal") run_maximal(run);
    else if (k == "cz-demo") run_cz_demo(run);
    else if (k == "whitney-demo") run_whitney_demo(run);
    else if (k == "weak11") run_weak11(run);
    else throw ConfigError("experiment.kind", "unknown kind '" + k + "'");

    RunResult result;
    result.output_dir = output_root / config.output_dir;
    result.checks = run.checks;

    std::ostringstream summary;
    const auto& mp = config.model;
    summary << "experiment: " << k << '\n'
            << "model: m=" << mp.m << " n=" << mp.n << " h=" << fmt(mp.h) << " R_max=" << fmt(mp.R_max)
            << " center_width=" << fmt(mp.center_width) << " sites=" << run.model->size() << '\n'
            << "operator: " << (config.schrodinger ? "schrodinger " + describe(config.potential) : "laplacian") << '\n'
            << "seed: " << config.seed << '\n';
    for (const auto& n : run.notes) summary << n << '\n';
    summary << "checks:\n";
    std::size_t passed = 0;
    for (const auto& c : run.checks) {
        summary << "  " << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
        passed += c.passed;
    }
    const auto* fail = result.first_failure();
    summary << "status: " << (fail ? "FAIL" : "PASS") << " (" << passed << "/" << run.checks.size() << " checks)";
    if (fail) summary << ", first failing check: " << fail->name;
    summary << '\n';
    run.file("summary.txt", summary.str());

    std::filesystem::create_directories(result.output_dir);
    json listing = json::array();
    for (const auto& [name, content] : run.files) {
        write_file(result.output_dir / name, content);
        listing.push_back({{"path", name}, {"bytes", content.size()}, {"sha1", git_blob_sha1(content)}});
        result.files.push_back(name);
    }
    json manifest = {{"config", config.to_json()},
                     {"seed", config.seed},
                     {"files", listing},
                     {"status", fail ? "fail" : "pass"},
                     {"first_failing_check", fail ? json(fail->name) : json(nullptr)}};
    write_file(result.output_dir / "manifest.json", manifest.dump(2) + "\n");
    result.files.push_back("manifest.json");
    return result;
}

}  // namespace hklab
