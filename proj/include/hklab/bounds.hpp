#pragma once

#include "hklab/model_geometry.hpp"
#include "hklab/operators.hpp"
#include "hklab/semigroups.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace hklab {

enum class KernelKind { Heat, Poisson };
enum class TimeRegime { Short, Long, Any };
enum class BoundSide { Upper, Lower };

/// Which closed-form estimate applies to (t, x, y).
///
/// Heat cases 1-7 and Poisson cases 1-6 follow the two-ends estimates.
/// Mixed pairs are oriented so that `x_region` is the end the formula
/// expects first; `swapped` records whether (x, y) was reversed to get there.
struct RegimeTag {
    KernelKind kind = KernelKind::Heat;
    int case_index = 0;
    Region x_region = Region::Center;
    Region y_region = Region::Center;
    TimeRegime time = TimeRegime::Any;
    bool swapped = false;

    std::string name() const;
    bool operator==(const RegimeTag& o) const {
        return kind == o.kind && case_index == o.case_index;
    }
};

RegimeTag classify_regime(const ManifoldModel& model, KernelKind kind, double t, int x, int y);

struct BoundConstants {
    double C_upper = 1.0;
    double C_lower = 1.0;
    double c0_upper = 0.25;
    double c0_lower = 0.25;
    double alpha = 1.0;

    void validate() const;
};

/// max(k, 1)
constexpr int k_or_one(int k) noexcept { return k > 1 ? k : 1; }

/// Geometric inputs of a bound, already oriented to the regime.
struct BoundGeometry {
    double t = 1.0;
    double d = 0.0;       ///< d(x, y)
    double abs_x = 1.0;   ///< |x|
    double abs_y = 1.0;   ///< |y|
    double volume = 1.0;  ///< V(x, sqrt t), used by heat case 1 only
};

BoundGeometry bound_geometry(const ManifoldModel& model, const RegimeTag& tag, double t, int x, int y);

/// Individual terms of the heat estimate with unit constant.
std::vector<double> heat_bound_terms(int m, int n, int case_index, double c0, const BoundGeometry& g);
/// Individual terms of the Poisson estimate with unit constant.
std::vector<double> poisson_bound_terms(int m, int n, int case_index, int k, const BoundGeometry& g);

double heat_bound_value(const ManifoldModel& model, const BoundConstants& consts, BoundSide side, double t, int x,
                        int y);
double poisson_bound_value(const ManifoldModel& model, const BoundConstants& consts, double t, int k, int x, int y);

/// One kernel value with its bound geometry.
struct KernelSample {
    double t = 0.0;
    int x = 0;
    int y = 0;
    double value = 0.0;  ///< |K_t(x, y)|
    RegimeTag tag;
    BoundGeometry geometry;
};

/// All pairs from `sites` at every time in `times`. Heat samples whose value
/// is below `noise_factor / sqrt(mu_x mu_y)` are dropped (they are not
/// resolvable by the spectral sum); Poisson samples keep every pair.
std::vector<KernelSample> sample_kernels(const ManifoldModel& model, KernelKind kind, std::span<const double> times,
                                         std::span<const int> sites,
                                         const std::function<KernelMatrix(double)>& kernel_at,
                                         double noise_factor = 1e-9);

/// Unit-constant bound for a sample at a given Gaussian rate c0.
using UnitBound = std::function<double(const KernelSample&, double c0)>;
UnitBound heat_unit_bound(const ManifoldModel& model);
UnitBound poisson_unit_bound(const ManifoldModel& model, int k);

struct RegimeFit {
    RegimeTag tag;
    std::size_t samples = 0;
    double c0_upper = 0.0;
    double c0_lower = 0.0;
    double C_upper = 0.0;
    double C_lower = 0.0;     ///< 0 for one-sided fits
    double max_kernel_over_bound = 0.0;  ///< at C_upper
    double max_bound_over_kernel = 0.0;  ///< at C_lower
    double log_spread = 0.0;  ///< log(C_upper / C_lower), two-sided only
    std::size_t violations = 0;
};

struct BoundFitReport {
    KernelKind kind = KernelKind::Heat;
    int order = 0;
    bool two_sided = false;
    std::vector<double> c0_grid;
    std::vector<double> times;
    std::vector<RegimeFit> regimes;

    const RegimeFit* find(int case_index) const;
    std::size_t total_violations() const;
    std::string to_json() const;
};

/// log-spaced c0 candidates
std::vector<double> default_c0_grid();

/// Per regime, scans c0 to minimise the spread of log(kernel / bound) and
/// sets C_upper (and C_lower when two-sided) from the extreme ratios, so the
/// reported constants dominate every sample. Throws InvalidArgument when no
/// samples are given or a case listed in `required_cases` has none.
BoundFitReport fit_and_check_bounds(std::span<const KernelSample> samples, const UnitBound& bound, bool two_sided,
                                    std::span<const double> c0_grid = {}, std::span<const int> required_cases = {});

/// Violations of a fitted report on another sample set, with upper constants
/// multiplied and lower constants divided by `inflation`.
std::size_t count_violations(const BoundFitReport& fit, std::span<const KernelSample> samples, const UnitBound& bound,
                             double inflation);

void write_sample_ratios_csv(const BoundFitReport& fit, std::span<const KernelSample> samples,
                             const UnitBound& bound, std::ostream& out);

/// Ratio of the long-time heat bound to the short-time one at t = 1 for a
/// pair, both with unit constants and the given c0.
double heat_seam_mismatch(const ManifoldModel& model, double c0, int x, int y);

/// Least-squares slope of log h_t(x, x) against log t.
double on_diagonal_slope(const SpectralData& spec, int x, std::span<const double> times);

struct TrotterViolation {
    double t = 0.0;
    int x = 0;
    int y = 0;
    double excess = 0.0;
};

struct DominationPair {
    double alpha = 0.0;
    double C = 0.0;  ///< smallest C with h^V_t <= C h_{alpha t} on the samples
};

struct DominationReport {
    std::vector<double> times;
    double trotter_max_excess = 0.0;  ///< max of H^V_t - H_t over all entries
    std::vector<TrotterViolation> trotter_violations;
    std::vector<DominationPair> pairs;

    bool trotter_ok() const { return trotter_violations.empty(); }
    std::string to_json() const;
};

/// Entrywise Trotter check H^V_t <= H_t + 1e-10 and, for each alpha, the
/// smallest C with H^V_t <= C H_{alpha t} (entries of H_{alpha t} below the
/// spectral noise floor are skipped).
DominationReport check_gaussian_type_domination(const SpectralData& with_potential, const SpectralData& free,
                                                std::span<const double> alpha_grid, std::span<const double> t_grid,
                                                double trotter_tol = 1e-10);

struct ApproxIdentityReport {
    bool passed = false;
    int order = 0;
    double C = 0.0;
    double alpha = 0.0;
    double worst_ratio = 0.0;  ///< over the grid, at the best alpha
    std::string to_json() const;
};

/// Checks |phi_t(x, y)| <= C * poisson_bound_value(alpha t, k, x, y) on the
/// sampled times and sites, for some (C, alpha) from the grids.
ApproxIdentityReport check_approx_identity(const ManifoldModel& model,
                                           const std::function<KernelMatrix(double)>& family,
                                           const BoundConstants& consts, int k, std::span<const double> t_grid,
                                           std::span<const int> sites, std::span<const double> C_grid,
                                           std::span<const double> alpha_grid);

std::string to_string(KernelKind kind);

}  // namespace hklab
