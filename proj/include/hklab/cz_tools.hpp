#pragma once

#include "hklab/model_geometry.hpp"
#include "hklab/operators.hpp"
#include "hklab/special_functions.hpp"

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace hklab {

struct RegionSplit {
    Eigen::VectorXd big;     ///< f on the big end, zero elsewhere
    Eigen::VectorXd small;   ///< f on the small end
    Eigen::VectorXd center;  ///< f on the centre
};

RegionSplit region_split(const ManifoldModel& model, const Eigen::VectorXd& f);

/// Discrete Hardy-Littlewood maximal function: for each site x the largest
/// mu-average of |f| over closed balls B(y, r) containing x, with y ranging
/// over all sites and r over the distinct distances from y.
Eigen::VectorXd maximal_function(const ManifoldModel& model, const Eigen::VectorXd& f);

/// sup over the grid of |e^{-tL} f|
Eigen::VectorXd heat_maximal(const SpectralData& spec, const Eigen::VectorXd& f, std::span<const double> t_grid);
/// sup over the grid of |(z sqrt L)^k e^{-z sqrt L} f|; every z must lie in
/// the sector |arg z| < pi/4.
Eigen::VectorXd poisson_maximal(const SpectralData& spec, const Eigen::VectorXd& f, int k,
                                std::span<const cplx> z_grid);

/// Dyadic intervals [2^level a, 2^level (a + 1)) on a half-line chart with
/// the origin at position 0.
struct DyadicCube {
    int level = 0;
    long long index = 0;

    double left() const { return std::ldexp(static_cast<double>(index), level); }
    double right() const { return std::ldexp(static_cast<double>(index + 1), level); }
    double side() const { return std::ldexp(1.0, level); }
    bool touches_origin() const { return index == 0; }
    bool contains(double x) const { return x >= left() && x < right(); }
};

/// A weighted point set on [0, inf) with its dyadic structure. For an end
/// of the model the chart position is r - 1 (the distance to the centre).
class DyadicGrid {
public:
    DyadicGrid(std::vector<int> site_ids, std::vector<double> positions, std::vector<double> measures,
               int dimension);

    static DyadicGrid from_end(const ManifoldModel& model, Region end);

    std::size_t size() const noexcept { return positions_.size(); }
    const std::vector<int>& site_ids() const noexcept { return site_ids_; }
    const std::vector<double>& positions() const noexcept { return positions_; }
    const std::vector<double>& measures() const noexcept { return measures_; }
    int dimension() const noexcept { return dimension_; }
    /// Smallest level whose cube [0, 2^level) holds every position.
    int top_level() const noexcept { return top_level_; }
    DyadicCube top_cube() const { return {top_level_, 0}; }

    /// Half-open index range [first, last) of the points inside a cube
    /// (points are sorted by position).
    std::pair<std::size_t, std::size_t> members(const DyadicCube& q) const;
    double mass(const DyadicCube& q) const;

    /// Restriction of a model-wide vector to the chart, in chart order.
    Eigen::VectorXd restrict(const Eigen::VectorXd& global) const;
    /// Chart vector extended by zero to the model.
    Eigen::VectorXd extend(const Eigen::VectorXd& local, std::size_t model_size) const;

private:
    std::vector<int> site_ids_;
    std::vector<double> positions_;
    std::vector<double> measures_;
    std::vector<double> prefix_mass_;
    int dimension_ = 1;
    int top_level_ = 0;
};

struct BadPart {
    DyadicCube cube;
    std::size_t first = 0;  ///< chart index range of the cube's points
    std::size_t last = 0;
    double mass = 0.0;      ///< |Q|
    double average = 0.0;   ///< |Q|^{-1} sum_Q |f| mu
    Eigen::VectorXd b;      ///< chart vector, supported in the cube, mean zero
    bool origin_corner = false;
};

struct CZDecomposition {
    double lambda = 0.0;
    int dimension = 0;
    Eigen::VectorXd good;  ///< chart vector
    std::vector<BadPart> bad;

    /// Cubes without / with a corner at the origin.
    std::vector<std::size_t> interior_cubes() const;
    std::vector<std::size_t> origin_cubes() const;
    std::string to_json() const;
};

/// Stopping-time decomposition f = g + sum_j b_j. Starting from the top
/// cube, cubes are halved and a child is selected as soon as its |f|-average
/// exceeds lambda; unselected children are subdivided until they hold one
/// point. Throws InvalidArgument for lambda <= 0 or when the top cube's
/// average already exceeds lambda (|Q| < ||f||_1 / lambda).
CZDecomposition cz_decompose(const DyadicGrid& grid, const Eigen::VectorXd& f, double lambda);

struct CZCheck {
    double reconstruction_error = 0.0;  ///< max |f - g - sum b|
    double max_mean = 0.0;              ///< max |sum_Q b mu| / |Q|^{-1}-free scale
    double max_average_ratio = 0.0;     ///< max avg_Q |f| / lambda
    double selected_mass_ratio = 0.0;   ///< sum |Q_j| * lambda / ||f||_1
    double good_sup_ratio = 0.0;        ///< ||g||_inf / lambda
    double good_l1_ratio = 0.0;         ///< ||g||_1 / ||f||_1
    double interior_sup_inf_ratio = 0.0;  ///< max over interior cubes of sup|z| / inf|z|
};

CZCheck check_cz(const DyadicGrid& grid, const Eigen::VectorXd& f, const CZDecomposition& cz);

struct WhitneyBall {
    int center = 0;
    double radius = 0.0;       ///< d(center, complement) / 2
    std::vector<int> members;  ///< sites with d(center, y) <= radius
};

struct WhitneyCover {
    std::vector<int> domain;  ///< sorted site ids of the open set
    std::vector<WhitneyBall> balls;
    std::vector<int> overlap;  ///< per domain site, number of balls containing it
    int overlap_constant = 0;

    /// chi_{Q_i}(x) / sum_k chi_{Q_k}(x) for every domain site, per ball.
    std::vector<std::vector<double>> partition_weights() const;
    std::string to_json() const;
};

/// Greedy Whitney cover of a proper subset of sites: candidates in
/// decreasing d(., complement) (ties by id); a candidate already inside a
/// selected closed ball is skipped. Throws InvalidArgument when the set is
/// empty or the whole space.
WhitneyCover whitney_cover(const ManifoldModel& model, std::span<const int> domain);

struct WhitneyCheck {
    bool union_ok = false;
    bool fifth_disjoint = false;
    bool radii_exact = false;
    double max_weight_error = 0.0;
    int overlap_constant = 0;
};

/// Exhaustive check of the cover properties (pairwise over balls).
WhitneyCheck check_whitney(const ManifoldModel& model, const WhitneyCover& cover);

struct QuasinormReport {
    double value = 0.0;
    std::vector<double> lambdas;
    std::vector<double> level_measures;  ///< mu{|Tf| > lambda}
    double argmax_lambda = 0.0;

    void write_csv(std::ostream& out) const;
};

/// `count` log-spaced levels over [top / 1e3, top].
std::vector<double> default_lambda_grid(double top, int count = 64);

/// sup over the grid of lambda * mu{x : |Tf(x)| > lambda} / ||f||_1. The
/// default grid is built from ||Tf||_inf.
QuasinormReport weak_quasinorm(const std::function<Eigen::VectorXcd(const Eigen::VectorXd&)>& apply_T,
                               const Eigen::VectorXd& f, const Eigen::VectorXd& measure,
                               std::span<const double> lambda_grid = {});

}  // namespace hklab
