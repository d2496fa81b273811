#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace hklab {

enum class Region { BigEnd, SmallEnd, Center };
enum class MeshMode { RadialRay, FullMesh };

std::string to_string(Region region);
std::string to_string(MeshMode mode);
Region region_from_string(const std::string& name);
MeshMode mesh_mode_from_string(const std::string& name);

/// Parameters of the two-ended model R^m # R^n.
///
/// `h` is the grid spacing along each ray, `R_max` the truncation radius of
/// both ends and `center_width` the length of the central segment K.
struct ModelParams {
    int m = 4;
    int n = 3;
    double h = 0.1;
    double R_max = 20.0;
    double center_width = 1.0;
    MeshMode mode = MeshMode::RadialRay;

    /// Throws InvalidArgument when the parameters cannot describe a model.
    void validate() const;
};

struct Site {
    int id = 0;
    Region region = Region::Center;
    double r = 0.0;        ///< radial chart coordinate; 0 on the centre
    double measure = 0.0;  ///< mu_i > 0
};

struct Edge {
    int i = 0;
    int j = 0;
    double conductance = 0.0;
    double length = 0.0;
};

/// Weighted graph approximating the manifold with two ends.
///
/// Immutable after construction. Pairwise graph distances are cached as a
/// dense matrix when the model has at most `kDistanceCacheCap` sites.
class ManifoldModel {
public:
    static constexpr std::size_t kDistanceCacheCap = 5000;

    /// Builds a model from explicit sites and edges. Site ids must equal
    /// their position in `sites`. Checks connectivity, positivity and that
    /// every region tag is valid.
    static ManifoldModel from_graph(ModelParams params, std::vector<Site> sites,
                                    std::vector<Edge> edges);

    const ModelParams& params() const noexcept { return params_; }
    std::span<const Site> sites() const noexcept { return sites_; }
    std::span<const Edge> edges() const noexcept { return edges_; }
    std::size_t size() const noexcept { return sites_.size(); }
    const Site& site(int id) const { return sites_.at(static_cast<std::size_t>(id)); }

    double measure(int id) const { return site(id).measure; }
    Eigen::VectorXd measures() const;
    double total_mass() const noexcept { return total_mass_; }

    /// Exact shortest-path length.
    double distance(int x, int y) const;
    /// Full distance row from x (computed on demand above the cache cap).
    Eigen::VectorXd distance_row(int x) const;
    bool has_distance_cache() const noexcept { return distances_.size() > 0; }

    /// 1 + d(x, K); equals 1 on the centre.
    double norm_abs(int x) const { return norm_abs_.at(static_cast<std::size_t>(x)); }

    std::vector<int> sites_in(Region region) const;
    /// Site of `region` whose radial coordinate is closest to `r`.
    int nearest_site(Region region, double r) const;
    /// Intrinsic dimension attached to a region (m, n, or m for the centre).
    int dimension_of(Region region) const;
    /// True when every edge joins consecutive ids (path graph).
    bool is_path_graph() const noexcept { return path_graph_; }

    struct Neighbor {
        int site;
        double conductance;
        double length;
    };
    std::span<const Neighbor> neighbors(int x) const {
        return adjacency_.at(static_cast<std::size_t>(x));
    }

private:
    ManifoldModel() = default;
    Eigen::VectorXd dijkstra(std::span<const int> sources) const;

    ModelParams params_;
    std::vector<Site> sites_;
    std::vector<Edge> edges_;
    std::vector<std::vector<Neighbor>> adjacency_;
    std::vector<double> norm_abs_;
    Eigen::MatrixXd distances_;
    double total_mass_ = 0.0;
    bool path_graph_ = false;
};

/// Radial-ray realisation of R^m # R^n: two weighted half-lines (weights
/// r^{m-1} and r^{n-1}) starting at r = 1 and joined through a unit-density
/// centre segment of length `center_width`. The outer ends are reflecting.
ManifoldModel build_two_ends_model(const ModelParams& params);

double graph_distance(const ManifoldModel& model, int x, int y);
double norm_abs(const ManifoldModel& model, int x);

/// Sum of mu_i over sites within graph distance r of x.
double ball_volume(const ManifoldModel& model, int x, double r);

/// Ball volume that reads each end site as a sphere shell of its end's
/// chart (R^m for the big end, R^n x S^{m-n} for the small end). Sites in
/// the same end as x contribute the fraction of their shell within distance
/// r of x; other sites are counted whole when their graph distance is <= r.
/// Centre sites fall back to `ball_volume`.
double shell_ball_volume(const ManifoldModel& model, int x, double r);

/// Fraction of the sphere of radius `rho` in R^dim lying within Euclidean
/// distance `s` of a point at radius `rho_x`.
double sphere_cap_fraction(int dim, double rho, double rho_x, double s);

struct VolumeRegimeFit {
    std::string name;
    int expected_exponent = 0;
    int center_site = -1;
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<double> radii;
    std::vector<double> volumes;
    std::vector<double> residuals;
};

struct DoublingWitness {
    int center_site = -1;
    double max_ratio = 0.0;
    double argmax_radius = 0.0;
    std::vector<double> radii;
    std::vector<double> ratios;
};

struct VolumeReport {
    std::vector<VolumeRegimeFit> regimes;
    DoublingWitness doubling;
};

/// Log-log slopes of V(x, r) for the three volume regimes:
///  (i)   r <= 1 around end sites                       -> m
///  (ii)  r > 1, balls inside the small end             -> n
///  (iii) x in the small end, r > 2|x|                  -> m
/// plus the doubling-ratio sweep at a small-end site. Throws InvalidArgument
/// ("insufficient range") when a regime cannot supply 8 radii.
VolumeReport volume_growth_report(const ManifoldModel& model, int radii_per_regime = 12);

/// Structured text (JSON) with a version header; sites and edges in id order.
void save_model(const ManifoldModel& model, std::ostream& out);
ManifoldModel load_model(std::istream& in);

}  // namespace hklab
