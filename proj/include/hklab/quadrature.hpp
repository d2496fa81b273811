#pragma once

#include "hklab/error.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace hklab {

enum class QuadratureTransform { LogGrid };

/// Trapezoid rule on a logarithmic grid (x = e^u) with node doubling.
///
/// Truncation bounds are chosen automatically unless given explicitly.
struct QuadratureSpec {
    int nodes = 256;
    QuadratureTransform transform = QuadratureTransform::LogGrid;
    std::optional<double> lower;  ///< explicit lower truncation (in x)
    std::optional<double> upper;  ///< explicit upper truncation (in x)
    double tolerance = 1e-8;      ///< stop when successive estimates differ by less
    int max_doublings = 10;

    void validate() const;
};

struct QuadratureDiagnostics {
    int nodes = 0;
    int doublings = 0;
    double lower = 0.0;
    double upper = 0.0;
    double last_change = 0.0;
    double left_tail = 0.0;   ///< integrand magnitude (per du) at the lower cut
    double right_tail = 0.0;  ///< integrand magnitude (per du) at the upper cut
    bool converged = false;

    std::string to_json() const;
};

/// Nodes u_i and trapezoid weights on [u_lo, u_hi] with `count` points.
struct LogGrid {
    std::vector<double> x;  ///< e^{u_i}
    std::vector<double> w;  ///< trapezoid weight in u (du)
};
LogGrid make_log_grid(double lower, double upper, int count);

/// Log grid split at interior breakpoints; each piece carries its own
/// trapezoid rule. Nodes adjacent to a breakpoint are nudged by a relative
/// 1e-13 to its side so one-sided limits are sampled. `count` nodes are
/// spread in proportion to the log-length of each piece (at least 9 each).
/// `level` doublings give 2^level (count_i - 1) + 1 nodes per piece.
LogGrid make_composite_log_grid(double lower, double upper, const std::vector<double>& breakpoints, int count,
                                int level = 0);

/// Runs `evaluate(make_grid(level))` for level = 0, 1, ... until
/// `change(prev, next)` drops below the tolerance. Throws QuadratureError
/// with the collected diagnostics when the doubling budget runs out.
template <class MakeGrid, class Evaluate, class Change>
auto integrate_with_refinement(const QuadratureSpec& spec, MakeGrid&& make_grid, Evaluate&& evaluate,
                               Change&& change, QuadratureDiagnostics& diag) {
    spec.validate();
    auto prev = evaluate(make_grid(0));
    for (int d = 0; d < spec.max_doublings; ++d) {
        const LogGrid grid = make_grid(d + 1);
        auto next = evaluate(grid);
        diag.last_change = change(prev, next);
        diag.nodes = static_cast<int>(grid.x.size());
        diag.doublings = d + 1;
        prev = std::move(next);
        if (diag.last_change < spec.tolerance) {
            diag.converged = true;
            return prev;
        }
    }
    throw QuadratureError("quadrature did not converge after " + std::to_string(spec.max_doublings) +
                              " doublings (last change " + std::to_string(diag.last_change) + ")",
                          diag.nodes, diag.last_change, diag.left_tail, diag.right_tail);
}

/// Doubling trapezoid on a single log grid over [lower, upper].
template <class Evaluate, class Change>
auto integrate_with_doubling(double lower, double upper, const QuadratureSpec& spec, Evaluate&& evaluate,
                             Change&& change, QuadratureDiagnostics& diag) {
    diag.lower = lower;
    diag.upper = upper;
    return integrate_with_refinement(
        spec, [&](int level) { return make_log_grid(lower, upper, ((spec.nodes - 1) << level) + 1); }, evaluate,
        change, diag);
}

}  // namespace hklab
