#include "hklab/quadrature.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

namespace hklab {

void QuadratureSpec::validate() const {
    if (nodes < 32) throw InvalidArgument("quadrature needs at least 32 nodes");
    if (lower && upper && !(*lower < *upper)) throw InvalidArgument("quadrature bounds must satisfy lower < upper");
    if ((lower && !(*lower > 0.0)) || (upper && !(*upper > 0.0))) {
        throw InvalidArgument("log-grid bounds must be positive");
    }
    if (!(tolerance > 0.0)) throw InvalidArgument("quadrature tolerance must be positive");
    if (max_doublings < 1) throw InvalidArgument("quadrature needs at least one doubling");
}

LogGrid make_log_grid(double lower, double upper, int count) {
    LogGrid grid;
    const double a = std::log(lower);
    const double b = std::log(upper);
    const double du = (b - a) / (count - 1);
    grid.x.resize(static_cast<std::size_t>(count));
    grid.w.assign(static_cast<std::size_t>(count), du);
    for (int i = 0; i < count; ++i) grid.x[static_cast<std::size_t>(i)] = std::exp(a + du * i);
    grid.w.front() *= 0.5;
    grid.w.back() *= 0.5;
    return grid;
}

LogGrid make_composite_log_grid(double lower, double upper, const std::vector<double>& breakpoints, int count,
                                int level) {
    if (!(lower > 0.0) || !(lower < upper)) throw InvalidArgument("log grid needs 0 < lower < upper");
    std::vector<double> cuts = {lower};
    std::vector<double> sorted = breakpoints;
    std::sort(sorted.begin(), sorted.end());
    for (double b : sorted) {
        if (b > lower * (1.0 + 1e-9) && b < upper * (1.0 - 1e-9)) cuts.push_back(b);
    }
    cuts.push_back(upper);
    const double total = std::log(upper / lower);
    LogGrid grid;
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
        const double share = std::log(cuts[p + 1] / cuts[p]) / total;
        const int base = std::max(9, static_cast<int>(std::ceil(share * count)));
        const int n = ((base - 1) << level) + 1;
        LogGrid piece = make_log_grid(cuts[p], cuts[p + 1], n);
        if (p > 0) piece.x.front() *= 1.0 + 1e-13;
        if (p + 2 < cuts.size()) piece.x.back() *= 1.0 - 1e-13;
        grid.x.insert(grid.x.end(), piece.x.begin(), piece.x.end());
        grid.w.insert(grid.w.end(), piece.w.begin(), piece.w.end());
    }
    return grid;
}

std::string QuadratureDiagnostics::to_json() const {
    nlohmann::ordered_json j;
    j["nodes"] = nodes;
    j["doublings"] = doublings;
    j["lower"] = lower;
    j["upper"] = upper;
    j["last_change"] = last_change;
    j["left_tail"] = left_tail;
    j["right_tail"] = right_tail;
    j["converged"] = converged;
    return j.dump();
}

}  // namespace hklab
