#pragma once

#include <stdexcept>
#include <string>

namespace hklab {

/// Precondition violated by caller-supplied data (bad parameters, sector
/// violations, negative potentials, ...).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed to reach its tolerance.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Problem size exceeds a configured cap.
class SizeCapExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Quadrature did not converge; carries the diagnostics collected so far.
class QuadratureError : public NumericalError {
public:
    QuadratureError(const std::string& what, int nodes, double last_change,
                    double left_tail, double right_tail)
        : NumericalError(what)
        , nodes_(nodes)
        , last_change_(last_change)
        , left_tail_(left_tail)
        , right_tail_(right_tail) {}

    int nodes() const noexcept { return nodes_; }
    double last_change() const noexcept { return last_change_; }
    double left_tail() const noexcept { return left_tail_; }
    double right_tail() const noexcept { return right_tail_; }

private:
    int nodes_;
    double last_change_;
    double left_tail_;
    double right_tail_;
};

}  // namespace hklab
