#pragma once

// Shared aliases, the region label type, and the error taxonomy used by
// every module in the toolkit.

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fcm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr const char* kArtifactVersion = "fcm-0.1.0";

// Membership label of a state: the initial set A, the target set B, or the
// interior region Omega (complement of A and B).
enum class Region : std::uint8_t { A, B, Omega };

inline char region_code(Region r) {
    switch (r) {
        case Region::A: return 'A';
        case Region::B: return 'B';
        default: return 'O';
    }
}

// Base of the error hierarchy. Exit-code families in the CLI map onto the
// three direct branches: invalid-argument, I/O, numerical.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgumentError : public Error {
public:
    using Error::Error;
};

// A and B predicates overlap at a queried point, or a region setup is
// unusable (e.g. empty on the reference grid).
class InvalidRegionError : public InvalidArgumentError {
public:
    using InvalidArgumentError::InvalidArgumentError;
};

class IoError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

// Data carries no usable signal (identical points, zero trace, ...).
class DegenerateDataError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// The implied PSD matrix has zero trace.
class DegenerateMatrixError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// All model gradients vanish; the scaling update has no information.
class DegenerateUpdateError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NumericalBreakdownError : public NumericalError {
public:
    NumericalBreakdownError(const std::string& what, Index block)
        : NumericalError(what + " (block " + std::to_string(block) + ")"), block_index(block) {}
    Index block_index;
};

class IllConditionedError : public NumericalError {
public:
    IllConditionedError(const std::string& what, double pivot)
        : NumericalError(what + " (smallest pivot " + std::to_string(pivot) + ")"),
          smallest_pivot(pivot) {}
    double smallest_pivot;
};

class SimulationBlowupError : public NumericalError {
public:
    SimulationBlowupError(const std::string& what, Index step)
        : NumericalError(what + " (step " + std::to_string(step) + ")"), step_index(step) {}
    Index step_index;
};

class NonConvergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class RankDeficientError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

inline Region region_from_code(char c) {
    switch (c) {
        case 'A': return Region::A;
        case 'B': return Region::B;
        case 'O': return Region::Omega;
        default: throw IoError(std::string("unknown region code '") + c + "'");
    }
}

}  // namespace fcm
