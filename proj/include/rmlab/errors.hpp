#pragma once

#include <stdexcept>
#include <string>

namespace rmlab {

struct SingularMatrix : std::runtime_error {
    explicit SingularMatrix(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateSingularValues : std::runtime_error {
    explicit DegenerateSingularValues(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : std::runtime_error {
    explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct Overflow : std::runtime_error {
    explicit Overflow(const std::string& what) : std::runtime_error(what) {}
};

struct ZeroEigenvalue : std::runtime_error {
    explicit ZeroEigenvalue(const std::string& what) : std::runtime_error(what) {}
};

struct ZeroLyapunov : std::runtime_error {
    explicit ZeroLyapunov(const std::string& what) : std::runtime_error(what) {}
};

struct ZeroRho : std::runtime_error {
    explicit ZeroRho(const std::string& what) : std::runtime_error(what) {}
};

struct NotHyperbolic : std::runtime_error {
    int index;
    NotHyperbolic(int idx, const std::string& what) : std::runtime_error(what), index(idx) {}
};

struct ConesCollapsed : std::runtime_error {
    explicit ConesCollapsed(const std::string& what) : std::runtime_error(what) {}
};

struct NotStochastic : std::runtime_error {
    explicit NotStochastic(const std::string& what) : std::runtime_error(what) {}
};

struct LedgerInfeasible : std::runtime_error {
    explicit LedgerInfeasible(const std::string& what) : std::runtime_error(what) {}
};

struct ChainTooShort : std::runtime_error {
    explicit ChainTooShort(const std::string& what) : std::runtime_error(what) {}
};

struct NoConvergence : std::runtime_error {
    long iterations;
    NoConvergence(long iters, const std::string& what) : std::runtime_error(what), iterations(iters) {}
};

struct DegenerateCurvature : std::runtime_error {
    explicit DegenerateCurvature(const std::string& what) : std::runtime_error(what) {}
};

struct ZeroWeight : std::runtime_error {
    explicit ZeroWeight(const std::string& what) : std::runtime_error(what) {}
};

struct GridTooNarrow : std::runtime_error {
    explicit GridTooNarrow(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigInvalid : std::runtime_error {
    explicit ConfigInvalid(const std::string& what) : std::runtime_error(what) {}
};

struct ExperimentFailed : std::runtime_error {
    explicit ExperimentFailed(const std::string& what) : std::runtime_error(what) {}
};

} // namespace rmlab
