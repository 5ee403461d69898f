#pragma once

#include "radnerlab/error.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace radnerlab {

/// Thomas algorithm for lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i].
/// lower[0] and upper[n-1] are ignored. Solves in place into `rhs`.
class TridiagonalSolver {
public:
    void solve(std::span<const double> lower, std::span<const double> diag, std::span<const double> upper,
               std::span<double> rhs) {
        const std::size_t n = diag.size();
        scratch_.resize(n);
        double pivot = diag[0];
        if (!(std::abs(pivot) > 0.0)) throw SolveError("singular tridiagonal system (pivot 0)");
        scratch_[0] = upper[0] / pivot;
        rhs[0] /= pivot;
        for (std::size_t i = 1; i < n; ++i) {
            pivot = diag[i] - lower[i] * scratch_[i - 1];
            if (!(std::abs(pivot) > 1e-300) || !std::isfinite(pivot)) {
                throw SolveError("singular tridiagonal system (pivot " + std::to_string(i) + ")");
            }
            scratch_[i] = i + 1 < n ? upper[i] / pivot : 0.0;
            rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / pivot;
        }
        for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= scratch_[i] * rhs[i + 1];
    }

private:
    std::vector<double> scratch_;
};

} // namespace radnerlab
