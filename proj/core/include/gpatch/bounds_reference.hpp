#pragma once

#include <cmath>
#include <vector>

// Straight-line reference evaluations of the two spectral inequalities,
// kept deliberately naive and separate from the production routines so
// each can check the other. No shared helpers, no early exits beyond
// degeneracy detection.

namespace gpatch::reference {

struct MeanBoundEval {
    bool degenerate = false;  // ratio denominator ~0 or a log undefined
    bool holds = false;       // averaged-form inequality over kept indices
    double lhs = 0.0;         // plain average of g over every index
    double rhs = 0.0;         // quotient form (only meaningful when !degenerate)
    double sum_g = 0.0;       // restricted
    double sum_gh = 0.0;      // restricted
    double sum_log = 0.0;     // restricted
    int excluded = 0;
};

inline MeanBoundEval mean_bound_eval(const std::vector<double> &g,
                                     const std::vector<double> &h_hat, double eps = 1e-12) {
    MeanBoundEval e;
    const std::size_t n = g.size();
    double lhs_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        lhs_sum += g[i];
    e.lhs = lhs_sum / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (std::fabs(h_hat[i]) < eps) {
            e.excluded += 1;
            continue;
        }
        e.sum_g += g[i];
        e.sum_gh += g[i] * std::fabs(h_hat[i]);
        e.sum_log += std::log(std::fabs(h_hat[i]));
    }
    if (!(e.sum_g > 0.0) || !(e.sum_gh > 0.0)) {
        e.degenerate = true;
        return e;
    }
    const double ratio = std::log(e.sum_gh) - std::log(e.sum_g);
    // The averaged statement divides by the ratio, so only a clearly
    // positive denominator counts as a live evaluation.
    if (ratio < 1e-12) {
        e.degenerate = true;
        return e;
    }
    e.rhs = e.sum_log / (static_cast<double>(n) * ratio);
    e.holds = e.lhs >= e.rhs - 1e-9;
    return e;
}

struct ErrorTermEval {
    bool empty = false;       // no index survives the restriction
    bool degenerate = false;  // denominator ~0
    double value = 0.0;
    double min_coef = 0.0;
    int excluded = 0;
};

inline ErrorTermEval error_term_eval(const std::vector<double> &g,
                                     const std::vector<double> &delta,
                                     const std::vector<double> &eta,
                                     const std::vector<double> &h_hat, double eps = 1e-12) {
    ErrorTermEval e;
    const std::size_t n = g.size();
    double sum_g = 0.0, sum_gh = 0.0, sum_log = 0.0;
    bool any_sum = false, any_min = false;
    double min_coef = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool in_sum = delta[i] != 0.0 && eta[i] != 0.0 && std::fabs(h_hat[i]) >= eps;
        if (!in_sum) {
            e.excluded += 1;
            continue;
        }
        any_sum = true;
        sum_g += g[i];
        sum_gh += g[i] * std::fabs(h_hat[i]);
        sum_log += std::log(std::fabs(h_hat[i]));
        if (g[i] != 0.0) {
            const double cap = std::fabs(1.0 / (g[i] * delta[i]));
            double clamped = eta[i];
            if (clamped > cap)
                clamped = cap;
            if (clamped < -cap)
                clamped = -cap;
            const double coef = clamped * delta[i];
            if (!any_min || coef < min_coef)
                min_coef = coef;
            any_min = true;
        }
    }
    if (!any_sum || !any_min) {
        e.empty = true;
        return e;
    }
    if (!(sum_g > 0.0) || !(sum_gh > 0.0)) {
        e.degenerate = true;
        return e;
    }
    const double denom = std::log(sum_gh) - std::log(sum_g);
    if (std::fabs(denom) < 1e-12) {
        e.degenerate = true;
        return e;
    }
    e.min_coef = min_coef;
    e.value = -(min_coef * sum_log) / (2.0 * static_cast<double>(n) * denom);
    return e;
}

} // namespace gpatch::reference
