#include "gpatch/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gpatch/error.hpp"

namespace gpatch {

namespace {

double off_diagonal_norm(const Matrix &a) {
    double s = 0.0;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

} // namespace

SpectralDecomposition jacobi_eigendecompose(Matrix a) {
    const int n = a.rows();
    if (n != a.cols()) throw Error(ErrorCode::ShapeMismatch, "jacobi: matrix not square");

    Matrix v = Matrix::identity(n);
    const double stop = 1e-12 * std::max(1e-300, a.frobenius_norm());
    const int max_sweeps = 100;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        if (off_diagonal_norm(a) < stop) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&a](int x, int y) {
        if (a(x, x) != a(y, y)) return a(x, x) < a(y, y);
        return x < y;
    });

    SpectralDecomposition out;
    out.lambdas.resize(static_cast<std::size_t>(n));
    out.u = Matrix(n, n);
    for (int j = 0; j < n; ++j) {
        const int src = order[j];
        out.lambdas[j] = a(src, src);
        int arg = 0;
        double best = 0.0;
        for (int i = 0; i < n; ++i) {
            const double mag = std::fabs(v(i, src));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        const double flip = v(arg, src) < 0.0 ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i) out.u(i, j) = flip * v(i, src);
    }
    return out;
}

SpectralDecomposition eigendecompose(const NormalizedAdjacency &m, int dense_limit) {
    if (m.n > dense_limit)
        throw Error(ErrorCode::DimensionTooLarge,
                    "eigendecompose: n = " + std::to_string(m.n) + " exceeds dense limit " +
                        std::to_string(dense_limit));
    return jacobi_eigendecompose(m.dense());
}

std::vector<double> spectral_heterophily(const HeterophilyVector &h,
                                         const SpectralDecomposition &s) {
    const int n = s.u.rows();
    if (static_cast<int>(h.h.size()) != n)
        throw Error(ErrorCode::ShapeMismatch, "spectral_heterophily: length mismatch");
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        const double hi = h.defined[i] ? h.h[i] : 0.0;
        if (hi == 0.0) continue;
        const double *urow = s.u.row(i);
        for (int j = 0; j < n; ++j) out[j] += hi * urow[j];
    }
    return out;
}

ResponseMeanBound response_mean_bound(const FrequencyResponse &g, const std::vector<double> &h_hat) {
    const int n = static_cast<int>(g.g.size());
    if (static_cast<int>(h_hat.size()) != n)
        throw Error(ErrorCode::ShapeMismatch, "response_mean_bound: length mismatch");
    for (double v : g.g)
        if (v < -1e-12 || v > 2.0 + 1e-12)
            throw Error(ErrorCode::InvalidArgument, "response_mean_bound: response outside [0, 2]");

    ResponseMeanBound res;
    double sum_g_all = 0.0;
    for (double v : g.g) sum_g_all += v;
    res.lhs = sum_g_all / n;

    double sum_g = 0.0, sum_gh = 0.0, sum_log = 0.0;
    for (int i = 0; i < n; ++i) {
        if (std::fabs(h_hat[i]) < kLogExclusionEps) {
            ++res.excluded;
            continue;
        }
        sum_g += g.g[i];
        sum_gh += g.g[i] * std::fabs(h_hat[i]);
        sum_log += std::log(std::fabs(h_hat[i]));
    }
    if (sum_g <= 0.0 || sum_gh <= 0.0)
        throw Error(ErrorCode::DegenerateBound, "response_mean_bound: log undefined after exclusion");

    res.log_ratio = std::log(sum_gh) - std::log(sum_g);
    // Dividing by the log ratio to isolate the average is only legitimate
    // when the ratio is positive; at or below zero the averaged statement
    // does not follow from the product inequality.
    if (res.log_ratio < 1e-12)
        throw Error(ErrorCode::DegenerateBound,
                    "response_mean_bound: log-ratio denominator not positive");

    res.rhs = sum_log / (n * res.log_ratio);
    res.holds = res.lhs >= res.rhs - 1e-9;
    return res;
}

double clamp_psi(double x, double c) {
    const double b = std::fabs(c);
    return std::min(std::max(x, -b), b);
}

ErrorTermBound error_term_bound(const FrequencyResponse &g, const std::vector<double> &delta,
                                   const std::vector<double> &eta,
                                   const std::vector<double> &h_hat) {
    const int n = static_cast<int>(g.g.size());
    if (static_cast<int>(delta.size()) != n || static_cast<int>(eta.size()) != n ||
        static_cast<int>(h_hat.size()) != n)
        throw Error(ErrorCode::ShapeMismatch, "error_term_bound: length mismatch");

    ErrorTermBound res;
    double sum_g = 0.0, sum_gh = 0.0, sum_log = 0.0;
    double min_coef = std::numeric_limits<double>::infinity();
    int sum_count = 0, min_count = 0;
    for (int i = 0; i < n; ++i) {
        if (delta[i] == 0.0 || eta[i] == 0.0 || std::fabs(h_hat[i]) < kLogExclusionEps) {
            ++res.excluded;
            continue;
        }
        ++sum_count;
        sum_g += g.g[i];
        sum_gh += g.g[i] * std::fabs(h_hat[i]);
        sum_log += std::log(std::fabs(h_hat[i]));
        if (g.g[i] != 0.0) {
            ++min_count;
            const double coef = clamp_psi(eta[i], 1.0 / (g.g[i] * delta[i])) * delta[i];
            min_coef = std::min(min_coef, coef);
        }
    }
    if (sum_count == 0)
        throw Error(ErrorCode::EmptyIndexSet, "error_term_bound: no index survives restriction");
    if (min_count == 0)
        throw Error(ErrorCode::EmptyIndexSet, "error_term_bound: clamp set empty (g vanishes)");
    if (sum_g <= 0.0 || sum_gh <= 0.0)
        throw Error(ErrorCode::DegenerateBound, "error_term_bound: log undefined");

    const double denom = 2.0 * n * (std::log(sum_gh) - std::log(sum_g));
    if (std::fabs(denom) < 1e-12)
        throw Error(ErrorCode::DegenerateBound, "error_term_bound: denominator vanishes");

    res.min_coef = min_coef;
    res.value = -(min_coef * sum_log) / denom;
    return res;
}

} // namespace gpatch
